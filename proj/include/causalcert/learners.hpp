#pragma once

// Learner spec strings:
//   regressors   ridge:l2=1.0[,iters=3000]   knn:k=5   tree:depth=6[,min_leaf=1]
//                forest:trees=100,depth=8,seed=S[,subsample=0.632,honest=1,min_leaf=1]
//   classifiers  logistic:l2=1.0[,max_iter=100,tol=1e-8]   treeclf:depth=6[,min_leaf=1]   const:p

#include <memory>
#include <string>

#include "causalcert/detail/spec_string.hpp"
#include "causalcert/learners/base.hpp"
#include "causalcert/learners/knn.hpp"
#include "causalcert/learners/linear.hpp"
#include "causalcert/learners/tree.hpp"

namespace causalcert {

inline std::unique_ptr<Regressor> make_regressor(const std::string& spec) {
    const auto [kind, rest] = detail::split_kind(spec);
    if (kind == "ridge") {
        const detail::KeyValues kv(rest, spec, {"l2", "iters"});
        return std::make_unique<RidgeRegressor>(kv.get_double("l2", 1.0), int(kv.get_int("iters", 3000)));
    }
    if (kind == "knn") {
        const detail::KeyValues kv(rest, spec, {"k"});
        return std::make_unique<KnnRegressor>(kv.get_double("k", 5.0));
    }
    if (kind == "tree") {
        const detail::KeyValues kv(rest, spec, {"depth", "min_leaf"});
        return std::make_unique<RegressionTree>(int(kv.get_int("depth", 6)), kv.get_double("min_leaf", 1.0));
    }
    if (kind == "forest") {
        const detail::KeyValues kv(rest, spec, {"trees", "depth", "seed", "subsample", "honest", "min_leaf"});
        ForestOptions o;
        o.n_trees = int(kv.get_int("trees", 100));
        o.max_depth = int(kv.get_int("depth", 8));
        const auto seed = kv.get_int("seed", 0);
        if (seed < 0) throw ConfigError("forest seed must be nonnegative");
        o.seed = std::uint64_t(seed);
        o.subsample = kv.get_double("subsample", 0.632);
        o.honest = kv.get_int("honest", 1) != 0;
        o.min_leaf = kv.get_double("min_leaf", 1.0);
        return std::make_unique<HonestForest>(o);
    }
    throw ConfigError("unknown regressor spec '" + spec + "'");
}

inline std::unique_ptr<ProbClassifier> make_classifier(const std::string& spec) {
    const auto [kind, rest] = detail::split_kind(spec);
    if (kind == "logistic") {
        const detail::KeyValues kv(rest, spec, {"l2", "max_iter", "tol"});
        return std::make_unique<LogisticClassifier>(kv.get_double("l2", 1.0), int(kv.get_int("max_iter", 100)),
                                                    kv.get_double("tol", 1e-8));
    }
    if (kind == "treeclf") {
        const detail::KeyValues kv(rest, spec, {"depth", "min_leaf"});
        return std::make_unique<TreeClassifier>(int(kv.get_int("depth", 6)), kv.get_double("min_leaf", 1.0));
    }
    if (kind == "const") {
        const double p = detail::parse_double(rest, "const probability");
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("const probability must lie in [0, 1]");
        return std::make_unique<ConstantClassifier>(p);
    }
    throw ConfigError("unknown classifier spec '" + spec + "'");
}

/// Fits a fresh regressor from `spec`.
inline std::unique_ptr<Regressor> fit_weighted_regressor(const std::string& spec, const FeatureMatrix& X,
                                                         const Vector& y, const Vector& w,
                                                         const Objective& obj = {}) {
    auto r = make_regressor(spec);
    r->fit(X, y, w, obj);
    return r;
}

inline std::unique_ptr<ProbClassifier> fit_classifier(const std::string& spec, const FeatureMatrix& X,
                                                      const Vector& t) {
    auto c = make_classifier(spec);
    if (!c->fitted()) c->fit(X, t);
    return c;
}

}  // namespace causalcert
