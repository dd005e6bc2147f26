#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "causalcert/data.hpp"
#include "causalcert/learners.hpp"
#include "causalcert/losses.hpp"
#include "causalcert/weights.hpp"

namespace causalcert {

struct TLearner {
    std::shared_ptr<const Regressor> h1, h0;

    double predict_outcome(const double* x, Arm a) const { return (a == Arm::treated ? h1 : h0)->predict(x); }
    double predict_cate(const double* x) const { return h1->predict(x) - h0->predict(x); }
};

/// Single head over (x, t), with t appended as the last column.
struct SLearner {
    std::shared_ptr<const Regressor> h;
    std::size_t d = 0;

    double predict_outcome(const double* x, Arm a) const {
        std::vector<double> z(x, x + d);
        z.push_back(double(arm_value(a)));
        return h->predict(z.data());
    }
    double predict_cate(const double* x) const {
        return predict_outcome(x, Arm::treated) - predict_outcome(x, Arm::control);
    }
};

/// Stage one as a T-learner; tau1 regresses Y - h0(X) on treated rows, tau0 regresses
/// h1(X) - Y on control rows; the CATE is e(x) tau1(x) + (1 - e(x)) tau0(x).
struct XLearner {
    std::shared_ptr<const Regressor> h1, h0, tau1, tau0;
    std::shared_ptr<const ProbClassifier> e;

    double predict_outcome(const double* x, Arm a) const { return (a == Arm::treated ? h1 : h0)->predict(x); }
    double blend(const double* x) const { return e->predict_proba(x); }
    double predict_cate(const double* x) const {
        const double ex = blend(x);
        return ex * tau1->predict(x) + (1.0 - ex) * tau0->predict(x);
    }
};

using MetaLearner = std::variant<TLearner, SLearner, XLearner>;

inline double predict_cate(const MetaLearner& m, const double* x) {
    return std::visit([&](const auto& v) { return v.predict_cate(x); }, m);
}
inline double predict_cate(const MetaLearner& m, std::span<const double> x) { return predict_cate(m, x.data()); }
inline double predict_cate_x(const XLearner& m, const double* x) { return m.predict_cate(x); }

inline double predict_outcome(const MetaLearner& m, const double* x, Arm a) {
    return std::visit([&](const auto& v) { return v.predict_outcome(x, a); }, m);
}

namespace detail {

inline Vector weights_on(const WeightFn& w, const CausalDataset& ds, std::span<const std::size_t> rows) {
    Vector out(Eigen::Index(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(Eigen::Index(r)) = w(ds[rows[r]].x.data());
    return out;
}

inline void require_finite(const Vector& w, const char* what) {
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (!std::isfinite(w(i))) throw DomainError(std::string(what) + ": infinite training weight");
}

inline std::shared_ptr<const Regressor> fit_arm(const std::string& spec, const CausalDataset& ds, Arm a,
                                                 const WeightFn& w, const Objective& obj) {
    const auto rows = ds.arm_indices(a);
    if (rows.empty()) throw DegenerateSplitError("training arm is empty");
    const Vector wv = weights_on(w, ds, rows);
    require_finite(wv, "meta-learner");
    return fit_weighted_regressor(spec, features(ds, rows), outcomes(ds, rows), wv, obj);
}

}  // namespace detail

inline TLearner fit_t_learner(const std::string& spec, const CausalDataset& ds, const WeightFn& w1, const WeightFn& w0,
                              const DecomposableLoss& loss) {
    ds.require_both_arms("T-learner training data");
    const auto obj = objective_for(loss);
    return {detail::fit_arm(spec, ds, Arm::treated, w1, obj), detail::fit_arm(spec, ds, Arm::control, w0, obj)};
}

inline SLearner fit_s_learner(const std::string& spec, const CausalDataset& ds, const WeightFn& w1, const WeightFn& w0,
                              const DecomposableLoss& loss) {
    ds.require_both_arms("S-learner training data");
    const auto n = Eigen::Index(ds.size()), d = Eigen::Index(ds.dim());
    FeatureMatrix Z(n, d + 1);
    Z.leftCols(d) = features(ds);
    Vector y(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = ds[std::size_t(i)];
        Z(i, d) = s.t;
        y(i) = s.y;
        w(i) = (s.t == 1 ? w1 : w0)(s.x.data());
    }
    detail::require_finite(w, "S-learner");
    return {fit_weighted_regressor(spec, Z, y, w, objective_for(loss)), ds.dim()};
}

/// `e_spec` is a classifier spec fitted on (X, T), or "const:p".
inline XLearner fit_x_learner(const std::string& spec, const CausalDataset& ds, const WeightFn& w1, const WeightFn& w0,
                              const DecomposableLoss& loss, const std::string& e_spec = "logistic:l2=1.0") {
    if (loss.kind == LossKind::zero_one) throw ConfigError("X-learner pseudo-labels are not binary; 0-1 loss unsupported");
    ds.require_both_arms("X-learner training data");
    const auto obj = objective_for(loss);
    XLearner m;
    m.h1 = detail::fit_arm(spec, ds, Arm::treated, w1, obj);
    m.h0 = detail::fit_arm(spec, ds, Arm::control, w0, obj);

    for (Arm a : {Arm::treated, Arm::control}) {
        const auto rows = ds.arm_indices(a);
        const FeatureMatrix X = features(ds, rows);
        Vector d(Eigen::Index(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& s = ds[rows[r]];
            d(Eigen::Index(r)) = a == Arm::treated ? s.y - m.h0->predict(s.x.data()) : m.h1->predict(s.x.data()) - s.y;
        }
        const Vector wv = detail::weights_on(a == Arm::treated ? w1 : w0, ds, rows);
        auto tau = fit_weighted_regressor(spec, X, d, wv, obj);
        (a == Arm::treated ? m.tau1 : m.tau0) = std::move(tau);
    }
    m.e = fit_classifier(e_spec, features(ds), treatments(ds));
    return m;
}

struct MetaSpec {
    enum class Kind { t, s, x } kind = Kind::t;
    std::string learner = "ridge:l2=1.0";
    std::string e = "logistic:l2=1.0";

    std::string to_string() const {
        switch (kind) {
            case Kind::t: return "t:" + learner;
            case Kind::s: return "s:" + learner;
            case Kind::x: return "x:" + learner + ",e=" + e;
        }
        return "?";
    }
};

/// "t:<learner>", "s:<learner>", "x:<learner>[,e=<classifier|const:p>]"; a bare learner means "t:".
inline MetaSpec parse_meta_spec(const std::string& spec) {
    const auto s = detail::trim(spec);
    MetaSpec m;
    std::string body;
    if (detail::starts_with(s, "t:")) {
        m.kind = MetaSpec::Kind::t;
        body = s.substr(2);
    } else if (detail::starts_with(s, "s:")) {
        m.kind = MetaSpec::Kind::s;
        body = s.substr(2);
    } else if (detail::starts_with(s, "x:")) {
        m.kind = MetaSpec::Kind::x;
        body = s.substr(2);
        const auto e = body.rfind(",e=");
        if (e != std::string::npos) {
            m.e = detail::trim(body.substr(e + 3));
            body = body.substr(0, e);
        }
        make_classifier(m.e);
    } else {
        body = s;
    }
    m.learner = detail::trim(body);
    make_regressor(m.learner);
    return m;
}

inline MetaLearner fit_meta(const MetaSpec& spec, const CausalDataset& ds, const WeightFn& w1, const WeightFn& w0,
                            const DecomposableLoss& loss) {
    switch (spec.kind) {
        case MetaSpec::Kind::t: return fit_t_learner(spec.learner, ds, w1, w0, loss);
        case MetaSpec::Kind::s: return fit_s_learner(spec.learner, ds, w1, w0, loss);
        case MetaSpec::Kind::x: return fit_x_learner(spec.learner, ds, w1, w0, loss, spec.e);
    }
    throw ConfigError("unknown meta-learner kind");
}

}  // namespace causalcert
