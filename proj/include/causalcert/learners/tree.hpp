#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "causalcert/learners/base.hpp"

namespace causalcert {

namespace detail {

/// Axis-aligned binary tree grown by weighted squared-error reduction.
class CartStructure {
public:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1, right = -1;
        double value = 0.0;
    };

    using LeafFn = std::function<double(std::span<const std::size_t>)>;

    void grow(const FeatureMatrix& X, const Vector& y, const Vector& w, std::vector<std::size_t> rows, int max_depth,
              double min_leaf, const LeafFn& leaf_value) {
        nodes_.clear();
        rows.erase(std::remove_if(rows.begin(), rows.end(), [&](std::size_t i) { return !(w(Eigen::Index(i)) > 0.0); }),
                   rows.end());
        if (rows.empty()) throw DomainError("tree has no positively weighted samples");
        build(X, y, w, rows, 0, max_depth, min_leaf, leaf_value);
    }

    int leaf_of(const double* x) const {
        int k = 0;
        while (nodes_[std::size_t(k)].feature >= 0) {
            const auto& nd = nodes_[std::size_t(k)];
            k = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        return k;
    }

    double predict(const double* x) const { return nodes_[std::size_t(leaf_of(x))].value; }

    // Replaces leaf values with leaf_value over the rows of X landing in each leaf.
    // Leaves that receive no row keep their value.
    void refit_leaves(const FeatureMatrix& X, std::span<const std::size_t> rows, const LeafFn& leaf_value) {
        std::vector<std::vector<std::size_t>> members(nodes_.size());
        for (auto i : rows) members[std::size_t(leaf_of(X.row(Eigen::Index(i)).data()))].push_back(i);
        for (std::size_t k = 0; k < nodes_.size(); ++k)
            if (nodes_[k].feature < 0 && !members[k].empty()) nodes_[k].value = leaf_value(members[k]);
    }

    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t leaf_count() const {
        return std::size_t(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
    }

private:
    int build(const FeatureMatrix& X, const Vector& y, const Vector& w, std::vector<std::size_t>& rows, int depth,
              int max_depth, double min_leaf, const LeafFn& leaf_value) {
        const int id = int(nodes_.size());
        nodes_.push_back({});
        nodes_.back().value = leaf_value(rows);
        if (depth >= max_depth || rows.size() < 2) return id;

        double W = 0.0, S = 0.0, Q = 0.0;
        for (auto i : rows) {
            const double wi = w(Eigen::Index(i)), yi = y(Eigen::Index(i));
            W += wi;
            S += wi * yi;
            Q += wi * yi * yi;
        }
        const double parent_sse = Q - S * S / W;
        if (parent_sse <= 1e-14 * std::max(1.0, Q)) return id;

        int best_f = -1;
        double best_thr = 0.0, best_gain = 1e-12 * std::max(1.0, parent_sse);
        std::vector<std::size_t> order = rows;
        for (Eigen::Index f = 0; f < X.cols(); ++f) {
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const double xa = X(Eigen::Index(a), f), xb = X(Eigen::Index(b), f);
                return xa < xb || (xa == xb && a < b);
            });
            double wl = 0.0, sl = 0.0, ql = 0.0;
            for (std::size_t k = 0; k + 1 < order.size(); ++k) {
                const auto i = Eigen::Index(order[k]);
                wl += w(i);
                sl += w(i) * y(i);
                ql += w(i) * y(i) * y(i);
                const double xk = X(i, f), xn = X(Eigen::Index(order[k + 1]), f);
                if (xk == xn) continue;
                const double wr = W - wl;
                if (wl < min_leaf || wr < min_leaf) continue;
                const double sr = S - sl, qr = Q - ql;
                const double sse = (ql - sl * sl / wl) + (qr - sr * sr / wr);
                const double gain = parent_sse - sse;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_f = int(f);
                    best_thr = 0.5 * (xk + xn);
                    if (best_thr == xn) best_thr = xk;
                }
            }
        }
        if (best_f < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto i : rows) (X(Eigen::Index(i), best_f) <= best_thr ? left : right).push_back(i);
        rows.clear();
        rows.shrink_to_fit();
        nodes_[std::size_t(id)].feature = best_f;
        nodes_[std::size_t(id)].threshold = best_thr;
        const int l = build(X, y, w, left, depth + 1, max_depth, min_leaf, leaf_value);
        const int r = build(X, y, w, right, depth + 1, max_depth, min_leaf, leaf_value);
        nodes_[std::size_t(id)].left = l;
        nodes_[std::size_t(id)].right = r;
        return id;
    }

    std::vector<Node> nodes_;
};

inline CartStructure::LeafFn leaf_rule(const Vector& y, const Vector& w, const Objective& obj) {
    if (obj.kind == Objective::Kind::quantile) {
        return [&y, &w, a = obj.alpha](std::span<const std::size_t> rows) {
            std::vector<std::pair<double, double>> vw;
            vw.reserve(rows.size());
            for (auto i : rows) vw.emplace_back(y(Eigen::Index(i)), w(Eigen::Index(i)));
            return weighted_quantile(std::move(vw), a);
        };
    }
    return [&y, &w](std::span<const std::size_t> rows) {
        double sw = 0.0, sy = 0.0;
        for (auto i : rows) {
            sw += w(Eigen::Index(i));
            sy += w(Eigen::Index(i)) * y(Eigen::Index(i));
        }
        return sw > 0.0 ? sy / sw : 0.0;
    };
}

inline std::vector<std::size_t> all_rows(Eigen::Index n) {
    std::vector<std::size_t> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

}  // namespace detail

/// CART regressor. min_leaf is a weight mass, so integer weights act as replication.
/// Leaves hold the weighted mean, or the weighted alpha-quantile in quantile mode.
class RegressionTree final : public Regressor {
public:
    explicit RegressionTree(int max_depth = 6, double min_leaf = 1.0) : max_depth_(max_depth), min_leaf_(min_leaf) {
        if (max_depth < 0) throw ConfigError("tree depth must be nonnegative");
        if (!(min_leaf > 0.0)) throw ConfigError("tree min_leaf must be positive");
    }

    std::string name() const override {
        return "tree:depth=" + std::to_string(max_depth_) + ",min_leaf=" + detail::format_number(min_leaf_);
    }
    std::unique_ptr<Regressor> clone() const override { return std::make_unique<RegressionTree>(max_depth_, min_leaf_); }
    const detail::CartStructure& structure() const noexcept { return tree_; }

protected:
    void fit_impl(const FeatureMatrix& X, const Vector& y, const Vector& w, const Objective& obj) override {
        tree_.grow(X, y, w, detail::all_rows(X.rows()), max_depth_, min_leaf_, detail::leaf_rule(y, w, obj));
    }
    double predict_raw(const double* x) const override { return tree_.predict(x); }

private:
    int max_depth_;
    double min_leaf_;
    detail::CartStructure tree_;
};

struct ForestOptions {
    int n_trees = 100;
    int max_depth = 8;
    double min_leaf = 1.0;
    double subsample = 0.632;
    bool honest = true;
    std::uint64_t seed = 0;
};

/// Average of CART trees, each grown on a subsample drawn without replacement.
/// Honest trees grow on one half of the subsample and set leaf values from the other.
class HonestForest final : public Regressor {
public:
    explicit HonestForest(ForestOptions opt = {}) : opt_(opt) {
        if (opt.n_trees < 1) throw ConfigError("forest needs at least one tree");
        if (opt.max_depth < 0) throw ConfigError("forest depth must be nonnegative");
        if (!(opt.min_leaf > 0.0)) throw ConfigError("forest min_leaf must be positive");
        if (!(opt.subsample > 0.0 && opt.subsample <= 1.0)) throw ConfigError("forest subsample must lie in (0, 1]");
    }

    std::string name() const override {
        return "forest:trees=" + std::to_string(opt_.n_trees) + ",depth=" + std::to_string(opt_.max_depth) +
               ",seed=" + std::to_string(opt_.seed);
    }
    std::unique_ptr<Regressor> clone() const override { return std::make_unique<HonestForest>(opt_); }
    const ForestOptions& options() const noexcept { return opt_; }

protected:
    void fit_impl(const FeatureMatrix& X, const Vector& y, const Vector& w, const Objective& obj) override {
        trees_.assign(std::size_t(opt_.n_trees), {});
        const auto n = static_cast<std::size_t>(X.rows());
        const auto leaf = detail::leaf_rule(y, w, obj);
        for (int t = 0; t < opt_.n_trees; ++t) {
            std::mt19937_64 rng(opt_.seed + std::uint64_t(t));
            auto rows = detail::all_rows(X.rows());
            std::shuffle(rows.begin(), rows.end(), rng);
            const auto m = std::clamp<std::size_t>(std::size_t(std::llround(opt_.subsample * double(n))), 1, n);
            rows.resize(m);
            auto positive = [&](std::span<const std::size_t> r) {
                return std::any_of(r.begin(), r.end(), [&](std::size_t i) { return w(Eigen::Index(i)) > 0.0; });
            };
            if (opt_.honest && m >= 2) {
                const std::vector<std::size_t> grow_rows(rows.begin(), rows.begin() + std::ptrdiff_t(m / 2));
                const std::vector<std::size_t> est_rows(rows.begin() + std::ptrdiff_t(m / 2), rows.end());
                if (positive(grow_rows)) {
                    trees_[std::size_t(t)].grow(X, y, w, grow_rows, opt_.max_depth, opt_.min_leaf, leaf);
                    std::vector<std::size_t> est_pos;
                    for (auto i : est_rows)
                        if (w(Eigen::Index(i)) > 0.0) est_pos.push_back(i);
                    trees_[std::size_t(t)].refit_leaves(X, est_pos, leaf);
                    continue;
                }
            }
            if (!positive(rows)) rows = detail::all_rows(X.rows());
            trees_[std::size_t(t)].grow(X, y, w, rows, opt_.max_depth, opt_.min_leaf, leaf);
        }
    }

    double predict_raw(const double* x) const override {
        double s = 0.0;
        for (const auto& t : trees_) s += t.predict(x);
        return s / double(trees_.size());
    }

private:
    ForestOptions opt_;
    std::vector<detail::CartStructure> trees_;
};

/// Classification tree on unit-weighted labels with Laplace-smoothed leaves:
/// a leaf with m samples of which m1 are treated predicts (m1 + 1) / (m + 2).
class TreeClassifier final : public ProbClassifier {
public:
    explicit TreeClassifier(int max_depth = 6, double min_leaf = 1.0) : max_depth_(max_depth), min_leaf_(min_leaf) {
        if (max_depth < 0) throw ConfigError("tree depth must be nonnegative");
        if (!(min_leaf > 0.0)) throw ConfigError("tree min_leaf must be positive");
    }

    std::string name() const override { return "treeclf:depth=" + std::to_string(max_depth_); }
    std::unique_ptr<ProbClassifier> clone() const override {
        return std::make_unique<TreeClassifier>(max_depth_, min_leaf_);
    }

protected:
    void fit_impl(const FeatureMatrix& X, const Vector& t) override {
        const Vector w = Vector::Ones(t.size());
        const auto laplace = [&t](std::span<const std::size_t> rows) {
            double m1 = 0.0;
            for (auto i : rows) m1 += t(Eigen::Index(i));
            return (m1 + 1.0) / (double(rows.size()) + 2.0);
        };
        tree_.grow(X, t, w, detail::all_rows(X.rows()), max_depth_, min_leaf_, laplace);
    }
    double proba_impl(const double* x) const override { return tree_.predict(x); }

private:
    int max_depth_;
    double min_leaf_;
    detail::CartStructure tree_;
};

}  // namespace causalcert
