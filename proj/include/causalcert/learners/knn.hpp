#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "causalcert/learners/base.hpp"

namespace causalcert {

/// k-nearest-neighbour regression where k counts weight mass: the nearest points are
/// taken until their weights sum to k, the last one partially. Integer weights thus
/// match replicated samples. Quantile mode returns the weighted neighbourhood quantile.
class KnnRegressor final : public Regressor {
public:
    explicit KnnRegressor(double k = 5.0) : k_(k) {
        if (!(k > 0.0)) throw ConfigError("knn k must be positive");
    }

    std::string name() const override { return "knn:k=" + detail::format_number(k_); }
    std::unique_ptr<Regressor> clone() const override { return std::make_unique<KnnRegressor>(k_); }

protected:
    void fit_impl(const FeatureMatrix& X, const Vector& y, const Vector& w, const Objective& obj) override {
        X_.resize(0, X.cols());
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            if (w(i) > 0.0) keep.push_back(i);
        X_.resize(Eigen::Index(keep.size()), X.cols());
        y_.resize(Eigen::Index(keep.size()));
        w_.resize(Eigen::Index(keep.size()));
        for (std::size_t r = 0; r < keep.size(); ++r) {
            X_.row(Eigen::Index(r)) = X.row(keep[r]);
            y_(Eigen::Index(r)) = y(keep[r]);
            w_(Eigen::Index(r)) = w(keep[r]);
        }
        quantile_ = obj.kind == Objective::Kind::quantile;
        alpha_ = obj.alpha;
    }

    double predict_raw(const double* x) const override {
        const auto n = X_.rows();
        std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (Eigen::Index j = 0; j < X_.cols(); ++j) {
                const double d = X_(i, j) - x[j];
                s += d * d;
            }
            dist[std::size_t(i)] = {s, i};
        }
        std::sort(dist.begin(), dist.end());
        std::vector<std::pair<double, double>> picked;
        double mass = 0.0;
        for (const auto& [d2, i] : dist) {
            if (mass >= k_) break;
            const double take = std::min(w_(i), k_ - mass);
            picked.emplace_back(y_(i), take);
            mass += take;
        }
        if (quantile_) return weighted_quantile(std::move(picked), alpha_);
        double s = 0.0;
        for (const auto& [v, wt] : picked) s += v * wt;
        return s / mass;
    }

private:
    double k_;
    FeatureMatrix X_;
    Vector y_, w_;
    bool quantile_ = false;
    double alpha_ = 0.5;
};

}  // namespace causalcert
