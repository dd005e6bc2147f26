#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "causalcert/learners/base.hpp"

namespace causalcert {

/// Weighted ridge regression with an unpenalized intercept.
///
/// Squared objective: sum_i w_i (y_i - b - x_i'beta)^2 + l2 |beta|^2, solved by LDLT
/// on weighted-centered features. Quantile objective: mean weighted pinball loss
/// plus (l2 / sum w) |beta|^2 on standardized slopes, minimized by subgradient
/// descent from the least-squares solution, then an exact intercept step.
class RidgeRegressor final : public Regressor {
public:
    explicit RidgeRegressor(double l2 = 1.0, int max_iter = 3000) : l2_(l2), max_iter_(max_iter) {
        if (!(l2 >= 0.0)) throw ConfigError("ridge l2 must be nonnegative");
        if (max_iter < 0) throw ConfigError("ridge iters must be nonnegative");
    }

    std::string name() const override { return "ridge:l2=" + detail::format_number(l2_); }
    std::unique_ptr<Regressor> clone() const override { return std::make_unique<RidgeRegressor>(l2_, max_iter_); }

    const Vector& coefficients() const noexcept { return beta_; }
    double intercept() const noexcept { return intercept_; }
    // True when the normal equations were singular and l2 was raised to 1e-8.
    bool used_fallback() const noexcept { return fallback_; }

protected:
    void fit_impl(const FeatureMatrix& X, const Vector& y, const Vector& w, const Objective& obj) override {
        fit_least_squares(X, y, w);
        if (obj.kind == Objective::Kind::quantile) fit_pinball(X, y, w, obj.alpha);
    }

    double predict_raw(const double* x) const override {
        double v = intercept_;
        for (Eigen::Index j = 0; j < beta_.size(); ++j) v += beta_(j) * x[j];
        return v;
    }

private:
    void fit_least_squares(const FeatureMatrix& X, const Vector& y, const Vector& w) {
        const double W = w.sum();
        const Eigen::RowVectorXd xbar = (w.transpose() * X) / W;
        const double ybar = w.dot(y) / W;
        const Eigen::MatrixXd Xc = X.rowwise() - xbar;
        const Vector yc = y.array() - ybar;
        const Eigen::MatrixXd Xw = Xc.array().colwise() * w.array();
        Eigen::MatrixXd A = Xw.transpose() * Xc;
        const Vector b = Xw.transpose() * yc;
        const auto d = A.rows();
        fallback_ = false;

        beta_ = Vector::Zero(d);
        if (d > 0) {
            Eigen::MatrixXd Ar = A;
            Ar.diagonal().array() += l2_;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(Ar);
            const double scale = std::max(1.0, Ar.diagonal().cwiseAbs().maxCoeff());
            // LDLT's rcond estimate ignores exactly-zero pivots, so inspect D directly.
            const Vector D = ldlt.vectorD();
            if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-13 || !ldlt.isPositive() ||
                D.minCoeff() <= 1e-13 * std::max(1.0, D.cwiseAbs().maxCoeff()) ||
                Ar.diagonal().minCoeff() <= 1e-15 * scale) {
                fallback_ = true;
                Ar = A;
                Ar.diagonal().array() += std::max(l2_, 1e-8);
                ldlt.compute(Ar);
            }
            beta_ = ldlt.solve(b);
        }
        intercept_ = ybar - xbar.dot(beta_);
    }

    static double pinball_obj(const FeatureMatrix& X, const Vector& y, const Vector& w, double alpha,
                              const Vector& beta, double b0, double penalty) {
        const Vector r = y - ((X * beta).array() + b0).matrix();
        double s = 0.0;
        for (Eigen::Index i = 0; i < r.size(); ++i) s += w(i) * pinball(alpha, r(i));
        return s + penalty * beta.squaredNorm();
    }

    void fit_pinball(const FeatureMatrix& X, const Vector& y, const Vector& w, double alpha) {
        const double W = w.sum();
        const auto d = X.cols();
        // Work on standardized features; map back at the end.
        const Eigen::RowVectorXd mu = (w.transpose() * X) / W;
        Eigen::RowVectorXd sd(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double v = (w.array() * (X.col(j).array() - mu(j)).square()).sum() / W;
            sd(j) = v > 1e-24 ? std::sqrt(v) : 1.0;
        }
        const FeatureMatrix Z = ((X.rowwise() - mu).array().rowwise() / sd.array()).matrix();
        const Vector wn = w / W;
        const double pen = (l2_ > 0.0 ? l2_ : (fallback_ ? 1e-8 : 0.0)) / W;

        Vector beta = (beta_.array() * sd.transpose().array()).matrix();
        double b0 = intercept_ + mu.dot(beta_);
        auto exact_intercept = [&](const Vector& bt) {
            const Vector r = y - Z * bt;
            std::vector<std::pair<double, double>> rv(static_cast<std::size_t>(r.size()));
            for (Eigen::Index i = 0; i < r.size(); ++i) rv[std::size_t(i)] = {r(i), w(i)};
            return weighted_quantile(std::move(rv), alpha);
        };
        b0 = exact_intercept(beta);
        Vector best = beta;
        double best_b0 = b0;
        double best_f = pinball_obj(Z, y, wn, alpha, beta, b0, pen);

        const Vector r0 = y - ((Z * beta).array() + b0).matrix();
        const double eta0 = std::max((wn.array() * r0.array().abs()).sum(), 1e-12);
        for (int k = 0; k < max_iter_ && best_f > 0.0; ++k) {
            const Vector r = y - ((Z * beta).array() + b0).matrix();
            Vector g = Vector::Zero(d);
            double g0 = 0.0;
            for (Eigen::Index i = 0; i < r.size(); ++i) {
                if (std::abs(r(i)) < 1e-12) continue;
                const double s = r(i) > 0.0 ? -alpha : (1.0 - alpha);
                g += (wn(i) * s) * Z.row(i).transpose();
                g0 += wn(i) * s;
            }
            g += 2.0 * pen * beta;
            const double gn = std::sqrt(g.squaredNorm() + g0 * g0);
            if (gn == 0.0) break;
            const double eta = eta0 / std::sqrt(double(k) + 1.0);
            beta -= (eta / gn) * g;
            b0 -= (eta / gn) * g0;
            const double f = pinball_obj(Z, y, wn, alpha, beta, b0, pen);
            if (f < best_f) {
                best_f = f;
                best = beta;
                best_b0 = b0;
            }
        }
        // Final intercept is the exact minimizer given the slopes.
        const double b_exact = exact_intercept(best);
        if (pinball_obj(Z, y, wn, alpha, best, b_exact, pen) <= best_f) best_b0 = b_exact;

        beta_ = (best.array() / sd.transpose().array()).matrix();
        intercept_ = best_b0 - mu.dot(beta_);
    }

    double l2_;
    int max_iter_;
    Vector beta_;
    double intercept_ = 0.0;
    bool fallback_ = false;
};

/// L2-regularized logistic regression, Newton steps on
/// sum_i log-loss + (l2/2)|beta|^2 with an unpenalized intercept.
class LogisticClassifier final : public ProbClassifier {
public:
    explicit LogisticClassifier(double l2 = 1.0, int max_iter = 100, double tol = 1e-8)
        : l2_(l2), max_iter_(max_iter), tol_(tol) {
        if (!(l2 >= 0.0)) throw ConfigError("logistic l2 must be nonnegative");
        if (max_iter < 1) throw ConfigError("logistic max_iter must be positive");
        if (!(tol > 0.0)) throw ConfigError("logistic tol must be positive");
    }

    std::string name() const override { return "logistic:l2=" + detail::format_number(l2_); }
    std::unique_ptr<ProbClassifier> clone() const override {
        return std::make_unique<LogisticClassifier>(l2_, max_iter_, tol_);
    }
    const Vector& coefficients() const noexcept { return theta_; }
    int iterations() const noexcept { return iterations_; }

protected:
    void fit_impl(const FeatureMatrix& X, const Vector& t) override {
        const auto n = X.rows(), d = X.cols();
        Eigen::MatrixXd A(n, d + 1);
        A.col(0).setOnes();
        A.rightCols(d) = X;
        theta_ = Vector::Zero(d + 1);
        const double pbar = t.mean();
        theta_(0) = std::log(pbar / (1.0 - pbar));
        Eigen::MatrixXd P = Eigen::MatrixXd::Identity(d + 1, d + 1) * std::max(l2_, 1e-10);
        P(0, 0) = 0.0;
        for (iterations_ = 0; iterations_ < max_iter_; ++iterations_) {
            const Vector eta = A * theta_;
            Vector p(n), s(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                p(i) = sigmoid(eta(i));
                s(i) = std::max(p(i) * (1.0 - p(i)), 1e-12);
            }
            const Vector g = A.transpose() * (p - t) + P * theta_;
            Eigen::MatrixXd H = A.transpose() * (A.array().colwise() * s.array()).matrix() + P;
            H.diagonal().array() += 1e-10;
            const Vector step = H.ldlt().solve(g);
            theta_ -= step;
            if (step.cwiseAbs().maxCoeff() < tol_) {
                ++iterations_;
                break;
            }
        }
    }

    double proba_impl(const double* x) const override {
        double eta = theta_(0);
        for (Eigen::Index j = 1; j < theta_.size(); ++j) eta += theta_(j) * x[j - 1];
        return sigmoid(eta);
    }

private:
    static double sigmoid(double z) {
        return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }

    double l2_;
    int max_iter_;
    double tol_;
    Vector theta_;
    int iterations_ = 0;
};

}  // namespace causalcert
