#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "causalcert/data.hpp"
#include "causalcert/errors.hpp"
#include "causalcert/losses.hpp"

namespace causalcert {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline FeatureMatrix features(const CausalDataset& ds) {
    FeatureMatrix X(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.dim()));
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < ds.dim(); ++j) X(Eigen::Index(i), Eigen::Index(j)) = ds[i].x[j];
    return X;
}

inline FeatureMatrix features(const CausalDataset& ds, std::span<const std::size_t> rows) {
    FeatureMatrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.dim()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < ds.dim(); ++j) X(Eigen::Index(r), Eigen::Index(j)) = ds[rows[r]].x[j];
    return X;
}

inline Vector outcomes(const CausalDataset& ds, std::span<const std::size_t> rows) {
    Vector y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) y(Eigen::Index(r)) = ds[rows[r]].y;
    return y;
}

inline Vector treatments(const CausalDataset& ds) {
    Vector t(static_cast<Eigen::Index>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) t(Eigen::Index(i)) = ds[i].t;
    return t;
}

/// What a regressor minimizes. zero_one trains on squared loss and thresholds at 0.5.
struct Objective {
    enum class Kind { squared, quantile } kind = Kind::squared;
    double alpha = 0.5;
    bool threshold = false;

    static Objective squared() { return {}; }
    static Objective quantile(double a) { return {Kind::quantile, a, false}; }
};

inline Objective objective_for(const DecomposableLoss& loss) {
    switch (loss.kind) {
        case LossKind::squared: return Objective::squared();
        case LossKind::absolute: return Objective::quantile(0.5);
        case LossKind::quantile: return Objective::quantile(loss.alpha);
        case LossKind::zero_one: return {Objective::Kind::squared, 0.5, true};
    }
    return {};
}

/// Smallest value whose cumulative weight reaches alpha of the total.
/// Integer weights behave exactly like replicated samples.
inline double weighted_quantile(std::vector<std::pair<double, double>> value_weight, double alpha) {
    if (value_weight.empty()) throw DomainError("weighted quantile of an empty sample");
    std::sort(value_weight.begin(), value_weight.end());
    double total = 0.0;
    for (const auto& vw : value_weight) total += vw.second;
    const double target = alpha * total;
    double acc = 0.0;
    for (const auto& [v, w] : value_weight) {
        acc += w;
        if (acc >= target * (1.0 - 1e-12) && w > 0.0) return v;
    }
    return value_weight.back().first;
}

inline void check_fit_inputs(const FeatureMatrix& X, const Vector& y, const Vector& w) {
    if (X.rows() == 0) throw DataError("cannot fit on zero samples");
    if (y.size() != X.rows() || w.size() != X.rows()) throw DataError("X, y and weights differ in length");
    double total = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (!(w(i) >= 0.0) || !std::isfinite(w(i))) throw DomainError("sample weights must be finite and nonnegative");
        total += w(i);
    }
    if (!(total > 0.0)) throw DomainError("sample weights are all zero");
}

class Regressor {
public:
    virtual ~Regressor() = default;

    void fit(const FeatureMatrix& X, const Vector& y, const Vector& w, const Objective& obj = {}) {
        check_fit_inputs(X, y, w);
        objective_ = obj;
        fit_impl(X, y, w, obj);
        fitted_ = true;
    }

    double predict(const double* x) const {
        if (!fitted_) throw Error("predict called before fit");
        const double v = predict_raw(x);
        return objective_.threshold ? (v >= 0.5 ? 1.0 : 0.0) : v;
    }
    double predict(std::span<const double> x) const { return predict(x.data()); }

    Vector predict(const FeatureMatrix& X) const {
        Vector out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict(X.row(i).data());
        return out;
    }

    bool fitted() const noexcept { return fitted_; }
    const Objective& objective() const noexcept { return objective_; }
    virtual std::string name() const = 0;
    // Fresh unfitted regressor with the same hyperparameters.
    virtual std::unique_ptr<Regressor> clone() const = 0;

protected:
    virtual void fit_impl(const FeatureMatrix& X, const Vector& y, const Vector& w, const Objective& obj) = 0;
    virtual double predict_raw(const double* x) const = 0;

private:
    Objective objective_;
    bool fitted_ = false;
};

class ProbClassifier {
public:
    virtual ~ProbClassifier() = default;

    void fit(const FeatureMatrix& X, const Vector& t) {
        if (X.rows() == 0 || t.size() != X.rows()) throw DataError("classifier inputs are empty or misaligned");
        double ones = 0.0;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            if (t(i) != 0.0 && t(i) != 1.0) throw DataError("classifier labels must be 0 or 1");
            ones += t(i);
        }
        if (ones == 0.0 || ones == double(t.size())) throw DataError("classifier needs both classes present");
        fit_impl(X, t);
        fitted_ = true;
    }

    /// P[T=1 | x], in [0, 1].
    double predict_proba(const double* x) const {
        if (!fitted_) throw Error("predict_proba called before fit");
        return std::clamp(proba_impl(x), 0.0, 1.0);
    }
    double predict_proba(std::span<const double> x) const { return predict_proba(x.data()); }
    double predict_proba(const double* x, Arm a) const {
        const double p = predict_proba(x);
        return a == Arm::treated ? p : 1.0 - p;
    }

    bool fitted() const noexcept { return fitted_; }
    virtual std::string name() const = 0;
    virtual std::unique_ptr<ProbClassifier> clone() const = 0;

protected:
    virtual void fit_impl(const FeatureMatrix& X, const Vector& t) = 0;
    virtual double proba_impl(const double* x) const = 0;
    void mark_fitted() noexcept { fitted_ = true; }

private:
    bool fitted_ = false;
};

/// Ignores its training data; predicts p everywhere.
class ConstantClassifier final : public ProbClassifier {
public:
    explicit ConstantClassifier(double p) : p_(p) {
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("constant probability must lie in [0, 1]");
        mark_fitted();
    }
    std::string name() const override { return "const:" + detail::format_number(p_); }
    std::unique_ptr<ProbClassifier> clone() const override { return std::make_unique<ConstantClassifier>(p_); }

protected:
    void fit_impl(const FeatureMatrix&, const Vector&) override {}
    double proba_impl(const double*) const override { return p_; }

private:
    double p_;
};

/// Wraps a known propensity function of x (simulation oracles).
template <class F>
class FunctionClassifier final : public ProbClassifier {
public:
    FunctionClassifier(F f, std::size_t d, std::string label) : f_(std::move(f)), d_(d), label_(std::move(label)) {
        mark_fitted();
    }
    std::string name() const override { return label_; }
    std::unique_ptr<ProbClassifier> clone() const override {
        return std::make_unique<FunctionClassifier>(f_, d_, label_);
    }

protected:
    void fit_impl(const FeatureMatrix&, const Vector&) override {}
    double proba_impl(const double* x) const override { return f_(std::span<const double>(x, d_)); }

private:
    F f_;
    std::size_t d_;
    std::string label_;
};

/// (1/n) sum_i w_i^2 (nu(X_i) - 1[T_i = a])^2 over all rows.
inline double brier_score(const ProbClassifier& nu, const CausalDataset& ds, Arm a, std::span<const double> w) {
    if (ds.empty()) throw DataError("brier score of an empty dataset");
    if (w.size() != ds.size()) throw DataError("weights and dataset differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double r = nu.predict_proba(ds[i].x.data(), a) - (ds.in_arm(i, a) ? 1.0 : 0.0);
        s += w[i] * w[i] * r * r;
    }
    return s / static_cast<double>(ds.size());
}

}  // namespace causalcert
