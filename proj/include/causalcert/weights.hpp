#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "causalcert/data.hpp"
#include "causalcert/detail/spec_string.hpp"
#include "causalcert/learners.hpp"

namespace causalcert {

/// Reweighting w(x) for one arm.
///
/// inverse_propensity: w(x) = (p_hat / max(e_a(x), clip_eps)) / M_hat, where p_hat is the
/// arm frequency and M_hat the arm mean of the unnormalized weight, both frozen at build.
class WeightFn {
public:
    enum class Kind { constant_one, inverse_propensity };

    static WeightFn constant() { return WeightFn(); }

    Kind kind() const noexcept { return kind_; }
    Arm arm() const noexcept { return arm_; }
    double clip_eps() const noexcept { return clip_eps_; }
    double p_hat() const noexcept { return p_hat_; }
    double normalizer() const noexcept { return M_hat_; }
    double w_max() const noexcept { return w_max_; }
    // Some arm sample had e_a(x) = 0 with no clipping.
    bool infinite() const noexcept { return infinite_; }
    const std::shared_ptr<const ProbClassifier>& classifier() const noexcept { return e_hat_; }
    std::string spec() const {
        if (kind_ == Kind::constant_one && scale_ == 1.0) return "one";
        if (kind_ == Kind::constant_one) return "const:" + detail::format_number(scale_);
        return "ipw:clf=" + e_hat_->name() + ",clip=" + detail::format_number(clip_eps_);
    }

    double unnormalized(const double* x) const {
        if (kind_ == Kind::constant_one) return 1.0;
        const double e = std::max(e_hat_->predict_proba(x, arm_), clip_eps_);
        return e > 0.0 ? p_hat_ / e : std::numeric_limits<double>::infinity();
    }

    double operator()(const double* x) const {
        if (kind_ == Kind::constant_one) return scale_;
        return scale_ * unnormalized(x) / M_hat_;
    }
    double operator()(std::span<const double> x) const { return (*this)(x.data()); }

    std::vector<double> on(const CausalDataset& ds) const {
        std::vector<double> out(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) out[i] = (*this)(ds[i].x.data());
        return out;
    }

    // Same function multiplied by `factor`; used for perturbation checks.
    WeightFn scaled(double factor) const {
        if (!(factor > 0.0)) throw DomainError("weight scale must be positive");
        WeightFn out = *this;
        out.scale_ *= factor;
        out.w_max_ *= factor;
        return out;
    }

    friend WeightFn build_ipw(std::shared_ptr<const ProbClassifier> e_hat, Arm a, const CausalDataset& ds,
                              double clip_eps);

private:
    Kind kind_ = Kind::constant_one;
    Arm arm_ = Arm::treated;
    std::shared_ptr<const ProbClassifier> e_hat_;
    double clip_eps_ = 0.0;
    double p_hat_ = 1.0;
    double M_hat_ = 1.0;
    double w_max_ = 1.0;
    double scale_ = 1.0;
    bool infinite_ = false;
};

inline WeightFn build_constant() { return WeightFn::constant(); }

/// Normalized inverse-propensity weights for arm `a`, calibrated on `ds`.
inline WeightFn build_ipw(std::shared_ptr<const ProbClassifier> e_hat, Arm a, const CausalDataset& ds,
                          double clip_eps = 0.0) {
    if (!e_hat) throw ConfigError("inverse-propensity weights need a classifier");
    if (!(clip_eps >= 0.0 && clip_eps < 0.5)) throw ConfigError("clip_eps must lie in [0, 0.5)");
    ds.require_both_arms("weight calibration data");
    WeightFn w;
    w.kind_ = WeightFn::Kind::inverse_propensity;
    w.arm_ = a;
    w.e_hat_ = std::move(e_hat);
    w.clip_eps_ = clip_eps;
    w.p_hat_ = arm_counts(ds).p(a);
    w.M_hat_ = 1.0;

    double sum = 0.0, mx = 0.0;
    std::size_t finite = 0;
    for (auto i : ds.arm_indices(a)) {
        const double v = w.unnormalized(ds[i].x.data());
        if (std::isinf(v)) {
            w.infinite_ = true;
            continue;
        }
        sum += v;
        mx = std::max(mx, v);
        ++finite;
    }
    w.M_hat_ = finite > 0 && sum > 0.0 ? sum / double(finite) : 1.0;
    w.w_max_ = w.infinite_ ? std::numeric_limits<double>::infinity() : mx / w.M_hat_;
    return w;
}

/// Arm-`a` sample mean of w; 1 after normalization on the calibration data.
inline double conditional_mean(const WeightFn& w, const CausalDataset& ds, Arm a) {
    const auto idx = ds.arm_indices(a);
    if (idx.empty()) throw DataError("arm has no samples");
    double s = 0.0;
    for (auto i : idx) s += w(ds[i].x.data());
    return s / double(idx.size());
}

/// Largest weight over the arm-`a` rows of ds.
inline double arm_w_max(const WeightFn& w, const CausalDataset& ds, Arm a) {
    double m = 0.0;
    for (auto i : ds.arm_indices(a)) m = std::max(m, w(ds[i].x.data()));
    return m;
}

/// D = (1/n) sum_i (w(X_i) 1[T_i=a] / p_hat - 1)^2 with p_hat the arm frequency in ds.
inline double balance_term(const WeightFn& w, const CausalDataset& ds, Arm a) {
    const double p = arm_counts(ds).p(a);
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double r = (ds.in_arm(i, a) ? w(ds[i].x.data()) / p : 0.0) - 1.0;
        s += r * r;
    }
    return s / double(ds.size());
}

inline double brier_score(const ProbClassifier& nu, const CausalDataset& ds, Arm a, const WeightFn& w) {
    const auto wv = w.on(ds);
    return brier_score(nu, ds, a, wv);
}

struct WeightSpec {
    bool ipw = false;
    std::string classifier = "logistic:l2=1.0";
    double clip = 0.0;

    std::string to_string() const {
        return ipw ? "ipw:clf=" + classifier + ",clip=" + detail::format_number(clip) : "one";
    }
};

/// "one" or "ipw:clf=<classifier spec>[,clip=<eps>]".
inline WeightSpec parse_weight_spec(const std::string& spec) {
    const auto s = detail::trim(spec);
    if (s == "one") return {};
    const auto [kind, rest] = detail::split_kind(s);
    if (kind != "ipw") throw ConfigError("unknown weight spec '" + spec + "'");
    WeightSpec ws;
    ws.ipw = true;
    std::string body = rest;
    const auto c = body.rfind(",clip=");
    if (c != std::string::npos) {
        ws.clip = detail::parse_double(body.substr(c + 6), "ipw clip");
        body = body.substr(0, c);
    } else if (detail::starts_with(body, "clip=")) {
        throw ConfigError("ipw spec needs clf= before clip=");
    }
    if (!body.empty()) {
        if (!detail::starts_with(body, "clf=")) throw ConfigError("ipw spec expects clf=<classifier>, got '" + body + "'");
        ws.classifier = detail::trim(body.substr(4));
    }
    if (!(ws.clip >= 0.0 && ws.clip < 0.5)) throw ConfigError("ipw clip must lie in [0, 0.5)");
    make_classifier(ws.classifier);
    return ws;
}

/// (w1, w0) built on ds. IPW fits one propensity classifier on (X, T) shared by both arms.
inline std::pair<WeightFn, WeightFn> build_weight_pair(const WeightSpec& spec, const CausalDataset& ds) {
    if (!spec.ipw) return {build_constant(), build_constant()};
    ds.require_both_arms("weight training data");
    std::shared_ptr<const ProbClassifier> clf = fit_classifier(spec.classifier, features(ds), treatments(ds));
    return {build_ipw(clf, Arm::treated, ds, spec.clip), build_ipw(clf, Arm::control, ds, spec.clip)};
}

}  // namespace causalcert
