#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "causalcert/detail/spec_string.hpp"
#include "causalcert/errors.hpp"

namespace causalcert {

enum class LossKind { squared, absolute, quantile, zero_one };

/// A loss l(y, yhat) = psi(y - yhat), capped at clip_M.
///
/// clip_M = +inf means "not yet calibrated"; PAC certificates need it finite.
/// Capping preserves the relaxed subadditivity psi(x +- y) <= C (psi(x) + psi(y))
/// with the same C, because C >= 1.
struct DecomposableLoss {
    LossKind kind = LossKind::squared;
    double alpha = 0.5;  // quantile level, quantile kind only
    double clip_M = std::numeric_limits<double>::infinity();

    static DecomposableLoss squared() { return {LossKind::squared, 0.5, kInf}; }
    static DecomposableLoss absolute() { return {LossKind::absolute, 0.5, kInf}; }
    static DecomposableLoss quantile(double alpha) {
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
        return {LossKind::quantile, alpha, kInf};
    }
    // 0-1 loss on labels in {0,1} has range [0,1] without clipping.
    static DecomposableLoss zero_one() { return {LossKind::zero_one, 0.5, 1.0}; }

    DecomposableLoss with_clip(double m) const {
        if (!(m > 0.0)) throw DomainError("clip_M must be positive");
        auto out = *this;
        out.clip_M = m;
        return out;
    }

    bool bounded() const noexcept { return std::isfinite(clip_M); }

private:
    static constexpr double kInf = std::numeric_limits<double>::infinity();
};

struct LossConstants {
    double C = 1.0;  // relaxed subadditivity constant
    double M = 0.0;  // range upper bound
};

inline double pinball(double alpha, double x) noexcept {
    return x >= 0.0 ? x * alpha : -x * (1.0 - alpha);
}

/// Unclipped psi.
inline double psi(const DecomposableLoss& loss, double x) noexcept {
    switch (loss.kind) {
        case LossKind::squared: return x * x;
        case LossKind::absolute:
        case LossKind::zero_one: return std::abs(x);
        case LossKind::quantile: return pinball(loss.alpha, x);
    }
    return 0.0;
}

/// min(psi(r), clip_M). Used for residuals that need not be binary, e.g. CATE errors.
inline double eval_residual(const DecomposableLoss& loss, double r) noexcept {
    return std::min(psi(loss, r), loss.clip_M);
}

inline double eval(const DecomposableLoss& loss, double y, double yhat) {
    if (loss.kind == LossKind::zero_one && ((y != 0.0 && y != 1.0) || (yhat != 0.0 && yhat != 1.0)))
        throw DomainError("0-1 loss requires y and yhat in {0, 1}");
    return eval_residual(loss, y - yhat);
}

inline LossConstants constants(const DecomposableLoss& loss) {
    LossConstants c;
    c.M = loss.clip_M;
    switch (loss.kind) {
        case LossKind::squared: c.C = 2.0; break;
        case LossKind::absolute:
        case LossKind::zero_one: c.C = 1.0; break;
        case LossKind::quantile:
            c.C = std::max(loss.alpha, 1.0 - loss.alpha) / std::min(loss.alpha, 1.0 - loss.alpha);
            break;
    }
    return c;
}

/// l_e(y, yhat) = l(e(x) y, e(x) yhat) = min(psi(e(x) (y - yhat)), clip_M).
template <class ScaleFn>
class ScaledLoss {
public:
    ScaledLoss(DecomposableLoss base, ScaleFn scale) : base_(base), scale_(std::move(scale)) {}

    template <class X>
    double operator()(const X& x, double y, double yhat) const {
        return at_scale(scale_(x), y, yhat);
    }

    double at_scale(double e, double y, double yhat) const {
        if (!(e >= 0.0 && e <= 1.0)) throw DomainError("loss scale must lie in [0, 1]");
        return eval_residual(base_, e * (y - yhat));
    }

    const DecomposableLoss& base() const noexcept { return base_; }

private:
    DecomposableLoss base_;
    ScaleFn scale_;
};

template <class ScaleFn>
ScaledLoss<ScaleFn> scaled_loss(const DecomposableLoss& loss, ScaleFn scale) {
    return ScaledLoss<ScaleFn>(loss, std::move(scale));
}

/// Linear-interpolated empirical quantile (type 7). `q` in [0, 1].
inline double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DomainError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Clip level from observed unclipped losses: their `percentile` quantile,
/// floored at a tiny positive value so a perfect fit still yields a valid range.
inline double clip_from_losses(std::span<const double> unclipped, double percentile = 0.995) {
    const double m = empirical_quantile(std::vector<double>(unclipped.begin(), unclipped.end()), percentile);
    return std::max(m, 1e-12);
}

/// "squared", "absolute", "quantile:0.8", "zero_one"
inline DecomposableLoss parse_loss(const std::string& spec) {
    const auto [kind, rest] = detail::split_kind(spec);
    if (kind == "squared" && rest.empty()) return DecomposableLoss::squared();
    if (kind == "absolute" && rest.empty()) return DecomposableLoss::absolute();
    if (kind == "zero_one" && rest.empty()) return DecomposableLoss::zero_one();
    if (kind == "quantile") {
        const double a = detail::parse_double(rest, "quantile level");
        if (!(a > 0.0 && a < 1.0)) throw ConfigError("quantile level must lie in (0, 1), got " + rest);
        return DecomposableLoss::quantile(a);
    }
    throw ConfigError("unknown loss spec '" + spec + "'");
}

inline std::string to_string(const DecomposableLoss& loss) {
    switch (loss.kind) {
        case LossKind::squared: return "squared";
        case LossKind::absolute: return "absolute";
        case LossKind::zero_one: return "zero_one";
        case LossKind::quantile: return "quantile:" + detail::format_number(loss.alpha);
    }
    return "?";
}

}  // namespace causalcert
