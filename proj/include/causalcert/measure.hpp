#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "causalcert/errors.hpp"

namespace causalcert {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct DiscreteDist {
    std::vector<double> support;
    std::vector<double> probs;

    DiscreteDist() = default;
    DiscreteDist(std::vector<double> atoms, std::vector<double> p) : support(std::move(atoms)), probs(std::move(p)) {
        if (support.size() != probs.size()) throw DomainError("support and probability lengths differ");
        double total = 0.0;
        for (double v : probs) {
            if (!(v >= 0.0)) throw DomainError("probabilities must be nonnegative");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-12) throw DomainError("probabilities must sum to 1");
    }

    template <class F>
    double expect(F&& phi) const {
        double s = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i) s += probs[i] * phi(support[i]);
        return s;
    }

    template <class F>
    double variance(F&& phi) const {
        const double m = expect(phi);
        return expect([&](double x) {
            const double d = phi(x) - m;
            return d * d;
        });
    }
};

/// chi^2(q || p) = sum_i (q_i - p_i)^2 / p_i; +inf when q puts mass where p does not.
inline double chi2_discrete(const DiscreteDist& q, const DiscreteDist& p) {
    if (q.support != p.support) throw DomainError("chi2 requires a shared support");
    double s = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) {
        const double pi = p.probs[i], qi = q.probs[i];
        if (pi == 0.0) {
            if (qi > 0.0) return kInfinity;
            continue;
        }
        const double r = qi / pi - 1.0;
        s += pi * r * r;
    }
    return s;
}

inline double chi2_from_ratios(std::span<const double> ratios) {
    if (ratios.empty()) throw DomainError("chi2_from_ratios needs at least one ratio");
    double s = 0.0;
    for (double r : ratios) {
        if (!(r >= 0.0)) throw DomainError("density ratios must be nonnegative");
        s += (r - 1.0) * (r - 1.0);
    }
    return s / static_cast<double>(ratios.size());
}

/// lambda * chi2 + var / (4 lambda), with the limits at lambda in {0, inf} resolved.
inline double envelope(double lambda, double chi2, double var) {
    if (!(lambda >= 0.0)) throw DomainError("lambda must be nonnegative");
    if (std::isinf(lambda)) return chi2 == 0.0 ? 0.0 : kInfinity;
    if (lambda == 0.0) return var == 0.0 ? 0.0 : kInfinity;
    const double left = chi2 == 0.0 ? 0.0 : lambda * chi2;
    return left + var / (4.0 * lambda);
}

/// lambda* = sqrt(var / (4 chi2)). chi2 = 0 gives +inf; var = 0 < chi2 gives 0.
inline double optimal_lambda(double chi2, double var) {
    if (!(chi2 >= 0.0) || !(var >= 0.0)) throw DomainError("chi2 and variance must be nonnegative");
    if (chi2 == 0.0) return kInfinity;
    if (std::isinf(chi2) || var == 0.0) return 0.0;
    return std::sqrt(var / (4.0 * chi2));
}

/// sqrt(chi2 * var), the envelope at lambda*.
inline double optimal_envelope(double chi2, double var) {
    if (chi2 == 0.0 || var == 0.0) return std::isinf(chi2) && var > 0.0 ? kInfinity : 0.0;
    return std::sqrt(chi2 * var);
}

struct ChangeOfMeasureBound {
    double eq_mean = 0.0;
    double chi2 = 0.0;
    double var_p = 0.0;
    double lambda = kInfinity;
    double envelope_E = 0.0;
    double lower = 0.0;
    double upper = 0.0;

    bool exact() const noexcept { return envelope_E == 0.0; }
};

/// Two-sided bound E_Q[phi] - E <= E_P[phi] <= E_Q[phi] + E.
inline ChangeOfMeasureBound change_of_measure(double eq_mean, double chi2, double var_p,
                                              std::optional<double> lambda = std::nullopt) {
    if (!(chi2 >= 0.0) || !(var_p >= 0.0)) throw DomainError("chi2 and variance must be nonnegative");
    ChangeOfMeasureBound b;
    b.eq_mean = eq_mean;
    b.chi2 = chi2;
    b.var_p = var_p;
    if (lambda) {
        if (!(*lambda > 0.0)) throw DomainError("lambda must be positive");
        b.lambda = *lambda;
        b.envelope_E = envelope(*lambda, chi2, var_p);
    } else {
        b.lambda = optimal_lambda(chi2, var_p);
        b.envelope_E = optimal_envelope(chi2, var_p);
    }
    b.lower = eq_mean - b.envelope_E;
    b.upper = eq_mean + b.envelope_E;
    return b;
}

/// n points log-spaced on [lo, hi], endpoints included.
inline std::vector<double> logspace(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0 && hi >= lo) || n == 0) throw DomainError("logspace requires 0 < lo <= hi and n >= 1");
    std::vector<double> out(n);
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = n == 1 ? lo : std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    return out;
}

}  // namespace causalcert
