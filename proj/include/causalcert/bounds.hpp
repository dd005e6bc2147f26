#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "causalcert/certificate.hpp"
#include "causalcert/data.hpp"
#include "causalcert/detail/spec_string.hpp"
#include "causalcert/learners/base.hpp"
#include "causalcert/measure.hpp"
#include "causalcert/weights.hpp"

namespace causalcert {

inline std::string arm_suffix(Arm a) { return a == Arm::treated ? "1" : "0"; }

// ---------------------------------------------------------------------------
// Delta

struct DeltaEstimate {
    enum class Kind { theoretic_oracle, empirical } kind = Kind::empirical;
    Arm arm = Arm::treated;
    double value = 0.0;
    double brier_term = 0.0;    // empirical: (2 / p^2) * weighted Brier score
    double balance_term = 0.0;  // empirical: 2 * D
    double p = 0.0;             // arm probability used in the ratio

    bool infinite() const noexcept { return std::isinf(value); }
    std::string kind_name() const { return kind == Kind::empirical ? "empirical" : "theoretic_oracle"; }
};

/// Mean over all rows of (w(X_i) ps_a,i / P_a - 1)^2, with ps_a the oracle propensity
/// of arm a and P_a its average over the rows.
inline DeltaEstimate delta_theoretic(const CausalDataset& ds, const WeightFn& w, Arm a) {
    if (!ds.has_oracle()) throw DataError("theoretic delta needs oracle propensities");
    if (ds.empty()) throw DataError("theoretic delta of an empty dataset");
    const auto& orc = ds.oracle_fields();
    double P = 0.0;
    for (const auto& o : orc) P += o.propensity(a);
    P /= double(ds.size());
    if (!(P > 0.0)) throw DomainError("arm has zero marginal propensity");
    DeltaEstimate d;
    d.kind = DeltaEstimate::Kind::theoretic_oracle;
    d.arm = a;
    d.p = P;
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double ps = orc[i].propensity(a);
        const double wi = w(ds[i].x.data());
        const double ratio = ps == 0.0 ? 0.0 : wi * ps / P;
        s += (ratio - 1.0) * (ratio - 1.0);
    }
    d.value = s / double(ds.size());
    return d;
}

/// (2 / p^2) mean w^2 (nu_a - 1[T=a])^2 + 2 mean (w 1[T=a] / p - 1)^2, p the arm frequency.
inline DeltaEstimate delta_empirical(const CausalDataset& ds, const WeightFn& w, const ProbClassifier& nu, Arm a) {
    if (ds.empty()) throw DataError("empirical delta of an empty dataset");
    const double p = arm_counts(ds).p(a);
    if (!(p > 0.0)) throw DataError("empirical delta needs samples of the arm");
    DeltaEstimate d;
    d.kind = DeltaEstimate::Kind::empirical;
    d.arm = a;
    d.p = p;
    d.brier_term = 2.0 / (p * p) * brier_score(nu, ds, a, w);
    d.balance_term = 2.0 * balance_term(w, ds, a);
    d.value = d.brier_term + d.balance_term;
    return d;
}

// ---------------------------------------------------------------------------
// Variance caps and complexity terms

struct VarianceCap {
    std::string source = "popoviciu";  // popoviciu, user_asserted, oracle
    double value = 0.0;

    static VarianceCap popoviciu(double M) {
        if (!(M >= 0.0)) throw DomainError("range M must be nonnegative");
        return {"popoviciu", M * M / 4.0};
    }
    static VarianceCap user_asserted(double v) {
        if (!(v >= 0.0)) throw DomainError("asserted variance cap must be nonnegative");
        return {"user_asserted", v};
    }
    std::string provenance() const { return source == "popoviciu" ? "cap" : source == "oracle" ? "oracle" : "user"; }
};

struct ComplexityEstimate {
    std::string method = "massart_finite_class";
    double value = 0.0;
    std::size_t ensemble_size = 1;
    std::size_t n = 0;
    double range = 0.0;
    std::uint64_t seed = 0;
};

inline ComplexityEstimate massart_complexity(std::size_t k, std::size_t n, double M) {
    if (k < 1 || n < 1) throw DomainError("massart bound needs k >= 1 and n >= 1");
    if (!(M >= 0.0)) throw DomainError("range M must be nonnegative");
    ComplexityEstimate c;
    c.method = "massart_finite_class";
    c.ensemble_size = k;
    c.n = n;
    c.range = M;
    c.value = k == 1 ? 0.0 : M * std::sqrt(2.0 * std::log(double(k)) / double(n));
    return c;
}

inline ComplexityEstimate user_complexity(double v) {
    if (!(v >= 0.0)) throw DomainError("user complexity must be nonnegative");
    ComplexityEstimate c;
    c.method = "user_supplied";
    c.value = v;
    return c;
}

/// Finite-class Rademacher estimate from a k x n matrix of per-sample values in [0, M].
/// monte_carlo averages, over n_sigma sign vectors, the max over rows of the signed mean.
inline ComplexityEstimate rademacher_estimate(const std::string& method,
                                              const std::vector<std::vector<double>>& values, double M,
                                              int n_sigma = 200, std::uint64_t seed = 0) {
    if (values.empty()) throw DomainError("rademacher estimate needs at least one function");
    const std::size_t n = values.front().size();
    if (n == 0) throw DomainError("rademacher estimate needs at least one sample");
    for (const auto& row : values) {
        if (row.size() != n) throw DomainError("ensemble rows differ in length");
        for (double v : row)
            if (!(v >= 0.0 && v <= M)) throw DomainError("ensemble values must lie in [0, M]");
    }
    if (method == "massart" || method == "massart_finite_class") return massart_complexity(values.size(), n, M);
    if (method != "monte_carlo" && method != "monte_carlo_finite_class")
        throw ConfigError("unknown complexity method '" + method + "'");
    if (n_sigma < 1) throw ConfigError("monte-carlo complexity needs n_sigma >= 1");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> sigma(n);
    double acc = 0.0;
    for (int s = 0; s < n_sigma; ++s) {
        for (auto& v : sigma) v = coin(rng) ? 1.0 : -1.0;
        double best = -INFINITY;
        for (const auto& row : values) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += sigma[i] * row[i];
            best = std::max(best, m / double(n));
        }
        acc += best;
    }
    ComplexityEstimate c;
    c.method = "monte_carlo_finite_class";
    c.ensemble_size = values.size();
    c.n = n;
    c.range = M;
    c.seed = seed;
    c.value = std::max(0.0, acc / double(n_sigma));
    return c;
}

// ---------------------------------------------------------------------------
// Constants of the finite-sample tails

/// C(w_max) = (w_max / p)^2 + max{1, (w_max / p - 1)^2}.
inline double hoeffding_C(double w_max, double p) {
    if (!(p > 0.0 && p <= 1.0)) throw DomainError("arm probability must lie in (0, 1]");
    if (!(w_max >= 0.0)) throw DomainError("w_max must be nonnegative");
    const double r = w_max / p;
    return r * r + std::max(1.0, (r - 1.0) * (r - 1.0));
}

/// c = 1 + sqrt(n_min / n_max), in [1, 2].
inline double arm_balance_c(std::size_t n1, std::size_t n0) {
    if (n1 == 0 || n0 == 0) throw DataError("both certification arms must be nonempty");
    return 1.0 + std::sqrt(double(std::min(n1, n0)) / double(std::max(n1, n0)));
}

/// (lead * M * w_max + C_sum * sqrt(n_a / n)) * sqrt(ln(k / delta) / (2 n_a)).
inline double tail_term(double lead, double M, double w_max, double C_sum, std::size_t n_a, std::size_t n,
                        double k_over, double conf_delta) {
    if (!(conf_delta > 0.0 && conf_delta < 1.0)) throw DomainError("confidence delta must lie in (0, 1)");
    if (n_a == 0 || n == 0) throw DataError("empty certification arm");
    const double root = std::sqrt(std::log(k_over / conf_delta) / (2.0 * double(n_a)));
    return (lead * M * w_max + C_sum * std::sqrt(double(n_a) / double(n))) * root;
}

// ---------------------------------------------------------------------------
// Envelope terms

struct EnvelopeTerms {
    double lambda = INFINITY;
    double delta_term = 0.0;  // lambda * delta
    double var_term = 0.0;    // var / (4 lambda)
};

/// Terms of lambda * delta + var / (4 lambda); lambda* when not given.
inline EnvelopeTerms envelope_terms(double delta, double var, std::optional<double> lambda) {
    if (!(delta >= 0.0) || !(var >= 0.0)) throw DomainError("delta and variance must be nonnegative");
    EnvelopeTerms e;
    if (lambda) {
        if (!(*lambda > 0.0) || std::isinf(*lambda)) throw DomainError("lambda must be positive and finite");
        e.lambda = *lambda;
        e.delta_term = delta == 0.0 ? 0.0 : *lambda * delta;
        e.var_term = var / (4.0 * *lambda);
        return e;
    }
    e.lambda = optimal_lambda(delta, var);
    if (delta == 0.0) return e;
    if (std::isinf(delta)) {
        e.delta_term = INFINITY;
        return e;
    }
    if (var == 0.0) return e;
    if (std::isinf(var)) {
        e.var_term = INFINITY;
        return e;
    }
    e.delta_term = e.lambda * delta;
    e.var_term = var / (4.0 * e.lambda);
    return e;
}

namespace detail {

inline void add_envelope(BoundCertificate& c, const std::string& tag, const DeltaEstimate& d, double var,
                         const std::string& var_provenance, std::optional<double> lambda) {
    const auto e = envelope_terms(d.value, var, lambda);
    const std::string dprov = d.kind == DeltaEstimate::Kind::empirical ? "empirical" : "oracle";
    c.add("lambda_delta_" + tag, e.delta_term, "lambda_delta", dprov);
    c.add("variance_" + tag, e.var_term, "variance", var_provenance);
    c.parameters["lambda_" + tag] = e.lambda;
    c.parameters["delta_" + tag] = d.value;
    c.parameters["var_cap_" + tag] = var;
    if (d.kind == DeltaEstimate::Kind::empirical) {
        c.parameters["delta_brier_" + tag] = d.brier_term;
        c.parameters["delta_balance_" + tag] = d.balance_term;
    }
    c.parameters["p_" + tag] = d.p;
    if (d.infinite()) c.vacuous_positivity = true;
}

inline void check_obs(double v, const char* what) {
    if (!(v >= 0.0)) throw DomainError(std::string(what) + " must be nonnegative");
}

inline void finish(BoundCertificate& c, const std::vector<const DeltaEstimate*>& deltas) {
    bool all_zero = true;
    for (const auto* d : deltas) all_zero = all_zero && d->value == 0.0;
    c.exact_rct = all_zero;
    c.oracle_mode = !deltas.empty() && deltas.front()->kind == DeltaEstimate::Kind::theoretic_oracle;
    c.delta_kind = deltas.empty() ? "" : deltas.front()->kind_name();
    c.finalize();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Expectation-level bounds

/// obs + lambda * delta + var / (4 lambda).
inline BoundCertificate outcome_bound_expectation(double obs, const DeltaEstimate& delta, const VarianceCap& var,
                                                  std::optional<double> lambda = std::nullopt) {
    detail::check_obs(obs, "observable loss");
    BoundCertificate c;
    const auto tag = arm_suffix(delta.arm);
    c.task = "outcome:" + tag;
    c.level = "expectation";
    c.add("observable_" + tag, obs, "observable", "empirical");
    detail::add_envelope(c, tag, delta, var.value, var.provenance(), lambda);
    c.metadata["variance_source"] = var.source;
    detail::finish(c, {&delta});
    return c;
}

/// C (obs1 + obs0 + lambda1 d1 + lambda0 d0 + v1 / 4 lambda1 + v0 / 4 lambda0).
inline BoundCertificate tlearner_bound_expectation(double obs1, double obs0, const DeltaEstimate& d1,
                                                   const DeltaEstimate& d0, const VarianceCap& v1,
                                                   const VarianceCap& v0, double C_loss,
                                                   std::optional<double> lambda1 = std::nullopt,
                                                   std::optional<double> lambda0 = std::nullopt,
                                                   const std::string& task = "t_learner") {
    detail::check_obs(obs1, "observable loss");
    detail::check_obs(obs0, "observable loss");
    if (!(C_loss >= 1.0)) throw DomainError("loss constant C must be at least 1");
    BoundCertificate c;
    c.task = task;
    c.level = "expectation";
    c.scale = C_loss;
    c.add("observable_1", obs1, "observable", "empirical");
    c.add("observable_0", obs0, "observable", "empirical");
    detail::add_envelope(c, "1", d1, v1.value, v1.provenance(), lambda1);
    detail::add_envelope(c, "0", d0, v0.value, v0.provenance(), lambda0);
    c.parameters["C_loss"] = C_loss;
    c.metadata["variance_source"] = v1.source;
    detail::finish(c, {&d1, &d0});
    return c;
}

struct XObservables {
    double h1 = 0.0;    // arm 1, l_ebar(Y, h1)
    double h0 = 0.0;    // arm 0, l_e(Y, h0)
    double tau1 = 0.0;  // arm 1, l_e(Y - h0, tau1)
    double tau0 = 0.0;  // arm 0, l_ebar(h1 - Y, tau0)
};

struct XVariances {
    VarianceCap v1, v0, v10, v01;
};

struct XLambdas {
    std::optional<double> l1, l0, l10, l01;
};

/// C^2 (four observables + (l1 + l10) d1 + (l0 + l01) d0 + v1/4l1 + v0/4l0 + v10/4l10 + v01/4l01).
/// The four lambdas separate, each taking its own lambda* against the matching delta.
inline BoundCertificate xlearner_bound_expectation(const XObservables& obs, const DeltaEstimate& d1,
                                                   const DeltaEstimate& d0, const XVariances& v, double C_loss,
                                                   const XLambdas& lambdas = {}) {
    for (double o : {obs.h1, obs.h0, obs.tau1, obs.tau0}) detail::check_obs(o, "observable loss");
    if (!(C_loss >= 1.0)) throw DomainError("loss constant C must be at least 1");
    BoundCertificate c;
    c.task = "x_learner";
    c.level = "expectation";
    c.scale = C_loss * C_loss;
    c.add("observable_h1", obs.h1, "observable", "empirical");
    c.add("observable_h0", obs.h0, "observable", "empirical");
    c.add("observable_tau1", obs.tau1, "observable", "empirical");
    c.add("observable_tau0", obs.tau0, "observable", "empirical");
    detail::add_envelope(c, "1", d1, v.v1.value, v.v1.provenance(), lambdas.l1);
    detail::add_envelope(c, "0", d0, v.v0.value, v.v0.provenance(), lambdas.l0);
    detail::add_envelope(c, "10", d1, v.v10.value, v.v10.provenance(), lambdas.l10);
    detail::add_envelope(c, "01", d0, v.v01.value, v.v01.provenance(), lambdas.l01);
    c.parameters["C_loss"] = C_loss;
    c.metadata["variance_source"] = v.v1.source;
    detail::finish(c, {&d1, &d0});
    return c;
}

// ---------------------------------------------------------------------------
// Finite-sample (PAC) certificates

struct PacArm {
    double observable = 0.0;       // (1/n_a) sum_{T=a} w l
    double observable_tau = 0.0;   // X-learner second stage only
    DeltaEstimate delta_hat;
    double rademacher_h = 0.0;
    VarianceCap var;               // popoviciu(M) reproduces the M^2 terms
    std::optional<double> lambda;
    std::size_t n_a = 0;
};

struct PacCommon {
    double M = 1.0;
    double w_max = 1.0;
    std::size_t n = 0;
    double conf_delta = 0.05;
    double rademacher_nu = 0.0;
};

namespace detail {

inline void check_pac(const PacCommon& g) {
    if (!(g.conf_delta > 0.0 && g.conf_delta < 1.0)) throw DomainError("confidence delta must lie in (0, 1)");
    if (!(g.M > 0.0)) throw DomainError("PAC certificates need a positive range M");
    if (!(g.w_max >= 0.0)) throw DomainError("w_max must be nonnegative");
    if (g.n == 0) throw DataError("empty certification data");
}

inline void pac_parameters(BoundCertificate& c, const PacCommon& g) {
    c.parameters["M"] = g.M;
    c.parameters["w_max"] = g.w_max;
    c.parameters["n"] = double(g.n);
    c.parameters["confidence_delta"] = g.conf_delta;
    c.metadata["p_source"] = "certification split mean";
    c.metadata["split"] = "delta, brier and observable terms on the certification split";
}

}  // namespace detail

/// obs + lambda D + var/(4 lambda) + 2 R_h + 2 R_nu
///   + (M w_max + C(w_max) sqrt(n_a/n)) sqrt(ln(2/delta) / (2 n_a)).
inline BoundCertificate outcome_pac(const PacArm& a, const PacCommon& g) {
    detail::check_pac(g);
    if (a.n_a == 0) throw DataError("empty certification arm");
    BoundCertificate c;
    const auto tag = arm_suffix(a.delta_hat.arm);
    c.task = "outcome:" + tag;
    c.level = "pac";
    c.add("observable_" + tag, a.observable, "observable", "empirical");
    detail::add_envelope(c, tag, a.delta_hat, a.var.value, a.var.provenance(), a.lambda);
    c.add("rademacher_h_" + tag, 2.0 * a.rademacher_h, "complexity", "empirical");
    c.add("rademacher_nu", 2.0 * g.rademacher_nu, "complexity", "empirical");
    const double Cw = hoeffding_C(g.w_max, a.delta_hat.p);
    c.add("tail", tail_term(1.0, g.M, g.w_max, Cw, a.n_a, g.n, 2.0, g.conf_delta), "tail", "constant");
    detail::pac_parameters(c, g);
    c.parameters["C_wmax"] = Cw;
    c.parameters["n_" + tag] = double(a.n_a);
    detail::finish(c, {&a.delta_hat});
    return c;
}

/// C ( obs1 + obs0 + l1 D1 + l0 D0 + v1/4l1 + v0/4l0 + 2R_h1 + 2R_h0 + 2R_nu
///   + (c M w_max + (C1 + C0) sqrt(n_min/n)) sqrt(ln(3/delta) / (2 n_min)) ).
inline BoundCertificate tlearner_pac(const PacArm& a1, const PacArm& a0, double C_loss, const PacCommon& g,
                                     const std::string& task = "t_learner") {
    detail::check_pac(g);
    if (!(C_loss >= 1.0)) throw DomainError("loss constant C must be at least 1");
    const double cc = arm_balance_c(a1.n_a, a0.n_a);
    const std::size_t n_min = std::min(a1.n_a, a0.n_a);
    BoundCertificate c;
    c.task = task;
    c.level = "pac";
    c.scale = C_loss;
    c.add("observable_1", a1.observable, "observable", "empirical");
    c.add("observable_0", a0.observable, "observable", "empirical");
    detail::add_envelope(c, "1", a1.delta_hat, a1.var.value, a1.var.provenance(), a1.lambda);
    detail::add_envelope(c, "0", a0.delta_hat, a0.var.value, a0.var.provenance(), a0.lambda);
    c.add("rademacher_h_1", 2.0 * a1.rademacher_h, "complexity", "empirical");
    c.add("rademacher_h_0", 2.0 * a0.rademacher_h, "complexity", "empirical");
    c.add("rademacher_nu", 2.0 * g.rademacher_nu, "complexity", "empirical");
    const double Cw = hoeffding_C(g.w_max, a1.delta_hat.p) + hoeffding_C(g.w_max, a0.delta_hat.p);
    c.add("tail", tail_term(cc, g.M, g.w_max, Cw, n_min, g.n, 3.0, g.conf_delta), "tail", "constant");
    detail::pac_parameters(c, g);
    c.parameters["C_loss"] = C_loss;
    c.parameters["C_wmax"] = Cw;
    c.parameters["c"] = cc;
    c.parameters["n_1"] = double(a1.n_a);
    c.parameters["n_0"] = double(a0.n_a);
    detail::finish(c, {&a1.delta_hat, &a0.delta_hat});
    return c;
}

/// C^2 ( four observables + l1 D1 + l0 D0 + 4 v1/4l1 + 4 v0/4l0 + 4R_h1 + 4R_h0 + 2R_nu
///   + (2c M w_max + (C1 + C0) sqrt(n_min/n)) sqrt(ln(5/delta) / (2 n_min)) ).
/// With a Popoviciu cap the variance terms are M^2 / (4 lambda).
inline BoundCertificate xlearner_pac(const PacArm& a1, const PacArm& a0, double C_loss, const PacCommon& g) {
    detail::check_pac(g);
    if (!(C_loss >= 1.0)) throw DomainError("loss constant C must be at least 1");
    const double cc = arm_balance_c(a1.n_a, a0.n_a);
    const std::size_t n_min = std::min(a1.n_a, a0.n_a);
    BoundCertificate c;
    c.task = "x_learner";
    c.level = "pac";
    c.scale = C_loss * C_loss;
    c.add("observable_h1", a1.observable, "observable", "empirical");
    c.add("observable_h0", a0.observable, "observable", "empirical");
    c.add("observable_tau1", a1.observable_tau, "observable", "empirical");
    c.add("observable_tau0", a0.observable_tau, "observable", "empirical");
    detail::add_envelope(c, "1", a1.delta_hat, 4.0 * a1.var.value, a1.var.provenance(), a1.lambda);
    detail::add_envelope(c, "0", a0.delta_hat, 4.0 * a0.var.value, a0.var.provenance(), a0.lambda);
    c.add("rademacher_h_1", 4.0 * a1.rademacher_h, "complexity", "empirical");
    c.add("rademacher_h_0", 4.0 * a0.rademacher_h, "complexity", "empirical");
    c.add("rademacher_nu", 2.0 * g.rademacher_nu, "complexity", "empirical");
    const double Cw = hoeffding_C(g.w_max, a1.delta_hat.p) + hoeffding_C(g.w_max, a0.delta_hat.p);
    c.add("tail", tail_term(2.0 * cc, g.M, g.w_max, Cw, n_min, g.n, 5.0, g.conf_delta), "tail", "constant");
    detail::pac_parameters(c, g);
    c.parameters["C_loss"] = C_loss;
    c.parameters["C_wmax"] = Cw;
    c.parameters["c"] = cc;
    c.parameters["n_1"] = double(a1.n_a);
    c.parameters["n_0"] = double(a0.n_a);
    detail::finish(c, {&a1.delta_hat, &a0.delta_hat});
    return c;
}

}  // namespace causalcert
