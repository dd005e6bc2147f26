#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "causalcert/bounds.hpp"
#include "causalcert/data.hpp"
#include "causalcert/dgp.hpp"
#include "causalcert/learners.hpp"
#include "causalcert/losses.hpp"
#include "causalcert/metalearners.hpp"
#include "causalcert/weights.hpp"

namespace causalcert {

/// "optimal" or "fixed:<lambda>".
struct LambdaPolicy {
    bool fixed = false;
    double value = 1.0;

    std::optional<double> get() const { return fixed ? std::optional<double>(value) : std::nullopt; }
    std::string to_string() const { return fixed ? "fixed:" + detail::format_number(value) : "optimal"; }
};

inline LambdaPolicy parse_lambda_policy(const std::string& s) {
    if (s == "optimal") return {};
    const auto [kind, rest] = detail::split_kind(s);
    if (kind != "fixed") throw ConfigError("lambda policy must be 'optimal' or 'fixed:<v>', got '" + s + "'");
    const double v = detail::parse_double(rest, "lambda");
    if (!(v > 0.0)) throw ConfigError("fixed lambda must be positive");
    return {true, v};
}

/// "popoviciu" or an asserted numeric cap.
struct VarianceSpec {
    std::optional<double> asserted;

    VarianceCap cap(double M) const {
        return asserted ? VarianceCap::user_asserted(*asserted) : VarianceCap::popoviciu(M);
    }
    std::string to_string() const { return asserted ? detail::format_number(*asserted) : "popoviciu"; }
};

inline VarianceSpec parse_variance_spec(const std::string& s) {
    if (s == "popoviciu") return {};
    const double v = detail::parse_double(s, "var_cap");
    if (!(v >= 0.0)) throw ConfigError("var_cap must be nonnegative");
    return {v};
}

/// "massart", "monte_carlo[:n_sigma]" or "user:<value>".
struct ComplexitySpec {
    std::string method = "massart";
    int n_sigma = 200;
    double user_value = 0.0;

    std::string to_string() const {
        if (method == "monte_carlo") return "monte_carlo:" + std::to_string(n_sigma);
        if (method == "user") return "user:" + detail::format_number(user_value);
        return method;
    }
};

inline ComplexitySpec parse_complexity_spec(const std::string& s) {
    const auto [kind, rest] = detail::split_kind(s);
    ComplexitySpec c;
    c.method = kind;
    if (kind == "massart" && rest.empty()) return c;
    if (kind == "monte_carlo") {
        if (!rest.empty()) c.n_sigma = int(detail::parse_int(rest, "monte_carlo n_sigma"));
        if (c.n_sigma < 1) throw ConfigError("monte_carlo n_sigma must be positive");
        return c;
    }
    if (kind == "user") {
        c.user_value = detail::parse_double(rest, "user complexity");
        if (!(c.user_value >= 0.0)) throw ConfigError("user complexity must be nonnegative");
        return c;
    }
    throw ConfigError("unknown complexity spec '" + s + "'");
}

/// "auto" (percentile of training-arm losses), "none", or a fixed positive M.
struct ClipSpec {
    enum class Kind { automatic, none, fixed } kind = Kind::automatic;
    double value = 0.0;
    double percentile = 0.995;

    std::string to_string() const {
        if (kind == Kind::none) return "none";
        if (kind == Kind::fixed) return detail::format_number(value);
        return "auto";
    }
};

inline ClipSpec parse_clip_spec(const std::string& s) {
    if (s == "auto") return {};
    if (s == "none") return {ClipSpec::Kind::none, 0.0, 0.995};
    const double v = detail::parse_double(s, "clip");
    if (!(v > 0.0)) throw ConfigError("clip must be positive");
    return {ClipSpec::Kind::fixed, v, 0.995};
}

struct CertifyOptions {
    DecomposableLoss loss = DecomposableLoss::squared();  // clip_M is set by the clip policy
    ClipSpec clip;
    double conf_delta = 0.05;
    LambdaPolicy lambda;
    VarianceSpec var_cap;
    ComplexitySpec complexity;
    std::string nu = "logistic:l2=1.0";
    Task task = Task::outcome(Arm::treated);
    std::uint64_t seed = 0;  // Monte-Carlo complexity only
};

/// A meta-learner trained on one split, with its weights, propensity classifier nu,
/// and the clipped loss frozen from training-arm losses.
struct FittedModel {
    std::string id;
    MetaSpec spec;
    WeightSpec weight_spec;
    MetaLearner model;
    WeightFn w1, w0;
    std::shared_ptr<const ProbClassifier> nu;
    DecomposableLoss loss;
    double clip_arm1 = 0.0, clip_arm0 = 0.0;  // per-arm percentiles (auto clip)

    const WeightFn& weights(Arm a) const { return a == Arm::treated ? w1 : w0; }
};

namespace detail {

inline double weighted(double w, double l) { return std::isinf(w) ? INFINITY : w * l; }

// Unclipped component losses of the model on arm-a rows, used to set the clip level.
inline std::vector<double> raw_arm_losses(const MetaLearner& m, const CausalDataset& ds, Arm a,
                                          const DecomposableLoss& loss) {
    std::vector<double> out;
    const auto* xl = std::get_if<XLearner>(&m);
    for (auto i : ds.arm_indices(a)) {
        const auto& s = ds[i];
        out.push_back(psi(loss, s.y - predict_outcome(m, s.x.data(), a)));
        if (xl) {
            const double label = a == Arm::treated ? s.y - xl->h0->predict(s.x.data()) : xl->h1->predict(s.x.data()) - s.y;
            const double tau = (a == Arm::treated ? xl->tau1 : xl->tau0)->predict(s.x.data());
            out.push_back(psi(loss, label - tau));
        }
    }
    return out;
}

}  // namespace detail

inline FittedModel fit_model(const std::string& id, const MetaSpec& spec, const WeightSpec& wspec,
                             const CausalDataset& train, const CertifyOptions& opt) {
    train.require_both_arms("training split");
    FittedModel f;
    f.id = id;
    f.spec = spec;
    f.weight_spec = wspec;
    std::tie(f.w1, f.w0) = build_weight_pair(wspec, train);
    DecomposableLoss base = opt.loss;
    if (base.kind != LossKind::zero_one) base.clip_M = INFINITY;
    f.model = fit_meta(spec, train, f.w1, f.w0, base);
    f.nu = fit_classifier(opt.nu, features(train), treatments(train));

    f.loss = base;
    if (base.kind == LossKind::zero_one) return f;
    switch (opt.clip.kind) {
        case ClipSpec::Kind::none: break;
        case ClipSpec::Kind::fixed: f.loss = base.with_clip(opt.clip.value); break;
        case ClipSpec::Kind::automatic: {
            const auto l1 = detail::raw_arm_losses(f.model, train, Arm::treated, base);
            const auto l0 = detail::raw_arm_losses(f.model, train, Arm::control, base);
            f.clip_arm1 = clip_from_losses(l1, opt.clip.percentile);
            f.clip_arm0 = clip_from_losses(l0, opt.clip.percentile);
            f.loss = base.with_clip(std::max(f.clip_arm1, f.clip_arm0));
            break;
        }
    }
    return f;
}

struct CertificationResult {
    Task task;
    double observed_loss = 0.0;  // factual loss l(Y_i, h^{T_i}(X_i)), unweighted, on the cert split
    std::optional<double> complete_loss;
    DeltaEstimate delta_hat_1, delta_hat_0;
    std::optional<DeltaEstimate> delta_theo_1, delta_theo_0;
    std::optional<BoundCertificate> theoretic;  // expectation level with oracle delta
    BoundCertificate empirical;                 // expectation level with empirical delta
    BoundCertificate pac;
    double M = 0.0;
    double w_max = 1.0;
};

/// Per-sample weighted losses of model `m` on arm-a rows (rows of the k x n complexity matrix).
inline std::vector<double> arm_weighted_losses(const FittedModel& m, const CausalDataset& ds, Arm a,
                                               const DecomposableLoss& loss) {
    std::vector<double> out;
    const auto& w = m.weights(a);
    for (auto i : ds.arm_indices(a)) {
        const auto& s = ds[i];
        out.push_back(detail::weighted(w(s.x.data()), eval(loss, s.y, predict_outcome(m.model, s.x.data(), a))));
    }
    return out;
}

namespace detail {

inline double factual_loss(const FittedModel& m, const CausalDataset& ds) {
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& r = ds[i];
        s += eval(m.loss, r.y, predict_outcome(m.model, r.x.data(), r.t == 1 ? Arm::treated : Arm::control));
    }
    return s / double(ds.size());
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}

// X-learner observable pieces for arm a: first-stage and pseudo-label stage.
inline std::pair<double, double> x_observables(const XLearner& xl, const WeightFn& w, const CausalDataset& ds, Arm a,
                                               const DecomposableLoss& loss) {
    double first = 0.0, second = 0.0;
    const auto rows = ds.arm_indices(a);
    for (auto i : rows) {
        const auto& s = ds[i];
        const double* x = s.x.data();
        const double e = xl.blend(x), eb = 1.0 - e;
        const double wi = w(x);
        if (a == Arm::treated) {
            first += weighted(wi, eval_residual(loss, eb * (s.y - xl.h1->predict(x))));
            second += weighted(wi, eval_residual(loss, e * ((s.y - xl.h0->predict(x)) - xl.tau1->predict(x))));
        } else {
            first += weighted(wi, eval_residual(loss, e * (s.y - xl.h0->predict(x))));
            second += weighted(wi, eval_residual(loss, eb * ((xl.h1->predict(x) - s.y) - xl.tau0->predict(x))));
        }
    }
    return {first / double(rows.size()), second / double(rows.size())};
}

inline double arm_w_max_total(const FittedModel& m, const CausalDataset& cert) {
    double wm = std::max(m.w1.w_max(), m.w0.w_max());
    wm = std::max({wm, arm_w_max(m.w1, cert, Arm::treated), arm_w_max(m.w0, cert, Arm::control)});
    return wm;
}

// Per-sample summand of the empirical delta for the arms in `arms`.
inline std::vector<double> nu_summands(const FittedModel& m, const CausalDataset& ds, std::initializer_list<Arm> arms) {
    const auto counts = arm_counts(ds);
    std::vector<double> out(ds.size(), 0.0);
    for (Arm a : arms) {
        const auto& w = m.weights(a);
        const double p = counts.p(a);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const double* x = ds[i].x.data();
            const double wi = w(x);
            const double ind = ds.in_arm(i, a) ? 1.0 : 0.0;
            const double r = m.nu->predict_proba(x, a) - ind;
            const double b = wi * ind / p - 1.0;
            out[i] += (wi / p) * (wi / p) * r * r + b * b;
        }
    }
    return out;
}

inline ComplexityEstimate loss_complexity(const ComplexitySpec& spec, const std::vector<std::vector<double>>& rows,
                                          double range, std::uint64_t seed) {
    if (spec.method == "user") return user_complexity(spec.user_value);
    if (rows.empty() || rows.front().empty()) return massart_complexity(1, 1, range);
    if (!std::isfinite(range)) return {spec.method, INFINITY, rows.size(), rows.front().size(), range, seed};
    if (spec.method == "massart") return massart_complexity(rows.size(), rows.front().size(), range);
    return rademacher_estimate("monte_carlo", rows, range, spec.n_sigma, seed);
}

}  // namespace detail

/// Certifies `m` on `cert`. `ensemble` lists the models considered during selection,
/// including `m`; it sizes the finite-class complexity terms.
inline CertificationResult certify(const FittedModel& m, const CausalDataset& cert, const CertifyOptions& opt,
                                   const std::vector<const FittedModel*>& ensemble = {}) {
    cert.require_both_arms("certification split");
    if (!(opt.conf_delta > 0.0 && opt.conf_delta < 1.0)) throw DomainError("confidence delta must lie in (0, 1)");
    const auto& loss = m.loss;
    const auto counts = arm_counts(cert);
    const auto C = constants(loss).C;
    const double M = loss.clip_M;
    const VarianceCap var = opt.var_cap.cap(M);
    const auto lam = opt.lambda.get();
    const bool is_x = std::holds_alternative<XLearner>(m.model);
    const bool cate = opt.task.kind == Task::Kind::cate;

    CertificationResult r;
    r.task = opt.task;
    r.M = M;
    r.w_max = detail::arm_w_max_total(m, cert);
    r.observed_loss = detail::factual_loss(m, cert);
    r.delta_hat_1 = delta_empirical(cert, m.w1, *m.nu, Arm::treated);
    r.delta_hat_0 = delta_empirical(cert, m.w0, *m.nu, Arm::control);
    if (cert.has_oracle()) {
        r.delta_theo_1 = delta_theoretic(cert, m.w1, Arm::treated);
        r.delta_theo_0 = delta_theoretic(cert, m.w0, Arm::control);
        if (cate) {
            r.complete_loss = complete_loss(
                [&](std::span<const double> x) { return predict_cate(m.model, x.data()); }, cert, loss, opt.task);
        } else {
            r.complete_loss = complete_loss(
                [&](std::span<const double> x) { return predict_outcome(m.model, x.data(), opt.task.arm); }, cert, loss,
                opt.task);
        }
    }

    // Complexity terms over the finite ensemble.
    std::vector<const FittedModel*> ens = ensemble;
    if (std::find(ens.begin(), ens.end(), &m) == ens.end()) ens.push_back(&m);
    double w_ens = r.w_max;
    for (const auto* e : ens) w_ens = std::max(w_ens, detail::arm_w_max_total(*e, cert));
    auto arm_R = [&](Arm a) {
        std::vector<std::vector<double>> rows;
        for (const auto* e : ens) rows.push_back(arm_weighted_losses(*e, cert, a, loss));
        return detail::loss_complexity(opt.complexity, rows, M * w_ens, opt.seed + (a == Arm::treated ? 11 : 17));
    };
    const Arm a_task = opt.task.arm;
    std::initializer_list<Arm> both = {Arm::treated, Arm::control};
    std::initializer_list<Arm> just_a1 = {Arm::treated};
    std::initializer_list<Arm> just_a0 = {Arm::control};
    const auto nu_arms = cate ? both : (a_task == Arm::treated ? just_a1 : just_a0);
    double nu_range = 0.0;
    for (Arm a : nu_arms) nu_range += hoeffding_C(w_ens, counts.p(a));
    const auto nu_R = detail::loss_complexity(opt.complexity, {detail::nu_summands(m, cert, nu_arms)}, nu_range,
                                              opt.seed + 23);

    PacCommon g;
    g.M = M;
    g.w_max = r.w_max;
    g.n = cert.size();
    g.conf_delta = opt.conf_delta;
    g.rademacher_nu = nu_R.value;

    auto pac_arm = [&](Arm a, double obs) {
        PacArm pa;
        pa.observable = obs;
        pa.delta_hat = a == Arm::treated ? r.delta_hat_1 : r.delta_hat_0;
        pa.var = var;
        pa.lambda = lam;
        pa.n_a = counts.count(a);
        return pa;
    };
    auto outcome_obs = [&](Arm a) { return detail::mean_of(arm_weighted_losses(m, cert, a, loss)); };

    if (!cate) {
        const double obs = outcome_obs(a_task);
        const auto& dh = a_task == Arm::treated ? r.delta_hat_1 : r.delta_hat_0;
        r.empirical = outcome_bound_expectation(obs, dh, var, lam);
        if (r.delta_theo_1) r.theoretic = outcome_bound_expectation(obs, a_task == Arm::treated ? *r.delta_theo_1 : *r.delta_theo_0, var, lam);
        auto pa = pac_arm(a_task, obs);
        pa.rademacher_h = arm_R(a_task).value;
        if (std::isfinite(M)) r.pac = outcome_pac(pa, g);
    } else if (!is_x) {
        const std::string task = std::holds_alternative<SLearner>(m.model) ? "s_learner" : "t_learner";
        const double o1 = outcome_obs(Arm::treated), o0 = outcome_obs(Arm::control);
        r.empirical = tlearner_bound_expectation(o1, o0, r.delta_hat_1, r.delta_hat_0, var, var, C, lam, lam, task);
        if (r.delta_theo_1)
            r.theoretic = tlearner_bound_expectation(o1, o0, *r.delta_theo_1, *r.delta_theo_0, var, var, C, lam, lam, task);
        auto p1 = pac_arm(Arm::treated, o1), p0 = pac_arm(Arm::control, o0);
        p1.rademacher_h = arm_R(Arm::treated).value;
        p0.rademacher_h = arm_R(Arm::control).value;
        if (std::isfinite(M)) r.pac = tlearner_pac(p1, p0, C, g, task);
    } else {
        const auto& xl = std::get<XLearner>(m.model);
        const auto [h1, tau1] = detail::x_observables(xl, m.w1, cert, Arm::treated, loss);
        const auto [h0, tau0] = detail::x_observables(xl, m.w0, cert, Arm::control, loss);
        const XObservables xo{h1, h0, tau1, tau0};
        const XVariances xv{var, var, var, var};
        const XLambdas xlam{lam, lam, lam, lam};
        r.empirical = xlearner_bound_expectation(xo, r.delta_hat_1, r.delta_hat_0, xv, C, xlam);
        if (r.delta_theo_1) r.theoretic = xlearner_bound_expectation(xo, *r.delta_theo_1, *r.delta_theo_0, xv, C, xlam);
        auto p1 = pac_arm(Arm::treated, h1), p0 = pac_arm(Arm::control, h0);
        p1.observable_tau = tau1;
        p0.observable_tau = tau0;
        p1.rademacher_h = arm_R(Arm::treated).value;
        p0.rademacher_h = arm_R(Arm::control).value;
        if (std::isfinite(M)) r.pac = xlearner_pac(p1, p0, C, g);
    }
    if (!std::isfinite(M)) {
        r.pac.task = r.empirical.task;
        r.pac.level = "pac";
        r.pac.upper_bound = INFINITY;
        r.pac.metadata["vacuous_reason"] = "loss range M is unbounded (clip=none)";
    }

    auto stamp = [&](BoundCertificate& c) {
        c.parameters["M"] = M;
        c.parameters["C_loss"] = C;
        c.parameters["clip_percentile_1"] = m.clip_arm1;
        c.parameters["clip_percentile_0"] = m.clip_arm0;
        c.metadata["model"] = m.spec.to_string();
        c.metadata["weights"] = m.weight_spec.to_string();
        c.metadata["nu"] = m.nu->name();
        c.metadata["loss"] = to_string(loss);
        c.metadata["lambda_policy"] = opt.lambda.to_string();
        c.metadata["weight_normalization"] = "training-arm sample mean, frozen";
        if (m.w1.infinite() || m.w0.infinite()) {
            c.vacuous_positivity = true;
            c.metadata["vacuous_reason"] = "positivity violated: infinite inverse-propensity weight";
        }
        if (c.level == "pac") {
            c.metadata["complexity_method"] = opt.complexity.to_string();
            c.parameters["ensemble_size"] = double(ens.size());
        }
        if (is_x) c.metadata["blend"] = "fitted e substituted for the population e";
    };
    stamp(r.empirical);
    if (r.theoretic) stamp(*r.theoretic);
    stamp(r.pac);
    return r;
}

}  // namespace causalcert
