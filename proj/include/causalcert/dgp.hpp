#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "causalcert/data.hpp"
#include "causalcert/detail/spec_string.hpp"
#include "causalcert/errors.hpp"
#include "causalcert/losses.hpp"

namespace causalcert {

enum class DgpKind { near_rct, observational, hidden_confounded };
enum class Surface { sparse_quadratic, linear };

struct DgpSpec {
    DgpKind kind = DgpKind::near_rct;
    std::size_t d = 5;
    std::size_t n = 2000;
    double noise_sd = 1.0;
    std::uint64_t seed = 1;
    double offset = -20.0;  // hidden_confounded only
    double tilt = 0.1;      // near_rct only; 0 gives a constant propensity of 0.5
    Surface surface = Surface::sparse_quadratic;

    void validate() const {
        if (n < 2) throw ConfigError("dgp needs n >= 2");
        if (d < 1) throw ConfigError("dgp needs d >= 1");
        if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("dgp noise_sd must be finite and >= 0");
        if (!std::isfinite(offset)) throw ConfigError("dgp offset must be finite");
        if (!(tilt >= 0.0 && tilt <= 0.5)) throw ConfigError("near_rct tilt must lie in [0, 0.5]");
    }
};

inline std::string kind_name(DgpKind k) {
    switch (k) {
        case DgpKind::near_rct: return "near_rct";
        case DgpKind::observational: return "observational";
        case DgpKind::hidden_confounded: return "hidden";
    }
    return "?";
}

inline std::string to_string(const DgpSpec& s) {
    std::string out = kind_name(s.kind) + ":n=" + std::to_string(s.n) + ",d=" + std::to_string(s.d) +
                      ",seed=" + std::to_string(s.seed) + ",noise=" + detail::format_number(s.noise_sd);
    if (s.kind == DgpKind::hidden_confounded) out += ",offset=" + detail::format_number(s.offset);
    if (s.kind == DgpKind::near_rct) out += ",tilt=" + detail::format_number(s.tilt);
    if (s.surface == Surface::linear) out += ",surface=linear";
    return out;
}

/// "near_rct:n=2000,d=10,seed=1", "observational:...", "hidden:offset=-20,...".
/// Keys: n, d, seed, noise, offset, tilt, surface (quadratic | linear).
inline DgpSpec parse_dgp(const std::string& spec) {
    const auto [kind, rest] = detail::split_kind(spec);
    DgpSpec s;
    if (kind == "near_rct") s.kind = DgpKind::near_rct;
    else if (kind == "observational") s.kind = DgpKind::observational;
    else if (kind == "hidden" || kind == "hidden_confounded") s.kind = DgpKind::hidden_confounded;
    else throw ConfigError("unknown dgp kind '" + kind + "'");
    const detail::KeyValues kv(rest, spec, {"n", "d", "seed", "noise", "offset", "tilt", "surface"});
    const auto n = kv.get_int("n", 2000), d = kv.get_int("d", 5), seed = kv.get_int("seed", 1);
    if (n < 0 || d < 0 || seed < 0) throw ConfigError("dgp n, d and seed must be nonnegative");
    s.n = std::size_t(n);
    s.d = std::size_t(d);
    s.seed = std::uint64_t(seed);
    s.noise_sd = kv.get_double("noise", 1.0);
    s.offset = kv.get_double("offset", -20.0);
    s.tilt = kv.get_double("tilt", 0.1);
    const auto surf = kv.get_string("surface", "quadratic");
    if (surf == "linear") s.surface = Surface::linear;
    else if (surf != "quadratic") throw ConfigError("unknown dgp surface '" + surf + "'");
    s.validate();
    return s;
}

namespace detail {

inline double coord(std::span<const double> x, std::size_t j) { return j < x.size() ? x[j] : 0.0; }

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

/// Structural control outcome without noise.
inline double base_surface(const DgpSpec& s, std::span<const double> x) {
    const double x1 = detail::coord(x, 0), x2 = detail::coord(x, 1), x3 = detail::coord(x, 2);
    if (s.surface == Surface::linear) return 1.0 + x1 - 0.5 * x2 + 0.25 * x3;
    return 1.0 + x1 + 0.5 * x2 * x2 - 0.5 * x3;
}

inline double effect_surface(const DgpSpec& s, std::span<const double> x) {
    const double x1 = detail::coord(x, 0);
    if (s.surface == Surface::linear) return 1.0 + 0.5 * x1;
    return 1.0 + 2.0 * std::max(x1, 0.0);
}

/// P[T=1 | x] before any hidden-confounding modification.
inline double assignment_propensity(const DgpSpec& s, std::span<const double> x) {
    const double x1 = detail::coord(x, 0), x2 = detail::coord(x, 1);
    if (s.kind == DgpKind::near_rct) return std::clamp(0.5 + s.tilt * std::tanh(x1), 0.35, 0.65);
    return std::clamp(detail::logistic(x1 + 0.5 * x2), 0.02, 0.98);
}

/// The true propensity as a function of x alone. Undefined under hidden confounding.
inline std::function<double(std::span<const double>)> propensity_function(const DgpSpec& s) {
    if (s.kind == DgpKind::hidden_confounded)
        throw DomainError("hidden-confounded propensity depends on unobserved U, not on x");
    return [s](std::span<const double> x) { return assignment_propensity(s, x); };
}

/// Per row, draws x, then control and treated noise, then the assignment uniform.
inline CausalDataset generate(const DgpSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<ObservedSample> rows(spec.n);
    std::vector<OracleFields> orc(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        auto& r = rows[i];
        r.x.resize(spec.d);
        for (auto& v : r.x) v = gauss(rng);
        const double e0 = spec.noise_sd * gauss(rng);
        const double e1 = spec.noise_sd * gauss(rng);
        const double u = unif(rng);
        const double ps = assignment_propensity(spec, r.x);
        const double f0 = base_surface(spec, r.x);
        auto& o = orc[i];
        o.y0 = f0 + e0;
        o.y1 = f0 + effect_surface(spec, r.x) + e1;
        r.t = u < ps ? 1 : 0;
        o.true_propensity = ps;
        if (spec.kind == DgpKind::hidden_confounded) {
            if (r.t == 0) o.y1 += spec.offset;
            o.true_propensity = double(r.t);
        }
        r.y = r.t == 1 ? o.y1 : o.y0;
    }
    return CausalDataset(spec.d, std::move(rows), std::move(orc), 0.0);
}

/// Mean over all rows of the clipped loss against the oracle target: Y^a for an
/// outcome task, Y^1 - Y^0 for the CATE task. `pred` maps x to the prediction.
template <class Pred>
double complete_loss(Pred&& pred, const CausalDataset& ds, const DecomposableLoss& loss, const Task& task) {
    if (!ds.has_oracle()) throw DataError("complete loss needs oracle outcomes");
    if (ds.empty()) throw DataError("complete loss of an empty dataset");
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& o = ds.oracle(i);
        const double p = pred(std::span<const double>(ds[i].x));
        if (task.kind == Task::Kind::outcome) s += eval(loss, o.outcome(task.arm), p);
        else s += eval_residual(loss, (o.y1 - o.y0) - p);
    }
    return s / double(ds.size());
}

}  // namespace causalcert
