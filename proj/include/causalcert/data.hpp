#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "causalcert/errors.hpp"

namespace causalcert {

/// Treatment arm. Only the two-arm setting is supported.
enum class Arm : int { control = 0, treated = 1 };

constexpr int arm_value(Arm a) noexcept { return static_cast<int>(a); }
constexpr Arm other(Arm a) noexcept { return a == Arm::treated ? Arm::control : Arm::treated; }

struct ObservedSample {
    std::vector<double> x;
    int t = 0;
    double y = 0.0;
};

/// Fields only a simulator knows: both potential outcomes and P[T=1 | X, U].
struct OracleFields {
    double y1 = 0.0;
    double y0 = 0.0;
    double true_propensity = 0.5;

    double outcome(Arm a) const noexcept { return a == Arm::treated ? y1 : y0; }
    double propensity(Arm a) const noexcept {
        return a == Arm::treated ? true_propensity : 1.0 - true_propensity;
    }
};

struct ArmCounts {
    std::size_t n = 0;
    std::size_t n_treated = 0;
    std::size_t n_control = 0;
    double p_treated = 0.0;

    std::size_t count(Arm a) const noexcept { return a == Arm::treated ? n_treated : n_control; }
    double p(Arm a) const noexcept { return a == Arm::treated ? p_treated : 1.0 - p_treated; }
    std::size_t n_min() const noexcept { return std::min(n_treated, n_control); }
    std::size_t n_max() const noexcept { return std::max(n_treated, n_control); }
};

/// Immutable collection of (X, T, Y) rows with optional oracle fields.
///
/// Construction validates every row: binary treatment, dimension d, finite
/// values, oracle length, propensities in [0, 1], and SUTVA consistency
/// (|y - y^t| <= tolerance; tolerance 0 means exact equality).
class CausalDataset {
public:
    CausalDataset() = default;

    CausalDataset(std::size_t d, std::vector<ObservedSample> samples,
                  std::optional<std::vector<OracleFields>> oracle = std::nullopt,
                  double consistency_tolerance = 0.0)
        : d_(d), samples_(std::move(samples)), oracle_(std::move(oracle)) {
        validate(consistency_tolerance);
    }

    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    std::size_t dim() const noexcept { return d_; }
    bool has_oracle() const noexcept { return oracle_.has_value(); }

    const ObservedSample& operator[](std::size_t i) const { return samples_[i]; }
    const std::vector<ObservedSample>& samples() const noexcept { return samples_; }

    const OracleFields& oracle(std::size_t i) const {
        if (!oracle_) throw DataError("dataset has no oracle fields");
        return (*oracle_)[i];
    }
    const std::vector<OracleFields>& oracle_fields() const {
        if (!oracle_) throw DataError("dataset has no oracle fields");
        return *oracle_;
    }

    bool in_arm(std::size_t i, Arm a) const { return samples_[i].t == arm_value(a); }

    std::vector<std::size_t> arm_indices(Arm a) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < samples_.size(); ++i)
            if (in_arm(i, a)) idx.push_back(i);
        return idx;
    }

    CausalDataset subset(std::span<const std::size_t> indices) const {
        std::vector<ObservedSample> rows;
        rows.reserve(indices.size());
        std::optional<std::vector<OracleFields>> orc;
        if (oracle_) orc.emplace().reserve(indices.size());
        for (auto i : indices) {
            rows.push_back(samples_.at(i));
            if (orc) orc->push_back((*oracle_)[i]);
        }
        CausalDataset out;
        out.d_ = d_;
        out.samples_ = std::move(rows);
        out.oracle_ = std::move(orc);
        return out;
    }

    // Throws DegenerateSplitError unless both arms are present.
    void require_both_arms(const std::string& what = "dataset") const {
        std::size_t treated = 0;
        for (const auto& s : samples_) treated += static_cast<std::size_t>(s.t);
        if (treated == 0 || treated == samples_.size())
            throw DegenerateSplitError(what + " must contain at least one treated and one control sample");
    }

private:
    void validate(double tol) const {
        if (oracle_ && oracle_->size() != samples_.size())
            throw DataError("oracle list length differs from sample count");
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const auto& s = samples_[i];
            if (s.t != 0 && s.t != 1)
                throw ParseError("treatment must be 0 or 1 at row " + std::to_string(i), i, "t");
            if (s.x.size() != d_)
                throw DataError("row " + std::to_string(i) + " has " + std::to_string(s.x.size()) +
                                " covariates, expected " + std::to_string(d_));
            for (double v : s.x)
                if (!std::isfinite(v)) throw ParseError("non-finite covariate at row " + std::to_string(i), i, "x");
            if (!std::isfinite(s.y)) throw ParseError("non-finite outcome at row " + std::to_string(i), i, "y");
            if (!oracle_) continue;
            const auto& o = (*oracle_)[i];
            if (!std::isfinite(o.y1) || !std::isfinite(o.y0))
                throw ParseError("non-finite potential outcome at row " + std::to_string(i), i, "y1/y0");
            if (!(o.true_propensity >= 0.0 && o.true_propensity <= 1.0))
                throw ParseError("true propensity outside [0,1] at row " + std::to_string(i), i, "propensity");
            const double factual = s.t == 1 ? o.y1 : o.y0;
            if (std::abs(factual - s.y) > tol)
                throw ConsistencyError("observed outcome differs from potential outcome of the received arm at row " +
                                           std::to_string(i),
                                       i);
        }
    }

    std::size_t d_ = 0;
    std::vector<ObservedSample> samples_;
    std::optional<std::vector<OracleFields>> oracle_;
};

inline ArmCounts arm_counts(const CausalDataset& ds) {
    if (ds.empty()) throw DataError("arm_counts of an empty dataset");
    ArmCounts c;
    c.n = ds.size();
    for (const auto& s : ds.samples()) c.n_treated += static_cast<std::size_t>(s.t);
    c.n_control = c.n - c.n_treated;
    c.p_treated = static_cast<double>(c.n_treated) / static_cast<double>(c.n);
    return c;
}

/// Seeded random partition. The first part receives round(fraction * n) rows;
/// both parts keep the original row order. Throws DegenerateSplitError when a
/// part lacks a treatment arm.
inline std::pair<CausalDataset, CausalDataset> split(const CausalDataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("split fraction must lie in (0, 1)");
    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
    std::vector<std::size_t> first(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<std::size_t> second(perm.begin() + static_cast<std::ptrdiff_t>(cut), perm.end());
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    auto a = ds.subset(first);
    auto b = ds.subset(second);
    a.require_both_arms("first split part");
    b.require_both_arms("second split part");
    return {std::move(a), std::move(b)};
}

/// What a model is judged on: one potential outcome, or the treatment effect.
struct Task {
    enum class Kind { outcome, cate } kind = Kind::outcome;
    Arm arm = Arm::treated;

    static Task outcome(Arm a) { return {Kind::outcome, a}; }
    static Task cate() { return {Kind::cate, Arm::treated}; }

    std::string to_string() const {
        if (kind == Kind::cate) return "cate";
        return arm == Arm::treated ? "outcome:1" : "outcome:0";
    }
};

/// "outcome:1", "outcome:0" or "cate".
inline Task parse_task(const std::string& s) {
    if (s == "outcome:1") return Task::outcome(Arm::treated);
    if (s == "outcome:0") return Task::outcome(Arm::control);
    if (s == "cate") return Task::cate();
    throw ConfigError("unknown task '" + s + "' (expected outcome:1, outcome:0 or cate)");
}

}  // namespace causalcert
