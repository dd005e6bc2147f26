#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "causalcert/errors.hpp"

namespace causalcert {

/// One summand of a bound. role names the algebraic slot (observable, lambda_delta,
/// variance, complexity, tail); provenance says where the number came from
/// (empirical, oracle, cap, user, constant).
struct Addend {
    std::string name;
    double value = 0.0;
    std::string role;
    std::string provenance;
};

/// upper_bound = scale * (((a_0 + a_1) + a_2) + ...), summed left to right.
struct BoundCertificate {
    std::string task;   // outcome:1, outcome:0, t_learner, s_learner, x_learner
    std::string level;  // expectation or pac
    std::string delta_kind;  // theoretic_oracle or empirical
    std::vector<Addend> addends;
    double scale = 1.0;
    double upper_bound = 0.0;
    bool vacuous_positivity = false;
    bool oracle_mode = false;
    bool exact_rct = false;
    std::map<std::string, double> parameters;
    std::map<std::string, std::string> metadata;

    void add(std::string name, double value, std::string role, std::string provenance) {
        if (!(value >= 0.0)) throw DomainError("bound addend '" + name + "' must be nonnegative");
        addends.push_back({std::move(name), value, std::move(role), std::move(provenance)});
    }

    double interior() const {
        double s = 0.0;
        for (const auto& a : addends) s += a.value;
        return s;
    }

    // Freezes upper_bound from the addends; infinite terms make the bound vacuous.
    void finalize() {
        upper_bound = scale * interior();
        if (std::isinf(upper_bound)) vacuous_positivity = true;
    }

    double addend(const std::string& name) const {
        for (const auto& a : addends)
            if (a.name == name) return a.value;
        throw Error("certificate has no addend '" + name + "'");
    }

    bool vacuous() const noexcept { return !std::isfinite(upper_bound); }
};

namespace detail {

inline nlohmann::json number_json(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline double json_number(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
        if (s == "nan") return NAN;
        throw DataError("bad numeric marker '" + s + "' in certificate");
    }
    return j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const BoundCertificate& c) {
    nlohmann::json j;
    j["task"] = c.task;
    j["level"] = c.level;
    j["delta_kind"] = c.delta_kind;
    j["scale"] = detail::number_json(c.scale);
    j["upper_bound"] = detail::number_json(c.upper_bound);
    j["flags"] = {{"vacuous_positivity", c.vacuous_positivity},
                  {"oracle_mode", c.oracle_mode},
                  {"exact_rct", c.exact_rct}};
    auto& arr = j["addends"] = nlohmann::json::array();
    for (const auto& a : c.addends)
        arr.push_back({{"name", a.name}, {"value", detail::number_json(a.value)}, {"role", a.role},
                       {"provenance", a.provenance}});
    auto& p = j["parameters"] = nlohmann::json::object();
    for (const auto& [k, v] : c.parameters) p[k] = detail::number_json(v);
    j["metadata"] = c.metadata;
    return j;
}

inline BoundCertificate certificate_from_json(const nlohmann::json& j) {
    BoundCertificate c;
    c.task = j.at("task").get<std::string>();
    c.level = j.at("level").get<std::string>();
    c.delta_kind = j.value("delta_kind", "");
    c.scale = detail::json_number(j.at("scale"));
    c.upper_bound = detail::json_number(j.at("upper_bound"));
    const auto& f = j.at("flags");
    c.vacuous_positivity = f.at("vacuous_positivity").get<bool>();
    c.oracle_mode = f.at("oracle_mode").get<bool>();
    c.exact_rct = f.at("exact_rct").get<bool>();
    for (const auto& a : j.at("addends"))
        c.addends.push_back({a.at("name").get<std::string>(), detail::json_number(a.at("value")),
                             a.at("role").get<std::string>(), a.at("provenance").get<std::string>()});
    for (const auto& [k, v] : j.at("parameters").items()) c.parameters[k] = detail::json_number(v);
    if (j.contains("metadata")) c.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    return c;
}

/// Recomputes scale * left-fold sum from a serialized certificate.
inline double resum(const nlohmann::json& j) {
    double s = 0.0;
    for (const auto& a : j.at("addends")) s += detail::json_number(a.at("value"));
    return detail::json_number(j.at("scale")) * s;
}

}  // namespace causalcert
