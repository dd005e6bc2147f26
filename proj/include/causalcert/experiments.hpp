#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "causalcert/certify.hpp"
#include "causalcert/csv.hpp"
#include "causalcert/dgp.hpp"

namespace causalcert {

// ---------------------------------------------------------------------------
// Config file: one `key = value` per line, `#` starts a comment line, blank lines
// ignored, keys unique. Model keys take the form `model.<id>` and `weights.<id>`.

class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "config") {
        Config c;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto t = detail::trim(line);
            if (t.empty() || t.front() == '#') continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            const auto key = detail::trim(t.substr(0, eq));
            const auto val = detail::trim(t.substr(eq + 1));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            for (char ch : key)
                if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.'))
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad character in key '" + key + "'");
            if (c.values_.count(key)) throw ConfigError(origin + ": duplicate key '" + key + "'");
            c.values_[key] = val;
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    // Command-line overrides replace file values.
    void set(const std::string& key, const std::string& value) { values_[detail::trim(key)] = detail::trim(value); }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

struct ModelEntry {
    std::string id;
    MetaSpec spec;
    WeightSpec weights;
};

/// "sweep:lo,hi,points", log-spaced.
struct LambdaGrid {
    double lo = 1e-3, hi = 1e3;
    std::size_t points = 61;
};

struct ExperimentConfig {
    std::string experiment;
    std::optional<DgpSpec> dgp;
    std::optional<std::string> csv_path;
    CsvSchema schema;
    std::vector<ModelEntry> models;
    CertifyOptions certify;
    bool oracle_variance = false;  // var_cap = oracle (lambda_sweep only)
    LambdaGrid grid;
    std::vector<std::size_t> n_grid{500, 1000, 2000};
    std::size_t cert_n = 1000;
    std::size_t replicates = 20;
    double train_fraction = 0.5;
    std::size_t bootstrap = 1000;
    double ci_level = 0.95;
    std::uint64_t seed = 1;
    std::string out = "results";
    std::size_t threads = 1;
    std::map<std::string, std::string> resolved;  // every key with its effective value
};

namespace detail {

inline const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> k{
        "experiment", "source", "csv", "csv.t", "csv.y", "csv.y1", "csv.y0", "csv.propensity", "csv.covariates",
        "weights", "loss", "clip", "nu", "delta", "lambda", "var_cap", "complexity", "task", "n_grid", "cert_n",
        "replicates", "train_fraction", "bootstrap", "ci_level", "seed", "out", "threads"};
    return k;
}

inline std::size_t parse_count(const std::string& v, const std::string& what, std::size_t min_value) {
    const auto x = parse_int(v, what);
    if (x < 0 || std::size_t(x) < min_value)
        throw ConfigError(what + " must be an integer >= " + std::to_string(min_value));
    return std::size_t(x);
}

inline std::vector<std::size_t> parse_grid(const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& part : split(v, ',')) out.push_back(parse_count(trim(part), "n_grid entry", 2));
    if (out.empty()) throw ConfigError("n_grid is empty");
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline std::string join_grid(const std::vector<std::size_t>& g) {
    std::string s;
    for (std::size_t i = 0; i < g.size(); ++i) s += (i ? "," : "") + std::to_string(g[i]);
    return s;
}

inline LambdaGrid parse_lambda_grid(const std::string& rest) {
    LambdaGrid g;
    if (rest.empty()) return g;
    const auto parts = split(rest, ',');
    if (parts.size() != 3) throw ConfigError("lambda sweep must be 'sweep:lo,hi,points'");
    g.lo = parse_double(trim(parts[0]), "sweep lo");
    g.hi = parse_double(trim(parts[1]), "sweep hi");
    g.points = parse_count(trim(parts[2]), "sweep points", 2);
    if (!(g.lo > 0.0 && g.hi > g.lo && std::isfinite(g.hi))) throw ConfigError("sweep needs 0 < lo < hi < inf");
    return g;
}

}  // namespace detail

inline ExperimentConfig resolve_config(const Config& cfg) {
    ExperimentConfig e;
    auto& r = e.resolved;
    for (const auto& [k, v] : cfg.values()) {
        const bool known = std::find(detail::known_keys().begin(), detail::known_keys().end(), k) !=
                           detail::known_keys().end();
        if (!known && !detail::starts_with(k, "model.") && !detail::starts_with(k, "weights."))
            throw ConfigError("unknown config key '" + k + "'");
    }

    e.experiment = cfg.get("experiment", "");
    if (e.experiment != "tightness_vs_n" && e.experiment != "lambda_sweep" && e.experiment != "model_selection")
        throw ConfigError("experiment must be tightness_vs_n, lambda_sweep or model_selection");
    r["experiment"] = e.experiment;

    e.seed = std::uint64_t(detail::parse_count(cfg.get("seed", "1"), "seed", 0));
    r["seed"] = std::to_string(e.seed);

    const std::string default_source = e.experiment == "model_selection" ? "observational:n=2000"
                                       : e.experiment == "lambda_sweep"  ? "hidden:n=4000"
                                                                         : "hidden";
    if (cfg.has("csv") && cfg.has("source")) throw ConfigError("give either 'source' or 'csv', not both");
    if (cfg.has("csv")) {
        e.csv_path = cfg.get("csv", "");
        r["csv"] = *e.csv_path;
        e.schema.treatment = cfg.get("csv.t", "t");
        e.schema.outcome = cfg.get("csv.y", "y");
        r["csv.t"] = e.schema.treatment;
        r["csv.y"] = e.schema.outcome;
        const int nor = int(cfg.has("csv.y1")) + int(cfg.has("csv.y0")) + int(cfg.has("csv.propensity"));
        if (nor != 0 && nor != 3) throw ConfigError("csv oracle mapping needs csv.y1, csv.y0 and csv.propensity");
        e.schema.detect_oracle = nor == 0;
        if (nor == 3) {
            e.schema.y1 = cfg.get("csv.y1", "");
            e.schema.y0 = cfg.get("csv.y0", "");
            e.schema.propensity = cfg.get("csv.propensity", "");
            r["csv.y1"] = *e.schema.y1;
            r["csv.y0"] = *e.schema.y0;
            r["csv.propensity"] = *e.schema.propensity;
        }
        if (cfg.has("csv.covariates")) {
            for (const auto& c : detail::split(cfg.get("csv.covariates", ""), ',')) e.schema.covariates.push_back(detail::trim(c));
            r["csv.covariates"] = cfg.get("csv.covariates", "");
        }
    } else {
        const auto src = cfg.get("source", default_source);
        DgpSpec d = parse_dgp(src);
        // A seed inside the source string wins over the top-level seed.
        if (src.find("seed=") == std::string::npos) d.seed = e.seed;
        e.dgp = d;
        r["source"] = to_string(d);
    }
    if (e.experiment == "tightness_vs_n" && !e.dgp) throw ConfigError("tightness_vs_n needs a dgp source");

    const auto loss_s = cfg.get("loss", "squared");
    e.certify.loss = parse_loss(loss_s);
    r["loss"] = to_string(e.certify.loss);
    const auto clip_default = e.experiment == "lambda_sweep" ? "none" : "auto";
    e.certify.clip = parse_clip_spec(cfg.get("clip", clip_default));
    r["clip"] = e.certify.clip.to_string();
    e.certify.nu = cfg.get("nu", "logistic:l2=1.0");
    make_classifier(e.certify.nu);
    r["nu"] = e.certify.nu;
    e.certify.conf_delta = detail::parse_double(cfg.get("delta", "0.05"), "delta");
    if (!(e.certify.conf_delta > 0.0 && e.certify.conf_delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    r["delta"] = detail::format_number(e.certify.conf_delta);

    const auto lam = cfg.get("lambda", e.experiment == "lambda_sweep" ? "sweep" : "optimal");
    if (detail::starts_with(lam, "sweep")) {
        if (e.experiment != "lambda_sweep") throw ConfigError("lambda=sweep is only valid for lambda_sweep");
        e.grid = detail::parse_lambda_grid(lam.size() > 6 ? lam.substr(6) : "");
        r["lambda"] = "sweep:" + detail::format_number(e.grid.lo) + "," + detail::format_number(e.grid.hi) + "," +
                      std::to_string(e.grid.points);
    } else {
        if (e.experiment == "lambda_sweep") throw ConfigError("lambda_sweep needs lambda=sweep[:lo,hi,points]");
        e.certify.lambda = parse_lambda_policy(lam);
        r["lambda"] = e.certify.lambda.to_string();
    }

    const auto var = cfg.get("var_cap", e.experiment == "lambda_sweep" ? "oracle" : "popoviciu");
    if (var == "oracle") {
        if (e.experiment != "lambda_sweep") throw ConfigError("var_cap=oracle is only valid for lambda_sweep");
        e.oracle_variance = true;
    } else {
        e.certify.var_cap = parse_variance_spec(var);
    }
    r["var_cap"] = e.oracle_variance ? "oracle" : e.certify.var_cap.to_string();
    e.certify.complexity = parse_complexity_spec(cfg.get("complexity", "massart"));
    r["complexity"] = e.certify.complexity.to_string();
    e.certify.task = parse_task(cfg.get("task", e.experiment == "model_selection" ? "cate" : "outcome:1"));
    r["task"] = e.certify.task.to_string();
    if (e.experiment == "lambda_sweep" && e.certify.task.kind != Task::Kind::outcome)
        throw ConfigError("lambda_sweep supports outcome tasks only");

    e.n_grid = detail::parse_grid(cfg.get("n_grid", "500,1000,2000"));
    r["n_grid"] = detail::join_grid(e.n_grid);
    e.cert_n = detail::parse_count(cfg.get("cert_n", "1000"), "cert_n", 2);
    r["cert_n"] = std::to_string(e.cert_n);
    e.replicates = detail::parse_count(cfg.get("replicates", "20"), "replicates", 1);
    r["replicates"] = std::to_string(e.replicates);
    e.train_fraction = detail::parse_double(cfg.get("train_fraction", "0.5"), "train_fraction");
    if (!(e.train_fraction > 0.0 && e.train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
    r["train_fraction"] = detail::format_number(e.train_fraction);
    e.bootstrap = detail::parse_count(cfg.get("bootstrap", "1000"), "bootstrap", 0);
    r["bootstrap"] = std::to_string(e.bootstrap);
    e.ci_level = detail::parse_double(cfg.get("ci_level", "0.95"), "ci_level");
    if (!(e.ci_level > 0.0 && e.ci_level < 1.0)) throw ConfigError("ci_level must lie in (0, 1)");
    r["ci_level"] = detail::format_number(e.ci_level);
    e.out = cfg.get("out", "results");
    r["out"] = e.out;
    e.threads = detail::parse_count(cfg.get("threads", "1"), "threads", 1);
    r["threads"] = std::to_string(e.threads);

    const auto default_w = parse_weight_spec(cfg.get("weights", "one"));
    r["weights"] = default_w.to_string();
    for (const auto& [k, v] : cfg.values()) {
        if (!detail::starts_with(k, "model.")) continue;
        ModelEntry m;
        m.id = k.substr(6);
        if (m.id.empty()) throw ConfigError("model key needs an id: model.<id>");
        m.spec = parse_meta_spec(v);
        const auto wk = "weights." + m.id;
        m.weights = cfg.has(wk) ? parse_weight_spec(cfg.get(wk, "")) : default_w;
        r[k] = m.spec.to_string();
        r[wk] = m.weights.to_string();
        e.models.push_back(std::move(m));
    }
    for (const auto& [k, v] : cfg.values())
        if (detail::starts_with(k, "weights.") && !cfg.has("model." + k.substr(8)))
            throw ConfigError("'" + k + "' has no matching model");
    if (e.models.empty()) {
        e.models.push_back({"ridge_t", parse_meta_spec("t:ridge:l2=1.0"), default_w});
        r["model.ridge_t"] = e.models.back().spec.to_string();
        r["weights.ridge_t"] = default_w.to_string();
    }
    if (e.experiment == "lambda_sweep" && e.models.size() != 1) throw ConfigError("lambda_sweep takes exactly one model");
    return e;
}

// ---------------------------------------------------------------------------
// Result tables

struct ResultTable {
    std::vector<std::string> columns;
    std::vector<std::map<std::string, std::string>> rows;
};

struct ExperimentOutput {
    std::string name;
    std::vector<std::string> header;  // written as '# ' lines
    ResultTable table;
    nlohmann::json sidecar;
    std::size_t failed = 0;
};

namespace detail {

inline std::string cell(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string sanitize(std::string s) {
    for (auto& ch : s)
        if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ch == ',' ? ';' : ' ';
    return s;
}

/// SplitMix64 over the seed and salt values.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> salt) {
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(seed);
    for (auto s : salt) h = mix(h ^ s);
    return h >> 1;  // stays representable as a signed 64-bit value in outputs
}

/// Runs fn(i) for i in [0, count) on `threads` workers; fn must write only to slot i.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= count) return;
                i = next++;
            }
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

inline nlohmann::json certificates_json(const CertificationResult& r) {
    nlohmann::json j;
    j["empirical"] = to_json(r.empirical);
    j["pac"] = to_json(r.pac);
    if (r.theoretic) j["theoretic"] = to_json(*r.theoretic);
    return j;
}

inline bool any_vacuous(const CertificationResult& r) {
    return r.empirical.vacuous() || r.empirical.vacuous_positivity || r.pac.vacuous() ||
           (r.theoretic && r.theoretic->vacuous());
}

inline void certification_cells(std::map<std::string, std::string>& row, const CertificationResult& r) {
    row["observed_loss"] = cell(r.observed_loss);
    row["complete_loss"] = r.complete_loss ? cell(*r.complete_loss) : "";
    row["theoretic_bound"] = r.theoretic ? cell(r.theoretic->upper_bound) : "";
    row["empirical_bound"] = cell(r.empirical.upper_bound);
    row["pac_bound"] = cell(r.pac.upper_bound);
    row["delta_theoretic_1"] = r.delta_theo_1 ? cell(r.delta_theo_1->value) : "";
    row["delta_theoretic_0"] = r.delta_theo_0 ? cell(r.delta_theo_0->value) : "";
    row["delta_empirical_1"] = cell(r.delta_hat_1.value);
    row["delta_empirical_0"] = cell(r.delta_hat_0.value);
    row["M"] = cell(r.M);
    row["w_max"] = cell(r.w_max);
    row["vacuous"] = any_vacuous(r) ? "1" : "0";
}

inline std::vector<std::string> header_lines(const ExperimentConfig& cfg) {
    std::vector<std::string> h{"causalcert experiment " + cfg.experiment};
    for (const auto& [k, v] : cfg.resolved) h.push_back(k + " = " + v);
    return h;
}

inline CausalDataset load_source(const ExperimentConfig& cfg) {
    if (cfg.csv_path) return ingest_csv(*cfg.csv_path, cfg.schema);
    return generate(*cfg.dgp);
}

}  // namespace detail

inline void write_table(std::ostream& out, const ExperimentOutput& o) {
    for (const auto& h : o.header) out << "# " << h << '\n';
    for (std::size_t c = 0; c < o.table.columns.size(); ++c) out << (c ? "," : "") << o.table.columns[c];
    out << '\n';
    for (const auto& row : o.table.rows) {
        for (std::size_t c = 0; c < o.table.columns.size(); ++c) {
            const auto it = row.find(o.table.columns[c]);
            out << (c ? "," : "") << (it == row.end() ? "" : it->second);
        }
        out << '\n';
    }
}

namespace detail {

inline void atomic_write(const std::filesystem::path& path, const std::string& body) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write '" + tmp + "'");
        f << body;
        if (!f.flush()) throw ConfigError("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Writes <dir>/<name>.csv and <dir>/<name>.json; returns the CSV path.
inline std::filesystem::path write_outputs(const ExperimentOutput& o, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
    std::ostringstream csv;
    write_table(csv, o);
    const auto csv_path = dir / (o.name + ".csv");
    detail::atomic_write(csv_path, csv.str());
    detail::atomic_write(dir / (o.name + ".json"), o.sidecar.dump(2) + "\n");
    return csv_path;
}

// ---------------------------------------------------------------------------
// tightness_vs_n: n is the training size; cert_n rows are certified per replicate.

inline ExperimentOutput run_tightness_vs_n(const ExperimentConfig& cfg) {
    if (!cfg.dgp) throw ConfigError("tightness_vs_n needs a dgp source");
    ExperimentOutput o;
    o.name = cfg.experiment;
    o.header = detail::header_lines(cfg);
    o.table.columns = {"experiment", "n", "replicate", "model", "seed", "status", "observed_loss", "complete_loss",
                       "theoretic_bound", "empirical_bound", "pac_bound", "delta_theoretic_1", "delta_theoretic_0",
                       "delta_empirical_1", "delta_empirical_0", "M", "w_max", "vacuous", "error"};
    struct Job {
        std::size_t n, rep;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (auto n : cfg.n_grid)
        for (std::size_t rep = 0; rep < cfg.replicates; ++rep)
            jobs.push_back({n, rep, detail::derive_seed(cfg.seed, {n, rep})});
    const std::size_t k = cfg.models.size();
    std::vector<std::map<std::string, std::string>> rows(jobs.size() * k);
    std::vector<nlohmann::json> certs(jobs.size() * k);

    detail::parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
        const auto& job = jobs[j];
        for (std::size_t m = 0; m < k; ++m) {
            auto& row = rows[j * k + m];
            row["experiment"] = cfg.experiment;
            row["n"] = std::to_string(job.n);
            row["replicate"] = std::to_string(job.rep);
            row["model"] = cfg.models[m].id;
            row["seed"] = std::to_string(job.seed);
        }
        try {
            DgpSpec d = *cfg.dgp;
            d.n = job.n + cfg.cert_n;
            d.seed = job.seed;
            const auto ds = generate(d);
            const auto [train, cert] = split(ds, double(job.n) / double(d.n), detail::derive_seed(job.seed, {1}));
            std::vector<FittedModel> fitted;
            for (const auto& me : cfg.models) fitted.push_back(fit_model(me.id, me.spec, me.weights, train, cfg.certify));
            std::vector<const FittedModel*> ens;
            for (const auto& f : fitted) ens.push_back(&f);
            auto opt = cfg.certify;
            opt.seed = job.seed;
            for (std::size_t m = 0; m < k; ++m) {
                const auto r = certify(fitted[m], cert, opt, ens);
                auto& row = rows[j * k + m];
                detail::certification_cells(row, r);
                row["status"] = "ok";
                certs[j * k + m] = {{"n", job.n}, {"replicate", job.rep}, {"model", cfg.models[m].id},
                                    {"certificates", detail::certificates_json(r)}};
            }
        } catch (const std::exception& ex) {
            for (std::size_t m = 0; m < k; ++m) {
                rows[j * k + m]["status"] = "failed";
                rows[j * k + m]["error"] = detail::sanitize(ex.what());
            }
        }
    });

    o.sidecar["experiment"] = cfg.experiment;
    o.sidecar["config"] = cfg.resolved;
    auto& seeds = o.sidecar["replicate_seeds"] = nlohmann::json::array();
    for (const auto& job : jobs) seeds.push_back({{"n", job.n}, {"replicate", job.rep}, {"seed", job.seed}});
    auto& arr = o.sidecar["results"] = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i]["status"] == "failed") ++o.failed;
        else arr.push_back(certs[i]);
        o.table.rows.push_back(std::move(rows[i]));
    }
    o.sidecar["failed_rows"] = o.failed;
    return o;
}

// ---------------------------------------------------------------------------
// lambda_sweep: outcome task, theoretic delta, envelope per lambda.

struct SweepPoint {
    double lambda;
    std::string kind;  // grid, baseline (lambda = 1), optimal
    double envelope;
};

/// Envelope lambda * delta + var / (4 lambda) on a log grid, plus lambda = 1 and lambda*.
/// A zero delta means the two measures coincide and every envelope is reported as 0.
inline std::vector<SweepPoint> sweep_envelopes(double delta, double var, const LambdaGrid& grid) {
    std::vector<SweepPoint> pts;
    auto env = [&](double l) { return delta == 0.0 ? 0.0 : envelope(l, delta, var); };
    for (double l : logspace(grid.lo, grid.hi, grid.points)) pts.push_back({l, "grid", env(l)});
    pts.push_back({1.0, "baseline", env(1.0)});
    const double ls = optimal_lambda(delta, var);
    pts.push_back({ls, "optimal", delta == 0.0 ? 0.0 : optimal_envelope(delta, var)});
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
    return pts;
}

inline ExperimentOutput run_lambda_sweep(const ExperimentConfig& cfg) {
    ExperimentOutput o;
    o.name = cfg.experiment;
    o.header = detail::header_lines(cfg);
    o.table.columns = {"experiment", "lambda", "kind", "observed_loss", "complete_loss", "delta", "variance",
                       "envelope", "bound", "ratio_to_optimal", "vacuous"};
    const auto ds = detail::load_source(cfg);
    if (!ds.has_oracle()) throw DataError("lambda_sweep needs a source with oracle columns");
    const auto [train, cert] = split(ds, cfg.train_fraction, detail::derive_seed(cfg.seed, {1}));
    const auto& me = cfg.models.front();
    const auto f = fit_model(me.id, me.spec, me.weights, train, cfg.certify);
    const Arm a = cfg.certify.task.arm;
    const auto& loss = f.loss;

    const auto wl = arm_weighted_losses(f, cert, a, loss);
    const double obs = detail::mean_of(wl);
    const auto dth = delta_theoretic(cert, f.weights(a), a);
    std::vector<double> comp;
    for (std::size_t i = 0; i < cert.size(); ++i)
        comp.push_back(eval(loss, cert.oracle(i).outcome(a), predict_outcome(f.model, cert[i].x.data(), a)));
    const double complete = detail::mean_of(comp);
    double var = 0.0;
    std::string var_source;
    if (cfg.oracle_variance) {
        for (double c : comp) var += (c - complete) * (c - complete);
        var /= double(comp.size());
        var_source = "oracle complete-loss variance";
    } else {
        const auto cap = cfg.certify.var_cap.cap(loss.clip_M);
        var = cap.value;
        var_source = cap.source;
    }

    const auto pts = sweep_envelopes(dth.value, var, cfg.grid);
    double e_star = 0.0, e_one = 0.0;
    for (const auto& p : pts) {
        if (p.kind == "optimal") e_star = p.envelope;
        if (p.kind == "baseline") e_one = p.envelope;
    }
    auto ratio = [&](double e) { return e_star == 0.0 ? (e == 0.0 ? 1.0 : INFINITY) : e / e_star; };
    for (const auto& p : pts) {
        std::map<std::string, std::string> row;
        row["experiment"] = cfg.experiment;
        row["lambda"] = detail::cell(p.lambda);
        row["kind"] = p.kind;
        row["observed_loss"] = detail::cell(obs);
        row["complete_loss"] = detail::cell(complete);
        row["delta"] = detail::cell(dth.value);
        row["variance"] = detail::cell(var);
        row["envelope"] = detail::cell(p.envelope);
        row["bound"] = detail::cell(obs + p.envelope);
        row["ratio_to_optimal"] = detail::cell(ratio(p.envelope));
        row["vacuous"] = std::isfinite(obs + p.envelope) ? "0" : "1";
        o.table.rows.push_back(std::move(row));
    }
    const double r1 = ratio(e_one);
    o.header.push_back("ratio_lambda1_to_optimal = " + detail::cell(r1));
    o.sidecar["experiment"] = cfg.experiment;
    o.sidecar["config"] = cfg.resolved;
    o.sidecar["split_seed"] = detail::derive_seed(cfg.seed, {1});
    o.sidecar["summary"] = {{"observed_loss", detail::number_json(obs)},
                            {"complete_loss", detail::number_json(complete)},
                            {"delta_theoretic", detail::number_json(dth.value)},
                            {"variance", detail::number_json(var)},
                            {"variance_source", var_source},
                            {"lambda_star", detail::number_json(optimal_lambda(dth.value, var))},
                            {"envelope_star", detail::number_json(e_star)},
                            {"envelope_lambda1", detail::number_json(e_one)},
                            {"ratio_lambda1_to_optimal", detail::number_json(r1)},
                            {"M", detail::number_json(loss.clip_M)}};
    return o;
}

// ---------------------------------------------------------------------------
// model_selection: one split, every model certified against the shared ensemble.
// Models are ranked by the empirical expectation bound; the observed-loss CI is a
// paired percentile bootstrap over certification rows.

struct PairOrdering {
    std::string a, b;
    bool observed_a_better;
    bool bound_a_better;
    bool ordering_changed;
    std::optional<bool> ci_overlap;
};

inline std::pair<double, double> percentile_ci(std::vector<double> means, double level) {
    const double lo = (1.0 - level) / 2.0;
    return {empirical_quantile(means, lo), empirical_quantile(means, 1.0 - lo)};
}

inline ExperimentOutput run_model_selection(const ExperimentConfig& cfg) {
    ExperimentOutput o;
    o.name = cfg.experiment;
    o.header = detail::header_lines(cfg);
    const bool boot = cfg.bootstrap > 0;
    o.table.columns = {"experiment", "model", "spec", "weights", "status", "observed_loss"};
    if (boot) {
        o.table.columns.push_back("ci_low");
        o.table.columns.push_back("ci_high");
    }
    for (const char* c : {"complete_loss", "theoretic_bound", "empirical_bound", "pac_bound", "delta_empirical_1",
                          "delta_empirical_0", "M", "w_max", "rank_observed", "rank_bound", "ordering_changed_with",
                          "vacuous", "error"})
        o.table.columns.push_back(c);

    const auto ds = detail::load_source(cfg);
    const std::uint64_t split_seed = detail::derive_seed(cfg.seed, {1});
    const auto [train, cert] = split(ds, cfg.train_fraction, split_seed);
    const std::size_t k = cfg.models.size();

    std::vector<std::optional<FittedModel>> fitted(k);
    std::vector<std::string> errors(k);
    detail::parallel_for(k, cfg.threads, [&](std::size_t m) {
        try {
            const auto& me = cfg.models[m];
            fitted[m] = fit_model(me.id, me.spec, me.weights, train, cfg.certify);
        } catch (const std::exception& ex) {
            errors[m] = ex.what();
        }
    });
    // The clip level is shared so every model is certified on the same loss.
    double M = 0.0;
    for (const auto& f : fitted)
        if (f) M = std::max(M, f->loss.clip_M);
    for (auto& f : fitted)
        if (f && f->loss.kind != LossKind::zero_one) f->loss = f->loss.with_clip(M);
    std::vector<const FittedModel*> ens;
    for (const auto& f : fitted)
        if (f) ens.push_back(&*f);

    std::vector<std::optional<CertificationResult>> res(k);
    detail::parallel_for(k, cfg.threads, [&](std::size_t m) {
        if (!fitted[m]) return;
        try {
            auto opt = cfg.certify;
            opt.seed = detail::derive_seed(cfg.seed, {2});
            res[m] = certify(*fitted[m], cert, opt, ens);
        } catch (const std::exception& ex) {
            errors[m] = ex.what();
        }
    });

    // Paired bootstrap: one resample of row indices serves every model.
    std::vector<std::vector<double>> per_row(k);
    for (std::size_t m = 0; m < k; ++m) {
        if (!res[m]) continue;
        const auto& f = *fitted[m];
        for (std::size_t i = 0; i < cert.size(); ++i) {
            const auto& s = cert[i];
            per_row[m].push_back(eval(f.loss, s.y, predict_outcome(f.model, s.x.data(), s.t == 1 ? Arm::treated : Arm::control)));
        }
    }
    std::vector<std::optional<std::pair<double, double>>> ci(k);
    if (boot) {
        std::mt19937_64 rng(detail::derive_seed(cfg.seed, {3}));
        std::uniform_int_distribution<std::size_t> pick(0, cert.size() - 1);
        std::vector<std::vector<double>> means(k);
        std::vector<std::size_t> idx(cert.size());
        for (std::size_t b = 0; b < cfg.bootstrap; ++b) {
            for (auto& i : idx) i = pick(rng);
            for (std::size_t m = 0; m < k; ++m) {
                if (!res[m]) continue;
                double s = 0.0;
                for (auto i : idx) s += per_row[m][i];
                means[m].push_back(s / double(idx.size()));
            }
        }
        for (std::size_t m = 0; m < k; ++m)
            if (res[m]) ci[m] = percentile_ci(means[m], cfg.ci_level);
    }

    // Ranks among successful models, ties broken by id order.
    std::vector<std::size_t> ok;
    for (std::size_t m = 0; m < k; ++m)
        if (res[m]) ok.push_back(m);
    auto rank_by = [&](auto key) {
        std::vector<std::size_t> ord = ok;
        std::stable_sort(ord.begin(), ord.end(), [&](auto x, auto y) { return key(x) < key(y); });
        std::vector<std::size_t> rank(k, 0);
        for (std::size_t r = 0; r < ord.size(); ++r) rank[ord[r]] = r + 1;
        return rank;
    };
    const auto obs_of = [&](std::size_t m) { return res[m]->observed_loss; };
    const auto bound_of = [&](std::size_t m) { return res[m]->empirical.upper_bound; };
    const auto rank_obs = rank_by(obs_of), rank_bound = rank_by(bound_of);

    std::vector<PairOrdering> pairs;
    std::vector<std::vector<std::string>> changed_with(k);
    for (std::size_t x = 0; x < ok.size(); ++x)
        for (std::size_t y = x + 1; y < ok.size(); ++y) {
            const auto i = ok[x], j = ok[y];
            PairOrdering p{cfg.models[i].id, cfg.models[j].id, rank_obs[i] < rank_obs[j],
                           rank_bound[i] < rank_bound[j], false, std::nullopt};
            p.ordering_changed = p.observed_a_better != p.bound_a_better;
            if (ci[i] && ci[j]) p.ci_overlap = ci[i]->first <= ci[j]->second && ci[j]->first <= ci[i]->second;
            if (p.ordering_changed) {
                changed_with[i].push_back(p.b);
                changed_with[j].push_back(p.a);
            }
            pairs.push_back(p);
        }

    std::size_t n_changed = 0;
    for (const auto& p : pairs) n_changed += p.ordering_changed;
    o.sidecar["experiment"] = cfg.experiment;
    o.sidecar["config"] = cfg.resolved;
    o.sidecar["split_seed"] = split_seed;
    o.sidecar["bootstrap_seed"] = detail::derive_seed(cfg.seed, {3});
    o.sidecar["bootstrap"] = {{"replicates", cfg.bootstrap}, {"level", cfg.ci_level}, {"method", "percentile"}};
    o.sidecar["shared_M"] = detail::number_json(M);
    auto& models = o.sidecar["models"] = nlohmann::json::array();
    auto& pj = o.sidecar["pairs"] = nlohmann::json::array();
    for (const auto& p : pairs) {
        nlohmann::json e{{"a", p.a}, {"b", p.b}, {"observed_a_better", p.observed_a_better},
                         {"bound_a_better", p.bound_a_better}, {"ordering_changed", p.ordering_changed}};
        if (p.ci_overlap) e["ci_overlap"] = *p.ci_overlap;
        pj.push_back(e);
    }
    o.header.push_back("ordering_changed_pairs = " + std::to_string(n_changed));

    for (std::size_t m = 0; m < k; ++m) {
        std::map<std::string, std::string> row;
        const auto& me = cfg.models[m];
        row["experiment"] = cfg.experiment;
        row["model"] = me.id;
        row["spec"] = detail::sanitize(me.spec.to_string());
        row["weights"] = detail::sanitize(me.weights.to_string());
        if (!res[m]) {
            row["status"] = "failed";
            row["error"] = detail::sanitize(errors[m]);
            ++o.failed;
            o.table.rows.push_back(std::move(row));
            continue;
        }
        const auto& r = *res[m];
        row["status"] = "ok";
        detail::certification_cells(row, r);
        if (ci[m]) {
            row["ci_low"] = detail::cell(ci[m]->first);
            row["ci_high"] = detail::cell(ci[m]->second);
        }
        row["rank_observed"] = std::to_string(rank_obs[m]);
        row["rank_bound"] = std::to_string(rank_bound[m]);
        std::string cw;
        for (const auto& s : changed_with[m]) cw += (cw.empty() ? "" : ";") + s;
        row["ordering_changed_with"] = cw;
        o.table.rows.push_back(std::move(row));
        models.push_back({{"model", me.id}, {"certificates", detail::certificates_json(r)}});
    }
    o.sidecar["failed_rows"] = o.failed;
    return o;
}

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
    if (cfg.experiment == "tightness_vs_n") return run_tightness_vs_n(cfg);
    if (cfg.experiment == "lambda_sweep") return run_lambda_sweep(cfg);
    if (cfg.experiment == "model_selection") return run_model_selection(cfg);
    throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

}  // namespace causalcert
