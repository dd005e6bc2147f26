#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "causalcert.hpp"

namespace cc = causalcert;

namespace {

constexpr int kExitPartial = 4;

struct Common {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<double> delta;
    std::string lambda;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "Master seed");
    app->add_option("--out", c.out, "Output path (file or directory)");
    app->add_option("--delta", c.delta, "PAC confidence parameter in (0, 1)");
    app->add_option("--lambda", c.lambda, "optimal | fixed:<v> | sweep:lo,hi,points");
}

int run_generate(const std::string& dgp, const Common& c) {
    auto spec = cc::parse_dgp(dgp);
    if (c.seed) spec.seed = *c.seed;
    const auto ds = cc::generate(spec);
    if (c.out.empty() || c.out == "-") cc::write_csv(std::cout, ds);
    else cc::export_csv(c.out, ds);
    return 0;
}

struct CertifyArgs {
    std::string data, model = "t:ridge:l2=1.0", weights = "one", loss = "squared", task = "outcome:1";
    std::string clip = "auto", var_cap = "popoviciu", complexity = "massart", nu = "logistic:l2=1.0";
    std::string t_col = "t", y_col = "y", y1_col, y0_col, ps_col;
    double train_fraction = 0.5;
};

int run_certify(const CertifyArgs& a, const Common& c) {
    cc::CsvSchema schema;
    schema.treatment = a.t_col;
    schema.outcome = a.y_col;
    const int nor = int(!a.y1_col.empty()) + int(!a.y0_col.empty()) + int(!a.ps_col.empty());
    if (nor != 0 && nor != 3) throw cc::ConfigError("oracle mapping needs --y1, --y0 and --ps together");
    schema.detect_oracle = nor == 0;
    if (nor == 3) {
        schema.y1 = a.y1_col;
        schema.y0 = a.y0_col;
        schema.propensity = a.ps_col;
    }
    const auto ds = cc::ingest_csv(a.data, schema);

    cc::CertifyOptions opt;
    opt.loss = cc::parse_loss(a.loss);
    opt.clip = cc::parse_clip_spec(a.clip);
    opt.var_cap = cc::parse_variance_spec(a.var_cap);
    opt.complexity = cc::parse_complexity_spec(a.complexity);
    opt.nu = a.nu;
    cc::make_classifier(opt.nu);
    opt.task = cc::parse_task(a.task);
    if (c.delta) opt.conf_delta = *c.delta;
    if (!(opt.conf_delta > 0.0 && opt.conf_delta < 1.0)) throw cc::ConfigError("--delta must lie in (0, 1)");
    if (!c.lambda.empty()) opt.lambda = cc::parse_lambda_policy(c.lambda);
    if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0)) throw cc::ConfigError("--train-fraction must lie in (0, 1)");
    const std::uint64_t seed = c.seed.value_or(1);
    opt.seed = seed;

    const auto meta = cc::parse_meta_spec(a.model);
    const auto wspec = cc::parse_weight_spec(a.weights);
    const auto [train, cert] = cc::split(ds, a.train_fraction, seed);
    const auto fitted = cc::fit_model("model", meta, wspec, train, opt);
    const auto r = cc::certify(fitted, cert, opt);

    nlohmann::json j;
    j["config"] = {{"data", a.data},         {"model", meta.to_string()},     {"weights", wspec.to_string()},
                   {"loss", cc::to_string(fitted.loss)}, {"task", opt.task.to_string()}, {"clip", opt.clip.to_string()},
                   {"var_cap", opt.var_cap.to_string()}, {"complexity", opt.complexity.to_string()},
                   {"nu", opt.nu},             {"delta", opt.conf_delta},       {"lambda", opt.lambda.to_string()},
                   {"train_fraction", a.train_fraction}, {"seed", seed}};
    j["observed_loss"] = cc::detail::number_json(r.observed_loss);
    if (r.complete_loss) j["complete_loss"] = cc::detail::number_json(*r.complete_loss);
    j["certificates"] = cc::detail::certificates_json(r);
    const auto text = j.dump(2) + "\n";
    if (c.out.empty() || c.out == "-") std::cout << text;
    else {
        std::ofstream f(c.out);
        if (!f) throw cc::ConfigError("cannot write '" + c.out + "'");
        f << text;
        std::cerr << "empirical bound " << cc::detail::cell(r.empirical.upper_bound) << ", pac bound "
                  << cc::detail::cell(r.pac.upper_bound) << "\n";
    }
    return 0;
}

int run_experiment_verb(const std::string& path, const std::vector<std::string>& sets, const Common& c) {
    auto cfg = cc::Config::load(path);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw cc::ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) cfg.set("seed", std::to_string(*c.seed));
    if (!c.out.empty()) cfg.set("out", c.out);
    if (c.delta) cfg.set("delta", cc::detail::format_number(*c.delta));
    if (!c.lambda.empty()) cfg.set("lambda", c.lambda);
    const auto resolved = cc::resolve_config(cfg);
    const auto out = cc::run_experiment(resolved);
    const auto csv = cc::write_outputs(out, resolved.out);
    std::cerr << "wrote " << csv.string() << " (" << out.table.rows.size() << " rows, " << out.failed << " failed)\n";
    return out.failed > 0 ? kExitPartial : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causalcert: generalization certificates for causal meta-learners"};
    app.require_subcommand(1);

    Common common;
    std::string dgp = "near_rct";
    auto* gen = app.add_subcommand("generate", "Sample a synthetic DGP to CSV");
    gen->add_option("--dgp", dgp, "near_rct | observational | hidden, with :n=..,d=..,seed=..");
    add_common(gen, common);

    CertifyArgs ca;
    auto* cert = app.add_subcommand("certify", "Fit a model and emit its certificate JSON");
    cert->add_option("--data", ca.data, "Input CSV")->required();
    cert->add_option("--model", ca.model, "t:<learner> | s:<learner> | x:<learner>[,e=<clf>]");
    cert->add_option("--weights", ca.weights, "one | ipw:clf=<classifier>[,clip=eps]");
    cert->add_option("--loss", ca.loss, "squared | absolute | quantile:<alpha> | zero_one");
    cert->add_option("--task", ca.task, "outcome:1 | outcome:0 | cate");
    cert->add_option("--clip", ca.clip, "auto | none | <M>");
    cert->add_option("--var-cap", ca.var_cap, "popoviciu | <value>");
    cert->add_option("--complexity", ca.complexity, "massart | monte_carlo[:n] | user:<value>");
    cert->add_option("--nu", ca.nu, "Classifier for the Brier term");
    cert->add_option("--t", ca.t_col, "Treatment column");
    cert->add_option("--y", ca.y_col, "Outcome column");
    cert->add_option("--y1", ca.y1_col, "Oracle Y1 column");
    cert->add_option("--y0", ca.y0_col, "Oracle Y0 column");
    cert->add_option("--ps", ca.ps_col, "Oracle propensity column");
    cert->add_option("--train-fraction", ca.train_fraction, "Share of rows used for fitting");
    add_common(cert, common);

    std::string config_path;
    std::vector<std::string> sets;
    auto* exp = app.add_subcommand("experiment", "Run an experiment from a config file");
    exp->add_option("config", config_path, "Config file")->required();
    exp->add_option("--set", sets, "Override a config key: key=value")->take_all();
    add_common(exp, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*gen) return run_generate(dgp, common);
        if (*cert) return run_certify(ca, common);
        if (*exp) return run_experiment_verb(config_path, sets, common);
    } catch (const cc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const cc::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const cc::DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
