#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace causalcert;
using Catch::Approx;

namespace {

struct Split {
    CausalDataset train, cert;
};

Split draw(const std::string& dgp) {
    auto [a, b] = split(generate(parse_dgp(dgp)), 0.5, 99);
    return {std::move(a), std::move(b)};
}

FittedModel fit(const Split& s, const std::string& model, const std::string& weights, const CertifyOptions& opt) {
    return fit_model("m", parse_meta_spec(model), parse_weight_spec(weights), s.train, opt);
}

void check_audit(const BoundCertificate& c) {
    const auto j = nlohmann::json::parse(to_json(c).dump());
    CHECK(resum(j) == c.upper_bound);
    for (const auto& a : c.addends) CHECK(a.value >= 0.0);
}

}  // namespace

TEST_CASE("policy spec strings", "[certify]") {
    CHECK_FALSE(parse_lambda_policy("optimal").fixed);
    CHECK(parse_lambda_policy("fixed:2.5").value == 2.5);
    CHECK_THROWS_AS(parse_lambda_policy("fixed:0"), ConfigError);
    CHECK_THROWS_AS(parse_lambda_policy("best"), ConfigError);
    CHECK(parse_variance_spec("popoviciu").cap(2.0).value == 1.0);
    CHECK(parse_variance_spec("0.3").cap(2.0).value == 0.3);
    CHECK_THROWS_AS(parse_variance_spec("-1"), ConfigError);
    CHECK(parse_complexity_spec("monte_carlo:50").n_sigma == 50);
    CHECK(parse_complexity_spec("user:0.1").user_value == 0.1);
    CHECK_THROWS_AS(parse_complexity_spec("vc"), ConfigError);
    CHECK(parse_clip_spec("auto").kind == ClipSpec::Kind::automatic);
    CHECK(parse_clip_spec("none").kind == ClipSpec::Kind::none);
    CHECK(parse_clip_spec("7.5").value == 7.5);
    CHECK_THROWS_AS(parse_clip_spec("0"), ConfigError);
}

TEST_CASE("outcome certificates order as theoretic, empirical, PAC", "[certify]") {
    const auto s = draw("hidden:n=2000,d=3,seed=5");
    CertifyOptions opt;
    const auto m = fit(s, "t:ridge:l2=1.0", "one", opt);
    CHECK(m.loss.clip_M == Approx(std::max(m.clip_arm1, m.clip_arm0)));
    const auto r = certify(m, s.cert, opt);
    REQUIRE(r.theoretic);
    REQUIRE(r.complete_loss);
    CHECK(r.theoretic->upper_bound >= *r.complete_loss);
    CHECK(r.empirical.upper_bound >= r.theoretic->upper_bound);
    CHECK(r.pac.upper_bound >= r.empirical.upper_bound);
    CHECK(r.delta_hat_1.value >= r.delta_theo_1->value);
    CHECK(r.pac.metadata.at("complexity_method") == "massart");
    CHECK(r.empirical.metadata.at("weights") == "one");
    check_audit(r.empirical);
    check_audit(*r.theoretic);
    check_audit(r.pac);
}

TEST_CASE("exact RCT collapses the theoretic bound to the observable", "[certify]") {
    const auto s = draw("near_rct:n=2000,d=3,seed=6,tilt=0");
    CertifyOptions opt;
    const auto m = fit(s, "t:ridge:l2=1.0", "one", opt);
    const auto r = certify(m, s.cert, opt);
    REQUIRE(r.theoretic);
    CHECK(r.delta_theo_1->value <= 1e-12);
    CHECK(r.theoretic->exact_rct);
    CHECK(r.theoretic->upper_bound == r.theoretic->addend("observable_1"));
}

TEST_CASE("CATE certificates for every meta-learner", "[certify]") {
    const auto s = draw("observational:n=1500,d=3,seed=7");
    CertifyOptions opt;
    opt.task = parse_task("cate");
    for (const char* spec : {"t:ridge:l2=1.0", "s:ridge:l2=1.0", "x:ridge:l2=1.0,e=logistic:l2=1.0"}) {
        INFO(spec);
        const auto m = fit(s, spec, "ipw:clf=logistic:l2=1.0,clip=0.01", opt);
        const auto r = certify(m, s.cert, opt);
        REQUIRE(r.theoretic);
        CHECK(std::isfinite(r.pac.upper_bound));
        CHECK(r.empirical.upper_bound >= r.theoretic->upper_bound);
        CHECK(r.theoretic->upper_bound >= *r.complete_loss);
        CHECK(r.pac.upper_bound >= r.empirical.upper_bound);
        check_audit(r.pac);
        if (spec[0] == 'x') {
            CHECK(r.empirical.task == "x_learner");
            CHECK(r.empirical.scale == 4.0);
            CHECK(r.empirical.metadata.count("blend") == 1);
        } else {
            CHECK(r.empirical.task == (spec[0] == 's' ? "s_learner" : "t_learner"));
            CHECK(r.empirical.scale == 2.0);
        }
    }
}

TEST_CASE("a larger ensemble raises the complexity term", "[certify]") {
    const auto s = draw("observational:n=1000,d=3,seed=8");
    CertifyOptions opt;
    const auto a = fit(s, "t:ridge:l2=1.0", "one", opt);
    const auto b = fit(s, "t:knn:k=10", "one", opt);
    const auto c = fit(s, "t:tree:depth=3", "one", opt);
    const auto alone = certify(a, s.cert, opt);
    const auto with = certify(a, s.cert, opt, {&a, &b, &c});
    CHECK(alone.pac.addend("rademacher_h_1") == 0.0);
    CHECK(with.pac.addend("rademacher_h_1") > 0.0);
    CHECK(with.pac.parameters.at("ensemble_size") == 3.0);
    CHECK(with.pac.upper_bound > alone.pac.upper_bound);
    opt.complexity = parse_complexity_spec("monte_carlo:100");
    opt.seed = 4;
    const auto mc1 = certify(a, s.cert, opt, {&a, &b, &c});
    const auto mc2 = certify(a, s.cert, opt, {&a, &b, &c});
    CHECK(mc1.pac.upper_bound == mc2.pac.upper_bound);
}

TEST_CASE("unbounded loss makes the PAC certificate vacuous", "[certify]") {
    const auto s = draw("hidden:n=1000,d=3,seed=9");
    CertifyOptions opt;
    opt.clip = parse_clip_spec("none");
    opt.var_cap = parse_variance_spec("50");
    const auto m = fit(s, "t:ridge:l2=1.0", "one", opt);
    const auto r = certify(m, s.cert, opt);
    CHECK(std::isinf(r.pac.upper_bound));
    CHECK(r.pac.metadata.count("vacuous_reason") == 1);
    CHECK(std::isfinite(r.empirical.upper_bound));
}

TEST_CASE("positivity violation is flagged, not an error", "[certify]") {
    const auto s = draw("observational:n=600,d=3,seed=10");
    CertifyOptions opt;
    auto m = fit(s, "t:ridge:l2=1.0", "one", opt);
    using Fn = std::function<double(std::span<const double>)>;
    const auto e = std::make_shared<FunctionClassifier<Fn>>(Fn([](std::span<const double> x) { return x[0] > 1.0 ? 1.0 : 0.5; }), 3, "cliff");
    m.w0 = build_ipw(e, Arm::control, s.train);
    REQUIRE(m.w0.infinite());
    opt.task = parse_task("outcome:0");
    const auto r = certify(m, s.cert, opt);
    CHECK(r.empirical.vacuous_positivity);
    CHECK(std::isinf(r.empirical.upper_bound));
    CHECK(std::isinf(r.delta_hat_0.value));
    CHECK(r.empirical.metadata.count("vacuous_reason") == 1);
    CHECK(r.pac.vacuous_positivity);
    CHECK(std::isinf(r.w_max));
}

TEST_CASE("data without oracle certifies without theoretic terms", "[certify]") {
    const auto s = draw("observational:n=800,d=3,seed=11");
    std::vector<ObservedSample> rows(s.cert.samples().begin(), s.cert.samples().end());
    const CausalDataset plain(s.cert.dim(), std::move(rows));
    CertifyOptions opt;
    const auto m = fit(s, "t:ridge:l2=1.0", "one", opt);
    const auto r = certify(m, plain, opt);
    CHECK_FALSE(r.theoretic);
    CHECK_FALSE(r.complete_loss);
    CHECK_FALSE(r.delta_theo_1);
    CHECK(std::isfinite(r.pac.upper_bound));
    opt.conf_delta = 1.0;
    CHECK_THROWS_AS(certify(m, plain, opt), DomainError);
}

TEST_CASE("fixed lambda and fixed clip are honored", "[certify]") {
    const auto s = draw("near_rct:n=1000,d=3,seed=12");
    CertifyOptions opt;
    opt.clip = parse_clip_spec("9");
    opt.lambda = parse_lambda_policy("fixed:1");
    const auto m = fit(s, "t:ridge:l2=1.0", "one", opt);
    CHECK(m.loss.clip_M == 9.0);
    const auto r = certify(m, s.cert, opt);
    CHECK(r.M == 9.0);
    CHECK(r.empirical.parameters.at("lambda_1") == 1.0);
    CHECK(r.empirical.addend("variance_1") == Approx(81.0 / 16.0));
    CHECK(r.empirical.metadata.at("lambda_policy") == "fixed:1");
}
