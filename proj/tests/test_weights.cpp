#include <catch_amalgamated.hpp>

#include <random>

#include "support.hpp"

using namespace causalcert;
using Catch::Approx;
using testing_support::dataset;

namespace {

// Two treated rows at x = 0, 1 and two control rows; p_hat = 0.5 for both arms.
CausalDataset four_rows() { return dataset(1, {{0}, {1}, {2}, {3}}, {1, 1, 0, 0}, {0, 0, 0, 0}); }

template <class F>
std::shared_ptr<const ProbClassifier> propensity(F f) {
    return std::make_shared<FunctionClassifier<F>>(std::move(f), 1, "fn");
}

}  // namespace

TEST_CASE("constant weights", "[weights]") {
    const auto w = build_constant();
    const double x[3] = {1.0, -7.0, 3.0};
    CHECK(w(x) == 1.0);
    CHECK(w.w_max() == 1.0);
    CHECK(w.normalizer() == 1.0);
    CHECK(w.spec() == "one");
    const auto ds = four_rows();
    CHECK(conditional_mean(w, ds, Arm::treated) == 1.0);
    CHECK(conditional_mean(w, ds, Arm::control) == 1.0);
}

TEST_CASE("ipw with the arm frequency as propensity is constant one", "[weights]") {
    const auto ds = dataset(1, {{0}, {1}, {2}, {3}, {4}}, {1, 0, 0, 1, 0}, {0, 0, 0, 0, 0});
    const auto w = build_ipw(std::make_shared<ConstantClassifier>(0.4), Arm::treated, ds);
    for (double x : {0.0, 2.5, 100.0}) CHECK(w(&x) == Approx(1.0).epsilon(1e-14));
    CHECK(w.w_max() == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("two-point arm normalizes by the arm mean", "[weights]") {
    const auto ds = four_rows();
    // p_hat / e = 1 at x = 0 and 3 at x = 1.
    const auto e = propensity([](std::span<const double> x) { return x[0] == 0.0 ? 0.5 : 0.5 / 3.0; });
    const auto w = build_ipw(e, Arm::treated, ds);
    const double x0 = 0.0, x1 = 1.0;
    CHECK(w.unnormalized(&x0) == Approx(1.0));
    CHECK(w.unnormalized(&x1) == Approx(3.0));
    CHECK(w.normalizer() == Approx(2.0));
    CHECK(w(&x0) == Approx(0.5));
    CHECK(w(&x1) == Approx(1.5));
    CHECK(w.w_max() == Approx(1.5));
}

TEST_CASE("clip floors the propensity", "[weights]") {
    const auto ds = four_rows();
    const auto e = propensity([](std::span<const double>) { return 0.01; });
    const auto w = build_ipw(e, Arm::treated, ds, 0.05);
    const double x = 0.0;
    CHECK(w.unnormalized(&x) == Approx(10.0).epsilon(1e-14));
    CHECK(w(&x) == Approx(1.0));
    CHECK_THROWS_AS(build_ipw(e, Arm::treated, ds, 0.5), ConfigError);
    CHECK_THROWS_AS(build_ipw(nullptr, Arm::treated, ds), ConfigError);
    CHECK_THROWS_AS(build_ipw(e, Arm::treated, dataset(1, {{0}, {1}}, {1, 1}, {0, 0})), DegenerateSplitError);
}

TEST_CASE("zero propensity without clipping flags infinite weights", "[weights]") {
    const auto ds = four_rows();
    const auto e = propensity([](std::span<const double> x) { return x[0] == 0.0 ? 0.0 : 0.5; });
    const auto w = build_ipw(e, Arm::treated, ds);
    CHECK(w.infinite());
    CHECK(std::isinf(w.w_max()));
    const double x0 = 0.0, x1 = 1.0;
    CHECK(std::isinf(w(&x0)));
    CHECK(w(&x1) == Approx(1.0));
    const auto clipped = build_ipw(e, Arm::treated, ds, 0.1);
    CHECK_FALSE(clipped.infinite());
    CHECK(std::isfinite(clipped.w_max()));
}

TEST_CASE("balance term examples", "[weights]") {
    const auto ds = four_rows();
    const auto one = build_constant();
    CHECK(balance_term(one, ds, Arm::treated) == 1.0);
    CHECK(balance_term(one, ds, Arm::control) == 1.0);
    const auto all_treated = dataset(1, {{0}, {1}}, {1, 1}, {0, 0});
    CHECK(balance_term(one, all_treated, Arm::treated) == 0.0);

    const auto two = one.scaled(2.0);
    CHECK(two.w_max() == 2.0);
    // Treated rows give (4 - 1)^2, control rows give 1.
    CHECK(balance_term(two, ds, Arm::treated) == Approx((9.0 + 9.0 + 1.0 + 1.0) / 4.0));
    CHECK(balance_term(one, ds, Arm::treated) == 1.0);
    CHECK_THROWS_AS(one.scaled(0.0), DomainError);
}

TEST_CASE("normalized ipw has unit arm mean and respects w_max", "[weights]") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        const auto ds = generate(parse_dgp("observational:n=400,d=3,seed=" + std::to_string(rep + 1)));
        const auto clf = std::shared_ptr<const ProbClassifier>(
            fit_classifier(rep % 2 ? "treeclf:depth=3" : "logistic:l2=1.0", features(ds), treatments(ds)));
        for (Arm a : {Arm::treated, Arm::control}) {
            const auto w = build_ipw(clf, a, ds, rep % 3 == 0 ? 0.02 : 0.0);
            CHECK(conditional_mean(w, ds, a) == Approx(1.0).margin(1e-10));
            CHECK(arm_w_max(w, ds, a) == Approx(w.w_max()).epsilon(1e-14));
            for (std::size_t i = 0; i < ds.size(); ++i) REQUIRE(w(ds[i].x.data()) >= 0.0);
        }
    }
}

TEST_CASE("weight-based brier score squares the weights", "[weights]") {
    const auto ds = four_rows();
    const auto two = build_constant().scaled(2.0);
    CHECK(brier_score(ConstantClassifier(0.5), ds, Arm::treated, two) == 1.0);
}

TEST_CASE("weight spec strings", "[weights]") {
    CHECK_FALSE(parse_weight_spec("one").ipw);
    const auto s = parse_weight_spec("ipw:clf=logistic:l2=0.5,clip=0.01");
    CHECK(s.ipw);
    CHECK(s.classifier == "logistic:l2=0.5");
    CHECK(s.clip == 0.01);
    const auto t = parse_weight_spec("ipw:clf=treeclf:depth=3,min_leaf=5");
    CHECK(t.classifier == "treeclf:depth=3,min_leaf=5");
    CHECK(t.clip == 0.0);
    CHECK(parse_weight_spec("ipw").classifier == "logistic:l2=1.0");
    CHECK_THROWS_AS(parse_weight_spec("overlap"), ConfigError);
    CHECK_THROWS_AS(parse_weight_spec("ipw:clf=logistic,clip=0.7"), ConfigError);
    CHECK_THROWS_AS(parse_weight_spec("ipw:clf=svm"), ConfigError);
    CHECK_THROWS_AS(parse_weight_spec("ipw:clip=0.1"), ConfigError);
}

TEST_CASE("weight pair shares one classifier", "[weights]") {
    const auto ds = generate(parse_dgp("observational:n=300,d=2,seed=3"));
    const auto [w1, w0] = build_weight_pair(parse_weight_spec("ipw:clf=logistic:l2=1.0,clip=0.01"), ds);
    CHECK(w1.classifier() == w0.classifier());
    CHECK(w1.arm() == Arm::treated);
    CHECK(w0.arm() == Arm::control);
    const auto [c1, c0] = build_weight_pair(parse_weight_spec("one"), ds);
    CHECK(c1.kind() == WeightFn::Kind::constant_one);
    CHECK(c0.kind() == WeightFn::Kind::constant_one);
}
