#include <catch_amalgamated.hpp>

#include <random>

#include "support.hpp"

using namespace causalcert;
using Catch::Approx;

TEST_CASE("eval examples", "[losses]") {
    CHECK(eval(DecomposableLoss::squared(), 3.0, 1.0) == 4.0);
    CHECK(eval(DecomposableLoss::quantile(0.8), 0.0, 1.0) == Approx(0.2).margin(1e-15));
    CHECK(eval(DecomposableLoss::absolute(), 2.5, 2.5) == 0.0);
    CHECK(eval(DecomposableLoss::zero_one(), 1.0, 0.0) == 1.0);
    CHECK(eval(DecomposableLoss::zero_one(), 1.0, 1.0) == 0.0);
    CHECK_THROWS_AS(eval(DecomposableLoss::zero_one(), 0.5, 1.0), DomainError);
    CHECK_THROWS_AS(eval(DecomposableLoss::zero_one(), 1.0, 2.0), DomainError);
}

TEST_CASE("clipping caps the range", "[losses]") {
    const auto l = DecomposableLoss::squared().with_clip(3.0);
    CHECK(eval(l, 10.0, 0.0) == 3.0);
    CHECK(eval(l, 1.0, 0.0) == 1.0);
    CHECK(constants(l).M == 3.0);
    CHECK(constants(DecomposableLoss::zero_one()).M == 1.0);
    CHECK_THROWS_AS(DecomposableLoss::squared().with_clip(0.0), DomainError);
    CHECK_FALSE(DecomposableLoss::absolute().bounded());
}

TEST_CASE("pinball examples and envelopes", "[losses]") {
    const auto half = DecomposableLoss::quantile(0.5);
    CHECK(psi(half, -2.0) == 1.0);
    CHECK(psi(half, 0.0) == 0.0);
    CHECK(psi(half, 3.0) == 1.5);
    const auto q8 = DecomposableLoss::quantile(0.8);
    CHECK(psi(q8, 2.0) == Approx(1.6).epsilon(1e-15));
    CHECK(2.0 * 0.8 <= psi(q8, 2.0) + 1e-15);
    CHECK(-2.0 * 0.2 <= psi(q8, 2.0));

    for (double a : {0.05, 0.1, 0.25, 0.5, 0.8, 0.9, 0.95}) {
        const auto l = DecomposableLoss::quantile(a);
        for (int i = -2000; i <= 2000; ++i) {
            const double x = i * 0.005;
            const double p = psi(l, x);
            REQUIRE(x * a <= p + 1e-15);
            REQUIRE(-x * (1.0 - a) <= p + 1e-15);
            REQUIRE(p >= 0.0);
        }
    }
}

TEST_CASE("psi vanishes at zero for every kind", "[losses]") {
    for (const auto& l : {DecomposableLoss::squared(), DecomposableLoss::absolute(), DecomposableLoss::quantile(0.3),
                          DecomposableLoss::zero_one()})
        CHECK(psi(l, 0.0) == 0.0);
}

TEST_CASE("closed-form subadditivity constants", "[losses]") {
    CHECK(constants(DecomposableLoss::squared()).C == 2.0);
    CHECK(constants(DecomposableLoss::absolute()).C == 1.0);
    CHECK(constants(DecomposableLoss::zero_one()).C == 1.0);
    CHECK(constants(DecomposableLoss::quantile(0.8)).C == Approx(4.0).epsilon(1e-12));
    const std::vector<std::pair<double, double>> table{{0.1, 9.0}, {0.25, 3.0}, {0.5, 1.0}, {0.8, 4.0}, {0.9, 9.0}};
    for (auto [a, c] : table) CHECK(constants(DecomposableLoss::quantile(a)).C == Approx(c).epsilon(1e-12));
}

TEST_CASE("relaxed subadditivity holds on random pairs", "[losses]") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g(0.0, 3.0);
    std::vector<DecomposableLoss> kinds{DecomposableLoss::squared(), DecomposableLoss::absolute()};
    for (double a : {0.1, 0.25, 0.5, 0.8, 0.9}) kinds.push_back(DecomposableLoss::quantile(a));
    for (const auto& l : kinds) {
        const double C = constants(l).C;
        const auto clipped = l.with_clip(4.0);
        std::size_t violations = 0;
        for (int i = 0; i < 20000; ++i) {
            const double x = g(rng), y = g(rng);
            for (double s : {1.0, -1.0}) {
                const double lhs = psi(l, x + s * y), rhs = C * (psi(l, x) + psi(l, y));
                if (lhs > rhs * (1 + 1e-12) + 1e-12) ++violations;
                const double lc = eval_residual(clipped, x + s * y);
                const double rc = C * (eval_residual(clipped, x) + eval_residual(clipped, y));
                if (lc > rc * (1 + 1e-12) + 1e-12) ++violations;
            }
        }
        CHECK(violations == 0);
    }
    // 0-1 loss residuals are differences of binary labels.
    std::bernoulli_distribution b(0.5);
    const auto z = DecomposableLoss::zero_one();
    for (int i = 0; i < 1000; ++i) {
        const double x = double(b(rng)) - double(b(rng)), y = double(b(rng)) - double(b(rng));
        if (std::abs(x + y) <= 1.0) CHECK(psi(z, x + y) <= psi(z, x) + psi(z, y));
    }
}

TEST_CASE("scaled loss", "[losses]") {
    const auto sq = DecomposableLoss::squared();
    const auto one = scaled_loss(sq, [](double) { return 1.0; });
    const auto zero = scaled_loss(sq, [](double) { return 0.0; });
    const auto half = scaled_loss(sq, [](double) { return 0.5; });
    CHECK(one(0.0, 5.0, 2.0) == eval(sq, 5.0, 2.0));
    CHECK(zero(0.0, 5.0, -20.0) == 0.0);
    CHECK(half(0.0, 3.0, 1.0) == 1.0);
    const auto bad = scaled_loss(sq, [](double) { return 1.5; });
    CHECK_THROWS_AS(bad(0.0, 1.0, 0.0), DomainError);
    CHECK_THROWS_AS(one.at_scale(-0.1, 1.0, 0.0), DomainError);
}

TEST_CASE("clip from training losses", "[losses]") {
    std::vector<double> v;
    for (int i = 0; i <= 1000; ++i) v.push_back(double(i));
    CHECK(clip_from_losses(v, 0.995) == Approx(995.0).epsilon(1e-12));
    CHECK(clip_from_losses(std::vector<double>{0.0, 0.0}) == 1e-12);
    CHECK(empirical_quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
    CHECK_THROWS_AS(empirical_quantile({}, 0.5), DomainError);
}

TEST_CASE("loss spec strings", "[losses]") {
    CHECK(parse_loss("squared").kind == LossKind::squared);
    CHECK(parse_loss("absolute").kind == LossKind::absolute);
    CHECK(parse_loss("zero_one").kind == LossKind::zero_one);
    const auto q = parse_loss("quantile:0.8");
    CHECK(q.kind == LossKind::quantile);
    CHECK(q.alpha == 0.8);
    CHECK(to_string(q) == "quantile:0.8");
    CHECK_THROWS_AS(parse_loss("quantile:1.2"), ConfigError);
    CHECK_THROWS_AS(parse_loss("quantile:"), ConfigError);
    CHECK_THROWS_AS(parse_loss("huber"), ConfigError);
    CHECK_THROWS_AS(DecomposableLoss::quantile(0.0), DomainError);
}
