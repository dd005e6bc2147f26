#include <catch_amalgamated.hpp>

#include <random>

#include "support.hpp"

using namespace causalcert;
using Catch::Approx;

namespace {

struct Data {
    FeatureMatrix X;
    Vector y;
};

Data make_data(std::size_t n, std::size_t d, std::uint64_t seed, double noise = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0, 1);
    Data out{FeatureMatrix(Eigen::Index(n), Eigen::Index(d)), Vector(Eigen::Index(n))};
    for (Eigen::Index i = 0; i < Eigen::Index(n); ++i) {
        for (Eigen::Index j = 0; j < Eigen::Index(d); ++j) out.X(i, j) = g(rng);
        out.y(i) = 1.0 + out.X(i, 0) - 0.5 * out.X(i, 0) * out.X(i, 0) + noise * g(rng);
    }
    return out;
}

// Replicates row i of (X, y) w_i times, w_i a nonnegative integer.
Data replicate(const Data& d, const std::vector<int>& w) {
    std::size_t m = 0;
    for (int k : w) m += std::size_t(k);
    Data out{FeatureMatrix(Eigen::Index(m), d.X.cols()), Vector(Eigen::Index(m))};
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < w.size(); ++i)
        for (int k = 0; k < w[i]; ++k, ++r) {
            out.X.row(r) = d.X.row(Eigen::Index(i));
            out.y(r) = d.y(Eigen::Index(i));
        }
    return out;
}

const std::vector<std::string> kRegressors{"ridge:l2=1.0", "knn:k=5", "tree:depth=4", "forest:trees=10,depth=4,seed=3"};

}  // namespace

TEST_CASE("ridge recovers an exact linear fit", "[learners]") {
    FeatureMatrix X(50, 1);
    Vector y(50);
    for (int i = 0; i < 50; ++i) {
        X(i, 0) = i * 0.1 - 2.0;
        y(i) = 2.0 * X(i, 0);
    }
    RidgeRegressor r(0.0);
    r.fit(X, y, Vector::Ones(50));
    CHECK(r.coefficients()(0) == Approx(2.0).margin(1e-8));
    CHECK(r.intercept() == Approx(0.0).margin(1e-8));
    CHECK_FALSE(r.used_fallback());
}

TEST_CASE("constant targets give constant predictions", "[learners]") {
    const auto d = make_data(60, 3, 1);
    const Vector y = Vector::Constant(60, 4.25);
    for (const auto& spec : kRegressors) {
        const auto r = fit_weighted_regressor(spec, d.X, y, Vector::Ones(60));
        for (Eigen::Index i = 0; i < 60; i += 7) CHECK(r->predict(d.X.row(i).data()) == Approx(4.25).margin(1e-9));
        const auto q = fit_weighted_regressor(spec, d.X, y, Vector::Ones(60), Objective::quantile(0.3));
        CHECK(q->predict(d.X.row(3).data()) == Approx(4.25).margin(1e-6));
    }
}

TEST_CASE("integer weights equal sample replication", "[learners]") {
    const auto d = make_data(40, 2, 7);
    std::vector<int> wi(40);
    Vector w(40);
    for (int i = 0; i < 40; ++i) w(i) = wi[std::size_t(i)] = 1 + (i * 7) % 3;
    const auto rep = replicate(d, wi);
    const auto q = make_data(25, 2, 8);
    const std::vector<std::string> specs{"ridge:l2=1.0", "ridge:l2=0", "knn:k=4", "tree:depth=5",
                                         "forest:trees=5,depth=4,seed=1,subsample=1,honest=0"};
    for (const auto& spec : specs) {
        INFO(spec);
        const auto a = fit_weighted_regressor(spec, d.X, d.y, w);
        const auto b = fit_weighted_regressor(spec, rep.X, rep.y, Vector::Ones(rep.X.rows()));
        for (Eigen::Index i = 0; i < q.X.rows(); ++i)
            CHECK(a->predict(q.X.row(i).data()) == Approx(b->predict(q.X.row(i).data())).margin(1e-8));
    }
    // The duplicated-sample example: one row with weight 2 versus two copies.
    Vector w2 = Vector::Ones(40);
    w2(0) = 2.0;
    auto d2 = replicate(d, [] {
        std::vector<int> v(40, 1);
        v[0] = 2;
        return v;
    }());
    RidgeRegressor r1(0.5), r2(0.5);
    r1.fit(d.X, d.y, w2);
    r2.fit(d2.X, d2.y, Vector::Ones(41));
    CHECK((r1.coefficients() - r2.coefficients()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(r1.intercept() - r2.intercept()) < 1e-10);
}

TEST_CASE("singular ridge falls back and records it", "[learners]") {
    FeatureMatrix X(20, 2);
    Vector y(20);
    for (int i = 0; i < 20; ++i) {
        X(i, 0) = X(i, 1) = double(i);
        y(i) = 3.0 * i;
    }
    RidgeRegressor r(0.0);
    r.fit(X, y, Vector::Ones(20));
    CHECK(r.used_fallback());
    CHECK(r.predict(X.row(10).data()) == Approx(30.0).margin(1e-5));
}

TEST_CASE("fit input validation", "[learners]") {
    const auto d = make_data(10, 1, 2);
    for (const auto& spec : kRegressors) {
        CHECK_THROWS_AS(fit_weighted_regressor(spec, d.X, d.y, Vector::Zero(10)), DomainError);
        Vector neg = Vector::Ones(10);
        neg(3) = -1.0;
        CHECK_THROWS_AS(fit_weighted_regressor(spec, d.X, d.y, neg), DomainError);
        CHECK_THROWS_AS(fit_weighted_regressor(spec, d.X, d.y, Vector::Ones(9)), DataError);
    }
    RidgeRegressor unfit;
    const double x = 0.0;
    CHECK_THROWS_AS(unfit.predict(&x), Error);
}

TEST_CASE("learner spec strings", "[learners]") {
    CHECK(make_regressor("ridge:l2=2")->name() == "ridge:l2=2");
    CHECK_NOTHROW(make_regressor("knn:k=3"));
    CHECK_NOTHROW(make_regressor("tree:depth=3,min_leaf=2"));
    CHECK_NOTHROW(make_regressor("forest:trees=3,depth=2,seed=9,subsample=0.5,honest=0"));
    CHECK_NOTHROW(make_classifier("logistic:l2=0.5,max_iter=20,tol=1e-6"));
    CHECK_NOTHROW(make_classifier("treeclf:depth=2"));
    CHECK(make_classifier("const:0.3")->fitted());
    CHECK_THROWS_AS(make_regressor("lasso"), ConfigError);
    CHECK_THROWS_AS(make_regressor("ridge:alpha=1"), ConfigError);
    CHECK_THROWS_AS(make_regressor("ridge:l2=-1"), ConfigError);
    CHECK_THROWS_AS(make_regressor("knn:k=0"), ConfigError);
    CHECK_THROWS_AS(make_classifier("const:1.5"), ConfigError);
    CHECK_THROWS_AS(make_classifier("svm"), ConfigError);
}

TEST_CASE("logistic on separable data saturates on far points", "[learners]") {
    FeatureMatrix X(200, 1);
    Vector t(200);
    for (int i = 0; i < 200; ++i) {
        X(i, 0) = -5.0 + 10.0 * i / 199.0;
        t(i) = X(i, 0) > 0 ? 1.0 : 0.0;
    }
    const auto c = fit_classifier("logistic:l2=1.0", X, t);
    const double far_hi = 5.0, far_lo = -5.0;
    CHECK(c->predict_proba(&far_hi) > 0.99);
    CHECK(c->predict_proba(&far_lo) < 0.01);
    double prev = -1.0;
    for (int i = -50; i <= 50; ++i) {
        const double x = i * 0.1, p = c->predict_proba(&x);
        CHECK(p >= prev);
        prev = p;
    }
    CHECK(c->predict_proba(&far_hi, Arm::control) == Approx(1.0 - c->predict_proba(&far_hi)));
}

TEST_CASE("coin-flip labels give the base rate", "[learners]") {
    std::mt19937_64 rng(4);
    std::bernoulli_distribution coin(0.3);
    std::normal_distribution<double> g(0, 1);
    FeatureMatrix X(20000, 2);
    Vector t(20000);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        X(i, 0) = g(rng);
        X(i, 1) = g(rng);
        t(i) = coin(rng);
    }
    const double mean = t.mean();
    const auto tree = fit_classifier("treeclf:depth=0", X, t);
    const auto logit = fit_classifier("logistic:l2=1.0", X, t);
    for (int i = 0; i < 50; ++i) {
        const double x[2] = {g(rng), g(rng)};
        CHECK(std::abs(tree->predict_proba(x) - mean) < 0.05);
        CHECK(std::abs(logit->predict_proba(x) - mean) < 0.05);
    }
}

TEST_CASE("Laplace smoothing of pure leaves", "[learners]") {
    FeatureMatrix X(10, 1);
    Vector t(10);
    for (int i = 0; i < 10; ++i) {
        X(i, 0) = i;
        t(i) = i < 4 ? 0.0 : 1.0;
    }
    const auto c = fit_classifier("treeclf:depth=1", X, t);
    const double hi = 8.0, lo = 1.0;
    const double m1 = 6, m0 = 4;
    CHECK(c->predict_proba(&hi) == Approx(m1 / (m1 + 2) + 1.0 / (m1 + 2)));
    CHECK(c->predict_proba(&lo) == Approx(1.0 / (m0 + 2)));
}

TEST_CASE("classifiers reject a single class", "[learners]") {
    FeatureMatrix X(5, 1);
    X.setRandom();
    for (const char* spec : {"logistic:l2=1.0", "treeclf:depth=2"}) {
        CHECK_THROWS_AS(fit_classifier(spec, X, Vector::Ones(5)), DataError);
        Vector bad = Vector::Zero(5);
        bad(0) = 0.5;
        CHECK_THROWS_AS(fit_classifier(spec, X, bad), DataError);
    }
}

TEST_CASE("predict_proba stays in [0, 1] on random queries", "[learners]") {
    const auto d = make_data(300, 3, 11);
    Vector t(300);
    for (Eigen::Index i = 0; i < 300; ++i) t(i) = d.y(i) > 0.5 ? 1.0 : 0.0;
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0, 10);
    for (const char* spec : {"logistic:l2=0.01", "treeclf:depth=6"}) {
        const auto c = fit_classifier(spec, d.X, t);
        for (int i = 0; i < 100000; ++i) {
            const double x[3] = {g(rng), g(rng), g(rng)};
            const double p = c->predict_proba(x);
            REQUIRE(p >= 0.0);
            REQUIRE(p <= 1.0);
        }
    }
}

TEST_CASE("brier score examples", "[learners]") {
    const auto ds = testing_support::dataset(1, {{0}, {1}, {2}, {3}}, {1, 0, 0, 1}, {0, 0, 0, 0});
    const std::vector<double> ones(4, 1.0), twos(4, 2.0);
    CHECK(brier_score(ConstantClassifier(0.5), ds, Arm::treated, ones) == 0.25);
    CHECK(brier_score(ConstantClassifier(0.5), ds, Arm::control, twos) == 1.0);
    const FunctionClassifier perfect([&](std::span<const double> x) { return x[0] == 0 || x[0] == 3 ? 1.0 : 0.0; }, 1,
                                     "perfect");
    CHECK(brier_score(perfect, ds, Arm::treated, twos) == 0.0);
    CHECK(brier_score(perfect, ds, Arm::control, ones) == 0.0);

    // Constant nu = P under an RCT gives about P (1 - P).
    std::mt19937_64 rng(3);
    std::bernoulli_distribution coin(0.3);
    std::vector<ObservedSample> rows;
    for (int i = 0; i < 40000; ++i) rows.push_back({{0.0}, int(coin(rng)), 0.0});
    const CausalDataset rct(1, std::move(rows));
    const std::vector<double> w(rct.size(), 1.0);
    CHECK(brier_score(ConstantClassifier(0.3), rct, Arm::treated, w) == Approx(0.21).margin(0.005));
}

TEST_CASE("seeded forests are deterministic", "[learners]") {
    const auto d = make_data(200, 3, 21);
    const auto a = fit_weighted_regressor("forest:trees=20,depth=5,seed=4", d.X, d.y, Vector::Ones(200));
    const auto b = fit_weighted_regressor("forest:trees=20,depth=5,seed=4", d.X, d.y, Vector::Ones(200));
    const auto c = fit_weighted_regressor("forest:trees=20,depth=5,seed=5", d.X, d.y, Vector::Ones(200));
    bool differs = false;
    for (Eigen::Index i = 0; i < 200; ++i) {
        CHECK(a->predict(d.X.row(i).data()) == b->predict(d.X.row(i).data()));
        differs = differs || a->predict(d.X.row(i).data()) != c->predict(d.X.row(i).data());
    }
    CHECK(differs);
}

TEST_CASE("nonlinear learners fit a curved surface", "[learners]") {
    const auto d = make_data(2000, 2, 31, 0.1);
    const auto test = make_data(500, 2, 32, 0.0);
    for (const auto& spec : {"knn:k=10", "tree:depth=6", "forest:trees=30,depth=6,seed=1"}) {
        INFO(spec);
        const auto r = fit_weighted_regressor(spec, d.X, d.y, Vector::Ones(2000));
        double mse = 0.0;
        for (Eigen::Index i = 0; i < 500; ++i) mse += std::pow(r->predict(test.X.row(i).data()) - test.y(i), 2);
        CHECK(mse / 500 < 0.15);
    }
}

TEST_CASE("quantile-mode learners converge to the conditional quantile", "[learners][slow]") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g(0, 1);
    const Eigen::Index n = 10000;
    FeatureMatrix X(n, 1);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = g(rng);
        y(i) = 1.0 + 2.0 * (X(i, 0) > 0) + g(rng);
    }
    const double z80 = 0.8416212335729143, z25 = -0.6744897501960817;
    RidgeRegressor ridge(1.0);
    FeatureMatrix Xl(n, 1);
    Vector yl(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Xl(i, 0) = X(i, 0);
        yl(i) = 1.0 + 0.5 * X(i, 0) + (y(i) - 1.0 - 2.0 * (X(i, 0) > 0));
    }
    ridge.fit(Xl, yl, Vector::Ones(n), Objective::quantile(0.8));
    for (double x : {-1.5, 0.0, 1.5}) CHECK(std::abs(ridge.predict(&x) - (1.0 + 0.5 * x + z80)) < 0.1);

    const auto tree = fit_weighted_regressor("tree:depth=2", X, y, Vector::Ones(n), Objective::quantile(0.25));
    for (double x : {-1.0, 1.0}) CHECK(std::abs(tree->predict(&x) - (1.0 + 2.0 * (x > 0) + z25)) < 0.1);
}

TEST_CASE("weighted quantile is the lower weighted quantile", "[learners]") {
    CHECK(weighted_quantile({{1, 1}, {2, 1}, {3, 1}, {4, 1}}, 0.5) == 2.0);
    CHECK(weighted_quantile({{1, 1}, {2, 3}}, 0.5) == 2.0);
    CHECK(weighted_quantile({{1, 0}, {5, 1}}, 0.1) == 5.0);
    CHECK_THROWS_AS(weighted_quantile({}, 0.5), DomainError);
}

TEST_CASE("zero-one objective thresholds predictions", "[learners]") {
    FeatureMatrix X(6, 1);
    Vector y(6);
    for (int i = 0; i < 6; ++i) {
        X(i, 0) = i;
        y(i) = i >= 3;
    }
    const auto r = fit_weighted_regressor("ridge:l2=0.01", X, y, Vector::Ones(6), objective_for(DecomposableLoss::zero_one()));
    for (int i = 0; i < 6; ++i) {
        const double p = r->predict(X.row(i).data());
        CHECK((p == 0.0 || p == 1.0));
        CHECK(p == y(i));
    }
}
