#include <catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "support.hpp"

using namespace causalcert;
using testing_support::dataset;

namespace {

CausalDataset read(const std::string& body, CsvSchema schema = {}) {
    std::istringstream in(body);
    return read_csv(in, schema);
}

CausalDataset balanced(std::size_t n) {
    std::vector<ObservedSample> rows;
    for (std::size_t i = 0; i < n; ++i) rows.push_back({{double(i)}, int(i % 2), double(i) * 0.5});
    return CausalDataset(1, std::move(rows));
}

}  // namespace

TEST_CASE("three-row csv parses without oracle", "[data]") {
    const auto ds = read("x1,x2,t,y\n0.5,1,1,2.5\n-1,2,0,0\n3,4,1,1e-3\n");
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 2);
    CHECK_FALSE(ds.has_oracle());
    CHECK(ds[0].x == std::vector<double>{0.5, 1.0});
    CHECK(ds[2].y == 1e-3);
    CHECK(ds[1].t == 0);
}

TEST_CASE("oracle columns populate the oracle and enforce consistency", "[data]") {
    CsvSchema s = CsvSchema::with_oracle();
    const auto ok = read("x1,t,y,y1,y0,ps\n0,1,2,2,5,0.4\n1,0,5,9,5,0.6\n", s);
    REQUIRE(ok.has_oracle());
    CHECK(ok.oracle(0).y1 == 2.0);
    CHECK(ok.oracle(1).true_propensity == 0.6);
    CHECK(ok.dim() == 1);

    try {
        read("x1,t,y,y1,y0,ps\n0,1,2,2,5,0.4\n1,1,5,9,5,0.6\n", s);
        FAIL("inconsistent oracle row accepted");
    } catch (const ConsistencyError& e) {
        CHECK(e.row() == 1);
    }
}

TEST_CASE("non-binary treatment is a parse error at its row", "[data]") {
    try {
        read("x1,t,y\n0,1,1\n0,0,1\n0,2,1\n");
        FAIL("t=2 accepted");
    } catch (const ParseError& e) {
        CHECK(e.row() == 2);
        CHECK(e.column() == "t");
    }
}

TEST_CASE("csv schema and parse errors name the culprit", "[data]") {
    try {
        read("x1,treatment,y\n0,1,1\n");
        FAIL("missing t accepted");
    } catch (const SchemaError& e) {
        CHECK(e.column() == "t");
    }
    try {
        read("x1,t,y\n0,1,nan\n");
        FAIL("nan accepted");
    } catch (const ParseError& e) {
        CHECK(e.row() == 0);
        CHECK(e.column() == "y");
    }
    try {
        read("x1,t,y\n0,1,inf\n");
        FAIL("inf accepted");
    } catch (const ParseError& e) {
        CHECK(e.column() == "y");
    }
    CsvSchema partial;
    partial.y1 = "y1";
    CHECK_THROWS_AS(read("x1,t,y,y1\n0,1,1,1\n", partial), SchemaError);
    CHECK_THROWS_AS(read(""), SchemaError);
    CHECK_THROWS_AS(ingest_csv("/nonexistent/file.csv", {}), DataError);
}

TEST_CASE("csv tolerance allows small oracle mismatch", "[data]") {
    CsvSchema s = CsvSchema::with_oracle();
    CHECK_NOTHROW(read("x1,t,y,y1,y0,ps\n0,1,2,2.0000000000001,5,0.4\n", s));
    s.consistency_tolerance = 0.0;
    CHECK_THROWS_AS(read("x1,t,y,y1,y0,ps\n0,1,2,2.0000000000001,5,0.4\n", s), ConsistencyError);
}

TEST_CASE("propensity outside [0,1] is rejected", "[data]") {
    CHECK_THROWS_AS(read("x1,t,y,y1,y0,ps\n0,1,2,2,5,1.5\n", CsvSchema::with_oracle()), DataError);
}

TEST_CASE("split of 100 balanced rows is a seeded partition", "[data]") {
    const auto ds = balanced(100);
    const auto [a, b] = split(ds, 0.5, 7);
    CHECK(a.size() == 50);
    CHECK(b.size() == 50);
    std::multiset<double> all;
    for (const auto& s : a.samples()) all.insert(s.x[0]);
    for (const auto& s : b.samples()) all.insert(s.x[0]);
    std::multiset<double> want;
    for (const auto& s : ds.samples()) want.insert(s.x[0]);
    CHECK(all == want);

    const auto [a2, b2] = split(ds, 0.5, 7);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].x == a2[i].x);
    const auto [a3, b3] = split(ds, 0.5, 8);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].x != a3[i].x;
    CHECK(differs);
}

TEST_CASE("degenerate split is an explicit error", "[data]") {
    const auto ds = dataset(1, {{0}, {1}}, {1, 0}, {0, 0});
    CHECK_THROWS_AS(split(ds, 0.5, 1), DegenerateSplitError);
    CHECK_THROWS_AS(split(balanced(10), 0.0, 1), DomainError);
    CHECK_THROWS_AS(split(balanced(10), 1.0, 1), DomainError);
}

TEST_CASE("arm counts", "[data]") {
    const auto ds = dataset(1, {{0}, {0}, {0}, {0}}, {1, 0, 1, 1}, {0, 0, 0, 0});
    const auto c = arm_counts(ds);
    CHECK(c.n == 4);
    CHECK(c.n_treated == 3);
    CHECK(c.n_control == 1);
    CHECK(c.p_treated == 0.75);
    CHECK(c.n_min() == 1);

    const auto treated = dataset(1, {{0}, {1}}, {1, 1}, {0, 0});
    CHECK(arm_counts(treated).n_control == 0);
    CHECK_THROWS_AS(treated.require_both_arms(), DegenerateSplitError);
    CHECK_THROWS_AS(arm_counts(CausalDataset(1, {})), DataError);
}

TEST_CASE("dataset invariants are enforced", "[data]") {
    CHECK_THROWS_AS(dataset(2, {{0}}, {1}, {0}), DataError);
    CHECK_THROWS_AS(dataset(1, {{0}}, {3}, {0}), DataError);
    CHECK_THROWS_AS(dataset(1, {{NAN}}, {1}, {0}), DataError);
    CHECK_THROWS_AS(dataset(1, {{0}}, {1}, {INFINITY}), DataError);
    std::vector<ObservedSample> rows{{{0.0}, 1, 1.0}};
    CHECK_THROWS_AS(CausalDataset(1, rows, std::vector<OracleFields>{}), DataError);
}

TEST_CASE("csv export and ingest round-trip exactly", "[data]") {
    const auto ds = generate(parse_dgp("observational:n=50,d=3,seed=4"));
    const auto path = testing_support::temp_path("roundtrip.csv");
    export_csv(path.string(), ds);
    const auto back = ingest_csv(path.string(), CsvSchema::with_oracle());
    REQUIRE(back.size() == ds.size());
    REQUIRE(back.has_oracle());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back[i].x == ds[i].x);
        CHECK(back[i].t == ds[i].t);
        CHECK(back[i].y == ds[i].y);
        CHECK(back.oracle(i).y1 == ds.oracle(i).y1);
        CHECK(back.oracle(i).y0 == ds.oracle(i).y0);
        CHECK(back.oracle(i).true_propensity == ds.oracle(i).true_propensity);
    }
}

TEST_CASE("task spec strings", "[data]") {
    CHECK(parse_task("outcome:1").arm == Arm::treated);
    CHECK(parse_task("outcome:0").arm == Arm::control);
    CHECK(parse_task("cate").kind == Task::Kind::cate);
    CHECK(parse_task("cate").to_string() == "cate");
    CHECK_THROWS_AS(parse_task("outcome:2"), ConfigError);
}
