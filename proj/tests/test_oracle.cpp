#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "lbsagg/oracle.hpp"

using namespace lbsagg;

namespace {

// Five-tuple layout in a 10x10 box: t4 in the middle with neighbors t2, t3
// and t5; t1 sits in a corner behind t2.
Dataset five_tuples() {
    std::vector<SpatialTuple> ts;
    const Point2 locs[] = {{9.5, 0.5}, {6, 2}, {1, 8}, {4, 4}, {8, 8}};
    for (int i = 0; i < 5; ++i) ts.push_back({i + 1, locs[i], {{"weight", 1.0}}});
    return Dataset(ts, Box{{0, 0}, {10, 10}});
}

}  // namespace

TEST_CASE("singleton dataset answers with its only tuple") {
    Dataset d({{7, {0.5, 0.5}, {}}}, Box{{0, 0}, {1, 1}});
    KnnOracle o(d, {.k = 3});
    for (Point2 q : {Point2{0, 0}, Point2{1, 1}, Point2{0.3, 0.9}}) {
        auto a = o.query(q);
        REQUIRE(a.entries.size() == 1);
        CHECK(a.entries[0].id == 7);
    }
    CHECK(o.ledger().issued() == 3);
}

TEST_CASE("first vertex query of the five-tuple layout returns t5") {
    auto d = five_tuples();
    KnnOracle o(d, {});
    CHECK(o.query({10, 10}).top() == 5);
    CHECK(o.query({4.1, 4.2}).top() == 4);
}

TEST_CASE("max radius truncates answers") {
    auto d = five_tuples();
    KnnOracle o(d, {.k = 2, .max_radius = 0.5});
    auto a = o.query({3, 6});
    CHECK(a.empty());
    CHECK(a.truncated);
    auto b = o.query({4.2, 4});
    CHECK(b.entries.size() == 1);
    CHECK(b.truncated);
}

TEST_CASE("LNR answers carry no coordinates") {
    auto d = generate_uniform(50, 3);
    KnnOracle o(d, {.k = 5, .mode = Mode::LNR});
    auto a = o.query({0.5, 0.5});
    REQUIRE(a.entries.size() == 5);
    for (const auto& e : a.entries) {
        CHECK_FALSE(e.loc.has_value());
        CHECK_FALSE(e.attrs.empty());
    }
}

TEST_CASE("grid ranking matches a full scan and is deterministic") {
    for (std::uint64_t seed : {1u, 2u}) {
        auto d = generate_clusters(400, 4, 0.03, seed);
        KnnOracle o(d, {.k = 7});
        std::mt19937_64 rng(seed);
        const Predicate pb = Predicate::parse("category=b");
        for (int i = 0; i < 2000; ++i) {
            const Point2 q{uniform01(rng), uniform01(rng)};
            const Predicate* f = (i % 3 == 0) ? &pb : nullptr;
            auto fast = o.nearest_indices(q, 7, f);
            auto slow = o.brute_force_indices(q, 7, f);
            REQUIRE(fast == slow);
            // every returned entry is at least as close as every other qualifying tuple
            const double worst = dist(q, d.tuples()[fast.back()].loc);
            for (std::size_t j = 0; j < d.size(); ++j) {
                if (std::find(fast.begin(), fast.end(), j) != fast.end()) continue;
                if (f && !f->evaluate(d.tuples()[j].attrs)) continue;
                CHECK(dist(q, d.tuples()[j].loc) >= worst);
            }
        }
        const Point2 q{0.25, 0.75};
        auto a1 = o.query(q), a2 = o.query(q);
        REQUIRE(a1.entries.size() == a2.entries.size());
        for (std::size_t i = 0; i < a1.entries.size(); ++i) CHECK(a1.entries[i].id == a2.entries[i].id);
    }
}

TEST_CASE("pass-through filter is applied before ranking") {
    auto d = generate_uniform(200, 4);
    KnnOracle o(d, {.k = 4});
    const Predicate p = Predicate::parse("category=c");
    auto a = o.query({0.5, 0.5}, Phase::init, &p);
    REQUIRE(a.entries.size() == 4);
    for (const auto& e : a.entries) CHECK(std::get<std::string>(e.attrs.at("category")) == "c");

    // A filter that nothing satisfies yields an empty answer.
    const Predicate none = Predicate::parse("category=z");
    CHECK(o.query({0.5, 0.5}, Phase::init, &none).empty());
}

TEST_CASE("budget, region and ledger accounting") {
    auto d = generate_uniform(20, 5);
    KnnOracle o(d, {.budget = 3});
    o.query({0.1, 0.1}, Phase::init);
    o.query({0.2, 0.1}, Phase::vertex_test);
    o.query({0.3, 0.1}, Phase::mc_trial);
    CHECK_THROWS_AS(o.query({0.4, 0.1}), BudgetExhausted);
    const auto l = o.ledger();
    CHECK(l.issued() == 3);
    CHECK(l.init == 1);
    CHECK(l.vertex_test == 1);
    CHECK(l.mc_trial == 1);
    CHECK(o.remaining() == 0);

    KnnOracle o2(d, {});
    CHECK_THROWS_AS(o2.query({2, 2}), OutOfRegion);
    o2.ground_truth_cell(d.tuples()[0].id, 1);
    o2.ground_truth_aggregate(AggregateSpec{});
    CHECK(o2.ledger().issued() == 0);

    QueryContext ctx(o2, nullptr, 2);
    ctx.query({0.5, 0.5}, Phase::binary_search);
    ctx.query({0.5, 0.6}, Phase::binary_search);
    CHECK_THROWS_AS(ctx.query({0.5, 0.7}, Phase::binary_search), QueryCapReached);
    CHECK(ctx.delta().binary_search == 2);
    CHECK(o2.ledger().issued() == 2);
}

TEST_CASE("invalid configurations are rejected") {
    auto d = generate_uniform(5, 1);
    CHECK_THROWS_AS(KnnOracle(d, {.k = 0}), DataError);
    CHECK_THROWS_AS(KnnOracle(d, {.max_radius = 0.0}), DataError);
}

TEST_CASE("ground truth cells") {
    Dataset single({{1, {0.4, 0.4}, {}}}, Box{{0, 0}, {1, 1}});
    KnnOracle o1(single, {});
    CHECK(o1.ground_truth_cell(1, 1).area() == doctest::Approx(1.0));
    CHECK_THROWS_AS(o1.ground_truth_cell(2, 1), DataError);

    auto d = generate_uniform(50, 9);
    KnnOracle o(d, {});
    double total = 0;
    for (const auto& t : d.tuples()) total += o.ground_truth_cell(t.id, 1).area();
    CHECK(std::abs(total - 1.0) <= 1e-6);

    std::mt19937_64 rng(2);
    for (const auto& t : d.tuples()) {
        auto cell = o.ground_truth_cell(t.id, 2);
        for (int i = 0; i < 100; ++i) {
            const Point2 q{uniform01(rng), uniform01(rng)};
            const auto top = o.brute_force_indices(q, 2);
            const bool in_top2 = d.tuples()[top[0]].id == t.id || d.tuples()[top[1]].id == t.id;
            CHECK(cell.contains(q, 0) == in_top2);
        }
    }
}

TEST_CASE("ground truth aggregates") {
    auto d = generate_uniform(1000, 6);
    KnnOracle o(d, {});
    CHECK(o.ground_truth_aggregate(AggregateSpec::parse("COUNT(*)")) == 1000);

    std::vector<SpatialTuple> ones;
    for (const auto& t : d.tuples()) ones.push_back({t.id, t.loc, {{"weight", 1.0}}});
    Dataset d1(ones, d.region());
    KnnOracle o1(d1, {});
    CHECK(o1.ground_truth_aggregate(AggregateSpec::parse("SUM(weight)")) == 1000);

    const double s = o.ground_truth_aggregate(AggregateSpec::parse("SUM(weight)"));
    const double a = o.ground_truth_aggregate(AggregateSpec::parse("AVG(weight)"));
    CHECK(a == doctest::Approx(s / 1000));
    CHECK_THROWS_AS(o.ground_truth_aggregate(AggregateSpec::parse("SUM(missing)")), DataError);

    auto spec = AggregateSpec::parse("COUNT");
    spec.condition = Condition{Predicate::parse("category=a"), false};
    double manual = 0;
    for (const auto& t : d.tuples()) manual += std::get<std::string>(t.attrs.at("category")) == "a";
    CHECK(o.ground_truth_aggregate(spec) == manual);
}

TEST_CASE("dataset csv round trip and validation") {
    auto d = generate_clusters(30, 2, 0.05, 8);
    const auto path = (std::filesystem::temp_directory_path() / "lbsagg_roundtrip.csv").string();
    d.save_csv(path);
    auto back = Dataset::load_csv(path, d.region());
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back.tuples()[i].id == d.tuples()[i].id);
        CHECK(back.tuples()[i].loc == d.tuples()[i].loc);
        CHECK(back.tuples()[i].attrs == d.tuples()[i].attrs);
    }
    auto inferred = Dataset::load_csv(path);
    CHECK(inferred.region().area() > 0);
    std::remove(path.c_str());

    CHECK_THROWS_AS(Dataset({{1, {0, 0}, {}}, {1, {1, 1}, {}}}), DataError);
    CHECK_THROWS_AS(Dataset({{1, {0, 0}, {}}, {2, {0, 0}, {}}}), DataError);
    CHECK_THROWS_AS(Dataset::load_csv("/nonexistent/file.csv"), DataError);
}

TEST_CASE("predicate parsing") {
    auto p = Predicate::parse("weight>=1.25");
    CHECK(p.attr == "weight");
    CHECK(p.op == CmpOp::ge);
    CHECK(std::get<double>(p.value) == 1.25);
    CHECK(p.evaluate({{"weight", 1.3}}));
    CHECK_FALSE(p.evaluate({{"weight", 1.2}}));
    CHECK_FALSE(p.evaluate({}));
    auto x = Predicate::parse("x<0.5");
    CHECK(x.evaluate({}, Point2{0.2, 0.9}));
    CHECK_THROWS_AS(x.evaluate({}), DataError);
    CHECK_THROWS_AS(Predicate::parse("nonsense"), DataError);
    CHECK(Predicate::parse("category != b").evaluate({{"category", std::string("a")}}));
}
