// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are pinned
// here and echoed in the output. The exit code is nonzero when any criterion
// fails, except those listed as unattainable below; they still print FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "lbsagg/estimator.hpp"
#include "test_support.hpp"

using namespace lbsagg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct MeanSe {
    double mean = 0, se = 0;
};

MeanSe mean_se(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    return {m, std::sqrt(ss / (n - 1) / n)};
}

Dataset from_sites(const std::vector<Site>& sites, Box box) {
    std::vector<SpatialTuple> ts;
    for (const auto& s : sites) ts.push_back({s.id, s.loc, {{"weight", 1.0}}});
    return Dataset(ts, box);
}

OracleConfig rank_only(int k = 1) {
    OracleConfig c;
    c.k = k;
    c.mode = Mode::LNR;
    return c;
}

double nn_distance(const Dataset& d, TupleId id) {
    double best = INFINITY;
    for (const auto& u : d.tuples())
        if (u.id != id) best = std::min(best, dist(u.loc, d.by_id(id).loc));
    return best;
}

/// Largest violation of the owner's true bisectors by the polygon vertices.
double outside_margin(const CellComplex& poly, const Dataset& d, TupleId owner) {
    const Point2 t = d.by_id(owner).loc;
    double worst = 0;
    for (const auto& face : poly.faces)
        for (const Point2 v : face.vertices())
            for (const auto& u : d.tuples()) {
                if (u.id == owner) continue;
                const Point2 n = u.loc - t;
                worst = std::max(worst, (dot(n, v) - dot(n, midpoint(t, u.loc))) / norm(n));
            }
    return worst;
}

// 1. Exact cells against ground truth, h = 1..3.
Outcome exact_cells() {
    const auto t0 = Clock::now();
    double worst_area = 0, worst_vertex = 0;
    int cells = 0, inexact = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto d = generate_uniform(200, 100 + seed);
        KnnOracle o(d, {.k = 3});
        for (int h = 1; h <= 3; ++h)
            for (const auto& t : d.tuples()) {
                QueryContext ctx(o);
                auto est = compute_cell_exact({t.id, t.loc}, h, ctx, nullptr, {});
                const auto truth = o.ground_truth_cell(t.id, h);
                ++cells;
                inexact += !est.exact;
                worst_area = std::max(worst_area, std::abs(est.upper.area() - truth.area()) / truth.area());
                worst_vertex = std::max(worst_vertex, testsupport::vertex_set_distance(boundary_vertices(est.upper),
                                                                                       boundary_vertices(truth)));
            }
    }
    const double secs = seconds_since(t0);
    return {inexact == 0 && worst_area <= 1e-9 && worst_vertex <= 1e-9 && secs < 120,
            fmt("%d cells, max rel area err %.2e, max vertex dev %.2e (tol 1e-9), %.1f s (limit 120)", cells,
                worst_area, worst_vertex, secs)};
}

// 2. Enumerated expectation of the estimator equals the aggregate.
Outcome exact_unbiasedness() {
    double worst = 0, total_p_radius = 0;
    auto check = [&](const Dataset& d, const KnnOracle& o, int h, std::optional<double> radius) {
        double count = 0, sum = 0, total_p = 0;
        KnnOracle& oo = const_cast<KnnOracle&>(o);
        for (const auto& t : d.tuples()) {
            QueryContext ctx(oo);
            auto est = compute_cell_exact({t.id, t.loc}, h, ctx, nullptr, {});
            std::optional<Circle> disk;
            if (radius) disk = Circle(t.loc, *radius);
            const double p_est = inclusion_probability(est.upper, d.region(), nullptr, disk);
            const auto truth = o.ground_truth_cell(t.id, h);
            const double p_true = (disk ? truth.area_within_disk(*disk) : truth.area()) / d.region().area();
            total_p += p_true;
            count += p_true / p_est;
            sum += p_true * numeric_attr(t.attrs, "weight") / p_est;
        }
        const double truth_sum = o.ground_truth_aggregate(AggregateSpec::parse("SUM(weight)"));
        const double n = static_cast<double>(d.size());
        worst = std::max({worst, std::abs(count - n) / n, std::abs(sum - truth_sum) / truth_sum});
        return total_p;
    };
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto d = generate_uniform(50, 200 + seed);
        KnnOracle o(d, {.k = 3});
        for (int h = 1; h <= 3; ++h) check(d, o, h, std::nullopt);
        OracleConfig rc;
        rc.max_radius = 0.07;
        KnnOracle r(d, rc);
        total_p_radius = std::max(total_p_radius, check(d, r, 1, 0.07));
    }
    return {worst <= 1e-9 && total_p_radius < 1.0,
            fmt("max relative deviation %.2e (tol 1e-9); with radius limit total p = %.4f < 1", worst, total_p_radius)};
}

// 3. 1e5 single-sample estimates per optimization, COUNT and SUM within 4 SE.
Outcome empirical_unbiasedness() {
    const auto t0 = Clock::now();
    auto d = generate_uniform(1000, 300);
    const auto agg = AggregateSpec::parse("SUM(weight)");
    std::string detail;
    bool ok = true;
    struct Variant {
        const char* name;
        std::function<void(EstimatorConfig&, OracleConfig&)> set;
    };
    const Variant variants[] = {
        {"fast-init", [](EstimatorConfig& c, OracleConfig&) { c.lr.fast_init = true; }},
        {"history", [](EstimatorConfig& c, OracleConfig&) { c.lr.use_history = true; }},
        {"adaptive-h",
         [](EstimatorConfig& c, OracleConfig& o) {
             c.adaptive_h = true;
             c.lr.use_history = true;
             o.k = 3;
         }},
        {"mc-shortcut", [](EstimatorConfig& c, OracleConfig&) { c.lr.mc_shortcut = true; }},
    };
    const double truth_count = 1000, truth_sum = KnnOracle(d, {}).ground_truth_aggregate(agg);
    std::uint64_t seed = 31;
    for (const auto& v : variants) {
        EstimatorConfig cfg;
        OracleConfig oc;
        cfg.seed = seed++;
        v.set(cfg, oc);
        KnnOracle o(d, oc);
        EstimatorState state;
        std::vector<double> sums, counts;
        int sampled_volume = 0;
        for (std::int64_t i = 0; sums.size() < 100000; ++i) {
            auto rng = sample_rng(cfg.seed, i);
            auto rec = estimate_once(agg, o, cfg, state, rng);
            if (rec.aborted) continue;
            for (const auto& c : rec.contributions) sampled_volume += !c.exact;
            sums.push_back(rec.value);
            counts.push_back(rec.count_value);
        }
        const auto c = mean_se(counts), s = mean_se(sums);
        const double zc = (c.mean - truth_count) / c.se, zs = (s.mean - truth_sum) / s.se;
        ok = ok && std::abs(zc) <= 4 && std::abs(zs) <= 4;
        detail += fmt("%s z(COUNT) %+.2f z(SUM) %+.2f", v.name, zc, zs);
        if (cfg.lr.mc_shortcut) detail += fmt(" (%d Monte-Carlo cells)", sampled_volume);
        detail += "; ";
    }
    const double secs = seconds_since(t0);
    ok = ok && secs < 600;
    return {ok, detail + fmt("|z| <= 4, %.0f s (limit 600)", secs)};
}

// 4. Monte-Carlo trial count on an instance with area ratio 2.
Outcome mc_expectation() {
    Dataset d({{1, {0.25, 0.5}, {}}, {2, {0.75, 0.5}, {}}}, Box{{0, 0}, {1, 1}});
    KnnOracle o(d, {});
    QueryContext ctx(o);
    CellEstimate est;
    est.owner = 1;
    est.owner_loc = {0.25, 0.5};
    est.upper = CellComplex{1, {ConvexCell::from_box(d.region())}, false};
    std::mt19937_64 rng(2024);
    std::vector<double> r;
    for (int i = 0; i < 10000; ++i) r.push_back(static_cast<double>(mc_volume_ratio(est, ctx, rng)));
    const auto m = mean_se(r);
    return {std::abs(m.mean - 2.0) <= 3 * m.se, fmt("mean r = %.4f, 3 sigma = %.4f", m.mean, 3 * m.se)};
}

// 5. Query cost of single edge searches.
Outcome binary_search_cost() {
    std::mt19937_64 rng(55);
    int worst_excess = -1000, calls = 0, violations = 0;
    while (calls < 1000) {
        const int n = 2 + static_cast<int>(rng() % 30);
        auto sites = testsupport::random_sites(n, rng());
        auto d = from_sites(sites, Box{{0, 0}, {1, 1}});
        KnnOracle o(d, rank_only());
        QueryContext ctx(o);
        const double eps = std::pow(10.0, -2.0 - 3.0 * uniform01(rng));
        const auto p = BinarySearchParams::from_epsilon(eps, d.region());
        const auto& owner = sites[rng() % n];
        // toward another tuple, or toward a random point that may stay inside the cell
        const Point2 c2 = rng() % 2 ? sites[rng() % n].loc : Point2{uniform01(rng), uniform01(rng)};
        if (dist(c2, owner.loc) < 1e-6) continue;
        const auto e = binary_search_edge(owner.id, owner.loc, c2, ctx, p);
        const double b = 3 * std::log2(p.b / p.delta) + 4;
        ++calls;
        violations += e.queries > b;
        worst_excess = std::max(worst_excess, e.queries - static_cast<int>(std::floor(b)));
    }
    return {violations == 0,
            fmt("%d calls, %d over 3*log2(b/delta)+4, closest approach %+d queries", calls, violations, worst_excess)};
}

// 6. Edge error bound, sub-region property and volume ratio on random instances.
Outcome lnr_cells() {
    std::mt19937_64 rng(66);
    double worst_edge_ratio = 0, worst_margin = 0, worst_area_slack = INFINITY;
    int edges = 0, bad = 0;
    for (int inst = 0; inst < 100; ++inst) {
        auto sites = testsupport::random_sites(50, 600 + inst);
        auto d = from_sites(sites, Box{{0, 0}, {1, 1}});
        KnnOracle o(d, rank_only());
        QueryContext ctx(o);
        const double eps = 1e-4;
        const auto p = BinarySearchParams::from_epsilon(eps, d.region());
        const auto& s = sites[rng() % sites.size()];
        auto cell = compute_cell_lnr(s.loc, ctx, p);
        const auto truth = o.ground_truth_cell(s.id, 1);
        const auto ring = truth.faces.front().vertices();
        for (const auto& e : cell.edges) {
            if (!e.neighbor) continue;
            const HalfPlane bis = perpendicular_bisector(s.loc, d.by_id(*e.neighbor).loc);
            double err = -1;
            for (std::size_t i = 0; i < ring.size(); ++i) {
                const Point2 a = ring[i], b = ring[(i + 1) % ring.size()];
                if (std::abs(bis.signed_distance(a)) > 1e-9 || std::abs(bis.signed_distance(b)) > 1e-9) continue;
                err = std::max(std::abs(e.line.signed_distance(a)), std::abs(e.line.signed_distance(b)));
            }
            if (err < 0) continue;  // the neighbor's true edge lies outside the region
            ++edges;
            bad += err > p.max_edge_error();
            worst_edge_ratio = std::max(worst_edge_ratio, err / p.max_edge_error());
        }
        const double margin = outside_margin(cell.polygon, d, s.id);
        worst_margin = std::max(worst_margin, margin);
        const double dn = nn_distance(d, s.id);
        const double ratio = cell.polygon.area() / truth.area(), floor = std::pow((dn - eps) / dn, 2);
        worst_area_slack = std::min(worst_area_slack, ratio - floor);
        bad += margin > eps || ratio < floor;
    }
    return {bad == 0, fmt("%d edges, max error / bound %.3f, max outside margin %.2e (eps 1e-4), "
                          "min area ratio minus floor %+.2e",
                          edges, worst_edge_ratio, worst_margin, worst_area_slack)};
}

// 7. Rank-only COUNT bias within the analytic envelope.
Outcome bias_envelope() {
    // the envelope needs eps below every nearest-neighbor distance; take the
    // first seed whose layout satisfies that
    const double eps = 1e-3;
    std::uint64_t seed = 700;
    auto locations = [](const Dataset& d) {
        std::vector<Point2> locs;
        for (const auto& t : d.tuples()) locs.push_back(t.loc);
        return locs;
    };
    auto min_nn = [&](const Dataset& d) {
        double m = INFINITY;
        for (const auto& t : d.tuples()) m = std::min(m, nn_distance(d, t.id));
        return m;
    };
    while (min_nn(generate_uniform(100, seed)) <= eps) ++seed;
    auto d = generate_uniform(100, seed);
    KnnOracle o(d, rank_only());
    EstimatorConfig cfg;
    cfg.seed = 7;
    cfg.max_samples = 100000;
    cfg.lnr_epsilon = eps * d.region().width();
    auto e = run_estimation(AggregateSpec::parse("COUNT"), o, cfg);
    const double bound = bias_bound(locations(d), *cfg.lnr_epsilon);
    const double bias = e.value - 100.0, se = std::sqrt(e.sample_variance / e.samples);
    return {std::abs(bias) <= bound,
            fmt("dataset seed %llu, empirical bias %+.4f (se %.4f), bound %.4f, %lld samples",
                static_cast<unsigned long long>(seed), bias, se, bound, static_cast<long long>(e.samples))};
}

// 8. Concave top-2 cell: the naive convex estimate misses area, repair recovers it.
Outcome concavity_repair() {
    Dataset d({{1, {0.5, 0.5}, {}}, {2, {0.2, 0.55}, {}}, {3, {0.8, 0.55}, {}}, {4, {0.5, 0.9}, {}},
               {5, {0.5, 0.1}, {}}},
              Box{{0, 0}, {1, 1}});
    KnnOracle o(d, rank_only(2));
    QueryContext ctx(o);
    const double eps = 1e-4;
    const auto p = BinarySearchParams::from_epsilon(eps, d.region());
    auto naive = compute_cell_lnr_topk(1, d.by_id(1).loc, 2, ctx, p);
    auto repaired = repair_concavity(naive, ctx, p);
    const auto truth = o.ground_truth_cell(1, 2);
    const Point2 t = d.by_id(1).loc;
    // distance from q to the nearest bisector between the owner and another tuple
    auto margin = [&](Point2 q) {
        double m = INFINITY;
        for (const auto& u : d.tuples())
            if (u.id != 1) m = std::min(m, std::abs(perpendicular_bisector(t, u.loc).signed_distance(q)));
        return m;
    };
    std::mt19937_64 rng(8);
    const int probes = 10000;
    int naive_wrong = 0, repaired_wrong = 0, repaired_outside_margin = 0;
    for (int i = 0; i < probes; ++i) {
        const Point2 q{uniform01(rng), uniform01(rng)};
        const bool in = truth.contains(q);
        naive_wrong += naive.polygon.contains(q) != in;
        if (repaired.polygon.contains(q) != in) {
            ++repaired_wrong;
            repaired_outside_margin += margin(q) > eps;
        }
    }
    return {naive_wrong >= probes / 100 && repaired_outside_margin == 0,
            fmt("naive misclassifies %d/%d (need >= 1%%), repaired %d, of which %d beyond the eps margin", naive_wrong,
                probes, repaired_wrong, repaired_outside_margin)};
}

// 9. Position inference from rank-only cells.
Outcome localization() {
    const Box box{{0, 0}, {1, 1}};
    auto sites = testsupport::random_sites(200, 900, box);
    auto d = from_sites(sites, box);
    KnnOracle o(d, rank_only());
    const double eps = 1e-4 * box.width();
    const auto p = BinarySearchParams::from_epsilon(eps, box);
    std::vector<double> errs;
    int two = 0, failed = 0, single_vertex = 0;
    for (const auto& s : sites) {
        // interior Voronoi vertices of the true cell; with fewer than two the
        // position is only known up to a ray
        int interior = 0;
        const auto truth = o.ground_truth_cell(s.id, 1);
        for (const Point2 v : truth.faces.front().vertices())
            interior += v.x > 1e-9 && v.x < 1 - 1e-9 && v.y > 1e-9 && v.y < 1 - 1e-9;
        single_vertex += interior < 2;
        QueryContext ctx(o);
        auto cell = compute_cell_lnr(s.loc, ctx, p);
        try {
            auto loc = infer_position(cell, ctx, p);
            errs.push_back(dist(loc.location, s.loc));
            two += loc.extra_binary_searches == 2;
        } catch (const NearParallelRays&) {
            errs.push_back(INFINITY);
            ++failed;
        }
    }
    std::sort(errs.begin(), errs.end());
    const double median = errs[errs.size() / 2];
    return {median <= 5 * eps && two == static_cast<int>(sites.size()),
            fmt("median error %.3f eps (limit 5), %d/%zu tuples with exactly 2 extra searches, %d failures; "
                "%d true cells have fewer than two interior vertices",
                median / eps, two, sites.size(), failed, single_vertex)};
}

// 10. Worst-case layout: queries for the center cell grow linearly.
Outcome circle_growth() {
    std::vector<double> per_n;
    std::string detail;
    for (int n : {16, 64, 256}) {
        auto d = generate_circle(n, 0.4);
        KnnOracle o(d, {});
        QueryContext ctx(o);
        auto est = compute_cell_exact({0, d.by_id(0).loc}, 1, ctx, nullptr, {});
        const double q = static_cast<double>(est.ledger_delta.issued());
        per_n.push_back(q / n);
        detail += fmt("n=%d: %.0f queries; ", n, q);
    }
    const auto [lo, hi] = std::minmax_element(per_n.begin(), per_n.end());
    return {*hi / *lo <= 1.5, detail + fmt("queries/n spread %.3f (limit 1.5)", *hi / *lo)};
}

// 11. Fast-init then history cut queries per cell; density sampling cuts variance.
Outcome ablation() {
    auto d = generate_clusters(1000, 5, 0.04, 1100);
    const int runs = 25;
    const auto count = AggregateSpec::parse("COUNT");
    auto per_cell = [&](bool fast, bool hist) {
        double total = 0;
        for (int run = 0; run < runs; ++run) {
            OracleConfig oc;
            oc.budget = 5000;
            KnnOracle o(d, oc);
            EstimatorConfig cfg;
            cfg.seed = 11000 + run;
            cfg.lr.fast_init = fast;
            cfg.lr.use_history = hist;
            std::vector<SampleRecord> recs;
            run_estimation(count, o, cfg, &recs);
            double q = 0, cells = 0;
            for (const auto& r : recs) {
                q += static_cast<double>(r.queries);
                cells += static_cast<double>(r.contributions.size());
            }
            total += q / cells;
        }
        return total / runs;
    };
    const double base = per_cell(false, false), fi = per_cell(true, false), fih = per_cell(true, true);

    std::vector<Point2> locs;
    for (const auto& t : d.tuples()) locs.push_back(t.loc);
    const auto grid = DensityGrid::from_points(d.region(), 10, 10, locs, 0.5);
    double var_u = 0, var_w = 0;
    for (int run = 0; run < runs; ++run) {
        EstimatorConfig cfg;
        cfg.seed = 12000 + run;
        cfg.max_samples = 300;
        KnnOracle o1(d, {});
        var_u += run_estimation(count, o1, cfg).sample_variance / runs;
        cfg.density = grid;
        KnnOracle o2(d, {});
        var_w += run_estimation(count, o2, cfg).sample_variance / runs;
    }
    return {fi < base && fih < fi && var_w < var_u,
            fmt("queries per cell %.2f -> %.2f (fast-init) -> %.2f (+history); variance uniform %.4g, "
                "density-matched %.4g",
                base, fi, fih, var_u, var_w)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {1, "exact cells match ground truth", exact_cells},
        {2, "enumerated estimator expectation is exact", exact_unbiasedness},
        {3, "single-sample estimates unbiased with optimizations", empirical_unbiasedness},
        {4, "Monte-Carlo trial count expectation", mc_expectation},
        {5, "edge search query bound", binary_search_cost},
        {6, "rank-only cell error and volume bounds", lnr_cells},
        {7, "rank-only COUNT bias envelope", bias_envelope},
        {8, "concavity repair", concavity_repair},
        {9, "position inference", localization},
        {10, "worst-case query growth is linear", circle_growth},
        {11, "ablation directionality", ablation},
    };
    // A tuple whose true cell has a single interior Voronoi vertex (corner and
    // some border cells) admits a one-parameter family of positions that all
    // produce the same rank-only answers, so no number of searches locates it.
    const std::pair<int, const char*> unattainable[] = {
        {9, "cells with fewer than two interior vertices cannot be localized"},
    };
    auto excused = [&](int id) -> const char* {
        for (const auto& [u, why] : unattainable)
            if (u == id) return why;
        return nullptr;
    };
    int failed = 0, blocking = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        failed += !out.pass;
        blocking += !out.pass && !excused(c.id);
        std::printf("%s [%2d] %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(),
                    seconds_since(t0));
        if (!out.pass && excused(c.id)) std::printf("     [%2d] known unattainable: %s\n", c.id, excused(c.id));
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed, %d failed as known unattainable\n",
                static_cast<int>(std::size(criteria)) - failed, std::size(criteria), failed - blocking);
    return blocking == 0 ? 0 : 1;
}
