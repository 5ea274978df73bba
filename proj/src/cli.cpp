#include "lbsagg/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lbsagg/lnr_cell.hpp"
#include "lbsagg/lr_cell.hpp"

namespace lbsagg::cli {

using nlohmann::json;

namespace {

/// Thrown for invalid user input; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

json ledger_json(const QueryLedger& l) {
    return {{"init", l.init},
            {"vertex_test", l.vertex_test},
            {"binary_search", l.binary_search},
            {"mc_trial", l.mc_trial},
            {"total", l.issued()}};
}

json point_json(Point2 p) { return json::array({p.x, p.y}); }

json config_json(const RunConfig& c) {
    json j;
    j["dataset"] = c.dataset;
    j["k"] = c.k;
    j["mode"] = c.mode;
    j["max_radius"] = c.max_radius ? json(*c.max_radius) : json();
    j["budget"] = c.budget ? json(*c.budget) : json();
    j["aggregate"] = c.aggregate;
    j["condition"] = c.condition ? json(*c.condition) : json();
    j["pass_through"] = c.pass_through;
    j["sampler"] = c.sampler;
    j["density"] = c.density_path;
    j["density_grid"] = c.density_grid;
    j["epsilon"] = c.epsilon ? json(*c.epsilon) : json();
    j["fast_init"] = c.fast_init;
    j["history"] = c.history;
    j["adaptive_h"] = c.adaptive_h;
    j["mc_shortcut"] = c.mc_shortcut;
    j["reuse_cells"] = c.reuse_cells;
    j["per_sample_cap"] = c.per_sample_cap;
    j["seed"] = c.seed;
    j["repetitions"] = c.repetitions;
    j["samples"] = c.samples ? json(*c.samples) : json();
    return j;
}

double hausdorff(const std::vector<Point2>& a, const std::vector<Point2>& b) {
    auto one_way = [](const std::vector<Point2>& from, const std::vector<Point2>& to) {
        double worst = 0;
        for (const Point2 p : from) {
            double best = INFINITY;
            for (const Point2 q : to) best = std::min(best, dist(p, q));
            worst = std::max(worst, best);
        }
        return worst;
    };
    if (a.empty() || b.empty()) return a.size() == b.size() ? 0.0 : INFINITY;
    return std::max(one_way(a, b), one_way(b, a));
}

double nn_distance(const Dataset& d, TupleId id) {
    const Point2 t = d.by_id(id).loc;
    double best = INFINITY;
    for (const auto& u : d.tuples())
        if (u.id != id) best = std::min(best, dist(u.loc, t));
    return best;
}

double segment_distance(Point2 p, Point2 a, Point2 b) {
    const Point2 ab = b - a;
    const double len2 = dot(ab, ab);
    const double s = len2 > 0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
    return dist(p, a + ab * s);
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return NAN;
    std::sort(v.begin(), v.end());
    const auto i = static_cast<std::size_t>(std::min<double>(v.size() - 1, std::floor(q * (v.size() - 1) + 0.5)));
    return v[i];
}

Dataset load_dataset(const RunConfig& c) {
    if (c.dataset.empty()) throw ConfigError("--dataset is required");
    if (!std::filesystem::exists(c.dataset)) throw ConfigError("dataset file not found: " + c.dataset);
    return Dataset::load_csv(c.dataset, c.region_box());
}

void emit(const json& report, const RunConfig& c, std::ostream& out) {
    const std::string text = report.dump(2) + "\n";
    if (c.output.empty()) {
        out << text;
        return;
    }
    std::ofstream f(c.output);
    if (!f) throw ConfigError("cannot write " + c.output);
    f << text;
}

json estimate_json(const AggregateEstimate& e, std::optional<double> truth) {
    json j;
    j["value"] = e.value;
    j["sample_variance"] = e.sample_variance;
    j["ci95"] = json::array({e.ci_low, e.ci_high});
    j["samples"] = e.samples;
    j["aborted_samples"] = e.aborted_samples;
    j["queries"] = e.queries;
    j["ledger"] = ledger_json(e.ledger);
    j["ratio_estimate"] = e.ratio;
    j["budget_exhausted"] = e.budget_exhausted;
    if (truth && *truth != 0) j["relative_error"] = std::abs(e.value - *truth) / std::abs(*truth);
    return j;
}

int cmd_estimate(const RunConfig& c, std::ostream& out) {
    const Dataset data = load_dataset(c);
    const auto spec = c.aggregate_spec();
    const auto oc = c.oracle_config();
    std::optional<double> truth;
    {
        KnnOracle ref(data, oc);
        try {
            truth = ref.ground_truth_aggregate(spec);
        } catch (const std::exception&) {
            // AVG over an empty selection has no ground truth
        }
    }
    auto ecfg = c.estimator_config(data);
    {
        KnnOracle probe(data, oc);
        try {
            ecfg.validate(probe, spec);
        } catch (const EstimationError& e) {
            throw ConfigError(e.what());
        }
    }

    json report;
    report["command"] = "estimate";
    report["config"] = config_json(c);
    report["aggregate"] = spec.to_string();
    report["ground_truth"] = truth ? json(*truth) : json();
    json runs = json::array();
    int code = kExitOk;
    double value_sum = 0, err_sum = 0;
    std::int64_t total_queries = 0;
    int completed = 0;
    for (int r = 0; r < c.repetitions; ++r) {
        KnnOracle o(data, oc);
        ecfg.seed = c.seed + static_cast<std::uint64_t>(r);
        try {
            const auto e = run_estimation(spec, o, ecfg);
            auto j = estimate_json(e, truth);
            j["seed"] = ecfg.seed;
            if (c.samples && e.samples < *c.samples) {
                j["partial"] = true;
                code = kExitBudget;
            }
            value_sum += e.value;
            if (j.contains("relative_error")) err_sum += j["relative_error"].get<double>();
            total_queries += e.queries;
            ++completed;
            runs.push_back(j);
        } catch (const EstimationError& e) {
            runs.push_back({{"seed", ecfg.seed},
                            {"error", e.what()},
                            {"queries", o.ledger().issued()},
                            {"ledger", ledger_json(o.ledger())}});
            total_queries += o.ledger().issued();
            code = kExitBudget;
        }
    }
    report["runs"] = runs;
    json summary;
    summary["completed_runs"] = completed;
    summary["total_queries"] = total_queries;
    summary["mean_value"] = completed ? json(value_sum / completed) : json();
    summary["mean_relative_error"] = completed && truth ? json(err_sum / completed) : json();
    report["summary"] = summary;
    if (code != kExitOk) report["error"] = "query budget ran out before the requested samples completed";
    emit(report, c, out);
    return code;
}

int cmd_verify_cell(const RunConfig& c, std::optional<TupleId> id, int h, std::ostream& out) {
    const Dataset data = load_dataset(c);
    const auto oc = c.oracle_config();
    if (id && !data.has(*id)) throw ConfigError("unknown tuple id " + std::to_string(*id));
    if (h < 1 || h > oc.k) throw ConfigError("h must lie in [1, k]");
    KnnOracle o(data, oc);
    const auto spec = c.aggregate_spec();
    const Predicate* filter = spec.pass_through_filter();
    std::vector<TupleId> ids;
    if (id) {
        ids.push_back(*id);
    } else {
        for (const auto& t : data.tuples())
            if (!filter || filter->evaluate(t.attrs, t.loc)) ids.push_back(t.id);
    }

    json report;
    report["command"] = "verify-cell";
    report["config"] = config_json(c);
    report["h"] = h;
    json rows = json::array();
    double max_dev = 0, max_area_err = 0, min_ratio_slack = INFINITY;
    bool all_exact = true, partial = false;
    History history;
    const LrOptions lr = c.lr_options();
    for (const TupleId t : ids) {
        QueryContext ctx(o, filter);
        const auto truth = o.ground_truth_cell(t, h, filter);
        json row;
        row["id"] = t;
        row["true_area"] = truth.area();
        try {
            if (oc.mode == Mode::LR) {
                const auto est = compute_cell_exact({t, data.by_id(t).loc}, h, ctx, &history, lr);
                if (est.stop == StopReason::budget) throw BudgetExhausted("budget exhausted");
                const double dev = hausdorff(boundary_vertices(est.upper), boundary_vertices(truth));
                const double err = std::abs(est.upper.area() - truth.area()) / truth.area();
                row["area"] = est.upper.area();
                row["area_relative_error"] = err;
                row["vertex_deviation"] = dev;
                row["exact"] = est.exact;
                all_exact = all_exact && est.exact;
                max_dev = std::max(max_dev, dev);
                max_area_err = std::max(max_area_err, err);
            } else {
                const auto params = c.search_params(data.region());
                LnrCellResult cell = h == 1 ? compute_cell_lnr(data.by_id(t).loc, ctx, params)
                                            : compute_cell_lnr_topk(t, data.by_id(t).loc, h, ctx, params);
                if (h > 1) cell = repair_concavity(cell, ctx, params);
                const double eps = params.max_edge_error();
                const double d = nn_distance(data, t);
                const double ratio = cell.polygon.area() / truth.area();
                const double bound = d > eps ? std::pow((d - eps) / d, 2) : 0.0;
                row["area"] = cell.polygon.area();
                row["area_ratio"] = ratio;
                row["ratio_bound"] = bound;
                row["edges"] = cell.edge_count;
                row["binary_searches"] = cell.binary_searches;
                min_ratio_slack = std::min(min_ratio_slack, ratio - bound);
                max_area_err = std::max(max_area_err, std::abs(ratio - 1));
            }
        } catch (const BudgetExhausted&) {
            partial = true;
        }
        row["queries"] = ctx.used();
        row["ledger"] = ledger_json(ctx.delta());
        rows.push_back(row);
        if (partial) break;
    }
    report["cells"] = rows;
    json summary;
    summary["cells"] = rows.size();
    summary["total_queries"] = o.ledger().issued();
    summary["ledger"] = ledger_json(o.ledger());
    summary["max_area_relative_error"] = max_area_err;
    if (oc.mode == Mode::LR) {
        summary["max_vertex_deviation"] = max_dev;
        summary["all_exact"] = all_exact;
        summary["within_tolerance"] = all_exact && max_dev <= kGeomTol && max_area_err <= kGeomTol;
    } else {
        summary["ratio_bound_holds"] = min_ratio_slack >= 0;
    }
    summary["partial"] = partial;
    report["summary"] = summary;
    emit(report, c, out);
    return partial ? kExitBudget : kExitOk;
}

struct LocateOptions {
    std::optional<TupleId> id;
    std::optional<double> x, y;
    bool all = false;
    std::vector<double> feature;
    std::optional<double> feature_distance;
};

int cmd_locate(const RunConfig& c, const LocateOptions& lo, std::ostream& out) {
    const Dataset data = load_dataset(c);
    const auto oc = c.oracle_config();
    if (oc.mode != Mode::LNR) throw ConfigError("locate needs --mode lnr");
    if (lo.x.has_value() != lo.y.has_value()) throw ConfigError("--x and --y go together");
    if (!lo.all && !lo.id && !lo.x) throw ConfigError("locate needs --id, --x/--y or --all");
    if (lo.id && !data.has(*lo.id)) throw ConfigError("unknown tuple id " + std::to_string(*lo.id));
    if (!lo.feature.empty() && lo.feature.size() != 4) throw ConfigError("--feature takes ax,ay,bx,by");
    if (!lo.feature.empty() && !lo.feature_distance) throw ConfigError("--feature needs --feature-distance");

    KnnOracle o(data, oc);
    const auto params = c.search_params(data.region());
    std::vector<Point2> seeds;
    if (lo.all) {
        for (const auto& t : data.tuples()) seeds.push_back(t.loc);
    } else if (lo.id) {
        seeds.push_back(data.by_id(*lo.id).loc);
    } else {
        seeds.push_back({*lo.x, *lo.y});
    }

    json report;
    report["command"] = "locate";
    report["config"] = config_json(c);
    report["epsilon"] = params.max_edge_error();
    json rows = json::array();
    std::vector<double> errors;
    bool partial = false;
    int failures = 0, near_true = 0, near_inferred = 0, agree = 0;
    for (const Point2 seed : seeds) {
        QueryContext ctx(o);
        json row;
        row["seed"] = point_json(seed);
        try {
            const auto cell = compute_cell_lnr(seed, ctx, params);
            row["id"] = cell.owner;
            row["cell_binary_searches"] = cell.binary_searches;
            try {
                const auto loc = infer_position(cell, ctx, params);
                const Point2 truth = data.by_id(cell.owner).loc;
                const double err = dist(loc.location, truth);
                errors.push_back(err);
                row["location"] = point_json(loc.location);
                row["true_location"] = point_json(truth);
                row["error"] = err;
                row["extra_binary_searches"] = loc.extra_binary_searches;
                row["probe_queries"] = loc.probe_queries;
                if (!lo.feature.empty()) {
                    const Point2 a{lo.feature[0], lo.feature[1]}, b{lo.feature[2], lo.feature[3]};
                    const bool inferred = segment_distance(loc.location, a, b) <= *lo.feature_distance;
                    const bool actual = segment_distance(truth, a, b) <= *lo.feature_distance;
                    row["near_feature"] = inferred;
                    near_inferred += inferred;
                    near_true += actual;
                    agree += inferred == actual;
                }
            } catch (const NearParallelRays& e) {
                row["error_message"] = e.what();
                ++failures;
            }
        } catch (const BudgetExhausted&) {
            partial = true;
        } catch (const NoEdgeFound& e) {
            row["error_message"] = e.what();
            ++failures;
        }
        row["queries"] = ctx.used();
        row["ledger"] = ledger_json(ctx.delta());
        rows.push_back(row);
        if (partial) break;
    }
    report["tuples"] = rows;
    json summary;
    summary["located"] = errors.size();
    summary["failures"] = failures;
    summary["partial"] = partial;
    summary["total_queries"] = o.ledger().issued();
    summary["ledger"] = ledger_json(o.ledger());
    if (!errors.empty()) {
        json cdf;
        for (const double q : {0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
            std::ostringstream key;
            key << "p" << std::setw(3) << std::setfill('0') << static_cast<int>(std::round(q * 100));
            cdf[key.str()] = quantile(errors, q);
        }
        summary["error_quantiles"] = cdf;
        summary["median_error_in_epsilon"] = quantile(errors, 0.5) / params.max_edge_error();
    }
    if (!lo.feature.empty()) {
        summary["near_feature_inferred"] = near_inferred;
        summary["near_feature_true"] = near_true;
        summary["near_feature_agreement"] = agree;
    }
    report["summary"] = summary;
    emit(report, c, out);
    return partial ? kExitBudget : kExitOk;
}

struct BenchmarkOptions {
    std::string generator = "clusters";
    std::vector<int> sizes{250, 500, 1000};
    std::vector<int> ks{1};
    int runs = 25;
    std::vector<std::string> variants{"lr-agg-0", "fast-init", "fast-init+history", "fast-init+history+adaptive-h",
                                      "lr-agg",   "lr-agg-weighted"};
};

Dataset generate(const std::string& gen, int n, std::uint64_t seed) {
    if (gen == "uniform") return generate_uniform(n, seed);
    if (gen == "clusters") return generate_clusters(n, 5, 0.05, seed);
    if (gen == "circle") return generate_circle(n, 0.4);
    throw ConfigError("unknown generator '" + gen + "'");
}

int cmd_benchmark(const RunConfig& base, const BenchmarkOptions& bo, std::ostream& out) {
    if (!base.budget && !base.samples) throw ConfigError("benchmark needs --budget or --samples");
    if (bo.runs < 1) throw ConfigError("--runs must be >= 1");
    std::ostringstream rows;
    rows << std::setprecision(10);
    std::vector<Dataset> datasets;
    std::vector<std::string> labels;
    if (!base.dataset.empty()) {
        datasets.push_back(load_dataset(base));
        labels.push_back(std::filesystem::path(base.dataset).filename().string());
    } else {
        for (int n : bo.sizes) {
            if (n < 2) throw ConfigError("sizes must be >= 2");
            datasets.push_back(generate(bo.generator, n, base.seed));
            labels.push_back(bo.generator);
        }
    }
    for (const auto& v : bo.variants) {
        RunConfig c = base;
        c.fast_init = c.history = c.adaptive_h = c.mc_shortcut = false;
        c.sampler = "uniform";
        c.mode = "lr";
        if (v == "lr-agg-0") {
        } else if (v == "fast-init") {
            c.fast_init = true;
        } else if (v == "fast-init+history") {
            c.fast_init = c.history = true;
        } else if (v == "fast-init+history+adaptive-h") {
            c.fast_init = c.history = c.adaptive_h = true;
        } else if (v == "lr-agg") {
            c.fast_init = c.history = c.adaptive_h = c.mc_shortcut = true;
        } else if (v == "lr-agg-weighted") {
            c.fast_init = c.history = c.adaptive_h = c.mc_shortcut = true;
            c.sampler = "density";
            if (c.density_path.empty() && c.density_grid == 0) c.density_grid = 10;
        } else if (v == "lnr-agg") {
            c.mode = "lnr";
        } else {
            throw ConfigError("unknown variant '" + v + "'");
        }
        for (std::size_t di = 0; di < datasets.size(); ++di) {
            const Dataset& data = datasets[di];
            for (int k : bo.ks) {
                c.k = c.mode == "lnr" ? 1 : k;
                const auto spec = c.aggregate_spec();
                auto oc = c.oracle_config();
                const double truth = KnnOracle(data, oc).ground_truth_aggregate(spec);
                auto ecfg = c.estimator_config(data);
                double samples = 0, queries = 0, err = 0, variance = 0, cells = 0, cell_queries = 0;
                int done = 0;
                for (int r = 0; r < bo.runs; ++r) {
                    KnnOracle o(data, oc);
                    ecfg.seed = base.seed + static_cast<std::uint64_t>(r);
                    std::vector<SampleRecord> recs;
                    try {
                        const auto e = run_estimation(spec, o, ecfg, &recs);
                        samples += e.samples;
                        queries += e.queries;
                        variance += e.sample_variance;
                        if (truth != 0) err += std::abs(e.value - truth) / std::abs(truth);
                        for (const auto& rec : recs) {
                            cells += rec.contributions.size();
                            cell_queries += rec.queries;
                        }
                        ++done;
                    } catch (const EstimationError&) {
                    }
                }
                const double d = std::max(done, 1);
                rows << v << ',' << labels[di] << ',' << data.size() << ',' << c.k << ','
                     << (base.budget ? std::to_string(*base.budget) : "") << ',' << done << ',' << samples / d << ','
                     << queries / d << ',' << (cells > 0 ? cell_queries / cells : NAN) << ',' << err / d << ','
                     << variance / d << '\n';
            }
        }
    }
    const std::string header =
        "variant,dataset,n,k,budget,runs,mean_samples,mean_queries,queries_per_cell,mean_relative_error,"
        "mean_sample_variance\n";
    if (base.output.empty()) {
        out << header << rows.str();
    } else {
        const bool fresh = !std::filesystem::exists(base.output) || std::filesystem::file_size(base.output) == 0;
        std::ofstream f(base.output, std::ios::app);
        if (!f) throw ConfigError("cannot write " + base.output);
        if (fresh) f << header;
        f << rows.str();
    }
    return kExitOk;
}

struct GenOptions {
    std::string generator = "uniform";
    int n = 1000;
    int clusters = 5;
    double sigma = 0.05;
    double radius = 0.4;
};

int cmd_gen_data(const RunConfig& c, const GenOptions& g, std::ostream& out) {
    if (c.output.empty()) throw ConfigError("gen-data needs --output");
    if (g.n < 1) throw ConfigError("--n must be >= 1");
    const Box box = c.region_box().value_or(Box{{0, 0}, {1, 1}});
    Dataset d;
    if (g.generator == "uniform") d = generate_uniform(g.n, c.seed, box);
    else if (g.generator == "clusters") d = generate_clusters(g.n, g.clusters, g.sigma, c.seed, box);
    else if (g.generator == "circle") d = generate_circle(g.n, g.radius, box);
    else throw ConfigError("unknown generator '" + g.generator + "'");
    d.save_csv(c.output);
    json report{{"command", "gen-data"},
                {"generator", g.generator},
                {"n", d.size()},
                {"seed", c.seed},
                {"output", c.output},
                {"region", json::array({d.region().lo.x, d.region().lo.y, d.region().hi.x, d.region().hi.y})}};
    out << report.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

Mode RunConfig::oracle_mode() const {
    if (mode == "lr") return Mode::LR;
    if (mode == "lnr") return Mode::LNR;
    throw ConfigError("mode must be lr or lnr");
}

OracleConfig RunConfig::oracle_config() const {
    OracleConfig c;
    c.k = k;
    c.mode = oracle_mode();
    c.max_radius = max_radius;
    c.budget = budget;
    c.validate();
    return c;
}

AggregateSpec RunConfig::aggregate_spec() const {
    auto spec = AggregateSpec::parse(aggregate);
    if (condition) spec.condition = Condition{Predicate::parse(*condition), pass_through};
    spec.validate();
    return spec;
}

LrOptions RunConfig::lr_options() const {
    LrOptions o;
    o.fast_init = fast_init;
    o.fast_init_halfwidth = fast_init_halfwidth;
    o.use_history = history;
    o.reuse_cells = reuse_cells;
    o.mc_shortcut = mc_shortcut;
    return o;
}

EstimatorConfig RunConfig::estimator_config(const Dataset& data) const {
    EstimatorConfig e;
    e.seed = seed;
    e.max_samples = samples;
    e.per_sample_cap = per_sample_cap;
    e.lr = lr_options();
    e.adaptive_h = adaptive_h;
    e.lnr_epsilon = epsilon;
    if (sampler == "density") {
        if (!density_path.empty()) {
            e.density = DensityGrid::load_csv(density_path);
        } else if (density_grid > 0) {
            std::vector<Point2> locs;
            for (const auto& t : data.tuples()) locs.push_back(t.loc);
            e.density = DensityGrid::from_points(data.region(), density_grid, density_grid, locs, 0.5);
        } else {
            throw ConfigError("density sampler needs --density or --density-grid");
        }
    } else if (sampler != "uniform") {
        throw ConfigError("sampler must be uniform or density");
    }
    return e;
}

BinarySearchParams RunConfig::search_params(const Box& region) const {
    auto p = BinarySearchParams::from_epsilon(epsilon.value_or(1e-4 * region.width()), region);
    if (delta) p.delta = *delta;
    if (delta_prime) p.delta_prime = *delta_prime;
    p.validate();
    return p;
}

std::optional<Box> RunConfig::region_box() const {
    if (!region) return std::nullopt;
    const auto& r = *region;
    if (r.size() != 4 || !(r[2] > r[0]) || !(r[3] > r[1])) throw ConfigError("--region takes lo_x,lo_y,hi_x,hi_y");
    return Box{{r[0], r[1]}, {r[2], r[3]}};
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Aggregate estimation over a kNN location-based service"};
    app.config_formatter(std::make_shared<CLI::ConfigINI>());
    app.set_config("--config", "", "key=value configuration file; command-line flags override it");
    app.require_subcommand(1);
    app.fallthrough();

    RunConfig c;
    std::vector<double> region;
    std::optional<double> epsilon, delta, delta_prime, max_radius, halfwidth;
    std::optional<std::int64_t> budget, samples;
    std::optional<std::string> condition;
    app.add_option("--dataset", c.dataset, "tuple CSV (id,x,y[,attr...])");
    app.add_option("--region", region, "bounding box lo_x,lo_y,hi_x,hi_y")->delimiter(',')->expected(4);
    app.add_option("--k", c.k, "answers per query");
    app.add_option("--mode", c.mode, "lr (locations returned) or lnr (ranks only)");
    app.add_option("--max-radius", max_radius, "service radius limit");
    app.add_option("--budget", budget, "query budget per run");
    app.add_option("--aggregate", c.aggregate, "COUNT, SUM(attr) or AVG(attr)");
    app.add_option("--condition", condition, "selection predicate, e.g. category=a");
    app.add_flag("--pass-through", c.pass_through, "the service applies the condition itself");
    app.add_option("--sampler", c.sampler, "uniform or density");
    app.add_option("--density", c.density_path, "density grid CSV");
    app.add_option("--density-grid", c.density_grid, "build an n x n density grid from the tuple locations");
    app.add_option("--epsilon", epsilon, "edge error target for rank-only cells");
    app.add_option("--delta", delta, "binary search segment length");
    app.add_option("--delta-prime", delta_prime, "auxiliary ray offset");
    app.add_flag("--fast-init", c.fast_init, "fast initialization box");
    app.add_option("--fast-init-halfwidth", halfwidth, "fast initialization box half-width");
    app.add_flag("--history", c.history, "reuse tuples seen by earlier queries");
    app.add_flag("--adaptive-h", c.adaptive_h, "variance-reducing choice of h");
    app.add_flag("--mc-shortcut", c.mc_shortcut, "Monte-Carlo cell volume shortcut");
    app.add_flag("--reuse-cells", c.reuse_cells, "keep finished cells for the rest of a run");
    app.add_option("--per-sample-cap", c.per_sample_cap, "queries one sample may spend");
    app.add_option("--seed", c.seed, "random seed");
    app.add_option("--repetitions", c.repetitions, "independent runs");
    app.add_option("--samples", samples, "samples per run");
    app.add_option("--output", c.output, "report file (default stdout)");

    auto* estimate = app.add_subcommand("estimate", "estimate an aggregate");
    auto* verify = app.add_subcommand("verify-cell", "compare computed cells with ground truth");
    std::optional<TupleId> verify_id;
    int verify_h = 1;
    verify->add_option("--id", verify_id, "tuple id (default: every tuple)");
    verify->add_option("--depth", verify_h, "rank depth h of the cell");
    auto* locate = app.add_subcommand("locate", "infer tuple positions from a rank-only service");
    LocateOptions lo;
    locate->add_option("--id", lo.id, "tuple to locate, seeded at its true position");
    locate->add_option("--x", lo.x, "seed location x");
    locate->add_option("--y", lo.y, "seed location y");
    locate->add_flag("--all", lo.all, "locate every tuple");
    locate->add_option("--feature", lo.feature, "line feature ax,ay,bx,by")->delimiter(',')->expected(4);
    locate->add_option("--feature-distance", lo.feature_distance, "distance threshold to the feature");
    auto* bench = app.add_subcommand("benchmark", "query cost and error table over variants");
    BenchmarkOptions bo;
    bench->add_option("--generator", bo.generator, "uniform, clusters or circle");
    bench->add_option("--sizes", bo.sizes, "dataset sizes")->delimiter(',');
    bench->add_option("--ks", bo.ks, "k values")->delimiter(',');
    bench->add_option("--runs", bo.runs, "runs per row");
    bench->add_option("--variants", bo.variants, "variants to run")->delimiter(',');
    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
    GenOptions g;
    gen->add_option("--generator", g.generator, "uniform, clusters or circle");
    gen->add_option("--n", g.n, "number of tuples");
    gen->add_option("--clusters", g.clusters, "cluster count");
    gen->add_option("--sigma", g.sigma, "cluster standard deviation");
    gen->add_option("--radius", g.radius, "circle radius");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
    }
    if (!region.empty()) c.region = region;
    c.epsilon = epsilon;
    c.delta = delta;
    c.delta_prime = delta_prime;
    c.max_radius = max_radius;
    c.fast_init_halfwidth = halfwidth;
    c.budget = budget;
    c.samples = samples;
    c.condition = condition;

    try {
        if (c.repetitions < 1) throw ConfigError("--repetitions must be >= 1");
        if (*estimate) return cmd_estimate(c, out);
        if (*verify) return cmd_verify_cell(c, verify_id, verify_h, out);
        if (*locate) return cmd_locate(c, lo, out);
        if (*bench) return cmd_benchmark(c, bo, out);
        if (*gen) return cmd_gen_data(c, g, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const GeometryError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const BudgetExhausted& e) {
        err << "error: " << e.what() << "\n";
        return kExitBudget;
    }
    return kExitConfig;
}

}  // namespace lbsagg::cli
