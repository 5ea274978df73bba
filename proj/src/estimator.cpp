#include "lbsagg/estimator.hpp"

#include <cmath>
#include <numeric>

namespace lbsagg {

void EstimatorConfig::validate(const KnnOracle& oracle, const AggregateSpec& agg) const {
    agg.validate();
    if (!max_samples && !oracle.config().budget)
        throw EstimationError("either a sample count or a query budget is required");
    if (max_samples && *max_samples < 1) throw EstimationError("sample count must be >= 1");
    if (per_sample_cap < 1) throw EstimationError("per-sample cap must be >= 1");
    if (lambda_refresh < 1) throw EstimationError("lambda refresh interval must be >= 1");
    if (lnr_epsilon && !(*lnr_epsilon > 0)) throw EstimationError("epsilon must be > 0");
    if (density) {
        const Box& a = density->region();
        const Box& b = oracle.region();
        if (std::abs(a.lo.x - b.lo.x) > kGeomTol || std::abs(a.lo.y - b.lo.y) > kGeomTol ||
            std::abs(a.hi.x - b.hi.x) > kGeomTol || std::abs(a.hi.y - b.hi.y) > kGeomTol)
            throw EstimationError("density grid must cover exactly the dataset region");
    }
    if (oracle.config().mode == Mode::LNR) {
        if (oracle.config().max_radius) throw EstimationError("a maximum radius needs returned locations");
        if (agg.condition && !agg.condition->pass_through && agg.condition->pred.uses_location())
            throw EstimationError("location predicates need returned locations");
        if (adaptive_h) throw EstimationError("adaptive h needs returned locations");
    }
}

Point2 sample_location(const Box& region, const DensityGrid* density, std::mt19937_64& rng) {
    if (density) return density->sample(rng);
    return {region.lo.x + uniform01(rng) * region.width(), region.lo.y + uniform01(rng) * region.height()};
}

double inclusion_probability(const CellComplex& cell, const Box& region, const DensityGrid* density,
                             std::optional<Circle> disk) {
    double p;
    if (density) {
        p = density->probability(cell, disk);
    } else {
        p = (disk ? cell.area_within_disk(*disk) : cell.area()) / region.area();
    }
    if (!(p > 0)) throw EstimationError("cell has zero sampling probability");
    return std::min(p, 1.0);
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::int64_t index) {
    // splitmix64 finalizer over (seed, index)
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return std::mt19937_64(mix(mix(seed) ^ static_cast<std::uint64_t>(index)));
}

namespace {

void add_contribution(SampleRecord& rec, const AggregateSpec& agg, Contribution c, const AttrMap& attrs,
                      std::optional<Point2> loc) {
    c.q = agg.numerator(attrs, loc);
    c.q_count = agg.denominator(attrs, loc);
    rec.value += c.q * c.inv_p;
    rec.count_value += c.q_count * c.inv_p;
    rec.population_value += c.inv_p;
    rec.contributions.push_back(c);
}

void sample_lr(SampleRecord& rec, const QueryAnswer& ans, const AggregateSpec& agg, KnnOracle& oracle,
               const EstimatorConfig& cfg, EstimatorState& st, QueryContext& ctx, std::mt19937_64& rng) {
    const Box& region = oracle.region();
    const int k = oracle.config().k;
    const DensityGrid* density = cfg.density ? &*cfg.density : nullptr;
    // h(t) must not depend on this sample, so it is fixed before the answer
    // enters the history
    std::vector<int> hs;
    for (std::size_t i = 0; i < ans.entries.size(); ++i) {
        const Site s{ans.entries[i].id, *ans.entries[i].loc};
        hs.push_back(cfg.adaptive_h ? choose_h(s, static_cast<int>(i) + 1, k, st.history, st.policy, region) : 1);
    }
    st.history.observe(ans);

    for (std::size_t i = 0; i < ans.entries.size(); ++i) {
        const int rank = static_cast<int>(i) + 1;
        if (rank > hs[i]) continue;
        const auto& e = ans.entries[i];
        const Site s{e.id, *e.loc};
        const int h = hs[i];
        auto est = compute_cell_exact(s, h, ctx, &st.history, cfg.lr);
        if (est.stop == StopReason::cap) throw QueryCapReached("per-sample cap");
        if (est.stop == StopReason::budget) throw BudgetExhausted("budget exhausted during a sample");
        Contribution c;
        c.id = e.id;
        c.rank = rank;
        c.h = h;
        c.exact = est.exact;
        const std::optional<Circle> disk =
            est.max_radius ? std::optional<Circle>(Circle(s.loc, *est.max_radius)) : std::nullopt;
        if (est.exact) {
            c.p = inclusion_probability(est.upper, region, density, disk);
            c.inv_p = 1.0 / c.p;
        } else {
            const auto r = mc_volume_ratio(est, ctx, rng, density);
            c.mc_trials = r;
            const double upper_p = inclusion_probability(est.upper, region, density, disk);
            c.inv_p = static_cast<double>(r) / upper_p;
            c.p = 1.0 / c.inv_p;
        }
        add_contribution(rec, agg, c, e.attrs, e.loc);
    }
}

void sample_lnr(SampleRecord& rec, const QueryAnswer& ans, const AggregateSpec& agg, KnnOracle& oracle,
                const EstimatorConfig& cfg, EstimatorState& st, QueryContext& ctx) {
    const Box& region = oracle.region();
    const DensityGrid* density = cfg.density ? &*cfg.density : nullptr;
    const auto& e = ans.entries.front();
    Contribution c;
    c.id = e.id;
    c.exact = false;
    if (auto it = st.lnr_inv_p.find(e.id); cfg.lnr_reuse_cells && it != st.lnr_inv_p.end()) {
        c.inv_p = it->second;
    } else {
        const double eps = cfg.lnr_epsilon.value_or(1e-4 * region.width());
        const auto params = BinarySearchParams::from_epsilon(eps, region);
        const auto cell = compute_cell_lnr(rec.location, ctx, params, &ans);
        c.inv_p = 1.0 / inclusion_probability(cell.polygon, region, density);
        if (cfg.lnr_reuse_cells) st.lnr_inv_p[e.id] = c.inv_p;
    }
    c.p = 1.0 / c.inv_p;
    add_contribution(rec, agg, c, e.attrs, std::nullopt);
}

}  // namespace

SampleRecord estimate_once(const AggregateSpec& agg, KnnOracle& oracle, const EstimatorConfig& config,
                           EstimatorState& state, std::mt19937_64& rng) {
    SampleRecord rec;
    rec.index = state.samples;
    QueryContext ctx(oracle, agg.pass_through_filter(), config.per_sample_cap);
    const DensityGrid* density = config.density ? &*config.density : nullptr;
    rec.location = sample_location(oracle.region(), density, rng);
    try {
        const auto ans = ctx.query(rec.location, Phase::init);
        if (!ans.empty()) {
            if (oracle.config().mode == Mode::LR) sample_lr(rec, ans, agg, oracle, config, state, ctx, rng);
            else sample_lnr(rec, ans, agg, oracle, config, state, ctx);
        }
    } catch (const QueryCapReached&) {
        rec.aborted = true;
        rec.contributions.clear();
        rec.value = rec.count_value = rec.population_value = 0;
    }
    rec.ledger = ctx.delta();
    rec.queries = ctx.used();
    if (!rec.aborted) {
        ++state.samples;
        state.population_sum += rec.population_value;
        if (config.adaptive_h && state.samples % config.lambda_refresh == 0 && state.population_sum > 0) {
            state.policy.enabled = true;
            state.policy.lambda0 = oracle.region().area() / (state.population_sum / state.samples);
        }
    }
    return rec;
}

AggregateEstimate summarize(const AggregateSpec& agg, const std::vector<double>& values,
                            const std::vector<double>& counts) {
    AggregateEstimate out;
    out.spec = agg;
    out.samples = static_cast<std::int64_t>(values.size());
    if (values.empty()) throw EstimationError("no samples completed");
    const double n = static_cast<double>(values.size());
    auto mean = [&](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / n; };
    std::vector<double> z = values;
    out.value = mean(values);
    if (agg.kind == AggKind::avg) {
        out.ratio = true;
        const double c = mean(counts);
        if (!(c > 0)) throw EstimationError("no qualifying tuple was sampled; average undefined");
        out.value /= c;
        // linearized ratio residuals
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = (values[i] - out.value * counts[i]) / c;
    }
    const double zm = mean(z);
    double ss = 0;
    for (double v : z) ss += (v - zm) * (v - zm);
    out.sample_variance = values.size() > 1 ? ss / (n - 1) : 0.0;
    const double half = 1.96 * std::sqrt(out.sample_variance / n);
    out.ci_low = out.value - half;
    out.ci_high = out.value + half;
    return out;
}

AggregateEstimate run_estimation(const AggregateSpec& agg, KnnOracle& oracle, const EstimatorConfig& config,
                                 std::vector<SampleRecord>* records) {
    config.validate(oracle, agg);
    EstimatorState state;
    std::vector<double> values, counts;
    std::int64_t aborted = 0, index = 0;
    bool exhausted = false;
    QueryLedger ledger;
    const QueryLedger start = oracle.ledger();
    while (!config.max_samples || static_cast<std::int64_t>(values.size()) < *config.max_samples) {
        if (auto rem = oracle.remaining(); rem && *rem <= 0) {
            exhausted = true;
            break;
        }
        auto rng = sample_rng(config.seed, index++);
        try {
            auto rec = estimate_once(agg, oracle, config, state, rng);
            if (rec.aborted) {
                ++aborted;
                continue;
            }
            values.push_back(rec.value);
            counts.push_back(rec.count_value);
            if (records) records->push_back(std::move(rec));
        } catch (const BudgetExhausted&) {
            exhausted = true;
            break;
        }
        if (values.empty() && aborted >= 1000)
            throw EstimationError("every sample exceeded the per-sample query cap");
    }
    auto out = summarize(agg, values, counts);
    out.aborted_samples = aborted;
    out.budget_exhausted = exhausted;
    out.ledger = oracle.ledger() - start;
    out.queries = out.ledger.issued();
    return out;
}

}  // namespace lbsagg
