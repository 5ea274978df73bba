#pragma once

// Sampling and aggregation: query-location samplers, inclusion
// probabilities, the per-sample COUNT/SUM estimator over ranked answers,
// and run-level means, variances and confidence intervals.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "lbsagg/aggregate.hpp"
#include "lbsagg/density.hpp"
#include "lbsagg/lnr_cell.hpp"
#include "lbsagg/lr_cell.hpp"
#include "lbsagg/oracle.hpp"

namespace lbsagg {

class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EstimatorConfig {
    std::uint64_t seed = 1;
    /// Stop after this many completed samples; at least one of this and the
    /// oracle budget must be set.
    std::optional<std::int64_t> max_samples;
    /// Queries one sample may spend before it is discarded.
    std::int64_t per_sample_cap = 500;
    LrOptions lr;
    /// Let a tuple contribute up to rank h(t) > 1 when its top-h cell is small.
    bool adaptive_h = false;
    /// Samples between refreshes of the area-per-tuple threshold.
    int lambda_refresh = 50;
    /// Query locations follow this density instead of the uniform one.
    std::optional<DensityGrid> density;
    /// Edge error target for rank-only cells; default 1e-4 of the region width.
    std::optional<double> lnr_epsilon;
    /// Keep each rank-only cell for the rest of the run.
    bool lnr_reuse_cells = true;

    void validate(const KnnOracle& oracle, const AggregateSpec& agg) const;
};

struct Contribution {
    TupleId id = 0;
    int rank = 1;  // 1-based position in the answer
    int h = 1;
    /// Q(t) for the numerator and for the COUNT denominator.
    double q = 0.0;
    double q_count = 0.0;
    /// Inclusion probability, or its Monte-Carlo reciprocal estimate.
    double p = 0.0;
    double inv_p = 0.0;
    bool exact = true;
    std::optional<std::int64_t> mc_trials;
};

struct SampleRecord {
    std::int64_t index = 0;
    Point2 location;
    std::vector<Contribution> contributions;
    /// Sum of q / p and of q_count / p over the contributions.
    double value = 0.0;
    double count_value = 0.0;
    /// COUNT estimate over every contributing tuple, ignoring post-filters;
    /// drives the area-per-tuple threshold.
    double population_value = 0.0;
    QueryLedger ledger;
    std::int64_t queries = 0;
    /// The per-sample query cap was hit; the record is discarded.
    bool aborted = false;
};

/// Mutable run state shared by consecutive samples.
struct EstimatorState {
    History history;
    VarianceReductionPolicy policy;
    std::map<TupleId, double> lnr_inv_p;
    std::int64_t samples = 0;
    double population_sum = 0.0;
};

struct AggregateEstimate {
    AggregateSpec spec;
    double value = 0.0;
    double sample_variance = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::int64_t samples = 0;
    std::int64_t aborted_samples = 0;
    std::int64_t queries = 0;
    QueryLedger ledger;
    /// AVG is a ratio of two estimates and is not unbiased.
    bool ratio = false;
    bool budget_exhausted = false;
};

Point2 sample_location(const Box& region, const DensityGrid* density, std::mt19937_64& rng);

/// Probability that a query location falls in `cell` (intersected with
/// `disk` when given).
double inclusion_probability(const CellComplex& cell, const Box& region, const DensityGrid* density,
                             std::optional<Circle> disk = std::nullopt);

/// Random stream for sample `index` of a run seeded with `seed`.
std::mt19937_64 sample_rng(std::uint64_t seed, std::int64_t index);

/// One sampled location and its per-tuple contributions. Throws
/// BudgetExhausted when the oracle budget runs out mid-sample.
SampleRecord estimate_once(const AggregateSpec& agg, KnnOracle& oracle, const EstimatorConfig& config,
                           EstimatorState& state, std::mt19937_64& rng);

/// Samples until `max_samples` or the budget is reached. Every completed
/// record is appended to `records` when given.
AggregateEstimate run_estimation(const AggregateSpec& agg, KnnOracle& oracle, const EstimatorConfig& config,
                                 std::vector<SampleRecord>* records = nullptr);

/// Mean, Bessel-corrected variance and 95% interval from per-sample
/// numerator and denominator values (the denominator is used for AVG).
AggregateEstimate summarize(const AggregateSpec& agg, const std::vector<double>& values,
                            const std::vector<double>& counts);

}  // namespace lbsagg
