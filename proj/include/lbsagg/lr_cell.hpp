#pragma once

// Location-returned pipeline: exact top-h cells from vertex queries, the
// fast-init box, history-based initial bounds and h selection, and the
// Monte-Carlo ratio shortcut with its certified lower-bound region.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "lbsagg/density.hpp"
#include "lbsagg/geometry.hpp"
#include "lbsagg/oracle.hpp"

namespace lbsagg {

/// Everything learned from earlier queries in a run. Only grows.
class History {
public:
    /// Records every located entry of `ans`.
    void observe(const QueryAnswer& ans);
    void add(TupleId id, Point2 loc);
    bool knows(TupleId id) const { return seen_.count(id) != 0; }
    const std::map<TupleId, Point2>& seen() const { return seen_; }
    std::size_t size() const { return seen_.size(); }
    /// All known sites except `self`, in id order.
    std::vector<Site> sites_except(TupleId self) const;
    /// Distance from `loc` to the nearest known tuple other than `self`.
    std::optional<double> nearest_distance(TupleId self, Point2 loc) const;

    void add_confirmed(TupleId id, int h, Point2 v) { confirmed_[{id, h}].push_back(v); }
    std::span<const Point2> confirmed(TupleId id, int h) const;

    void cache_cell(TupleId id, int h, const CellComplex& cell) { cells_[{id, h}] = cell; }
    const CellComplex* cached_cell(TupleId id, int h) const;

private:
    std::map<TupleId, Point2> seen_;
    std::map<std::pair<TupleId, int>, std::vector<Point2>> confirmed_;
    std::map<std::pair<TupleId, int>, CellComplex> cells_;
};

struct VarianceReductionPolicy {
    double lambda0 = 0.0;
    bool enabled = false;
};

struct LrOptions {
    bool fast_init = false;
    /// Fake-tuple box half-width; default is twice the nearest known
    /// distance, else `fast_init_fraction` of the region width.
    std::optional<double> fast_init_halfwidth;
    double fast_init_fraction = 0.05;
    bool use_history = false;
    /// Reuse a finished exact cell for the same (tuple, h) later in the run.
    bool reuse_cells = false;
    bool mc_shortcut = false;
    double mc_gamma = 0.1;
    int mc_vertex_cap = 64;
    /// Arc test points per full turn when a maximum radius is active.
    int arc_samples = 128;
};

enum class StopReason { none, budget, cap };

struct CellEstimate {
    TupleId owner = 0;
    Point2 owner_loc;
    int h = 1;
    /// Superset of the true top-h cell (equal to it when `exact`).
    CellComplex upper;
    /// Query points whose answer ranked the owner within the top h.
    std::vector<Point2> confirmed;
    /// conv(confirmed + owner), certified inside the true cell for h = 1.
    std::vector<Point2> lower_hull;
    std::optional<double> max_radius;
    bool exact = false;
    /// Area of `upper`, intersected with the radius disk when one is set.
    double volume = 0.0;
    std::optional<std::int64_t> mc_trials;
    QueryLedger ledger_delta;
    int vertex_queries = 0;
    int fast_init_queries = 0;
    bool fast_init_success = false;
    bool from_cache = false;
    StopReason stop = StopReason::none;

    /// Point certified to lie in the true cell without a query.
    bool lower_contains(Point2 q) const;
};

struct FastInitResult {
    bool success = false;
    int queries = 0;
    std::vector<Site> discovered;
    /// Top-h cell from the discovered tuples, or the whole region on fallback.
    CellComplex cell;
};

/// Queries the four corners of the box of half-width `halfwidth` around the
/// owner. Tuples already in `known` do not count as discoveries.
FastInitResult fast_init(const Site& t, int h, QueryContext& ctx, double halfwidth,
                         const std::map<TupleId, Point2>& known = {});

/// Zero-query initial bound: region clipped by bisectors with every tuple in history.
ConvexCell history_init(const Site& t, const History& history, const Box& region);

/// Area of the top-h cell computed from history alone.
double lambda_upper(const Site& t, int h, const History& history, const Box& region);

/// Largest h in [2, k] with lambda_h <= lambda0, else 1. `rank` is 1-based.
int choose_h(const Site& t, int rank, int k, const History& history, const VarianceReductionPolicy& policy,
             const Box& region);

/// Exact (or, with the shortcut, bounding) top-h cell of `t`.
CellEstimate compute_cell_exact(const Site& t, int h, QueryContext& ctx, History* history, const LrOptions& opts);

/// True only when q is certified inside the true top-h cell of the tuple at
/// `t`, given points `confirmed` that each ranked it within the top h.
bool lower_bound_region(Point2 t, std::span<const Point2> confirmed, Point2 q, int h = 1,
                        std::optional<double> max_radius = std::nullopt);

/// Geometric trial count until a point drawn from `est.upper` (uniformly, or
/// from `density` restricted to it) lands in the true cell.
std::int64_t mc_volume_ratio(CellEstimate& est, QueryContext& ctx, std::mt19937_64& rng,
                             const DensityGrid* density = nullptr);

}  // namespace lbsagg
