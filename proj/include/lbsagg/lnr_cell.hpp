#pragma once

// Rank-only pipeline: Voronoi edges are located by binary search between
// query points that disagree on the answer, then assembled into a cell.
// Also concavity repair for top-h cells and tuple position inference.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lbsagg/geometry.hpp"
#include "lbsagg/oracle.hpp"

namespace lbsagg {

struct BinarySearchParams {
    double delta = 1e-6;        // target segment length
    double delta_prime = 1e-3;  // lateral offset of the auxiliary rays
    double b = 4.0;             // bounding-box perimeter

    /// delta' = eps/2 and delta = tan(asin(eps/b)) * eps/2, which caps the
    /// edge error at eps.
    static BinarySearchParams from_epsilon(double eps, const Box& region);
    void validate() const;
    /// max(2 delta', b sin(atan(delta/delta'))).
    double max_edge_error() const;
};

class NoEdgeFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EstimatedEdge {
    /// Half-plane on the owner's side.
    HalfPlane line{Point2{1, 0}, 0};
    Point2 c3, c4;
    std::optional<Point2> c5, c6;
    /// Tuple across the edge; empty when the edge is a region side.
    std::optional<TupleId> neighbor;
    bool box_side = false;
    /// Both auxiliary rays failed; the line is the bisector of (c3, c4).
    bool fallback = false;
    int queries = 0;
};

struct LoggedQuery {
    Point2 at;
    std::vector<TupleId> ids;  // ranked
};

struct LnrCellResult {
    TupleId owner = 0;
    int h = 1;
    Point2 seed;
    CellComplex polygon;
    double epsilon = 0.0;
    int edge_count = 0;
    std::vector<EstimatedEdge> edges;
    int binary_searches = 0;
    QueryLedger ledger_delta;
    /// Area after each assembly round (repair adds one per iteration).
    std::vector<double> area_history;
    std::vector<LoggedQuery> log;
    /// Estimated bisector per co-returned tuple, oriented to the owner side.
    std::vector<std::pair<TupleId, HalfPlane>> bisectors;
};

/// Half-line search from c1 (where the owner ranks within the top h)
/// through c2. `h` = 1 gives the classic top-1 behavior.
EstimatedEdge binary_search_edge(TupleId owner, Point2 c1, Point2 c2, QueryContext& ctx,
                                 const BinarySearchParams& params, int h = 1,
                                 std::vector<LoggedQuery>* log = nullptr);

/// Top-1 cell of the tuple returned first at `seed`. A known answer at
/// `seed` saves the initial query.
LnrCellResult compute_cell_lnr(Point2 seed, QueryContext& ctx, const BinarySearchParams& params,
                               const QueryAnswer* seed_answer = nullptr);

/// Convex estimate of the top-h cell of `owner` (a sub-region when the true
/// cell is concave). `seed` must rank the owner within the top h.
LnrCellResult compute_cell_lnr_topk(TupleId owner, Point2 seed, int h, QueryContext& ctx,
                                    const BinarySearchParams& params);

/// Recovers missed inward vertices by estimating the bisector between the
/// owner and every co-returned tuple and rebuilding the arrangement.
LnrCellResult repair_concavity(const LnrCellResult& naive, QueryContext& ctx, const BinarySearchParams& params);

class NearParallelRays : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LocateResult {
    Point2 location;
    int extra_binary_searches = 0;
    int probe_queries = 0;
    std::vector<Point2> vertices_used;
};

/// Owner location from two cell vertices. Each vertex costs one binary
/// search for the edge between the two neighbors meeting there.
LocateResult infer_position(const LnrCellResult& cell, QueryContext& ctx, const BinarySearchParams& params);

/// Sum over tuples of |eps^2 - 2 d eps| / (d - eps)^2, d = nearest-neighbor distance.
double bias_bound(const std::vector<Point2>& locations, double epsilon);

}  // namespace lbsagg
