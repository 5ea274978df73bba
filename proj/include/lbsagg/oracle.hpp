#pragma once

// Simulated location-based service: a top-k nearest-neighbor interface over
// an in-memory dataset with LR/LNR answer shapes, an optional maximum
// radius, pass-through filters and per-phase query accounting. The
// ground-truth functions read the dataset directly and never touch the
// ledger.

#include <atomic>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lbsagg/aggregate.hpp"
#include "lbsagg/dataset.hpp"
#include "lbsagg/geometry.hpp"

namespace lbsagg {

enum class Mode { LR, LNR };

struct OracleConfig {
    int k = 1;
    Mode mode = Mode::LR;
    std::optional<double> max_radius;
    std::optional<std::int64_t> budget;

    void validate() const;
};

struct AnswerEntry {
    TupleId id = 0;
    AttrMap attrs;
    std::optional<Point2> loc;  // present only in LR mode
};

struct QueryAnswer {
    std::vector<AnswerEntry> entries;
    bool truncated = false;  // the radius cutoff removed at least one candidate

    bool empty() const { return entries.empty(); }
    /// Zero-based rank of `id`, or -1 when absent.
    int rank_of(TupleId id) const;
    std::optional<TupleId> top() const {
        if (entries.empty()) return std::nullopt;
        return entries.front().id;
    }
};

enum class Phase { init, vertex_test, binary_search, mc_trial };
inline constexpr int kPhaseCount = 4;
const char* phase_name(Phase p);

/// Plain snapshot of query counts per phase.
struct QueryLedger {
    std::int64_t init = 0;
    std::int64_t vertex_test = 0;
    std::int64_t binary_search = 0;
    std::int64_t mc_trial = 0;

    std::int64_t issued() const { return init + vertex_test + binary_search + mc_trial; }
    std::int64_t& operator[](Phase p);
    QueryLedger& operator+=(const QueryLedger& o);
    QueryLedger operator-(const QueryLedger& o) const;
    bool operator==(const QueryLedger&) const = default;
};

class BudgetExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OutOfRegion : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class KnnOracle {
public:
    KnnOracle(const Dataset& data, OracleConfig cfg);

    const OracleConfig& config() const { return cfg_; }
    const Dataset& dataset() const { return data_; }
    const Box& region() const { return data_.region(); }

    /// One billed kNN query. Safe for concurrent callers.
    QueryAnswer query(Point2 q, Phase phase = Phase::init, const Predicate* filter = nullptr);
    QueryLedger ledger() const;
    /// Queries still available, or nullopt when unlimited.
    std::optional<std::int64_t> remaining() const;

    /// Grid-index search without billing; returns dataset indices ranked.
    std::vector<std::size_t> nearest_indices(Point2 q, int k, const Predicate* filter = nullptr) const;
    /// Full-scan reference for the same ranking.
    std::vector<std::size_t> brute_force_indices(Point2 q, int k, const Predicate* filter = nullptr) const;

    /// Top-k cell from all tuple locations (those passing `filter`).
    CellComplex ground_truth_cell(TupleId id, int k, const Predicate* filter = nullptr) const;
    double ground_truth_aggregate(const AggregateSpec& agg) const;

private:
    bool passes(std::size_t idx, const Predicate* filter) const;

    const Dataset& data_;
    OracleConfig cfg_;
    int gx_ = 1, gy_ = 1;
    double cw_ = 1, ch_ = 1;
    std::vector<std::vector<std::size_t>> grid_;
    std::atomic<std::int64_t> issued_{0};
    std::atomic<std::int64_t> phase_counts_[kPhaseCount] = {};
};

/// Per-cell view of the oracle: a fixed pass-through filter, a ledger delta
/// and an optional cap on the queries this context may issue.
class QueryCapReached : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class QueryContext {
public:
    QueryContext(KnnOracle& oracle, const Predicate* filter = nullptr, std::optional<std::int64_t> cap = std::nullopt)
        : oracle_(oracle), filter_(filter), cap_(cap) {}

    QueryAnswer query(Point2 q, Phase phase);
    const QueryLedger& delta() const { return delta_; }
    std::int64_t used() const { return delta_.issued(); }
    void set_cap(std::optional<std::int64_t> cap) { cap_ = cap; }
    std::optional<std::int64_t> cap() const { return cap_; }
    KnnOracle& oracle() { return oracle_; }
    const Predicate* filter() const { return filter_; }
    const Box& region() const { return oracle_.region(); }
    int k() const { return oracle_.config().k; }

private:
    KnnOracle& oracle_;
    const Predicate* filter_;
    std::optional<std::int64_t> cap_;
    QueryLedger delta_;
};

}  // namespace lbsagg
