#include "lbsagg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace lbsagg {

void OracleConfig::validate() const {
    if (k < 1) throw DataError("k must be >= 1");
    if (max_radius && !(*max_radius > 0)) throw DataError("max radius must be > 0");
    if (budget && *budget < 0) throw DataError("budget must be >= 0");
}

int QueryAnswer::rank_of(TupleId id) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].id == id) return static_cast<int>(i);
    return -1;
}

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::init: return "init";
        case Phase::vertex_test: return "vertex_test";
        case Phase::binary_search: return "binary_search";
        case Phase::mc_trial: return "mc_trial";
    }
    return "?";
}

std::int64_t& QueryLedger::operator[](Phase p) {
    switch (p) {
        case Phase::init: return init;
        case Phase::vertex_test: return vertex_test;
        case Phase::binary_search: return binary_search;
        case Phase::mc_trial: return mc_trial;
    }
    return init;
}

QueryLedger& QueryLedger::operator+=(const QueryLedger& o) {
    init += o.init;
    vertex_test += o.vertex_test;
    binary_search += o.binary_search;
    mc_trial += o.mc_trial;
    return *this;
}

QueryLedger QueryLedger::operator-(const QueryLedger& o) const {
    return {init - o.init, vertex_test - o.vertex_test, binary_search - o.binary_search, mc_trial - o.mc_trial};
}

KnnOracle::KnnOracle(const Dataset& data, OracleConfig cfg) : data_(data), cfg_(cfg) {
    cfg_.validate();
    const Box& r = data_.region();
    const double cells = std::max<double>(1.0, data_.size() / 2.0);
    const double side = std::sqrt(r.area() / cells);
    gx_ = std::clamp(static_cast<int>(std::ceil(r.width() / side)), 1, 2048);
    gy_ = std::clamp(static_cast<int>(std::ceil(r.height() / side)), 1, 2048);
    cw_ = r.width() / gx_;
    ch_ = r.height() / gy_;
    grid_.assign(static_cast<std::size_t>(gx_) * gy_, {});
    for (std::size_t i = 0; i < data_.size(); ++i) {
        const Point2 p = data_.tuples()[i].loc;
        const int cx = std::clamp(static_cast<int>((p.x - r.lo.x) / cw_), 0, gx_ - 1);
        const int cy = std::clamp(static_cast<int>((p.y - r.lo.y) / ch_), 0, gy_ - 1);
        grid_[static_cast<std::size_t>(cy) * gx_ + cx].push_back(i);
    }
}

bool KnnOracle::passes(std::size_t idx, const Predicate* filter) const {
    if (!filter) return true;
    const auto& t = data_.tuples()[idx];
    return filter->evaluate(t.attrs, t.loc);
}

std::vector<std::size_t> KnnOracle::brute_force_indices(Point2 q, int k, const Predicate* filter) const {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!passes(i, filter)) continue;
        all.emplace_back(dist2(q, data_.tuples()[i].loc), i);
    }
    auto less = [&](const auto& a, const auto& b) {
        return a.first < b.first || (a.first == b.first && data_.tuples()[a.second].id < data_.tuples()[b.second].id);
    };
    const std::size_t m = std::min<std::size_t>(k, all.size());
    std::partial_sort(all.begin(), all.begin() + m, all.end(), less);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m; ++i) out.push_back(all[i].second);
    return out;
}

std::vector<std::size_t> KnnOracle::nearest_indices(Point2 q, int k, const Predicate* filter) const {
    const Box& r = data_.region();
    const auto& tuples = data_.tuples();
    auto worse = [&](const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) {
        return a.first < b.first || (a.first == b.first && tuples[a.second].id < tuples[b.second].id);
    };
    // max-heap on (dist2, id) holding the current best k
    std::priority_queue<std::pair<double, std::size_t>, std::vector<std::pair<double, std::size_t>>, decltype(worse)>
        best(worse);
    const int qx = std::clamp(static_cast<int>(std::floor((q.x - r.lo.x) / cw_)), 0, gx_ - 1);
    const int qy = std::clamp(static_cast<int>(std::floor((q.y - r.lo.y) / ch_)), 0, gy_ - 1);
    const int max_ring = std::max(gx_, gy_);
    auto visit = [&](int cx, int cy) {
        if (cx < 0 || cy < 0 || cx >= gx_ || cy >= gy_) return;
        for (std::size_t i : grid_[static_cast<std::size_t>(cy) * gx_ + cx]) {
            if (!passes(i, filter)) continue;
            const std::pair<double, std::size_t> cand{dist2(q, tuples[i].loc), i};
            if (static_cast<int>(best.size()) < k) {
                best.push(cand);
            } else if (worse(cand, best.top())) {
                best.pop();
                best.push(cand);
            }
        }
    };
    for (int ring = 0; ring <= max_ring; ++ring) {
        if (ring == 0) {
            visit(qx, qy);
        } else {
            for (int dx = -ring; dx <= ring; ++dx) {
                visit(qx + dx, qy - ring);
                visit(qx + dx, qy + ring);
            }
            for (int dy = -ring + 1; dy <= ring - 1; ++dy) {
                visit(qx - ring, qy + dy);
                visit(qx + ring, qy + dy);
            }
        }
        if (static_cast<int>(best.size()) == k) {
            // every unvisited cell is at least this far from q
            const double gap_x = std::min(q.x - (r.lo.x + (qx - ring) * cw_), r.lo.x + (qx + ring + 1) * cw_ - q.x);
            const double gap_y = std::min(q.y - (r.lo.y + (qy - ring) * ch_), r.lo.y + (qy + ring + 1) * ch_ - q.y);
            const double gap = std::max(0.0, std::min(gap_x, gap_y));
            if (gap * gap > best.top().first) break;
        }
    }
    std::vector<std::size_t> out(best.size());
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = best.top().second;
        best.pop();
    }
    return out;
}

QueryAnswer KnnOracle::query(Point2 q, Phase phase, const Predicate* filter) {
    if (!region().contains(q, 1e-9 * std::max(region().width(), region().height())))
        throw OutOfRegion("query location outside the bounding region");
    const std::int64_t n = issued_.fetch_add(1) + 1;
    if (cfg_.budget && n > *cfg_.budget) {
        issued_.fetch_sub(1);
        throw BudgetExhausted("query budget exhausted");
    }
    phase_counts_[static_cast<int>(phase)].fetch_add(1);

    QueryAnswer ans;
    const auto idx = nearest_indices(q, cfg_.k, filter);
    for (std::size_t i : idx) {
        const auto& t = data_.tuples()[i];
        if (cfg_.max_radius && dist(q, t.loc) > *cfg_.max_radius) {
            ans.truncated = true;
            break;
        }
        AnswerEntry e;
        e.id = t.id;
        e.attrs = t.attrs;
        if (cfg_.mode == Mode::LR) e.loc = t.loc;
        ans.entries.push_back(std::move(e));
    }
    return ans;
}

QueryLedger KnnOracle::ledger() const {
    QueryLedger l;
    l.init = phase_counts_[0].load();
    l.vertex_test = phase_counts_[1].load();
    l.binary_search = phase_counts_[2].load();
    l.mc_trial = phase_counts_[3].load();
    return l;
}

std::optional<std::int64_t> KnnOracle::remaining() const {
    if (!cfg_.budget) return std::nullopt;
    return std::max<std::int64_t>(0, *cfg_.budget - issued_.load());
}

CellComplex KnnOracle::ground_truth_cell(TupleId id, int k, const Predicate* filter) const {
    const auto& owner = data_.by_id(id);
    std::vector<Site> others;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        const auto& t = data_.tuples()[i];
        if (t.id == id || !passes(i, filter)) continue;
        others.push_back({t.id, t.loc});
    }
    return topk_cell_from_locations({owner.id, owner.loc}, others, k, ConvexCell::from_box(region()));
}

double KnnOracle::ground_truth_aggregate(const AggregateSpec& agg) const {
    agg.validate();
    double num = 0, den = 0;
    for (const auto& t : data_.tuples()) {
        if (agg.condition && !agg.condition->pred.evaluate(t.attrs, t.loc)) continue;
        if (agg.kind != AggKind::count) num += numeric_attr(t.attrs, *agg.attr);
        den += 1;
    }
    switch (agg.kind) {
        case AggKind::count: return den;
        case AggKind::sum: return num;
        case AggKind::avg:
            if (den == 0) throw DataError("AVG over an empty selection");
            return num / den;
    }
    return 0;
}

QueryAnswer QueryContext::query(Point2 q, Phase phase) {
    if (cap_ && delta_.issued() >= *cap_) throw QueryCapReached("per-sample query cap reached");
    auto ans = oracle_.query(q, phase, filter_);
    delta_[phase] += 1;
    return ans;
}

}  // namespace lbsagg
