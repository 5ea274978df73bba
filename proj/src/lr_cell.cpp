#include "lbsagg/lr_cell.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <unordered_set>

namespace lbsagg {

namespace {

std::vector<Site> to_sites(const std::map<TupleId, Point2>& known) {
    std::vector<Site> out;
    out.reserve(known.size());
    for (const auto& [id, loc] : known) out.push_back({id, loc});
    return out;
}

std::pair<std::int64_t, std::int64_t> quantize(Point2 p) {
    return {std::llround(p.x * 1e9), std::llround(p.y * 1e9)};
}

/// Points whose answers certify the cell: boundary vertices, plus circle
/// crossings and arc samples when the radius disk clips the cell.
std::vector<Point2> test_points(const CellComplex& upper, Point2 t, std::optional<double> radius, int arc_samples) {
    auto verts = boundary_vertices(upper);
    if (!radius) return verts;
    const double r = *radius;
    std::vector<Point2> out;
    for (auto v : verts)
        if (dist(v, t) <= r + kGeomTol) out.push_back(v);
    for (const auto& f : upper.faces) {
        const auto& ring = f.vertices();
        for (std::size_t i = 0; i < ring.size(); ++i) {
            const Point2 a = ring[i] - t, d = ring[(i + 1) % ring.size()] - ring[i];
            const double A = dot(d, d), B = dot(a, d), C = dot(a, a) - r * r;
            const double disc = B * B - A * C;
            if (A == 0 || disc < 0) continue;
            for (double s : {(-B - std::sqrt(disc)) / A, (-B + std::sqrt(disc)) / A})
                if (s >= 0 && s <= 1) out.push_back(ring[i] + d * s);
        }
    }
    for (int j = 0; j < arc_samples; ++j) {
        const double a = 2 * std::numbers::pi * j / arc_samples;
        const Point2 p = t + Point2{std::cos(a), std::sin(a)} * r;
        if (upper.contains(p, 0)) out.push_back(p);
    }
    return out;
}

/// The owner counts as ranked within the top h at `v` when fewer than h
/// returned tuples are strictly closer; ties with the owner confirm.
bool ranks_within(const QueryAnswer& ans, const Site& t, Point2 v, int h, int k, std::optional<double> radius) {
    const double dt = dist(v, t.loc);
    if (radius && dt > *radius + kGeomTol) return false;
    const bool present = ans.rank_of(t.id) >= 0;
    if (!present && static_cast<int>(ans.entries.size()) < k) return false;
    int closer = 0;
    for (const auto& e : ans.entries) {
        if (e.id == t.id) break;
        if (!e.loc) return false;
        if (dist(v, *e.loc) < dt - kGeomTol) ++closer;
    }
    return closer < h;
}

void finish_volume(CellEstimate& est) {
    est.volume = est.max_radius ? est.upper.area_within_disk(Circle(est.owner_loc, *est.max_radius)) : est.upper.area();
}

void build_lower(CellEstimate& est) {
    est.lower_hull.clear();
    if (est.h != 1 || est.confirmed.empty()) return;
    auto pts = est.confirmed;
    pts.push_back(est.owner_loc);
    est.lower_hull = convex_hull(std::move(pts));
}

}  // namespace

void History::observe(const QueryAnswer& ans) {
    for (const auto& e : ans.entries)
        if (e.loc) seen_.emplace(e.id, *e.loc);
}

void History::add(TupleId id, Point2 loc) { seen_.emplace(id, loc); }

std::vector<Site> History::sites_except(TupleId self) const {
    std::vector<Site> out;
    out.reserve(seen_.size());
    for (const auto& [id, loc] : seen_)
        if (id != self) out.push_back({id, loc});
    return out;
}

std::optional<double> History::nearest_distance(TupleId self, Point2 loc) const {
    std::optional<double> best;
    for (const auto& [id, p] : seen_) {
        if (id == self) continue;
        const double d = dist(p, loc);
        if (!best || d < *best) best = d;
    }
    return best;
}

std::span<const Point2> History::confirmed(TupleId id, int h) const {
    const auto it = confirmed_.find({id, h});
    if (it == confirmed_.end()) return {};
    return it->second;
}

const CellComplex* History::cached_cell(TupleId id, int h) const {
    const auto it = cells_.find({id, h});
    return it == cells_.end() ? nullptr : &it->second;
}

bool CellEstimate::lower_contains(Point2 q) const {
    if (h == 1 && lower_hull.size() >= 3) {
        const auto hull = ConvexCell::from_ring(lower_hull);
        if (!hull.is_empty() && hull.contains(q, 0)) return true;
    }
    return lower_bound_region(owner_loc, confirmed, q, h, max_radius);
}

bool lower_bound_region(Point2 t, std::span<const Point2> confirmed, Point2 q, int h,
                        std::optional<double> max_radius) {
    if (confirmed.empty()) return false;
    const double rq = dist(q, t);
    if (max_radius && rq > *max_radius) return false;
    if (rq <= kGeomTol) return true;
    const Circle target(q, rq);
    // A single confirmed disk covering C(q, t) works for every h: the tuples
    // closer than t at q are then a subset of those closer than t at v.
    for (const auto& v : confirmed)
        if (dist(v, q) + rq <= dist(v, t)) return true;
    if (h != 1) return false;
    std::vector<Circle> cover;
    cover.reserve(confirmed.size());
    for (const auto& v : confirmed) cover.emplace_back(v, dist(v, t));
    return circle_union_covers(target, cover) == Coverage::covered;
}

namespace {

/// Queries the four corners of the fast-init box; returns located tuples
/// for which `is_known` is false.
template <class Known>
std::map<TupleId, Point2> corner_queries(const Site& t, QueryContext& ctx, double halfwidth, int& queries,
                                         const Known& is_known) {
    const Box& region = ctx.region();
    std::map<TupleId, Point2> found;
    for (const Point2 off : {Point2{1, 1}, Point2{-1, 1}, Point2{-1, -1}, Point2{1, -1}}) {
        const Point2 c = t.loc + off * halfwidth;
        const Point2 q{std::clamp(c.x, region.lo.x, region.hi.x), std::clamp(c.y, region.lo.y, region.hi.y)};
        const auto ans = ctx.query(q, Phase::init);
        ++queries;
        for (const auto& e : ans.entries) {
            if (e.id == t.id || !e.loc || is_known(e.id)) continue;
            found.emplace(e.id, *e.loc);
        }
    }
    return found;
}

}  // namespace

FastInitResult fast_init(const Site& t, int h, QueryContext& ctx, double halfwidth,
                         const std::map<TupleId, Point2>& known) {
    FastInitResult res;
    const auto found =
        corner_queries(t, ctx, halfwidth, res.queries, [&](TupleId id) { return known.count(id) != 0; });
    res.success = !found.empty();
    res.discovered = to_sites(found);
    auto all = known;
    all.insert(found.begin(), found.end());
    res.cell = topk_cell_from_locations(t, to_sites(all), h, ConvexCell::from_box(ctx.region()));
    return res;
}

ConvexCell history_init(const Site& t, const History& history, const Box& region) {
    const auto cx = topk_cell_from_locations(t, history.sites_except(t.id), 1, ConvexCell::from_box(region));
    return cx.faces.empty() ? ConvexCell{} : cx.faces.front();
}

double lambda_upper(const Site& t, int h, const History& history, const Box& region) {
    return topk_cell_from_locations(t, history.sites_except(t.id), h, ConvexCell::from_box(region)).area();
}

int choose_h(const Site& t, int rank, int k, const History& history, const VarianceReductionPolicy& policy,
             const Box& region) {
    if (rank < 1 || rank > k) throw GeometryError("rank must lie in [1, k]");
    if (!policy.enabled || k < 2) return 1;
    if (std::isinf(policy.lambda0)) return k;
    int best = 1;
    // lambda_h grows with h, so stop at the first failure
    for (int h = 2; h <= k; ++h) {
        if (lambda_upper(t, h, history, region) > policy.lambda0) break;
        best = h;
    }
    return best;
}

CellEstimate compute_cell_exact(const Site& t, int h, QueryContext& ctx, History* history, const LrOptions& opts) {
    if (h < 1 || h > ctx.k()) throw GeometryError("h must lie in [1, k]");
    CellEstimate est;
    est.owner = t.id;
    est.owner_loc = t.loc;
    est.h = h;
    est.max_radius = ctx.oracle().config().max_radius;
    const QueryLedger start = ctx.delta();
    const Box& region = ctx.region();
    const ConvexCell region_cell = ConvexCell::from_box(region);

    if (history && opts.reuse_cells) {
        if (const auto* cell = history->cached_cell(t.id, h)) {
            est.upper = *cell;
            est.exact = true;
            est.from_cache = true;
            const auto conf = history->confirmed(t.id, h);
            est.confirmed.assign(conf.begin(), conf.end());
            build_lower(est);
            finish_volume(est);
            return est;
        }
    }

    // Sites from the history snapshot (sorted by id) plus those learned here.
    std::vector<Site> known;
    std::vector<TupleId> base_ids;
    std::unordered_set<TupleId> learned;
    if (history && opts.use_history) {
        known.reserve(history->size());
        base_ids.reserve(history->size());
        for (const auto& [id, loc] : history->seen()) {
            if (id == t.id) continue;
            known.push_back({id, loc});
            base_ids.push_back(id);
        }
        const auto conf = history->confirmed(t.id, h);
        est.confirmed.assign(conf.begin(), conf.end());
    }
    auto is_known = [&](TupleId id) {
        return id == t.id || learned.count(id) || std::binary_search(base_ids.begin(), base_ids.end(), id);
    };
    auto learn = [&](TupleId id, Point2 loc) {
        if (is_known(id)) return false;
        learned.insert(id);
        known.push_back({id, loc});
        return true;
    };
    // For h = 1 the cell is refined incrementally by the new bisectors only.
    std::size_t applied = 0;
    bool built = false;
    auto refresh_upper = [&] {
        if (h == 1 && built) {
            ConvexCell c = est.upper.faces.empty() ? ConvexCell{} : est.upper.faces.front();
            for (; applied < known.size(); ++applied) {
                const Site& o = known[applied];
                if (dist(o.loc, t.loc) <= kGeomTol)
                    throw GeometryError("duplicate location for tuples " + std::to_string(t.id) + " and " +
                                        std::to_string(o.id));
                if (!c.is_empty()) c = clip(c, perpendicular_bisector(t.loc, o.loc));
            }
            est.upper.faces.clear();
            if (!c.is_empty()) est.upper.faces.push_back(std::move(c));
            return;
        }
        est.upper = topk_cell_from_locations(t, known, h, region_cell);
        applied = known.size();
        built = true;
    };

    try {
        if (opts.fast_init) {
            double w = region.width() * opts.fast_init_fraction;
            if (opts.fast_init_halfwidth) {
                w = *opts.fast_init_halfwidth;
            } else if (history) {
                if (auto nd = history->nearest_distance(t.id, t.loc)) w = 2 * *nd;
            }
            const auto found = corner_queries(t, ctx, w, est.fast_init_queries,
                                              is_known);
            est.fast_init_success = !found.empty();
            for (const auto& [id, loc] : found) {
                learn(id, loc);
                if (history) history->add(id, loc);
            }
        }

        std::map<std::pair<std::int64_t, std::int64_t>, bool> answered;
        while (true) {
            refresh_upper();
            if (opts.mc_shortcut && est.vertex_queries > 0) {
                bool close_enough = est.vertex_queries >= opts.mc_vertex_cap;
                if (!close_enough && h == 1 && est.confirmed.size() >= 2) {
                    build_lower(est);
                    if (est.lower_hull.size() >= 3) {
                        const double lower = area(ConvexCell::from_ring(est.lower_hull));
                        close_enough = est.upper.area() <= (1 + opts.mc_gamma) * lower;
                    }
                }
                if (close_enough) break;
            }
            auto pts = test_points(est.upper, t.loc, est.max_radius, opts.arc_samples);
            std::stable_sort(pts.begin(), pts.end(),
                             [&](Point2 a, Point2 b) { return dist2(a, t.loc) > dist2(b, t.loc); });
            bool discovered = false;
            for (const auto& p : pts) {
                const auto key = quantize(p);
                if (answered.count(key)) continue;
                const auto ans = ctx.query(p, Phase::vertex_test);
                ++est.vertex_queries;
                answered[key] = true;
                if (history) history->observe(ans);
                if (ranks_within(ans, t, p, h, ctx.k(), est.max_radius)) {
                    est.confirmed.push_back(p);
                    if (history) history->add_confirmed(t.id, h, p);
                }
                for (const auto& e : ans.entries)
                    if (e.loc && learn(e.id, *e.loc)) discovered = true;
                if (discovered) break;
            }
            if (!discovered) {
                est.exact = true;
                break;
            }
        }
    } catch (const BudgetExhausted&) {
        est.stop = StopReason::budget;
    } catch (const QueryCapReached&) {
        est.stop = StopReason::cap;
    }
    if (est.stop != StopReason::none) refresh_upper();
    if (est.exact && history && opts.reuse_cells) history->cache_cell(t.id, h, est.upper);
    build_lower(est);
    finish_volume(est);
    est.ledger_delta = ctx.delta() - start;
    return est;
}

std::int64_t mc_volume_ratio(CellEstimate& est, QueryContext& ctx, std::mt19937_64& rng, const DensityGrid* density) {
    if (est.upper.empty()) throw GeometryError("cannot run trials in an empty bounding region");
    constexpr std::int64_t kMaxTrials = 10'000'000;
    const QueryLedger start = ctx.delta();
    std::int64_t r = 0, rejected = 0;
    while (r < kMaxTrials && rejected < kMaxTrials) {
        const Point2 q = density ? density->sample_within(est.upper, rng) : sample_uniform(est.upper, rng);
        if (est.max_radius && dist(q, est.owner_loc) > *est.max_radius) {
            ++rejected;
            continue;
        }
        ++r;
        if (est.lower_contains(q)) break;
        const auto ans = ctx.query(q, Phase::mc_trial);
        const int rank = ans.rank_of(est.owner);
        if (rank >= 0 && rank < est.h) break;
    }
    if (r >= kMaxTrials || rejected >= kMaxTrials) throw GeometryError("trial limit reached; bounding region far larger than cell");
    est.mc_trials = r;
    est.ledger_delta += ctx.delta() - start;
    return r;
}

}  // namespace lbsagg
