#include "lbsagg/lnr_cell.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <set>

namespace lbsagg {

namespace {

constexpr int kIn = 1, kOut = 0, kUnknown = -1;
using Classify = std::function<int(const QueryAnswer&)>;
using FarSide = std::function<std::optional<TupleId>(const QueryAnswer&)>;

std::pair<std::int64_t, std::int64_t> quantize(Point2 p) {
    return {std::llround(p.x * 1e9), std::llround(p.y * 1e9)};
}

Point2 unit(Point2 v) {
    const double n = norm(v);
    if (!(n > 0)) throw GeometryError("zero direction");
    return v / n;
}

Point2 clamp_to(const Box& b, Point2 p) {
    return Point2{std::clamp(p.x, b.lo.x, b.hi.x), std::clamp(p.y, b.lo.y, b.hi.y)};
}

/// Exit point of the half-line c1 + s dir from the box and the side it leaves by.
std::pair<Point2, HalfPlane> ray_exit(const Box& box, Point2 c1, Point2 dir) {
    double best = INFINITY;
    HalfPlane side({1, 0}, box.hi.x);
    auto consider = [&](double s, const HalfPlane& h) {
        if (s >= 0 && s < best) {
            best = s;
            side = h;
        }
    };
    if (dir.x > 0) consider((box.hi.x - c1.x) / dir.x, HalfPlane({1, 0}, box.hi.x));
    if (dir.x < 0) consider((box.lo.x - c1.x) / dir.x, HalfPlane({-1, 0}, -box.lo.x));
    if (dir.y > 0) consider((box.hi.y - c1.y) / dir.y, HalfPlane({0, 1}, box.hi.y));
    if (dir.y < 0) consider((box.lo.y - c1.y) / dir.y, HalfPlane({0, -1}, -box.lo.y));
    if (!std::isfinite(best)) throw GeometryError("ray does not leave the region");
    return {clamp_to(box, c1 + dir * best), side};
}

/// Half-plane through p and q containing `inside`.
HalfPlane line_through(Point2 p, Point2 q, Point2 inside) {
    const Point2 n = perp(q - p);
    HalfPlane h(n, dot(n, p));
    return h.contains(inside, 0) ? h : h.complement();
}

struct Crossing {
    Point2 in, out;
    QueryAnswer out_answer;
};

class Searcher {
public:
    Searcher(QueryContext& ctx, const BinarySearchParams& p, std::vector<LoggedQuery>* log)
        : ctx_(ctx), p_(p), log_(log) {}

    QueryAnswer ask(Point2 q, Phase phase = Phase::binary_search) {
        auto a = ctx_.query(clamp_to(ctx_.region(), q), phase);
        ++queries;
        if (log_) {
            LoggedQuery l{q, {}};
            for (const auto& e : a.entries) l.ids.push_back(e.id);
            log_->push_back(std::move(l));
        }
        return a;
    }

    std::optional<Crossing> bisect(Point2 in, Point2 out, QueryAnswer out_answer, const Classify& cls) {
        while (dist(in, out) > p_.delta) {
            const Point2 m = midpoint(in, out);
            auto a = ask(m);
            const int c = cls(a);
            if (c == kIn) {
                in = m;
            } else if (c == kOut) {
                out = m;
                out_answer = std::move(a);
            } else {
                return std::nullopt;
            }
        }
        return Crossing{in, out, std::move(out_answer)};
    }

    /// Main crossing on the half-line from c1 along dir (far end given),
    /// then the auxiliary rays at +-asin(delta'/r).
    struct LineResult {
        Crossing main;
        std::optional<Crossing> aux;
        std::optional<TupleId> far_side;
        HalfPlane line{Point2{1, 0}, 0};
        bool fallback = false;
    };

    std::optional<LineResult> line(Point2 c1, Point2 dir, Point2 far, const QueryAnswer& far_answer,
                                   const std::function<Point2(Point2)>& far_of, const Classify& cls,
                                   const FarSide& tag) {
        auto main = bisect(c1, far, far_answer, cls);
        if (!main) return std::nullopt;
        LineResult res{*main, std::nullopt, tag(main->out_answer), HalfPlane({1, 0}, 0), false};
        const double r = dist(c1, main->out);
        const double theta = std::asin(std::min(1.0, p_.delta_prime / std::max(r, 1e-300)));
        for (const double sgn : {-1.0, 1.0}) {
            const Point2 d = rotate(dir, sgn * theta);
            const Point2 f = far_of(d);
            auto fa = ask(f);
            if (cls(fa) != kOut) continue;
            auto aux = bisect(c1, f, std::move(fa), cls);
            if (!aux || tag(aux->out_answer) != res.far_side) continue;
            res.aux = std::move(aux);
            break;
        }
        const Point2 m34 = midpoint(main->in, main->out);
        if (res.aux && dist(midpoint(res.aux->in, res.aux->out), m34) > p_.delta) {
            res.line = line_through(m34, midpoint(res.aux->in, res.aux->out), c1);
        } else {
            res.aux.reset();
            res.fallback = true;
            const Point2 n = unit(main->out - main->in);
            res.line = HalfPlane(n, dot(n, m34));
        }
        return res;
    }

    int queries = 0;

private:
    QueryContext& ctx_;
    const BinarySearchParams& p_;
    std::vector<LoggedQuery>* log_;
};

Classify within_top(TupleId owner, int h) {
    return [owner, h](const QueryAnswer& a) {
        const int r = a.rank_of(owner);
        return (r >= 0 && r < h) ? kIn : kOut;
    };
}

FarSide displacer(int h) {
    return [h](const QueryAnswer& a) -> std::optional<TupleId> {
        if (static_cast<int>(a.entries.size()) < h) return std::nullopt;
        return a.entries[static_cast<std::size_t>(h - 1)].id;
    };
}

/// Ordering of owner and u in one ranked answer.
int order_of(const std::vector<TupleId>& ids, TupleId owner, TupleId u) {
    int ro = -1, ru = -1;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == owner) ro = static_cast<int>(i);
        if (ids[i] == u) ru = static_cast<int>(i);
    }
    if (ro >= 0 && (ru < 0 || ro < ru)) return kIn;
    if (ru >= 0 && (ro < 0 || ru < ro)) return kOut;
    return kUnknown;
}

std::vector<TupleId> ids_of(const QueryAnswer& a) {
    std::vector<TupleId> ids;
    for (const auto& e : a.entries) ids.push_back(e.id);
    return ids;
}

LnrCellResult assemble(TupleId owner, Point2 seed, int h, QueryContext& ctx, const BinarySearchParams& params,
                       std::optional<QueryAnswer> seed_answer) {
    params.validate();
    if (ctx.oracle().config().max_radius)
        throw GeometryError("rank-only cells are not supported with a maximum radius");
    LnrCellResult res;
    res.owner = owner;
    res.h = h;
    res.seed = seed;
    res.epsilon = params.max_edge_error();
    const QueryLedger start = ctx.delta();
    Searcher s(ctx, params, &res.log);
    if (!seed_answer) seed_answer = s.ask(seed, Phase::init);
    else res.log.push_back({seed, ids_of(*seed_answer)});
    const int r0 = seed_answer->rank_of(owner);
    if (r0 < 0 || r0 >= h) throw NoEdgeFound("seed location does not rank the owner within the top h");

    const Box& region = ctx.region();
    std::set<TupleId> neighbors;
    auto add = [&](EstimatedEdge e) {
        if (e.neighbor) neighbors.insert(*e.neighbor);
        res.edges.push_back(std::move(e));
    };
    const double step = 0.25 * std::min(region.width(), region.height());
    for (const Point2 d : {Point2{1, 0}, Point2{0, 1}, Point2{-1, 0}, Point2{0, -1}}) {
        add(binary_search_edge(owner, seed, seed + d * step, ctx, params, h, &res.log));
        ++res.binary_searches;
    }

    std::set<std::pair<std::int64_t, std::int64_t>> tested;
    ConvexCell cell;
    while (true) {
        cell = ConvexCell::from_box(region);
        for (const auto& e : res.edges) cell = clip(cell, e.line);
        if (cell.is_empty()) throw NoEdgeFound("estimated edges leave an empty cell");
        res.area_history.push_back(area(cell));
        bool added = false;
        const auto ring = cell.vertices();
        for (std::size_t i = 0; i < ring.size() && !added; ++i) {
            const Point2 v = ring[i];
            if (!tested.insert(quantize(v)).second) continue;
            const auto a = s.ask(v, Phase::vertex_test);
            bool pass = true;
            for (std::size_t j = 0; j < std::min<std::size_t>(h, a.entries.size()); ++j) {
                const TupleId id = a.entries[j].id;
                if (id != owner && !neighbors.count(id)) pass = false;
            }
            if (pass) continue;
            const Point2 prev = ring[(i + ring.size() - 1) % ring.size()], next = ring[(i + 1) % ring.size()];
            for (const Point2 target : {v, v + (prev - v) * 0.02, v + (next - v) * 0.02}) {
                if (dist(target, seed) <= kGeomTol) continue;
                auto e = binary_search_edge(owner, seed, target, ctx, params, h, &res.log);
                ++res.binary_searches;
                if (!e.box_side && e.neighbor && !neighbors.count(*e.neighbor)) {
                    add(std::move(e));
                    added = true;
                    break;
                }
            }
        }
        if (!added) break;
    }
    res.polygon = CellComplex{owner, {cell}, false};
    res.edge_count = static_cast<int>(res.edges.size());
    for (const auto& e : res.edges)
        if (e.neighbor) res.bisectors.emplace_back(*e.neighbor, e.line);
    res.ledger_delta = ctx.delta() - start;
    return res;
}

}  // namespace

BinarySearchParams BinarySearchParams::from_epsilon(double eps, const Box& region) {
    const double b = region.perimeter();
    if (!(eps > 0) || eps >= b) throw GeometryError("epsilon must lie in (0, region perimeter)");
    BinarySearchParams p;
    p.b = b;
    p.delta_prime = eps / 2;
    p.delta = std::tan(std::asin(eps / b)) * eps / 2;
    return p;
}

void BinarySearchParams::validate() const {
    if (!(delta > 0) || !(delta_prime > 0) || !(b > 0)) throw GeometryError("binary search parameters must be > 0");
}

double BinarySearchParams::max_edge_error() const {
    return std::max(2 * delta_prime, b * std::sin(std::atan(delta / delta_prime)));
}

EstimatedEdge binary_search_edge(TupleId owner, Point2 c1, Point2 c2, QueryContext& ctx,
                                 const BinarySearchParams& params, int h, std::vector<LoggedQuery>* log) {
    params.validate();
    const Box& region = ctx.region();
    const Point2 dir = unit(c2 - c1);
    Searcher s(ctx, params, log);
    EstimatedEdge e;
    const auto [cb, side] = ray_exit(region, c1, dir);
    auto ab = s.ask(cb);
    const auto cls = within_top(owner, h);
    if (cls(ab) == kIn) {
        e.box_side = true;
        e.line = side;
        e.c3 = e.c4 = cb;
        e.queries = s.queries;
        return e;
    }
    auto far_of = [&](Point2 d) { return ray_exit(region, c1, d).first; };
    auto res = s.line(c1, dir, cb, ab, far_of, cls, displacer(h));
    if (!res) throw NoEdgeFound("binary search lost the owner");
    e.line = res->line;
    e.c3 = res->main.in;
    e.c4 = res->main.out;
    if (res->aux) {
        e.c5 = res->aux->in;
        e.c6 = res->aux->out;
    }
    e.neighbor = res->far_side;
    e.fallback = res->fallback;
    e.queries = s.queries;
    return e;
}

LnrCellResult compute_cell_lnr(Point2 seed, QueryContext& ctx, const BinarySearchParams& params,
                               const QueryAnswer* seed_answer) {
    params.validate();
    if (ctx.oracle().config().max_radius)
        throw GeometryError("rank-only cells are not supported with a maximum radius");
    Searcher s(ctx, params, nullptr);
    auto a = seed_answer ? *seed_answer : s.ask(seed, Phase::init);
    if (a.empty()) throw NoEdgeFound("seed query returned nothing");
    const TupleId owner = *a.top();
    return assemble(owner, seed, 1, ctx, params, std::move(a));
}

LnrCellResult compute_cell_lnr_topk(TupleId owner, Point2 seed, int h, QueryContext& ctx,
                                    const BinarySearchParams& params) {
    if (h < 1 || h > ctx.k()) throw GeometryError("h must lie in [1, k]");
    return assemble(owner, seed, h, ctx, params, std::nullopt);
}

LnrCellResult repair_concavity(const LnrCellResult& naive, QueryContext& ctx, const BinarySearchParams& params) {
    LnrCellResult res = naive;
    const TupleId owner = res.owner;
    const int h = res.h;
    const Box& region = ctx.region();
    const QueryLedger start = ctx.delta();
    Searcher s(ctx, params, &res.log);

    std::map<TupleId, HalfPlane> lines;
    for (const auto& e : naive.edges)
        if (e.neighbor && !lines.count(*e.neighbor)) lines.emplace(*e.neighbor, e.line);
    std::set<TupleId> boundary_ids;
    std::set<std::pair<std::int64_t, std::int64_t>> tested;
    std::set<TupleId> given_up;
    const HalfPlane everywhere({1, 0}, region.hi.x + region.width() + 1);

    for (int iter = 0; iter < 64; ++iter) {
        std::set<TupleId> dprime = boundary_ids;
        for (const auto& l : res.log) {
            if (std::find(l.ids.begin(), l.ids.end(), owner) == l.ids.end()) continue;
            for (TupleId id : l.ids)
                if (id != owner) dprime.insert(id);
        }
        bool changed = false;
        for (TupleId u : dprime) {
            if (lines.count(u) || given_up.count(u)) continue;
            std::vector<std::size_t> ahead, behind;
            for (std::size_t i = 0; i < res.log.size(); ++i) {
                const int o = order_of(res.log[i].ids, owner, u);
                if (o == kIn) ahead.push_back(i);
                if (o == kOut) behind.push_back(i);
            }
            if (ahead.empty() || behind.empty()) continue;
            std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
            for (auto a : ahead)
                for (auto b : behind) pairs.emplace_back(dist2(res.log[a].at, res.log[b].at), a, b);
            std::sort(pairs.begin(), pairs.end());
            const Classify cls = [owner, u](const QueryAnswer& a) { return order_of(ids_of(a), owner, u); };
            const FarSide tag = [u](const QueryAnswer&) -> std::optional<TupleId> { return u; };
            bool found = false;
            for (std::size_t pi = 0; pi < std::min<std::size_t>(pairs.size(), 3) && !found; ++pi) {
                const Point2 A = res.log[std::get<1>(pairs[pi])].at, B = res.log[std::get<2>(pairs[pi])].at;
                if (dist(A, B) <= kGeomTol) continue;
                const Point2 dir = unit(B - A);
                const double len = dist(A, B);
                auto far_of = [&](Point2 d) {
                    const auto [exit, side] = ray_exit(region, A, d);
                    return dist(A, exit) < len ? exit : A + d * len;
                };
                QueryAnswer b_answer;
                for (const auto& l : res.log)
                    if (l.at == B) {
                        // rebuild a minimal answer for classification of the far end
                        for (TupleId id : l.ids) b_answer.entries.push_back({id, {}, std::nullopt});
                        break;
                    }
                auto line = s.line(A, dir, B, b_answer, far_of, cls, tag);
                ++res.binary_searches;
                if (!line) continue;
                lines.emplace(u, line->line);
                found = changed = true;
            }
            if (!found) given_up.insert(u);
        }

        std::vector<HalfPlane> threats;
        for (TupleId u : dprime) {
            if (auto it = lines.find(u); it != lines.end()) {
                threats.push_back(it->second.complement());
                continue;
            }
            bool any = false, always_ahead = true;
            for (const auto& l : res.log) {
                const int o = order_of(l.ids, owner, u);
                if (o == kUnknown) continue;
                any = true;
                if (o == kIn) always_ahead = false;
            }
            if (any && always_ahead) threats.push_back(everywhere);
        }
        res.polygon = rank_complex(owner, ConvexCell::from_box(region), threats, h);
        res.area_history.push_back(res.polygon.area());

        for (const Point2 v : boundary_vertices(res.polygon)) {
            if (!tested.insert(quantize(v)).second) continue;
            const auto a = s.ask(v, Phase::vertex_test);
            for (std::size_t j = 0; j < std::min<std::size_t>(h, a.entries.size()); ++j) {
                const TupleId id = a.entries[j].id;
                if (id != owner && !dprime.count(id) && boundary_ids.insert(id).second) changed = true;
            }
        }
        if (!changed) break;
    }
    res.bisectors.assign(lines.begin(), lines.end());
    res.edge_count = static_cast<int>(lines.size());
    res.ledger_delta += ctx.delta() - start;
    return res;
}

LocateResult infer_position(const LnrCellResult& cell, QueryContext& ctx, const BinarySearchParams& params) {
    if (cell.h != 1 || cell.polygon.faces.size() != 1) throw GeometryError("position inference needs a top-1 cell");
    const auto& ring = cell.polygon.faces.front().vertices();
    const std::size_t n = ring.size();
    const Point2 centroid = cell.polygon.faces.front().centroid();
    const double scale = std::max(ctx.region().width(), ctx.region().height());

    // label each ring side with the estimated edge it lies on
    std::vector<int> label(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const Point2 a = ring[i], b = ring[(i + 1) % n];
        double best = 1e-9 * scale;
        for (std::size_t j = 0; j < cell.edges.size(); ++j) {
            const auto& e = cell.edges[j];
            if (!e.neighbor) continue;
            const double d = std::max(std::abs(e.line.signed_distance(a)), std::abs(e.line.signed_distance(b)));
            if (d <= best) {
                best = d;
                label[i] = static_cast<int>(j);
            }
        }
    }
    struct Corner {
        std::size_t idx;
        int in_edge, out_edge;
    };
    std::vector<Corner> corners;
    for (std::size_t i = 0; i < n; ++i) {
        const int a = label[(i + n - 1) % n], b = label[i];
        if (a < 0 || b < 0 || cell.edges[a].neighbor == cell.edges[b].neighbor) continue;
        corners.push_back({i, a, b});
    }
    if (corners.size() < 2) throw NearParallelRays("fewer than two usable cell vertices");

    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < corners.size(); ++i) {
        for (std::size_t j = i + 1; j < corners.size(); ++j) {
            const Point2 a = unit(ring[corners[i].idx] - centroid), b = unit(ring[corners[j].idx] - centroid);
            pairs.emplace_back(-std::abs(cross(a, b)), i, j);
        }
    }
    std::sort(pairs.begin(), pairs.end());

    LocateResult out;
    Searcher probe(ctx, params, nullptr);
    std::map<std::size_t, std::optional<Point2>> rays;
    auto direction_at = [&](const Corner& c) -> std::optional<Point2> {
        const Point2 o = ring[c.idx];
        const auto& d1 = cell.edges[c.in_edge];
        const auto& d3 = cell.edges[c.out_edge];
        const Point2 p1 = ring[(c.idx + n - 1) % n], p3 = ring[(c.idx + 1) % n];
        const Point2 u1 = unit(p1 - o), u3 = unit(p3 - o);
        // Outside angle runs from u1 away from the cell to u3.
        const double a1 = std::atan2(u1.y, u1.x);
        const double inside = std::acos(std::clamp(dot(u1, u3), -1.0, 1.0));
        const double sweep = 2 * std::numbers::pi - inside;
        const double orient = cross(u1, u3) > 0 ? -1.0 : 1.0;  // rotate away from the cell
        double s = 0.25 * std::min(dist(o, p1), dist(o, p3));
        for (int attempt = 0; attempt < 8; ++attempt, s /= 4) {
            const int steps = 8;
            std::optional<Point2> q2, q3;
            Point2 prev = o;
            bool prev_is_t2 = false;
            for (int j = 1; j < steps; ++j) {
                const double ang = a1 + orient * sweep * j / steps;
                const Point2 q = clamp_to(ctx.region(), o + Point2{std::cos(ang), std::sin(ang)} * s);
                const auto ans = probe.ask(q, Phase::binary_search);
                ++out.probe_queries;
                const auto top = ans.top();
                if (top == d1.neighbor) {
                    prev = q;
                    prev_is_t2 = true;
                    continue;
                }
                if (top == d3.neighbor && prev_is_t2) {
                    q2 = prev;
                    q3 = q;
                }
                break;
            }
            if (!q2) continue;
            ++out.extra_binary_searches;
            const Point2 dir = unit(*q3 - *q2);
            const double len = dist(*q2, *q3);
            auto far_of = [&](Point2 d) {
                const Point2 f = *q2 + d * len;
                return clamp_to(ctx.region(), f);
            };
            QueryAnswer q3ans;
            q3ans.entries.push_back({*d3.neighbor, {}, std::nullopt});
            const TupleId t2 = *d1.neighbor;
            auto res = probe.line(*q2, dir, *q3, q3ans, far_of, within_top(t2, 1), displacer(1));
            if (!res) return std::nullopt;
            const HalfPlane& d2 = res->line;
            auto line_angle = [](const HalfPlane& hp) {
                const Point2 d = hp.direction();
                return std::atan2(d.y, d.x);
            };
            const double axis = line_angle(d1.line) - line_angle(d2) + line_angle(d3.line);
            Point2 u{std::cos(axis), std::sin(axis)};
            if (dot(u, u1 + u3) < 0) u = u * -1.0;
            out.vertices_used.push_back(o);
            return u;
        }
        return std::nullopt;
    };

    for (const auto& [score, i, j] : pairs) {
        (void)score;
        if (!rays.count(i)) rays[i] = direction_at(corners[i]);
        if (!rays[i]) continue;
        if (!rays.count(j)) rays[j] = direction_at(corners[j]);
        if (!rays[j]) continue;
        const Point2 oa = ring[corners[i].idx], ob = ring[corners[j].idx];
        const Point2 ua = *rays[i], ub = *rays[j];
        const double den = cross(ua, ub);
        if (std::abs(den) < std::sin(1e-4)) continue;
        const double sa = cross(ob - oa, ub) / den;
        out.location = oa + ua * sa;
        return out;
    }
    throw NearParallelRays("no vertex pair gives well-conditioned rays");
}

double bias_bound(const std::vector<Point2>& locations, double epsilon) {
    if (epsilon < 0) throw std::domain_error("epsilon must be >= 0");
    double total = 0;
    for (std::size_t i = 0; i < locations.size(); ++i) {
        double d = INFINITY;
        for (std::size_t j = 0; j < locations.size(); ++j)
            if (j != i) d = std::min(d, dist(locations[i], locations[j]));
        if (!std::isfinite(d)) continue;
        if (epsilon >= d) throw std::domain_error("epsilon must be below every nearest-neighbor distance");
        total += std::abs(epsilon * epsilon - 2 * d * epsilon) / ((d - epsilon) * (d - epsilon));
    }
    return total;
}

}  // namespace lbsagg
