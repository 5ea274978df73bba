#include "lbsagg/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <numeric>

namespace lbsagg {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2 * std::numbers::pi;

double ring_area(const std::vector<Point2>& ring) {
    double a = 0.0;
    for (std::size_t i = 0, n = ring.size(); i < n; ++i)
        a += cross(ring[i], ring[(i + 1) % n]);
    return a / 2;
}

void drop_duplicates(std::vector<Point2>& ring) {
    std::vector<Point2> out;
    out.reserve(ring.size());
    for (const auto& p : ring) {
        if (out.empty() || dist(out.back(), p) > kGeomTol)
            out.push_back(p);
    }
    while (out.size() > 1 && dist(out.front(), out.back()) <= kGeomTol)
        out.pop_back();
    ring = std::move(out);
}

// Sutherland-Hodgman against a single half-plane. Returns false when the
// polygon is entirely inside (ring untouched).
bool clip_ring(const std::vector<Point2>& ring, const HalfPlane& h, std::vector<Point2>& out) {
    const std::size_t n = ring.size();
    thread_local std::vector<double> s;
    s.resize(n);
    bool any_out = false, any_in = false;
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = h.signed_distance(ring[i]);
        if (s[i] > kGeomTol) any_out = true;
        if (s[i] < -kGeomTol) any_in = true;
    }
    out.clear();
    if (!any_out) return false;
    if (!any_in) return true;  // empty (touching at most along the line)
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        if (s[i] <= kGeomTol) out.push_back(ring[i]);
        if ((s[i] < -kGeomTol && s[j] > kGeomTol) || (s[i] > kGeomTol && s[j] < -kGeomTol)) {
            const double t = s[i] / (s[i] - s[j]);
            out.push_back(ring[i] + (ring[j] - ring[i]) * t);
        }
    }
    drop_duplicates(out);
    if (out.size() < 3 || ring_area(out) <= kGeomTol * kGeomTol) out.clear();
    return true;
}

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
    const Point2 d = b - a;
    const double len2 = dot(d, d);
    if (len2 == 0.0) return dist(p, a);
    const double t = std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
    return dist(p, a + d * t);
}

// Signed area of triangle (origin, a, b) intersected with the disk of radius
// r centred at the origin.
double triangle_disk_area(Point2 a, Point2 b, double r) {
    auto sector = [r](Point2 u, Point2 v) { return 0.5 * r * r * std::atan2(cross(u, v), dot(u, v)); };
    const double r2 = r * r;
    if (dot(a, a) <= r2 && dot(b, b) <= r2) return cross(a, b) / 2;
    const Point2 d = b - a;
    const double A = dot(d, d);
    if (A == 0.0) return 0.0;
    const double B = dot(a, d);
    const double C = dot(a, a) - r2;
    const double disc = B * B - A * C;
    if (disc <= 0.0) return sector(a, b);
    const double sq = std::sqrt(disc);
    const double t1 = (-B - sq) / A;
    const double t2 = (-B + sq) / A;
    if (t2 <= 0.0 || t1 >= 1.0) return sector(a, b);
    const Point2 p1 = a + d * std::max(t1, 0.0);
    const Point2 p2 = a + d * std::min(t2, 1.0);
    double res = cross(p1, p2) / 2;
    if (t1 > 0.0) res += sector(a, p1);
    if (t2 < 1.0) res += sector(p2, b);
    return res;
}

}  // namespace

Box Box::inflated(double fraction) const {
    const double dx = width() * fraction, dy = height() * fraction;
    return Box{Point2{lo.x - dx, lo.y - dy}, Point2{hi.x + dx, hi.y + dy}};
}

HalfPlane::HalfPlane(Point2 normal, double offset) {
    const double len = norm(normal);
    if (!(len > 0.0)) throw GeometryError("half-plane normal has zero magnitude");
    normal_ = normal / len;
    offset_ = offset / len;
}

HalfPlane perpendicular_bisector(Point2 a, Point2 b) {
    const Point2 d = b - a;
    if (norm(d) <= kGeomTol) throw GeometryError("coincident points have no bisector");
    return HalfPlane(d, dot(d, midpoint(a, b)));
}

std::optional<Point2> intersect_lines(const HalfPlane& a, const HalfPlane& b) {
    const double det = cross(a.normal(), b.normal());
    if (std::abs(det) < 1e-15) return std::nullopt;
    const double x = (a.offset() * b.normal().y - b.offset() * a.normal().y) / det;
    const double y = (a.normal().x * b.offset() - b.normal().x * a.offset()) / det;
    return Point2{x, y};
}

Circle::Circle(Point2 c, double r) : center(c), radius(r) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw GeometryError("circle radius must be >= 0");
}

ConvexCell ConvexCell::from_box(const Box& box) {
    if (!(box.width() > 0.0) || !(box.height() > 0.0)) throw GeometryError("degenerate box");
    ConvexCell c;
    const auto corners = box.corners();
    c.ring_.assign(corners.begin(), corners.end());
    return c;
}

ConvexCell ConvexCell::from_ring(std::vector<Point2> ring) {
    drop_duplicates(ring);
    ConvexCell c;
    if (ring.size() < 3) return c;
    const double a = ring_area(ring);
    if (std::abs(a) <= kGeomTol * kGeomTol) return c;
    if (a < 0) std::reverse(ring.begin(), ring.end());
    c.ring_ = std::move(ring);
    return c;
}

ConvexCell ConvexCell::from_halfplanes(std::span<const HalfPlane> hps) {
    constexpr double kBig = 1e9;
    ConvexCell c = from_box(Box{Point2{-kBig, -kBig}, Point2{kBig, kBig}});
    for (const auto& h : hps) c = clip(c, h);
    if (c.is_empty()) return c;
    for (const auto& v : c.ring_) {
        if (std::abs(v.x) >= kBig * (1 - 1e-9) || std::abs(v.y) >= kBig * (1 - 1e-9)) {
            ConvexCell u;
            u.unbounded_ = true;
            return u;
        }
    }
    return c;
}

std::vector<HalfPlane> ConvexCell::halfplanes() const {
    std::vector<HalfPlane> out;
    for (std::size_t i = 0, n = ring_.size(); i < n; ++i) {
        const Point2 a = ring_[i], b = ring_[(i + 1) % n];
        const Point2 outward{b.y - a.y, a.x - b.x};
        out.emplace_back(outward, dot(outward, a));
    }
    return out;
}

double ConvexCell::depth(Point2 p) const {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0, n = ring_.size(); i < n; ++i) {
        const Point2 a = ring_[i], b = ring_[(i + 1) % n];
        const Point2 e = b - a;
        d = std::min(d, cross(e, p - a) / norm(e));
    }
    return d;
}

bool ConvexCell::contains(Point2 p, double tol) const {
    if (unbounded_) throw GeometryError("containment test on unbounded cell");
    if (ring_.empty()) return false;
    return depth(p) >= -tol;
}

Point2 ConvexCell::centroid() const {
    if (ring_.empty()) throw GeometryError("centroid of empty cell");
    double a = 0, cx = 0, cy = 0;
    for (std::size_t i = 0, n = ring_.size(); i < n; ++i) {
        const Point2 p = ring_[i], q = ring_[(i + 1) % n];
        const double c = cross(p, q);
        a += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    return Point2{cx / (3 * a), cy / (3 * a)};
}

Box ConvexCell::bbox() const {
    if (ring_.empty()) throw GeometryError("bounding box of empty cell");
    Box b{ring_.front(), ring_.front()};
    for (const auto& p : ring_) {
        b.lo = Point2{std::min(b.lo.x, p.x), std::min(b.lo.y, p.y)};
        b.hi = Point2{std::max(b.hi.x, p.x), std::max(b.hi.y, p.y)};
    }
    return b;
}

ConvexCell clip(const ConvexCell& cell, const HalfPlane& h) {
    if (cell.is_empty()) return cell;
    if (!cell.is_bounded()) {
        throw GeometryError("clip of unbounded cell; bound it with a region first");
    }
    std::vector<Point2> out;
    if (!clip_ring(cell.vertices(), h, out)) return cell;
    return ConvexCell::from_ring(std::move(out));
}

double area(const ConvexCell& cell) {
    if (!cell.is_bounded()) throw GeometryError("area of unbounded cell");
    if (cell.is_empty()) return 0.0;
    return std::max(0.0, ring_area(cell.vertices()));
}

double area_within_disk(const ConvexCell& cell, const Circle& disk) {
    if (!cell.is_bounded()) throw GeometryError("area of unbounded cell");
    const auto& ring = cell.vertices();
    double a = 0.0;
    for (std::size_t i = 0, n = ring.size(); i < n; ++i)
        a += triangle_disk_area(ring[i] - disk.center, ring[(i + 1) % n] - disk.center, disk.radius);
    return std::max(0.0, a);
}

Point2 sample_uniform(const ConvexCell& cell, std::mt19937_64& rng) {
    if (cell.is_empty()) throw GeometryError("cannot sample from an empty cell");
    if (!cell.is_bounded()) throw GeometryError("cannot sample from an unbounded cell");
    const auto& r = cell.vertices();
    std::vector<double> cum;
    cum.reserve(r.size());
    double total = 0;
    for (std::size_t i = 1; i + 1 < r.size(); ++i) {
        total += std::abs(cross(r[i] - r[0], r[i + 1] - r[0])) / 2;
        cum.push_back(total);
    }
    const double pick = uniform01(rng) * total;
    std::size_t tri = std::upper_bound(cum.begin(), cum.end(), pick) - cum.begin();
    tri = std::min(tri, cum.size() - 1);
    double u = uniform01(rng), v = uniform01(rng);
    if (u + v > 1) {
        u = 1 - u;
        v = 1 - v;
    }
    const Point2 a = r[0], b = r[tri + 1], c = r[tri + 2];
    return a + (b - a) * u + (c - a) * v;
}

std::vector<Point2> convex_hull(std::vector<Point2> pts) {
    std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Point2> h(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) --k;
        h[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) --k;
        h[k++] = pts[i];
    }
    h.resize(k - 1);
    return h;
}

bool CellComplex::contains(Point2 p, double tol) const {
    return std::any_of(faces.begin(), faces.end(), [&](const ConvexCell& f) { return f.contains(p, tol); });
}

double CellComplex::area() const {
    double a = 0;
    for (const auto& f : faces) a += lbsagg::area(f);
    return a;
}

double CellComplex::area_within_disk(const Circle& disk) const {
    double a = 0;
    for (const auto& f : faces) a += lbsagg::area_within_disk(f, disk);
    return a;
}

Box CellComplex::bbox() const {
    if (faces.empty()) throw GeometryError("bounding box of empty complex");
    Box b = faces.front().bbox();
    for (const auto& f : faces) {
        const Box fb = f.bbox();
        b.lo = Point2{std::min(b.lo.x, fb.lo.x), std::min(b.lo.y, fb.lo.y)};
        b.hi = Point2{std::max(b.hi.x, fb.hi.x), std::max(b.hi.y, fb.hi.y)};
    }
    return b;
}

double area(const CellComplex& complex) { return complex.area(); }

Point2 sample_uniform(const CellComplex& complex, std::mt19937_64& rng) {
    if (complex.empty()) throw GeometryError("cannot sample from an empty complex");
    if (complex.faces.size() == 1) return sample_uniform(complex.faces.front(), rng);
    std::vector<double> cum;
    double total = 0;
    for (const auto& f : complex.faces) {
        total += area(f);
        cum.push_back(total);
    }
    if (!(total > 0)) throw GeometryError("cannot sample from a zero-area complex");
    std::size_t i = std::upper_bound(cum.begin(), cum.end(), uniform01(rng) * total) - cum.begin();
    return sample_uniform(complex.faces[std::min(i, cum.size() - 1)], rng);
}

CellComplex rank_complex(TupleId owner, const ConvexCell& region, std::span<const HalfPlane> threats, int k,
                         std::optional<Point2> reference) {
    if (k < 1) throw GeometryError("rank complex needs k >= 1");
    CellComplex out;
    out.owner = owner;
    if (region.is_empty()) return out;

    struct Face {
        std::vector<Point2> ring;
        int count;
    };
    std::vector<Face> faces{{region.vertices(), 0}};

    // With a reference point, threats are visited nearest first through a
    // heap, so far threats that cannot reach any face are never ordered.
    using Keyed = std::pair<double, std::size_t>;
    std::vector<Keyed> heap;
    std::size_t containing = 0;  // threats whose half-plane holds the reference
    if (reference) {
        heap.reserve(threats.size());
        for (std::size_t i = 0; i < threats.size(); ++i) {
            const double sd = threats[i].signed_distance(*reference);
            heap.emplace_back(std::abs(sd), i);
            if (sd <= 0) ++containing;
        }
        std::make_heap(heap.begin(), heap.end(), std::greater<>());
    }

    auto reach = [&] {
        double r = 0;
        for (const auto& f : faces)
            for (const auto& p : f.ring) r = std::max(r, dist(p, *reference));
        return r;
    };
    double radius = reference ? reach() : 0.0;

    std::vector<Face> next;
    std::vector<Point2> in_ring, out_ring;
    for (std::size_t step = 0; step < threats.size(); ++step) {
        std::size_t idx = step;
        if (reference) {
            std::pop_heap(heap.begin(), heap.end(), std::greater<>());
            idx = heap.back().second;
            heap.pop_back();
        }
        const HalfPlane& h = threats[idx];
        if (reference) {
            const double sd = h.signed_distance(*reference);
            if (sd <= 0) --containing;
            if (sd > radius + kGeomTol) {
                // every later threat is at least as far; only containing ones still matter
                if (containing == 0) break;
                continue;
            }
        }
        next.clear();
        bool changed = false;
        const HalfPlane safe = h.complement();
        for (auto& f : faces) {
            // inside the threat: ring unchanged when clipped by h
            if (!clip_ring(f.ring, h, in_ring)) {
                changed = true;
                if (f.count + 1 < k) next.push_back({std::move(f.ring), f.count + 1});
                continue;
            }
            if (in_ring.empty()) {
                next.push_back(std::move(f));
                continue;
            }
            changed = true;
            clip_ring(f.ring, safe, out_ring);
            if (f.count + 1 < k) next.push_back({in_ring, f.count + 1});
            if (!out_ring.empty()) next.push_back({out_ring, f.count});
        }
        faces.swap(next);
        if (faces.empty()) break;
        if (reference && changed) radius = reach();
    }
    out.faces.reserve(faces.size());
    for (auto& f : faces) out.faces.push_back(ConvexCell::from_ring(std::move(f.ring)));
    return out;
}

CellComplex topk_cell_from_locations(const Site& owner, std::span<const Site> others, int k,
                                     const ConvexCell& region) {
    if (k < 1) throw GeometryError("top-k cell needs k >= 1");
    std::vector<HalfPlane> threats;
    threats.reserve(others.size());
    for (const auto& o : others) {
        if (o.id == owner.id) throw GeometryError("owner listed among competitors");
        if (dist(o.loc, owner.loc) <= kGeomTol)
            throw GeometryError("duplicate location for tuples " + std::to_string(owner.id) + " and " +
                                std::to_string(o.id));
        threats.push_back(perpendicular_bisector(o.loc, owner.loc));
    }
    return rank_complex(owner.id, region, threats, k, owner.loc);
}

std::vector<Point2> boundary_vertices(const CellComplex& complex) {
    std::vector<Point2> candidates;
    for (const auto& f : complex.faces) {
        for (const auto& v : f.vertices()) {
            const bool seen = std::any_of(candidates.begin(), candidates.end(),
                                          [&](Point2 c) { return dist(c, v) <= kGeomTol; });
            if (!seen) candidates.push_back(v);
        }
    }
    if (complex.faces.size() == 1) return candidates;

    std::vector<Point2> out;
    std::vector<double> angles;
    for (const Point2 v : candidates) {
        angles.clear();
        double rho = std::numeric_limits<double>::infinity();
        bool interior = false;
        for (const auto& f : complex.faces) {
            const double d = f.depth(v);
            if (d > kGeomTol) {
                interior = true;
                break;
            }
            if (d < -kGeomTol) {
                rho = std::min(rho, -d);
                continue;
            }
            const auto& r = f.vertices();
            const std::size_t n = r.size();
            for (std::size_t i = 0; i < n; ++i) {
                const Point2 a = r[i], b = r[(i + 1) % n];
                if (dist(a, v) <= kGeomTol) {
                    const Point2 prev = r[(i + n - 1) % n];
                    angles.push_back(std::atan2(b.y - v.y, b.x - v.x));
                    angles.push_back(std::atan2(prev.y - v.y, prev.x - v.x));
                    rho = std::min({rho, dist(b, v), dist(prev, v)});
                } else if (dist(b, v) > kGeomTol && point_segment_distance(v, a, b) <= kGeomTol) {
                    angles.push_back(std::atan2(b.y - a.y, b.x - a.x));
                    angles.push_back(std::atan2(a.y - b.y, a.x - b.x));
                    rho = std::min({rho, dist(a, v), dist(b, v)});
                }
            }
        }
        if (interior) continue;
        if (angles.empty()) {
            out.push_back(v);
            continue;
        }
        std::sort(angles.begin(), angles.end());
        rho *= 0.25;
        bool boundary = false;
        for (std::size_t i = 0; i < angles.size() && !boundary; ++i) {
            const double a0 = angles[i];
            const double a1 = (i + 1 < angles.size()) ? angles[i + 1] : angles[0] + kTwoPi;
            if (a1 - a0 < 1e-12) continue;
            const double mid = (a0 + a1) / 2;
            const Point2 probe = v + Point2{std::cos(mid), std::sin(mid)} * rho;
            boundary = !complex.contains(probe, 0.0);
        }
        if (boundary) out.push_back(v);
    }
    return out;
}

Coverage circle_union_covers(const Circle& target, std::span<const Circle> cover) {
    const double R = target.radius;
    const double eps = 1e-12 * std::max(1.0, R);
    const Point2 c0 = target.center;

    auto outside_all = [&](Point2 p) {
        return std::all_of(cover.begin(), cover.end(), [&](const Circle& c) { return dist(p, c.center) > c.radius + eps; });
    };

    if (R <= 0.0) {
        for (const auto& c : cover)
            if (dist(c.center, c0) <= c.radius) return Coverage::covered;
        return Coverage::not_covered;
    }
    for (const auto& c : cover)
        if (dist(c.center, c0) + R <= c.radius + eps) return Coverage::covered;

    // Boundary of the target: union of covered arcs must be the full circle.
    std::vector<std::pair<double, double>> arcs;
    const double margin = eps / R;
    for (const auto& c : cover) {
        const double d = dist(c.center, c0);
        if (d < eps) continue;
        const double gamma = (d * d + R * R - c.radius * c.radius) / (2 * d * R);
        if (gamma >= 1.0) continue;
        const double half = (gamma <= -1.0 ? kPi : std::acos(gamma)) - margin;
        if (half <= 0) continue;
        double lo = std::atan2(c.center.y - c0.y, c.center.x - c0.x) - half;
        double hi = lo + 2 * half;
        if (hi - lo >= kTwoPi) {
            arcs.emplace_back(0.0, kTwoPi);
            continue;
        }
        lo = std::fmod(lo + 4 * kTwoPi, kTwoPi);
        hi = lo + 2 * half;
        if (hi > kTwoPi) {
            arcs.emplace_back(lo, kTwoPi);
            arcs.emplace_back(0.0, hi - kTwoPi);
        } else {
            arcs.emplace_back(lo, hi);
        }
    }
    std::sort(arcs.begin(), arcs.end());
    double reach = 0.0;
    std::optional<double> gap_mid;
    for (const auto& [lo, hi] : arcs) {
        if (lo > reach) {
            gap_mid = (reach + lo) / 2;
            break;
        }
        reach = std::max(reach, hi);
    }
    if (!gap_mid && reach < kTwoPi) gap_mid = (reach + kTwoPi) / 2;
    if (gap_mid) {
        const Point2 p = c0 + Point2{std::cos(*gap_mid), std::sin(*gap_mid)} * R;
        return outside_all(p) ? Coverage::not_covered : Coverage::unknown;
    }

    bool center_inside = false;
    for (const auto& c : cover)
        if (dist(c0, c.center) < c.radius - eps) center_inside = true;
    if (!center_inside) return outside_all(c0) ? Coverage::not_covered : Coverage::unknown;

    // Any uncovered pocket strictly inside the target has a vertex where two
    // cover circles cross outside every other disk.
    for (std::size_t i = 0; i < cover.size(); ++i) {
        for (std::size_t j = i + 1; j < cover.size(); ++j) {
            const Circle& a = cover[i];
            const Circle& b = cover[j];
            const double d = dist(a.center, b.center);
            if (d < eps || d > a.radius + b.radius || d < std::abs(a.radius - b.radius)) continue;
            const double x = (d * d + a.radius * a.radius - b.radius * b.radius) / (2 * d);
            const double h = std::sqrt(std::max(0.0, a.radius * a.radius - x * x));
            const Point2 u = (b.center - a.center) / d;
            const Point2 base = a.center + u * x;
            for (const double sgn : {-1.0, 1.0}) {
                const Point2 p = base + perp(u) * (sgn * h);
                if (dist(p, c0) >= R - eps) continue;
                bool inside_other = false;
                for (std::size_t l = 0; l < cover.size() && !inside_other; ++l) {
                    if (l == i || l == j) continue;
                    inside_other = dist(p, cover[l].center) < cover[l].radius - eps;
                }
                if (!inside_other) return Coverage::unknown;
            }
        }
    }
    return Coverage::covered;
}

}  // namespace lbsagg
