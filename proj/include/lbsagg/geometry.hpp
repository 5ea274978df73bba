#pragma once

// Exact 2-D primitives used by every cell computation: points, half-planes,
// convex polygons, rank complexes (top-k cells) and disk coverage tests.
// Nothing in here knows about oracles or sampling.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lbsagg {

/// Tolerance for vertex dedup, point-on-line and containment tests.
inline constexpr double kGeomTol = 1e-9;

using TupleId = std::int64_t;

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Point2() = default;
    Point2(double x_, double y_) : x(x_), y(y_) {
        if (!std::isfinite(x_) || !std::isfinite(y_))
            throw GeometryError("non-finite coordinate");
    }

    Point2 operator+(Point2 o) const { return {x + o.x, y + o.y}; }
    Point2 operator-(Point2 o) const { return {x - o.x, y - o.y}; }
    Point2 operator*(double s) const { return {x * s, y * s}; }
    Point2 operator/(double s) const { return {x / s, y / s}; }
    bool operator==(const Point2&) const = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double dist(Point2 a, Point2 b) { return norm(a - b); }
inline double dist2(Point2 a, Point2 b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
}
inline Point2 midpoint(Point2 a, Point2 b) { return {(a.x + b.x) / 2, (a.y + b.y) / 2}; }
inline Point2 perp(Point2 a) { return {-a.y, a.x}; }
inline Point2 rotate(Point2 v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Axis-aligned rectangle; the bounding region of a dataset.
struct Box {
    Point2 lo;
    Point2 hi;

    double width() const { return hi.x - lo.x; }
    double height() const { return hi.y - lo.y; }
    double area() const { return width() * height(); }
    double perimeter() const { return 2 * (width() + height()); }
    bool contains(Point2 p, double tol = kGeomTol) const {
        return p.x >= lo.x - tol && p.x <= hi.x + tol && p.y >= lo.y - tol && p.y <= hi.y + tol;
    }
    /// Counterclockwise corners starting at `lo`.
    std::array<Point2, 4> corners() const {
        return {lo, Point2{hi.x, lo.y}, hi, Point2{lo.x, hi.y}};
    }
    Box inflated(double fraction) const;
};

/// The closed set {p : normal . p <= offset}, stored with a unit normal.
class HalfPlane {
public:
    HalfPlane(Point2 normal, double offset);

    Point2 normal() const { return normal_; }
    double offset() const { return offset_; }
    /// Positive outside, negative inside, in length units.
    double signed_distance(Point2 p) const { return dot(normal_, p) - offset_; }
    bool contains(Point2 p, double tol = kGeomTol) const { return signed_distance(p) <= tol; }
    HalfPlane complement() const { return HalfPlane(normal_ * -1.0, -offset_); }
    /// A point on the boundary line.
    Point2 anchor() const { return normal_ * offset_; }
    Point2 direction() const { return perp(normal_); }

private:
    Point2 normal_;
    double offset_;
};

/// Half-plane containing `a` bounded by the perpendicular bisector of (a, b).
HalfPlane perpendicular_bisector(Point2 a, Point2 b);

/// Intersection of the boundary lines of two half-planes, if not parallel.
std::optional<Point2> intersect_lines(const HalfPlane& a, const HalfPlane& b);

struct Circle {
    Point2 center;
    double radius = 0.0;

    Circle() = default;
    Circle(Point2 c, double r);
    bool contains(Point2 p, double tol = kGeomTol) const { return dist(center, p) <= radius + tol; }
};

/// Bounded convex polygon stored as a counterclockwise vertex ring. The
/// half-plane representation is derived from consecutive ring edges. An
/// empty cell is an ordinary value; clipping pipelines never throw on it.
class ConvexCell {
public:
    ConvexCell() = default;  // empty

    static ConvexCell from_box(const Box& box);
    /// Ring must be convex; orientation is normalized to counterclockwise.
    static ConvexCell from_ring(std::vector<Point2> ring);
    /// Intersection of arbitrary half-planes; may be unbounded or empty.
    static ConvexCell from_halfplanes(std::span<const HalfPlane> hps);

    bool is_empty() const { return !unbounded_ && ring_.empty(); }
    bool is_bounded() const { return !unbounded_; }
    const std::vector<Point2>& vertices() const { return ring_; }
    std::vector<HalfPlane> halfplanes() const;

    bool contains(Point2 p, double tol = kGeomTol) const;
    /// Smallest signed distance from p to the outside; positive when inside.
    double depth(Point2 p) const;
    Point2 centroid() const;
    Box bbox() const;

private:
    std::vector<Point2> ring_;
    bool unbounded_ = false;
};

ConvexCell clip(const ConvexCell& cell, const HalfPlane& h);
double area(const ConvexCell& cell);
/// Area of cell intersected with a disk, computed exactly.
double area_within_disk(const ConvexCell& cell, const Circle& disk);
Point2 sample_uniform(const ConvexCell& cell, std::mt19937_64& rng);
/// Counterclockwise convex hull (Andrew's monotone chain).
std::vector<Point2> convex_hull(std::vector<Point2> pts);

/// Possibly concave region given as convex faces with disjoint interiors.
struct CellComplex {
    TupleId owner = 0;
    std::vector<ConvexCell> faces;
    /// Set when near-coincident bisectors were merged during construction.
    bool degenerate = false;

    bool empty() const { return faces.empty(); }
    bool contains(Point2 p, double tol = kGeomTol) const;
    double area() const;
    double area_within_disk(const Circle& disk) const;
    Box bbox() const;
};

double area(const CellComplex& complex);
/// Uniform point over the union of the faces.
Point2 sample_uniform(const CellComplex& complex, std::mt19937_64& rng);

/// Points of `region` where fewer than k of the `threats` contain the point.
/// Each threat is the half-plane on which one competitor beats the owner.
/// When `reference` lies on the safe side of a threat farther than every
/// current face vertex, that threat is skipped without clipping.
CellComplex rank_complex(TupleId owner, const ConvexCell& region, std::span<const HalfPlane> threats, int k,
                         std::optional<Point2> reference = std::nullopt);

struct Site {
    TupleId id;
    Point2 loc;
};

/// Top-k cell of `owner` against `others`: the points of `region` where
/// fewer than k of `others` are strictly closer than the owner.
CellComplex topk_cell_from_locations(const Site& owner, std::span<const Site> others, int k,
                                     const ConvexCell& region);

/// Vertices of the outer boundary of the union of the faces.
std::vector<Point2> boundary_vertices(const CellComplex& complex);

enum class Coverage { covered, not_covered, unknown };

/// Conservative disk-union coverage: `covered` is only reported when the
/// closed target disk is certified to lie inside the union of `cover`.
Coverage circle_union_covers(const Circle& target, std::span<const Circle> cover);

/// Uniform double in [0, 1) built from the top 53 bits of the engine.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace lbsagg
