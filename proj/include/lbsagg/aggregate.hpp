#pragma once

// Attribute predicates and aggregate specifications (COUNT/SUM/AVG with an
// optional selection condition).

#include <optional>
#include <string>

#include "lbsagg/dataset.hpp"

namespace lbsagg {

enum class CmpOp { eq, ne, lt, le, gt, ge };

/// `attr op value`. The names "x" and "y" refer to the tuple location.
struct Predicate {
    std::string attr;
    CmpOp op = CmpOp::eq;
    AttrValue value;

    /// Accepts forms like `category=a`, `weight>=1.2`, `x<0.5`.
    static Predicate parse(const std::string& text);
    std::string to_string() const;
    /// `loc` is required only for "x"/"y"; a missing attribute evaluates false.
    bool evaluate(const AttrMap& attrs, std::optional<Point2> loc = std::nullopt) const;
    bool uses_location() const { return attr == "x" || attr == "y"; }
};

enum class AggKind { count, sum, avg };

/// A pass-through condition is applied by the oracle before ranking; a
/// post-filter is applied by the estimator, mapping failing tuples to 0.
struct Condition {
    Predicate pred;
    bool pass_through = false;
};

struct AggregateSpec {
    AggKind kind = AggKind::count;
    std::optional<std::string> attr;
    std::optional<Condition> condition;

    void validate() const;
    /// Parses `COUNT`, `SUM(weight)`, `AVG(weight)` (case-insensitive).
    static AggregateSpec parse(const std::string& text);
    std::string to_string() const;

    const Predicate* pass_through_filter() const {
        return condition && condition->pass_through ? &condition->pred : nullptr;
    }
    /// Q(t) for the numerator: 1 for COUNT, attr for SUM/AVG; 0 when a
    /// post-filter rejects the tuple.
    double numerator(const AttrMap& attrs, std::optional<Point2> loc = std::nullopt) const;
    /// Q(t) for the COUNT denominator of AVG.
    double denominator(const AttrMap& attrs, std::optional<Point2> loc = std::nullopt) const;
};

}  // namespace lbsagg
