#pragma once

// In-memory tuple store plus CSV I/O and the synthetic generators.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "lbsagg/geometry.hpp"

namespace lbsagg {

using AttrValue = std::variant<double, std::string>;
using AttrMap = std::map<std::string, AttrValue>;

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SpatialTuple {
    TupleId id = 0;
    Point2 loc;
    AttrMap attrs;
};

/// Immutable after construction. Ids are unique and locations distinct.
class Dataset {
public:
    Dataset() = default;
    /// Region defaults to the data bounding box inflated by 1%.
    Dataset(std::vector<SpatialTuple> tuples, std::optional<Box> region = std::nullopt);

    static Dataset load_csv(const std::string& path, std::optional<Box> region = std::nullopt);
    void save_csv(const std::string& path) const;

    const std::vector<SpatialTuple>& tuples() const { return tuples_; }
    std::size_t size() const { return tuples_.size(); }
    const Box& region() const { return region_; }
    const SpatialTuple& by_id(TupleId id) const;
    bool has(TupleId id) const { return index_.count(id) != 0; }
    std::size_t index_of(TupleId id) const;

private:
    std::vector<SpatialTuple> tuples_;
    Box region_{};
    std::unordered_map<TupleId, std::size_t> index_;
};

/// Uniform points in `box`; attrs: weight in [0.5, 1.5), category in {a, b, c}.
Dataset generate_uniform(int n, std::uint64_t seed, Box box = {{0, 0}, {1, 1}});
/// Gaussian clusters with random centers; points falling outside are redrawn.
Dataset generate_clusters(int n, int clusters, double sigma, std::uint64_t seed, Box box = {{0, 0}, {1, 1}});
/// Tuple 0 at the box center and n-1 tuples evenly spaced on a circle around it.
Dataset generate_circle(int n, double radius, Box box = {{0, 0}, {1, 1}});

/// Numeric attribute lookup; throws DataError if missing or textual.
double numeric_attr(const AttrMap& attrs, const std::string& name);

}  // namespace lbsagg
