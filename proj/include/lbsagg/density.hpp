#pragma once

// Piecewise-constant sampling density over the region: a rows x cols grid
// of nonnegative weights. Row 0 is the bottom strip, column 0 the left one.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lbsagg/geometry.hpp"

namespace lbsagg {

class DensityGrid {
public:
    DensityGrid(Box region, int rows, int cols, std::vector<double> weights);

    /// File layout: line 1 `rows,cols,lo_x,lo_y,hi_x,hi_y`, line 2 its
    /// values, line 3 `row,col,weight`, then one line per nonzero cell.
    static DensityGrid load_csv(const std::string& path);
    void save_csv(const std::string& path) const;

    /// Grid whose weights are the number of `points` falling in each cell,
    /// plus `floor` so every cell stays reachable.
    static DensityGrid from_points(Box region, int rows, int cols, const std::vector<Point2>& points,
                                   double floor = 0.0);

    const Box& region() const { return region_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double weight(int row, int col) const { return w_[static_cast<std::size_t>(row) * cols_ + col]; }
    double total_mass() const { return total_; }
    Box cell_box(int row, int col) const;

    Point2 sample(std::mt19937_64& rng) const;
    /// Normalized probability mass of `complex` (optionally intersected with a disk).
    double probability(const CellComplex& complex, std::optional<Circle> disk = std::nullopt) const;
    /// Point drawn from the density restricted to `complex`.
    Point2 sample_within(const CellComplex& complex, std::mt19937_64& rng) const;

private:
    Box region_;
    int rows_, cols_;
    std::vector<double> w_;
    std::vector<double> cum_;
    double total_ = 0;
};

}  // namespace lbsagg
