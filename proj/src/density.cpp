#include "lbsagg/density.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lbsagg/dataset.hpp"

namespace lbsagg {

namespace {

ConvexCell clip_to_box(const ConvexCell& c, const Box& b) {
    ConvexCell r = clip(c, HalfPlane({1, 0}, b.hi.x));
    r = clip(r, HalfPlane({-1, 0}, -b.lo.x));
    r = clip(r, HalfPlane({0, 1}, b.hi.y));
    return clip(r, HalfPlane({0, -1}, -b.lo.y));
}

}  // namespace

DensityGrid::DensityGrid(Box region, int rows, int cols, std::vector<double> weights)
    : region_(region), rows_(rows), cols_(cols), w_(std::move(weights)) {
    if (rows < 1 || cols < 1) throw DataError("density grid needs rows, cols >= 1");
    if (w_.size() != static_cast<std::size_t>(rows) * cols) throw DataError("density grid size mismatch");
    if (!(region.width() > 0) || !(region.height() > 0)) throw DataError("density region has zero extent");
    cum_.reserve(w_.size());
    for (double w : w_) {
        if (!(w >= 0) || !std::isfinite(w)) throw DataError("density weights must be finite and >= 0");
        total_ += w;
        cum_.push_back(total_);
    }
    if (!(total_ > 0)) throw DataError("density grid has no positive weight");
}

Box DensityGrid::cell_box(int row, int col) const {
    const double cw = region_.width() / cols_, ch = region_.height() / rows_;
    return Box{{region_.lo.x + col * cw, region_.lo.y + row * ch},
               {col + 1 == cols_ ? region_.hi.x : region_.lo.x + (col + 1) * cw,
                row + 1 == rows_ ? region_.hi.y : region_.lo.y + (row + 1) * ch}};
}

Point2 DensityGrid::sample(std::mt19937_64& rng) const {
    const double pick = uniform01(rng) * total_;
    std::size_t i = std::upper_bound(cum_.begin(), cum_.end(), pick) - cum_.begin();
    i = std::min(i, cum_.size() - 1);
    while (w_[i] == 0) --i;  // upper_bound never lands past a positive cell
    const Box b = cell_box(static_cast<int>(i / cols_), static_cast<int>(i % cols_));
    return Point2{b.lo.x + uniform01(rng) * b.width(), b.lo.y + uniform01(rng) * b.height()};
}

double DensityGrid::probability(const CellComplex& complex, std::optional<Circle> disk) const {
    double mass = 0;
    for (const auto& f : complex.faces) {
        const Box fb = f.bbox();
        const double cw = region_.width() / cols_, ch = region_.height() / rows_;
        const int c0 = std::clamp(static_cast<int>((fb.lo.x - region_.lo.x) / cw), 0, cols_ - 1);
        const int c1 = std::clamp(static_cast<int>((fb.hi.x - region_.lo.x) / cw), 0, cols_ - 1);
        const int r0 = std::clamp(static_cast<int>((fb.lo.y - region_.lo.y) / ch), 0, rows_ - 1);
        const int r1 = std::clamp(static_cast<int>((fb.hi.y - region_.lo.y) / ch), 0, rows_ - 1);
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                const double w = weight(r, c);
                if (w == 0) continue;
                const Box b = cell_box(r, c);
                const ConvexCell piece = clip_to_box(f, b);
                if (piece.is_empty()) continue;
                mass += w * (disk ? area_within_disk(piece, *disk) : area(piece)) / b.area();
            }
        }
    }
    return mass / total_;
}

Point2 DensityGrid::sample_within(const CellComplex& complex, std::mt19937_64& rng) const {
    std::vector<std::pair<ConvexCell, double>> pieces;
    double total = 0;
    for (const auto& f : complex.faces) {
        for (int r = 0; r < rows_; ++r) {
            for (int c = 0; c < cols_; ++c) {
                const double w = weight(r, c);
                if (w == 0) continue;
                const Box b = cell_box(r, c);
                ConvexCell piece = clip_to_box(f, b);
                if (piece.is_empty()) continue;
                const double m = w * area(piece) / b.area();
                total += m;
                pieces.emplace_back(std::move(piece), total);
            }
        }
    }
    if (pieces.empty()) throw DataError("density has no mass inside the region to sample");
    const double pick = uniform01(rng) * total;
    auto it = std::upper_bound(pieces.begin(), pieces.end(), pick,
                               [](double v, const auto& p) { return v < p.second; });
    if (it == pieces.end()) --it;
    return sample_uniform(it->first, rng);
}

DensityGrid DensityGrid::from_points(Box region, int rows, int cols, const std::vector<Point2>& points, double floor) {
    std::vector<double> w(static_cast<std::size_t>(rows) * cols, floor);
    for (const auto& p : points) {
        const int c = std::clamp(static_cast<int>((p.x - region.lo.x) / region.width() * cols), 0, cols - 1);
        const int r = std::clamp(static_cast<int>((p.y - region.lo.y) / region.height() * rows), 0, rows - 1);
        w[static_cast<std::size_t>(r) * cols + c] += 1;
    }
    return DensityGrid(region, rows, cols, std::move(w));
}

DensityGrid DensityGrid::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open density file " + path);
    std::string line;
    auto fields = [](const std::string& l) {
        std::vector<std::string> out;
        std::stringstream ss(l);
        std::string f;
        while (std::getline(ss, f, ',')) out.push_back(f);
        return out;
    };
    auto num = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            return v;
        } catch (const std::exception&) {
            throw DataError("bad number '" + s + "' in " + path);
        }
    };
    if (!std::getline(in, line)) throw DataError("density file is empty");
    if (!std::getline(in, line)) throw DataError("density file lacks the dimension line");
    const auto dims = fields(line);
    if (dims.size() != 6) throw DataError("density dimension line needs 6 fields");
    const int rows = static_cast<int>(num(dims[0])), cols = static_cast<int>(num(dims[1]));
    const Box region{{num(dims[2]), num(dims[3])}, {num(dims[4]), num(dims[5])}};
    if (rows < 1 || cols < 1) throw DataError("density grid needs rows, cols >= 1");
    if (!std::getline(in, line)) throw DataError("density file lacks the row,col,weight header");
    std::vector<double> w(static_cast<std::size_t>(rows) * cols, 0.0);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = fields(line);
        if (f.size() != 3) throw DataError("density rows need row,col,weight");
        const int r = static_cast<int>(num(f[0])), c = static_cast<int>(num(f[1]));
        if (r < 0 || r >= rows || c < 0 || c >= cols) throw DataError("density cell index out of range");
        w[static_cast<std::size_t>(r) * cols + c] = num(f[2]);
    }
    return DensityGrid(region, rows, cols, std::move(w));
}

void DensityGrid::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << std::setprecision(17) << "rows,cols,lo_x,lo_y,hi_x,hi_y\n"
        << rows_ << ',' << cols_ << ',' << region_.lo.x << ',' << region_.lo.y << ',' << region_.hi.x << ','
        << region_.hi.y << "\nrow,col,weight\n";
    for (int r = 0; r < rows_; ++r)
        for (int c = 0; c < cols_; ++c)
            if (weight(r, c) != 0) out << r << ',' << c << ',' << weight(r, c) << '\n';
}

}  // namespace lbsagg
