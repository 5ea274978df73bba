#include "lbsagg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

namespace lbsagg {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    }
    return out;
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

void add_standard_attrs(SpatialTuple& t, std::mt19937_64& rng) {
    static const char* kCategories[] = {"a", "b", "c"};
    t.attrs["weight"] = 0.5 + uniform01(rng);
    t.attrs["category"] = std::string(kCategories[static_cast<int>(uniform01(rng) * 3)]);
}

}  // namespace

Dataset::Dataset(std::vector<SpatialTuple> tuples, std::optional<Box> region) : tuples_(std::move(tuples)) {
    if (tuples_.empty() && !region) throw DataError("empty dataset needs an explicit region");
    for (std::size_t i = 0; i < tuples_.size(); ++i) {
        if (!index_.emplace(tuples_[i].id, i).second)
            throw DataError("duplicate tuple id " + std::to_string(tuples_[i].id));
    }
    if (region) {
        region_ = *region;
    } else {
        Box b{tuples_[0].loc, tuples_[0].loc};
        for (const auto& t : tuples_) {
            b.lo = Point2{std::min(b.lo.x, t.loc.x), std::min(b.lo.y, t.loc.y)};
            b.hi = Point2{std::max(b.hi.x, t.loc.x), std::max(b.hi.y, t.loc.y)};
        }
        if (b.width() <= 0) b = Box{{b.lo.x - 0.5, b.lo.y}, {b.hi.x + 0.5, b.hi.y}};
        if (b.height() <= 0) b = Box{{b.lo.x, b.lo.y - 0.5}, {b.hi.x, b.hi.y + 0.5}};
        region_ = b.inflated(0.01);
    }
    if (!(region_.width() > 0) || !(region_.height() > 0)) throw DataError("region has zero extent");
    std::vector<std::pair<double, double>> locs;
    for (const auto& t : tuples_) {
        if (!region_.contains(t.loc, 0.0))
            throw DataError("tuple " + std::to_string(t.id) + " lies outside the region");
        locs.emplace_back(t.loc.x, t.loc.y);
    }
    std::sort(locs.begin(), locs.end());
    if (std::adjacent_find(locs.begin(), locs.end()) != locs.end()) throw DataError("duplicate tuple location");
}

const SpatialTuple& Dataset::by_id(TupleId id) const { return tuples_[index_of(id)]; }

std::size_t Dataset::index_of(TupleId id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw DataError("unknown tuple id " + std::to_string(id));
    return it->second;
}

Dataset Dataset::load_csv(const std::string& path, std::optional<Box> region) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("dataset " + path + " is empty");
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "x" || header[2] != "y")
        throw DataError("dataset header must start with id,x,y");
    std::vector<SpatialTuple> tuples;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size())
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                            " fields");
        const auto x = parse_double(f[1]), y = parse_double(f[2]);
        if (!x || !y) throw DataError(path + ":" + std::to_string(lineno) + ": bad coordinate");
        SpatialTuple t;
        const auto [ptr, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), t.id);
        if (ec != std::errc{} || ptr != f[0].data() + f[0].size())
            throw DataError(path + ":" + std::to_string(lineno) + ": id must be an integer");
        t.loc = Point2{*x, *y};
        for (std::size_t c = 3; c < f.size(); ++c) {
            if (auto v = parse_double(f[c]))
                t.attrs[header[c]] = *v;
            else
                t.attrs[header[c]] = f[c];
        }
        tuples.push_back(std::move(t));
    }
    return Dataset(std::move(tuples), region);
}

void Dataset::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    std::set<std::string> names;
    for (const auto& t : tuples_)
        for (const auto& [k, v] : t.attrs) names.insert(k);
    out << "id,x,y";
    for (const auto& n : names) out << ',' << n;
    out << '\n' << std::setprecision(17);
    for (const auto& t : tuples_) {
        out << t.id << ',' << t.loc.x << ',' << t.loc.y;
        for (const auto& n : names) {
            out << ',';
            const auto it = t.attrs.find(n);
            if (it == t.attrs.end()) continue;
            if (const auto* d = std::get_if<double>(&it->second))
                out << *d;
            else
                out << std::get<std::string>(it->second);
        }
        out << '\n';
    }
}

Dataset generate_uniform(int n, std::uint64_t seed, Box box) {
    std::mt19937_64 rng(seed);
    std::vector<SpatialTuple> tuples;
    for (int i = 0; i < n; ++i) {
        SpatialTuple t;
        t.id = i;
        t.loc = Point2{box.lo.x + uniform01(rng) * box.width(), box.lo.y + uniform01(rng) * box.height()};
        add_standard_attrs(t, rng);
        tuples.push_back(std::move(t));
    }
    return Dataset(std::move(tuples), box);
}

Dataset generate_clusters(int n, int clusters, double sigma, std::uint64_t seed, Box box) {
    if (clusters < 1) throw DataError("need at least one cluster");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    std::vector<Point2> centers;
    for (int c = 0; c < clusters; ++c)
        centers.push_back(Point2{box.lo.x + (0.15 + 0.7 * uniform01(rng)) * box.width(),
                                 box.lo.y + (0.15 + 0.7 * uniform01(rng)) * box.height()});
    std::vector<SpatialTuple> tuples;
    for (int i = 0; i < n; ++i) {
        const Point2 c = centers[i % clusters];
        Point2 p;
        do {
            p = Point2{c.x + gauss(rng) * box.width(), c.y + gauss(rng) * box.height()};
        } while (!box.contains(p, 0.0));
        SpatialTuple t;
        t.id = i;
        t.loc = p;
        add_standard_attrs(t, rng);
        tuples.push_back(std::move(t));
    }
    return Dataset(std::move(tuples), box);
}

Dataset generate_circle(int n, double radius, Box box) {
    if (n < 2) throw DataError("circle layout needs n >= 2");
    const Point2 c = midpoint(box.lo, box.hi);
    std::vector<SpatialTuple> tuples;
    tuples.push_back({0, c, {{"weight", 1.0}, {"category", std::string("a")}}});
    for (int i = 1; i < n; ++i) {
        const double a = 2 * std::numbers::pi * (i - 1) / (n - 1);
        tuples.push_back({i, c + Point2{std::cos(a), std::sin(a)} * radius,
                          {{"weight", 1.0}, {"category", std::string("a")}}});
    }
    return Dataset(std::move(tuples), box);
}

double numeric_attr(const AttrMap& attrs, const std::string& name) {
    const auto it = attrs.find(name);
    if (it == attrs.end()) throw DataError("missing attribute " + name);
    if (const auto* d = std::get_if<double>(&it->second)) return *d;
    throw DataError("attribute " + name + " is not numeric");
}

}  // namespace lbsagg
