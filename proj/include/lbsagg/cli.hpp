#pragma once

// Command-line front end. `run` parses arguments, executes one subcommand
// and writes its report; the executable in tools/ is a thin wrapper.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lbsagg/aggregate.hpp"
#include "lbsagg/density.hpp"
#include "lbsagg/estimator.hpp"
#include "lbsagg/oracle.hpp"

namespace lbsagg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBudget = 3;

struct RunConfig {
    std::string dataset;
    std::optional<std::vector<double>> region;  // lo_x, lo_y, hi_x, hi_y
    int k = 1;
    std::string mode = "lr";
    std::optional<double> max_radius;
    std::optional<std::int64_t> budget;
    std::string aggregate = "COUNT";
    std::optional<std::string> condition;
    bool pass_through = false;
    std::string sampler = "uniform";
    std::string density_path;
    int density_grid = 0;  // build the density from the tuples on an n x n grid
    std::optional<double> epsilon;
    std::optional<double> delta;
    std::optional<double> delta_prime;
    bool fast_init = false;
    std::optional<double> fast_init_halfwidth;
    bool history = false;
    bool adaptive_h = false;
    bool mc_shortcut = false;
    bool reuse_cells = false;
    std::int64_t per_sample_cap = 500;
    std::uint64_t seed = 1;
    int repetitions = 1;
    std::optional<std::int64_t> samples;
    std::string output;

    Mode oracle_mode() const;
    OracleConfig oracle_config() const;
    AggregateSpec aggregate_spec() const;
    LrOptions lr_options() const;
    EstimatorConfig estimator_config(const Dataset& data) const;
    BinarySearchParams search_params(const Box& region) const;
    std::optional<Box> region_box() const;
};

/// Runs the command line; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lbsagg::cli
