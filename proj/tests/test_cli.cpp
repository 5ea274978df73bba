#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "json.hpp"
#include "lbsagg/dataset.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

std::string cli_path() {
    const char* p = std::getenv("LBSAGG_CLI");
    REQUIRE_MESSAGE(p != nullptr, "LBSAGG_CLI must point at the lbsagg executable");
    return p;
}

Result run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>/dev/null";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path scratch() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("lbsagg_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string dataset(const std::string& name, const lbsagg::Dataset& d) {
    const auto path = (scratch() / name).string();
    d.save_csv(path);
    return path;
}

}  // namespace

TEST_CASE("gen-data writes a loadable dataset") {
    const auto path = (scratch() / "gen.csv").string();
    auto r = run("gen-data --generator clusters --n 300 --seed 4 --output " + path);
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["n"] == 300);
    auto d = lbsagg::Dataset::load_csv(path);
    CHECK(d.size() == 300);
}

TEST_CASE("estimate reports the error against ground truth and reconciles queries") {
    const auto path = dataset("u1000.csv", lbsagg::generate_uniform(1000, 7));
    auto r = run("estimate --dataset " + path + " --budget 4000 --fast-init --history");
    REQUIRE(r.code == 0);
    auto j = json::parse(r.out);
    CHECK(j["ground_truth"] == 1000.0);
    const auto& run0 = j["runs"][0];
    CHECK(run0.contains("relative_error"));
    CHECK(run0["queries"] == 4000);
    CHECK(run0["ledger"]["total"] == run0["queries"]);
    const auto& l = run0["ledger"];
    CHECK(l["init"].get<int>() + l["vertex_test"].get<int>() + l["binary_search"].get<int>() +
              l["mc_trial"].get<int>() ==
          4000);
    CHECK(j["summary"]["total_queries"] == 4000);
}

TEST_CASE("SUM over unit weights equals COUNT with the same seed") {
    std::vector<lbsagg::SpatialTuple> ts;
    for (const auto& t : lbsagg::generate_uniform(300, 2).tuples()) ts.push_back({t.id, t.loc, {{"weight", 1.0}}});
    const auto path = dataset("ones.csv", lbsagg::Dataset(ts, lbsagg::Box{{0, 0}, {1, 1}}));
    auto a = json::parse(run("estimate --dataset " + path + " --budget 2000 --aggregate COUNT").out);
    auto b = json::parse(run("estimate --dataset " + path + " --budget 2000 --aggregate 'SUM(weight)'").out);
    CHECK(a["runs"][0]["value"].get<double>() == doctest::Approx(b["runs"][0]["value"].get<double>()).epsilon(1e-12));
}

TEST_CASE("zero budget gives an error report and exit code 3") {
    const auto path = dataset("small.csv", lbsagg::generate_uniform(50, 1));
    auto r = run("estimate --dataset " + path + " --budget 0");
    CHECK(r.code == 3);
    auto j = json::parse(r.out);
    CHECK(j.contains("error"));
    CHECK(j["runs"][0].contains("error"));
}

TEST_CASE("same seed gives byte-identical reports") {
    const auto path = dataset("det.csv", lbsagg::generate_clusters(400, 3, 0.05, 9));
    const std::string args = "estimate --dataset " + path + " --budget 3000 --k 3 --adaptive-h --history --seed 11";
    auto a = run(args), b = run(args);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    auto c = run("estimate --dataset " + path + " --budget 3000 --k 3 --adaptive-h --history --seed 12");
    CHECK(c.out != a.out);
}

TEST_CASE("configuration file with command-line overrides") {
    const auto path = dataset("cfg.csv", lbsagg::generate_uniform(200, 3));
    const auto cfg = (scratch() / "run.cfg").string();
    std::ofstream(cfg) << "dataset=" << path << "\nbudget=1500\naggregate=SUM(weight)\ncondition=category=a\n"
                       << "fast-init=true\nseed=5\n";
    auto j = json::parse(run("estimate --config " + cfg + " --budget 800").out);
    CHECK(j["config"]["budget"] == 800);
    CHECK(j["config"]["aggregate"] == "SUM(weight)");
    CHECK(j["config"]["condition"] == "category=a");
    CHECK(j["config"]["fast_init"] == true);
    CHECK(j["config"]["seed"] == 5);
    CHECK(j["runs"][0]["queries"] == 800);
}

TEST_CASE("configuration errors exit with code 2") {
    const auto path = dataset("err.csv", lbsagg::generate_uniform(20, 3));
    CHECK(run("estimate --dataset " + path + " --budget 100 --mode xyz").code == 2);
    CHECK(run("estimate --dataset /nonexistent.csv --budget 100").code == 2);
    CHECK(run("estimate --dataset " + path).code == 2);  // no budget and no sample count
    CHECK(run("estimate --dataset " + path + " --budget 100 --aggregate 'SUM()'").code == 2);
    CHECK(run("verify-cell --dataset " + path + " --id 12345").code == 2);
    CHECK(run("locate --dataset " + path + " --id 1").code == 2);  // needs rank-only mode
    CHECK(run("frobnicate").code == 2);
    CHECK(run("--help").code == 0);
}

TEST_CASE("verify-cell: exact cells on 200 tuples and the rank-only ratio bound") {
    const auto path = dataset("v200.csv", lbsagg::generate_uniform(200, 21));
    auto lr = json::parse(run("verify-cell --dataset " + path).out);
    CHECK(lr["summary"]["cells"] == 200);
    CHECK(lr["summary"]["all_exact"] == true);
    CHECK(lr["summary"]["max_vertex_deviation"].get<double>() <= 1e-9);
    auto lnr = json::parse(run("verify-cell --dataset " + path + " --mode lnr").out);
    CHECK(lnr["summary"]["ratio_bound_holds"] == true);
}

TEST_CASE("verify-cell on the circle construction grows linearly") {
    std::vector<double> per_n;
    for (int n : {16, 64, 256}) {
        const auto path = dataset("circle" + std::to_string(n) + ".csv", lbsagg::generate_circle(n, 0.4));
        auto j = json::parse(run("verify-cell --dataset " + path + " --id 0").out);
        per_n.push_back(j["summary"]["total_queries"].get<double>() / n);
    }
    const auto [lo, hi] = std::minmax_element(per_n.begin(), per_n.end());
    CHECK(*hi / *lo <= 1.5);
}

TEST_CASE("locate: symmetric instance and a partial report on a tiny budget") {
    std::vector<lbsagg::SpatialTuple> ts{{1, {0.5, 0.5}, {}}};
    for (int i = 0; i < 6; ++i) {
        const double a = std::numbers::pi / 3 * i + 0.1;
        ts.push_back({i + 2, {0.5 + 0.3 * std::cos(a), 0.5 + 0.3 * std::sin(a)}, {}});
    }
    const auto path = dataset("sym.csv", lbsagg::Dataset(ts, lbsagg::Box{{0, 0}, {1, 1}}));
    auto r = run("locate --dataset " + path + " --mode lnr --x 0.52 --y 0.47 --epsilon 1e-5");
    REQUIRE(r.code == 0);
    auto j = json::parse(r.out);
    CHECK(j["tuples"][0]["id"] == 1);
    CHECK(j["tuples"][0]["error"].get<double>() <= 1e-5);
    CHECK(j["tuples"][0]["extra_binary_searches"] == 2);

    auto p = run("locate --dataset " + path + " --mode lnr --id 1 --budget 20");
    CHECK(p.code == 3);
    CHECK(json::parse(p.out)["summary"]["partial"] == true);
}

TEST_CASE("locate --all reports an error distribution and the feature filter") {
    const auto path = dataset("loc.csv", lbsagg::generate_uniform(100, 5));
    auto j = json::parse(
        run("locate --dataset " + path + " --mode lnr --all --feature 0,0.5,1,0.5 --feature-distance 0.1").out);
    const auto& s = j["summary"];
    CHECK(s["located"].get<int>() + s["failures"].get<int>() == 100);
    CHECK(s["error_quantiles"]["p050"].get<double>() <= 5 * j["epsilon"].get<double>());
    CHECK(s.contains("near_feature_agreement"));
}

TEST_CASE("benchmark CSV is append-safe with a stable header") {
    const auto out = (scratch() / "bench.csv").string();
    fs::remove(out);
    const std::string args = "benchmark --generator clusters --sizes 150 --runs 2 --budget 1500 --variants "
                             "lr-agg-0,fast-init+history,lr-agg-weighted --output " + out;
    REQUIRE(run(args).code == 0);
    REQUIRE(run(args).code == 0);
    std::ifstream f(out);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(f, line)) lines.push_back(line);
    REQUIRE(lines.size() == 7);
    CHECK(lines[0].rfind("variant,dataset,n,k,", 0) == 0);
    CHECK(std::count(lines.begin(), lines.end(), lines[0]) == 1);
    CHECK(lines[1] == lines[4]);
}
