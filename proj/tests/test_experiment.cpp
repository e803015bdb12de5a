#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ncdyadic/experiment.hpp"

using namespace ncdyadic;
namespace fs = std::filesystem;

namespace {
std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("ncdyadic_test_" + tag);
    fs::remove_all(p);
    return p;
}
}  // namespace

TEST_CASE("config parsing") {
    nlohmann::json j = {{"suite", "czd"},
                        {"seed", 7},
                        {"lattice", {{"d", 1}, {"K", 5}}},
                        {"measure", {{"preset", "uniform"}}},
                        {"field", {{"n", 2}}},
                        {"lambda", {{"auto", 1.5}}},
                        {"instances", 3}};
    auto cfg = ExperimentConfig::from_json(j);
    CHECK(cfg.suite == "czd");
    CHECK(cfg.K == 5);
    CHECK(cfg.instances == 3);

    CHECK_THROWS_AS(ExperimentConfig::from_json({{"suite", "bogus"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"seed", 1}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_file("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("czd suite reports six passing ratios") {
    nlohmann::json j = {{"suite", "czd"},
                        {"seed", 7},
                        {"lattice", {{"d", 1}, {"K", 6}}},
                        {"measure", {{"preset", "uniform"}}},
                        {"field", {{"n", 2}}},
                        {"lambda", {{"auto", 1.4}}},
                        {"instances", 4}};
    auto dir = temp_dir("czd");
    auto result = run(ExperimentConfig::from_json(j), dir.string());
    CHECK(result.all_pass);
    CHECK(result.exit_code == 0);

    std::string csv = slurp(result.csv_path);
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header ==
          "instance,seed,lambda,ratio_a,ratio_b,ratio_c,ratio_d,ratio_e,ratio_f,"
          "recon_residual,identity_residual,pass");
    int rows = 0;
    for (std::string line; std::getline(lines, line);) {
        ++rows;
        // six ratio columns all <= 1
        std::istringstream cells(line);
        std::string cell;
        for (int c = 0; c < 3; ++c) std::getline(cells, cell, ',');
        for (int c = 0; c < 6; ++c) {
            std::getline(cells, cell, ',');
            CHECK(std::stod(cell) <= 1.0 + 1e-8);
        }
    }
    CHECK(rows == 4);

    // per-check table alongside the summary
    std::string est = slurp((dir / "estimates.csv").string());
    CHECK(est.rfind("instance,check_id,lhs,rhs,ratio,pass\n", 0) == 0);
    CHECK(est.find("a_l2") != std::string::npos);
    CHECK(est.find("nullav") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("lambda sweep cycles over instances") {
    nlohmann::json j = {{"suite", "cuculescu"},
                        {"seed", 1},
                        {"lattice", {{"d", 1}, {"K", 4}}},
                        {"measure", {{"preset", "uniform"}}},
                        {"field", {{"n", 2}, {"seed", 5}}},
                        {"lambda", {{"sweep", {1.1, 2.0, 4.0}}}},
                        {"instances", 3}};
    auto dir = temp_dir("sweep");
    auto result = run(ExperimentConfig::from_json(j), dir.string());
    CHECK(result.all_pass);
    nlohmann::json rep;
    std::ifstream(result.json_path) >> rep;
    double l0 = rep.at("rows")[0].at("lambda").get<double>();
    double l1 = rep.at("rows")[1].at("lambda").get<double>();
    double l2 = rep.at("rows")[2].at("lambda").get<double>();
    CHECK(l1 == Catch::Approx(l0 * 2.0 / 1.1));
    CHECK(l2 == Catch::Approx(l0 * 4.0 / 1.1));
    fs::remove_all(dir);
}

TEST_CASE("haar suite on random measures") {
    nlohmann::json j = {{"suite", "haar"},
                        {"seed", 3},
                        {"lattice", {{"d", 1}, {"K", 5}}},
                        {"measure", {{"preset", "random"}}},
                        {"instances", 25}};
    auto dir = temp_dir("haar");
    auto result = run(ExperimentConfig::from_json(j), dir.string());
    CHECK(result.all_pass);
    fs::remove_all(dir);
}

TEST_CASE("cuculescu suite") {
    nlohmann::json j = {{"suite", "cuculescu"},
                        {"seed", 5},
                        {"lattice", {{"d", 1}, {"K", 5}}},
                        {"measure", {{"preset", "random"}}},
                        {"field", {{"n", 3}}},
                        {"lambda", {{"auto", 1.8}}},
                        {"instances", 10}};
    auto dir = temp_dir("cucu");
    auto result = run(ExperimentConfig::from_json(j), dir.string());
    CHECK(result.all_pass);
    fs::remove_all(dir);
}

TEST_CASE("shift suite emits the operator csv") {
    nlohmann::json j = {{"suite", "shift"},
                        {"seed", 11},
                        {"lattice", {{"d", 1}, {"K", 5}}},
                        {"measure", {{"preset", "uniform"}}},
                        {"field", {{"n", 2}}},
                        {"operator", {{"preset", "dyadic_hilbert"}}},
                        {"instances", 5}};
    auto dir = temp_dir("shift");
    auto result = run(ExperimentConfig::from_json(j), dir.string());
    CHECK(result.all_pass);
    std::string csv = slurp(result.csv_path);
    CHECK(csv.rfind("operator,measure,Xi,testing_C,l2norm,wt_ratio\n", 0) == 0);
    CHECK(csv.find("dyadic_hilbert,uniform,") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("wt-scan sweeps the measure family") {
    nlohmann::json j = {{"suite", "wt-scan"},
                        {"seed", 2},
                        {"lattice", {{"d", 1}, {"K", 6}}},
                        {"operator", {{"preset", "dyadic_hilbert"}}},
                        {"field", {{"n", 1}}},
                        {"sweep", {{"measure_preset", "left_loaded"}}},
                        {"instances", 3}};
    auto dir = temp_dir("wtscan");
    auto result = run(ExperimentConfig::from_json(j), dir.string());
    CHECK(result.all_pass);

    std::string csv = slurp(result.csv_path);
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "delta,Xi,wt_ratio");
    int rows = 0;
    double prev_delta = 1.0;
    for (std::string line; std::getline(lines, line);) {
        ++rows;
        std::istringstream cells(line);
        std::string cell;
        std::getline(cells, cell, ',');
        double delta = std::stod(cell);
        CHECK(delta < prev_delta);  // the default sweep halves delta each row
        prev_delta = delta;
    }
    CHECK(rows == 8);
    fs::remove_all(dir);
}

TEST_CASE("same seed reproduces byte-identical csv") {
    for (const std::string suite : {"haar", "cuculescu", "czd", "shift", "wt-scan"}) {
        nlohmann::json j = {{"suite", suite},
                            {"seed", 99},
                            {"lattice", {{"d", 1}, {"K", 4}}},
                            {"measure", {{"preset", "random"}}},
                            {"field", {{"n", 2}}},
                            {"operator", {{"preset", "multiplier"}}},
                            {"instances", 4}};
        auto cfg = ExperimentConfig::from_json(j);
        auto dir1 = temp_dir(suite + "_a");
        auto dir2 = temp_dir(suite + "_b");
        auto r1 = run(cfg, dir1.string());
        auto r2 = run(cfg, dir2.string());
        INFO("suite " << suite);
        CHECK(slurp(r1.csv_path) == slurp(r2.csv_path));
        CHECK(slurp(r1.json_path) == slurp(r2.json_path));
        fs::remove_all(dir1);
        fs::remove_all(dir2);
    }
}

TEST_CASE("reports carry seeds and digests") {
    nlohmann::json j = {{"suite", "cuculescu"},
                        {"seed", 123},
                        {"lattice", {{"d", 1}, {"K", 4}}},
                        {"measure", {{"preset", "random"}}},
                        {"field", {{"n", 2}}},
                        {"instances", 2}};
    auto dir = temp_dir("meta");
    auto result = run(ExperimentConfig::from_json(j), dir.string());
    nlohmann::json rep;
    std::ifstream(result.json_path) >> rep;
    CHECK(rep.at("seed") == 123);
    for (const auto& row : rep.at("rows")) {
        CHECK(row.contains("seed"));
        CHECK(row.at("measure_digest").get<std::string>().size() == 16);
        CHECK(row.at("field_digest").get<std::string>().size() == 16);
    }
    // the timestamp lives only in the sidecar
    CHECK(slurp(result.json_path).find("timestamp") == std::string::npos);
    CHECK(slurp(result.meta_path).find("timestamp_unix_ms") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("parallel_for respects the thread cap and stays ordered") {
    std::vector<int> out(64, -1);
    parallel_for(64, [&](std::size_t i) { out[i] = static_cast<int>(2 * i); });
    for (int i = 0; i < 64; ++i) CHECK(out[i] == 2 * i);

    CHECK_THROWS_AS(parallel_for(8,
                                 [&](std::size_t i) {
                                     if (i == 3) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}
