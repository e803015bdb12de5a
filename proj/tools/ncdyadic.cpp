// ncdyadic command line: run config-driven experiment suites, validate data
// files, and summarize report directories.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ncdyadic/experiment.hpp"

namespace {

int cmd_run(const std::string& config_path, std::string out_dir) {
    ncdyadic::ExperimentConfig cfg = ncdyadic::ExperimentConfig::from_file(config_path);
    if (out_dir.empty()) out_dir = cfg.output.empty() ? "report" : cfg.output;
    ncdyadic::RunResult result = ncdyadic::run(cfg, out_dir);
    std::cout << "suite " << cfg.suite << (result.all_pass ? ": all checks passed" : ": FAILURES")
              << "\n  " << result.csv_path << "\n  " << result.json_path << '\n';
    return result.exit_code;
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ncdyadic::ConfigError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ncdyadic::ConfigError(path + " is not valid JSON: " + e.what());
    }
    return j;
}

int cmd_validate(const std::string& kind, const std::string& path,
                 const std::string& measure_path) {
    using namespace ncdyadic;
    if (kind == "measure") {
        Measure mu = Measure::from_json(read_json(path));
        MeasureValidation v = validate_measure(mu);
        std::cout << "leaves=" << mu.lattice().n_leaves() << " total_mass=" << fmt(mu.total())
                  << " zero_leaves=" << v.zero_leaves
                  << " max_doubling_ratio=" << fmt(v.max_doubling_ratio) << '\n';
        for (const auto& f : v.failures) std::cout << "failure: " << f << '\n';
        std::cout << (v.valid ? "valid" : "INVALID") << '\n';
        return v.valid ? 0 : 1;
    }
    if (kind == "system") {
        if (measure_path.empty()) {
            // structural checks only: coefficient counts and addressing
            nlohmann::json j = read_json(path);
            int max_level = 0;
            std::uint64_t children = 0;
            for (const auto& c : j.at("cubes")) {
                max_level = std::max(max_level, c.at("level").get<int>());
                if (!c.value("zero", false)) children = c.at("coeffs").size();
            }
            int d = 0;
            while (children > 1u << d) ++d;
            DyadicLattice lattice(std::max(d, 1), max_level + 1);
            HaarSystem::from_json(lattice, j);
            std::cout << "structurally valid (pass --measure for the numeric checks)\n";
            return 0;
        }
        Measure mu = Measure::from_json(read_json(measure_path));
        HaarSystem sys = HaarSystem::from_json(mu.lattice(), read_json(path));
        HaarValidation v = validate_system(sys, mu);
        std::cout << "mean_residual=" << fmt(v.worst_mean_residual)
                  << " norm_residual=" << fmt(v.worst_norm_residual)
                  << " gram_residual=" << fmt(v.worst_gram_residual)
                  << " zero_on_positive=" << v.zero_on_positive_cube << '\n';
        for (const auto& f : v.failures) std::cout << "failure: " << f << '\n';
        std::cout << (v.all_pass ? "valid" : "INVALID") << '\n';
        return v.all_pass ? 0 : 1;
    }
    if (kind == "field") {
        if (measure_path.empty())
            throw ConfigError("validate field needs --measure to pin the lattice");
        Measure mu = Measure::from_json(read_json(measure_path));
        OperatorField f = OperatorField::from_json(mu.lattice(), read_json(path));
        bool finite = true;
        double min_eig = 0.0;
        for (std::uint64_t x = 0; x < f.n_leaves(); ++x) {
            if (!f[x].allFinite()) finite = false;
            else min_eig = std::min(min_eig, min_eigenvalue(ncdyadic::hermitize(f[x])));
        }
        std::cout << "n=" << f.n() << " finite=" << (finite ? "yes" : "NO")
                  << " self_adjointness_residual=" << fmt(f.max_self_adjointness_residual())
                  << " min_eigenvalue=" << fmt(min_eig) << '\n';
        return finite ? 0 : 1;
    }
    if (kind == "shift") {
        if (measure_path.empty())
            throw ConfigError("validate shift needs --measure to pin the lattice");
        Measure mu = Measure::from_json(read_json(measure_path));
        HaarShift sh = HaarShift::from_json(mu.lattice(), read_json(path));
        std::cout << "r=" << sh.r << " s=" << sh.s
                  << " sup_alpha=" << fmt(sh.max_symbol_modulus())
                  << " carriers<=level " << sh.max_carrier_level() << '\n';
        std::cout << "valid\n";
        return 0;
    }
    throw ncdyadic::ConfigError("unknown validate kind '" + kind +
                                "' (expected measure|system|field|shift)");
}

int cmd_report(const std::string& dir) {
    namespace fs = std::filesystem;
    nlohmann::json j = read_json((fs::path(dir) / "report.json").string());
    std::cout << "suite: " << j.value("suite", std::string("?")) << '\n';
    std::cout << "rows:  " << j.value("rows", nlohmann::json::array()).size() << '\n';
    bool pass = j.value("all_pass", false);
    std::size_t failures = 0;
    for (const auto& row : j.value("rows", nlohmann::json::array()))
        if (row.is_object() && row.contains("pass") && !row.at("pass").get<bool>()) ++failures;
    if (failures > 0) std::cout << "failing rows: " << failures << '\n';
    std::cout << (pass ? "all checks passed" : "FAILURES present") << '\n';
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dyadic operator-valued decomposition and Haar shift toolbox"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    auto* run = app.add_subcommand("run", "run an experiment suite from a JSON config");
    run->add_option("config", config_path, "experiment config (JSON)")->required();
    run->add_option("-o,--output", out_dir, "report directory (overrides config)");

    std::string kind, file, measure_path;
    auto* validate = app.add_subcommand("validate", "validate a data file");
    validate->add_option("kind", kind, "measure|system|field|shift")->required();
    validate->add_option("file", file, "file to check")->required();
    validate->add_option("--measure", measure_path, "measure file fixing the lattice");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "summarize a report directory");
    report->add_option("dir", report_dir, "directory with report.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir);
        if (validate->parsed()) return cmd_validate(kind, file, measure_path);
        return cmd_report(report_dir);
    } catch (const ncdyadic::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ncdyadic::ErrorCode::Config);
    }
}
