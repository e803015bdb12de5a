// Config-driven experiment harness: builds measures, fields and operators
// from a JSON document, runs the selected verification suite, and writes
// report.csv / report.json plus a meta.json sidecar (the only output that
// carries a timestamp).  Re-running the same config with the same seed
// reproduces report.csv byte for byte.
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncdyadic/czd.hpp"
#include "ncdyadic/generate.hpp"
#include "ncdyadic/shift.hpp"

namespace ncdyadic {

// ---------------------------------------------------------------------------
// small utilities

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string digest(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t state = base ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return detail::splitmix64(state);
}

inline int max_threads() {
    if (const char* env = std::getenv("NCDYADIC_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

// Ordered results regardless of scheduling: workers pull indices, outputs go
// into preallocated slots.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    std::size_t threads = std::min<std::size_t>(max_threads(), count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// configuration

struct ExperimentConfig {
    std::string suite;  // haar | cuculescu | czd | shift | wt-scan
    std::uint64_t seed = 1;
    int d = 1;
    int K = 4;
    int instances = 1;
    nlohmann::json measure = {{"preset", "uniform"}};
    nlohmann::json field = nlohmann::json::object();
    nlohmann::json op = {{"preset", "multiplier"}};
    nlohmann::json lambda = {{"auto", 2.0}};
    nlohmann::json sweep = nlohmann::json::object();
    std::string output;  // report directory; the CLI falls back to ./report
    nlohmann::json raw;

    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig cfg;
        try {
            cfg.suite = j.at("suite").get<std::string>();
            cfg.seed = j.value("seed", std::uint64_t{1});
            if (j.contains("lattice")) {
                cfg.d = j.at("lattice").value("d", 1);
                cfg.K = j.at("lattice").value("K", 4);
            }
            cfg.instances = j.value("instances", 1);
            if (j.contains("measure")) cfg.measure = j.at("measure");
            if (j.contains("field")) cfg.field = j.at("field");
            if (j.contains("operator")) cfg.op = j.at("operator");
            if (j.contains("lambda")) cfg.lambda = j.at("lambda");
            if (j.contains("sweep")) cfg.sweep = j.at("sweep");
            cfg.output = j.value("output", std::string{});
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("bad experiment config: ") + e.what());
        }
        if (cfg.suite != "haar" && cfg.suite != "cuculescu" && cfg.suite != "czd" &&
            cfg.suite != "shift" && cfg.suite != "wt-scan")
            throw ConfigError("unknown suite '" + cfg.suite + "'");
        if (cfg.instances < 1) throw ConfigError("instances must be >= 1");
        cfg.raw = j;
        return cfg;
    }

    static ExperimentConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        return from_json(j);
    }

    Measure resolve_measure(const DyadicLattice& lattice, std::uint64_t instance_seed) const {
        if (measure.contains("file")) return load_measure(measure.at("file").get<std::string>());
        nlohmann::json params = measure.value("params", nlohmann::json::object());
        if (!params.contains("seed")) params["seed"] = instance_seed;
        return preset_measure(measure.value("preset", std::string("uniform")), lattice, params);
    }

    OperatorField resolve_field(const DyadicLattice& lattice, std::uint64_t instance_seed) const {
        if (field.contains("file"))
            return load_field(lattice, field.at("file").get<std::string>());
        FieldSpec spec = FieldSpec::from_json(field);
        if (!field.contains("seed")) spec.seed = instance_seed;
        return generate_field(lattice, spec);
    }

    HaarShift resolve_operator(const Measure& mu) const {
        if (op.contains("file")) {
            HaarShift sh = load_shift(mu.lattice(), op.at("file").get<std::string>());
            sh.phi = canonical_system(mu);
            sh.psi = canonical_system(mu);
            return sh;
        }
        return preset_shift(op.value("preset", std::string("multiplier")), mu,
                            op.value("params", nlohmann::json::object()));
    }

    // value: fixed height; auto: multiple of the smallest admissible height;
    // sweep: list of auto multiples cycled over the instances.
    double resolve_lambda(const OperatorField& f, const Measure& mu,
                          std::size_t instance = 0) const {
        if (lambda.contains("value")) return lambda.at("value").get<double>();
        if (lambda.contains("sweep")) {
            auto factors = lambda.at("sweep").get<std::vector<double>>();
            if (factors.empty()) throw ConfigError("lambda sweep must not be empty");
            return factors[instance % factors.size()] * minimal_lambda(f, mu);
        }
        double factor = lambda.value("auto", 2.0);
        return std::max(factor * minimal_lambda(f, mu), 1e-300);
    }
};

// ---------------------------------------------------------------------------
// report assembly

struct SuiteReport {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;  // formatted cells
    nlohmann::json details = nlohmann::json::array();
    bool all_pass = true;

    // additional per-check tables written next to report.csv
    struct ExtraTable {
        std::string filename;
        std::vector<std::string> columns;
        std::vector<std::vector<std::string>> rows;
    };
    std::vector<ExtraTable> extras;
};

struct RunResult {
    bool all_pass = true;
    int exit_code = 0;
    std::string csv_path, json_path, meta_path;
};

namespace detail {

inline void write_reports(const ExperimentConfig& cfg, const SuiteReport& rep,
                          const std::string& out_dir, double runtime_seconds,
                          RunResult& result) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    result.csv_path = (fs::path(out_dir) / "report.csv").string();
    result.json_path = (fs::path(out_dir) / "report.json").string();
    result.meta_path = (fs::path(out_dir) / "meta.json").string();

    std::ofstream csv(result.csv_path);
    if (!csv) throw ConfigError("cannot write " + result.csv_path);
    for (std::size_t c = 0; c < rep.columns.size(); ++c)
        csv << rep.columns[c] << (c + 1 < rep.columns.size() ? "," : "\n");
    for (const auto& row : rep.rows)
        for (std::size_t c = 0; c < row.size(); ++c)
            csv << row[c] << (c + 1 < row.size() ? "," : "\n");
    csv.close();

    for (const auto& extra : rep.extras) {
        std::ofstream xcsv((fs::path(out_dir) / extra.filename).string());
        for (std::size_t c = 0; c < extra.columns.size(); ++c)
            xcsv << extra.columns[c] << (c + 1 < extra.columns.size() ? "," : "\n");
        for (const auto& row : extra.rows)
            for (std::size_t c = 0; c < row.size(); ++c)
                xcsv << row[c] << (c + 1 < row.size() ? "," : "\n");
    }

    nlohmann::json out = {{"suite", cfg.suite},
                          {"seed", cfg.seed},
                          {"config", cfg.raw},
                          {"all_pass", rep.all_pass},
                          {"rows", rep.details}};
    std::ofstream js(result.json_path);
    js << out.dump(2) << '\n';
    js.close();

    auto now = std::chrono::system_clock::now().time_since_epoch();
    nlohmann::json meta = {
        {"timestamp_unix_ms",
         std::chrono::duration_cast<std::chrono::milliseconds>(now).count()},
        {"runtime_seconds", runtime_seconds},
        {"threads", max_threads()}};
    std::ofstream ms(result.meta_path);
    ms << meta.dump(2) << '\n';

    result.all_pass = rep.all_pass;
    result.exit_code = rep.all_pass ? 0 : 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// suites

inline SuiteReport run_haar_suite(const ExperimentConfig& cfg) {
    SuiteReport rep;
    rep.columns = {"instance", "seed",         "measure_digest", "mean_residual",
                   "norm_residual", "gram_residual", "zero_on_positive", "pass"};
    DyadicLattice lattice(cfg.d, cfg.K);
    rep.rows.resize(cfg.instances);
    std::vector<nlohmann::json> details(cfg.instances);
    std::atomic<bool> all{true};

    parallel_for(cfg.instances, [&](std::size_t i) {
        std::uint64_t seed_i = mix_seed(cfg.seed, i);
        Measure mu = cfg.resolve_measure(lattice, seed_i);
        HaarSystem sys = canonical_system(mu);
        HaarValidation v = validate_system(sys, mu);
        bool pass = v.all_pass;
        if (!pass) all = false;
        std::string md = digest(mu.to_json());
        rep.rows[i] = {std::to_string(i),
                       std::to_string(seed_i),
                       md,
                       fmt(v.worst_mean_residual),
                       fmt(v.worst_norm_residual),
                       fmt(v.worst_gram_residual),
                       std::to_string(v.zero_on_positive_cube),
                       pass ? "1" : "0"};
        details[i] = {{"instance", i},
                      {"seed", seed_i},
                      {"measure_digest", md},
                      {"mean_residual", v.worst_mean_residual},
                      {"norm_residual", v.worst_norm_residual},
                      {"gram_residual", v.worst_gram_residual},
                      {"zero_on_positive", v.zero_on_positive_cube},
                      {"failures", v.failures},
                      {"pass", pass}};
    });
    for (auto& d : details) rep.details.push_back(std::move(d));
    rep.all_pass = all;
    return rep;
}

inline SuiteReport run_cuculescu_suite(const ExperimentConfig& cfg) {
    SuiteReport rep;
    rep.columns = {"instance",    "seed",        "lambda",      "projection",
                   "commutation", "upper_bound", "lower_bound", "trace_ratio",
                   "pass"};
    DyadicLattice lattice(cfg.d, cfg.K);
    rep.rows.resize(cfg.instances);
    std::vector<nlohmann::json> details(cfg.instances);
    std::atomic<bool> all{true};

    parallel_for(cfg.instances, [&](std::size_t i) {
        std::uint64_t seed_i = mix_seed(cfg.seed, i);
        Measure mu = cfg.resolve_measure(lattice, seed_i);
        OperatorField f = cfg.resolve_field(lattice, mix_seed(seed_i, 1));
        double lambda = cfg.resolve_lambda(f, mu, i);
        CuculescuResult res = cuculescu(f, mu, lambda);
        CuculescuReport v = verify_cuculescu(res, f, mu, lambda);
        if (!v.all_pass) all = false;
        rep.rows[i] = {std::to_string(i),
                       std::to_string(seed_i),
                       fmt(lambda),
                       fmt(v.projection_residual),
                       fmt(v.commutation_residual),
                       fmt(v.upper_bound_residual),
                       fmt(v.lower_bound_residual),
                       fmt(v.trace_ratio),
                       v.all_pass ? "1" : "0"};
        details[i] = {{"instance", i},
                      {"seed", seed_i},
                      {"lambda", lambda},
                      {"minimal_lambda", minimal_lambda(f, mu)},
                      {"measure_digest", digest(mu.to_json())},
                      {"field_digest", digest(f.to_json())},
                      {"projection_residual", v.projection_residual},
                      {"monotonicity_residual", v.monotonicity_residual},
                      {"commutation_residual", v.commutation_residual},
                      {"upper_bound_residual", v.upper_bound_residual},
                      {"terminal_norm_residual", v.terminal_norm_residual},
                      {"trace_ratio", v.trace_ratio},
                      {"lower_bound_residual", v.lower_bound_residual},
                      {"disjointness_residual", v.disjointness_residual},
                      {"partition_residual", v.partition_residual},
                      {"failures", v.failures},
                      {"pass", v.all_pass}};
    });
    for (auto& d : details) rep.details.push_back(std::move(d));
    rep.all_pass = all;
    return rep;
}

inline SuiteReport run_czd_suite(const ExperimentConfig& cfg) {
    SuiteReport rep;
    rep.columns = {"instance", "seed",    "lambda",  "ratio_a", "ratio_b",
                   "ratio_c",  "ratio_d", "ratio_e", "ratio_f", "recon_residual",
                   "identity_residual", "pass"};
    DyadicLattice lattice(cfg.d, cfg.K);
    rep.rows.resize(cfg.instances);
    std::vector<nlohmann::json> details(cfg.instances);
    std::vector<std::vector<std::vector<std::string>>> check_rows(cfg.instances);
    std::atomic<bool> all{true};

    parallel_for(cfg.instances, [&](std::size_t i) {
        std::uint64_t seed_i = mix_seed(cfg.seed, i);
        Measure mu = cfg.resolve_measure(lattice, seed_i);
        OperatorField f = cfg.resolve_field(lattice, mix_seed(seed_i, 1));
        double lambda = cfg.resolve_lambda(f, mu, i);
        CZParts parts = cz_decompose(f, mu, lambda);
        auto estimates = cz_estimates(parts, mu);
        auto identities = structural_identities(parts, mu);
        Reconstruction recon = cz_reconstruct(parts, mu);
        double f_l2 = std::max(1e-300, l2_norm(f, mu));

        bool pass = recon.residual <= 1e-9 * std::max(f_l2, 1e-300);
        auto ratio_of = [&](const std::string& id) {
            for (const auto& row : estimates)
                if (row.check_id == id) {
                    if (!row.pass) pass = false;
                    return row.ratio;
                }
            return 0.0;
        };
        double ra = ratio_of("a_l2"), rb = ratio_of("b_l1"), rc = ratio_of("c_l1");
        double rd = ratio_of("d_l2"), re = ratio_of("e_l1"), rf = ratio_of("f_l1");
        for (const auto& row : estimates)
            if (!row.pass) pass = false;
        double worst_identity = 0.0;
        for (const auto& row : identities) {
            worst_identity = std::max(worst_identity, row.lhs);
            if (!row.pass) pass = false;
        }
        if (!pass) all = false;

        rep.rows[i] = {std::to_string(i), std::to_string(seed_i), fmt(lambda),
                       fmt(ra),           fmt(rb),               fmt(rc),
                       fmt(rd),           fmt(re),               fmt(rf),
                       fmt(recon.residual), fmt(worst_identity), pass ? "1" : "0"};
        nlohmann::json checks = nlohmann::json::array();
        for (const auto* rows : {&estimates, &identities})
            for (const auto& row : *rows) {
                checks.push_back({{"check_id", row.check_id},
                                  {"lhs", row.lhs},
                                  {"rhs", row.rhs},
                                  {"ratio", row.ratio},
                                  {"pass", row.pass}});
                check_rows[i].push_back({std::to_string(i), row.check_id, fmt(row.lhs),
                                         fmt(row.rhs), fmt(row.ratio), row.pass ? "1" : "0"});
            }
        details[i] = {{"instance", i},
                      {"seed", seed_i},
                      {"lambda", lambda},
                      {"minimal_lambda", minimal_lambda(f, mu)},
                      {"measure_digest", digest(mu.to_json())},
                      {"field_digest", digest(f.to_json())},
                      {"recon_residual", recon.residual},
                      {"checks", std::move(checks)},
                      {"pass", pass}};
    });
    for (auto& d : details) rep.details.push_back(std::move(d));
    SuiteReport::ExtraTable estimates_table;
    estimates_table.filename = "estimates.csv";
    estimates_table.columns = {"instance", "check_id", "lhs", "rhs", "ratio", "pass"};
    for (auto& rows : check_rows)
        for (auto& row : rows) estimates_table.rows.push_back(std::move(row));
    rep.extras.push_back(std::move(estimates_table));
    rep.all_pass = all;
    return rep;
}

inline SuiteReport run_shift_suite(const ExperimentConfig& cfg) {
    SuiteReport rep;
    rep.columns = {"operator", "measure", "Xi", "testing_C", "l2norm", "wt_ratio"};
    DyadicLattice lattice(cfg.d, cfg.K);
    Measure mu = cfg.resolve_measure(lattice, mix_seed(cfg.seed, 0));
    HaarShift sh = cfg.resolve_operator(mu);

    std::string op_name = cfg.op.value("preset", std::string("file"));
    std::string mu_name = cfg.measure.value("preset", std::string("file"));
    std::string op_digest = digest(sh.to_json());
    std::string mu_digest = digest(mu.to_json());
    WeakTypeBound bound = weak_type_bound(sh, mu);

    rep.rows.resize(cfg.instances);
    std::vector<nlohmann::json> details(cfg.instances);
    std::atomic<bool> all{true};
    parallel_for(cfg.instances, [&](std::size_t i) {
        OperatorField f = cfg.resolve_field(lattice, mix_seed(cfg.seed, i + 1));
        double wt = weak_type_ratio(sh, f, mu);
        bool pass = wt <= bound.total;
        if (!pass) all = false;
        rep.rows[i] = {op_name, mu_name, fmt(bound.xi), fmt(bound.testing),
                       fmt(bound.l2_norm), fmt(wt)};
        details[i] = {{"instance", i},
                      {"operator", op_name},
                      {"operator_digest", op_digest},
                      {"measure", mu_name},
                      {"measure_digest", mu_digest},
                      {"xi", bound.xi},
                      {"testing_constant", bound.testing},
                      {"l2_norm", bound.l2_norm},
                      {"wt_ratio", wt},
                      {"wt_bound", bound.total},
                      {"pass", pass}};
    });
    for (auto& d : details) rep.details.push_back(std::move(d));
    rep.all_pass = all;
    return rep;
}

inline SuiteReport run_wt_scan_suite(const ExperimentConfig& cfg) {
    SuiteReport rep;
    rep.columns = {"delta", "Xi", "wt_ratio"};
    DyadicLattice lattice(cfg.d, cfg.K);
    std::string preset = cfg.sweep.value("measure_preset", std::string("left_loaded"));
    std::vector<double> values = cfg.sweep.value("delta", std::vector<double>{});
    if (values.empty())
        for (int e = 1; e <= 8; ++e) values.push_back(std::ldexp(1.0, -e));

    rep.rows.resize(values.size());
    std::vector<nlohmann::json> details(values.size());
    parallel_for(values.size(), [&](std::size_t i) {
        nlohmann::json params = cfg.sweep.value("params", nlohmann::json::object());
        params["delta"] = values[i];
        Measure mu = preset_measure(preset, lattice, params);
        HaarShift sh = cfg.resolve_operator(mu);
        double x = xi(sh.phi, sh.psi, sh.r, sh.s, mu);

        double worst = 0.0;
        for (int inst = 0; inst < cfg.instances; ++inst) {
            OperatorField f = cfg.resolve_field(lattice, mix_seed(cfg.seed, i * 1000 + inst));
            worst = std::max(worst, weak_type_ratio(sh, f, mu));
        }
        // adversarial spike on the lightest leaf
        std::uint64_t lightest = 0;
        for (std::uint64_t x2 = 1; x2 < lattice.n_leaves(); ++x2)
            if (mu.leaf_mass(x2) < mu.leaf_mass(lightest)) lightest = x2;
        FieldSpec spike;
        spike.seed = mix_seed(cfg.seed, 777 + i);
        spike.n = cfg.field.value("n", 1);
        spike.recipe = "spike";
        spike.spike_leaf = lightest;
        if (mu.leaf_mass(lightest) > 0.0)
            worst = std::max(worst, weak_type_ratio(sh, generate_field(lattice, spike), mu));

        rep.rows[i] = {fmt(values[i]), fmt(x), fmt(worst)};
        details[i] = {{"delta", values[i]},
                      {"xi", x},
                      {"wt_ratio", worst},
                      {"measure_digest", digest(mu.to_json())},
                      {"operator_digest", digest(sh.to_json())}};
    });
    for (auto& d : details) rep.details.push_back(std::move(d));
    return rep;
}

// ---------------------------------------------------------------------------

inline RunResult run(const ExperimentConfig& cfg, const std::string& out_dir) {
    auto t0 = std::chrono::steady_clock::now();
    SuiteReport rep;
    if (cfg.suite == "haar") rep = run_haar_suite(cfg);
    else if (cfg.suite == "cuculescu") rep = run_cuculescu_suite(cfg);
    else if (cfg.suite == "czd") rep = run_czd_suite(cfg);
    else if (cfg.suite == "shift") rep = run_shift_suite(cfg);
    else rep = run_wt_scan_suite(cfg);
    double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    RunResult result;
    detail::write_reports(cfg, rep, out_dir, runtime, result);
    return result;
}

}  // namespace ncdyadic
