#include "calabi/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace calabi;

namespace {

struct CliOptions {
    std::string config_path;
    std::string output_override;
    bool quiet = false;
    long seed_override = -1;
};

RunConfig load_config(const CliOptions& opts) {
    RunConfig cfg = parse_config(opts.config_path);
    if (!opts.output_override.empty()) cfg.output_dir = opts.output_override;
    if (opts.seed_override >= 0) cfg.seed = static_cast<unsigned long>(opts.seed_override);
    return cfg;
}

void print(const CliOptions& opts, const std::string& line) {
    if (!opts.quiet) std::cout << line << "\n";
}

void write_result_files(const ExperimentResult& res, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / (res.name + "_result.csv"));
    out << "metric,value\n";
    out << "pass," << (res.pass ? 1 : 0) << "\n";
    out << "wall_seconds," << res.wall_seconds << "\n";
    char buf[64];
    for (const auto& [key, value] : res.measured) {
        std::snprintf(buf, sizeof buf, "%.17g", value);
        out << key << ',' << buf << "\n";
    }
    for (const auto& [label, rows] : res.run_rows) {
        std::string name = label;
        for (char& c : name)
            if (c == ' ' || c == '/') c = '_';
        if (!rows.empty()) write_csv((fs::path(dir) / (name + ".csv")).string(), rows);
    }
}

int run_command(const CliOptions& opts) {
    const RunConfig cfg = load_config(opts);
    const FlowSetup setup = make_setup(cfg);
    const FlowRunResult result = run_flow(setup);

    fs::create_directories(cfg.output_dir);
    if (!result.rows.empty())
        write_csv((fs::path(cfg.output_dir) / "diagnostics.csv").string(), result.rows);
    for (std::size_t i = 0; i < result.trajectory.size(); ++i) {
        const FlowSnapshot& snap = result.trajectory[i];
        SnapshotHeader h;
        h.n = cfg.n;
        h.N = cfg.N;
        h.L = cfg.L;
        h.t = snap.t;
        char name[32];
        std::snprintf(name, sizeof name, "phi_%04zu.snap", i);
        write_snapshot((fs::path(cfg.output_dir) / name).string(), snap.phi, h);
    }

    const FlowState& fin = result.final_state;
    std::string status = to_string(fin.status);
    if (fin.status == FlowStatus::Running && fin.t >= setup.t_end) status += " (t_end reached)";
    print(opts, "status: " + status);
    char line[160];
    std::snprintf(line, sizeof line, "t = %.6g, accepted steps = %ld, Ca = %.6g, max|R| = %.6g",
                  fin.t, fin.step_index, fin.last_diag.calabi_energy, fin.last_diag.max_abs_R);
    print(opts, line);
    print(opts, "wrote " + cfg.output_dir);

    const bool ok = fin.status == FlowStatus::Converged || fin.status == FlowStatus::Running;
    if (!ok) std::cerr << "flow failed: " << to_string(fin.status) << "\n";
    return ok ? 0 : 1;
}

int experiment_command(const CliOptions& opts, const std::string& which) {
    const RunConfig cfg = load_config(opts);
    ExperimentResult res;
    if (which == "spectrum")
        res = experiment_linear_spectrum(cfg);
    else if (which == "stability")
        res = experiment_stability(cfg);
    else if (which == "smoothing")
        res = experiment_smoothing(cfg);
    else if (which == "contraction")
        res = experiment_contraction_ladder(cfg);
    else
        res = experiment_extension_monitor(cfg);

    for (const std::string& note : res.notes) print(opts, note);
    write_result_files(res, cfg.output_dir);
    if (res.pass) {
        print(opts, res.name + ": PASS (" + std::to_string(res.wall_seconds) + " s)");
        return 0;
    }
    std::cerr << res.name << ": FAIL (" << res.fail_reason << ")\n";
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Calabi flow on flat complex tori: spectral splitting solver and experiments"};
    app.require_subcommand(1);

    CliOptions opts;
    long seed_flag = -1;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* copt = sub->add_option("--config", opts.config_path, "configuration file");
        if (needs_config) copt->required();
        sub->add_option("--output", opts.output_override, "output directory override");
        sub->add_flag("--quiet", opts.quiet, "suppress progress output");
        sub->add_option("--seed", seed_flag, "seed override for randomized corpora");
    };

    CLI::App* cmd_run = app.add_subcommand("run", "integrate the flow from a config");
    add_common(cmd_run, true);
    CLI::App* cmd_verify = app.add_subcommand("verify", "exactness and consistency checks");
    add_common(cmd_verify, false);
    for (const char* name : {"spectrum", "stability", "smoothing", "contraction", "monitor"})
        add_common(app.add_subcommand(name, std::string(name) + " experiment"), true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }
    opts.seed_override = seed_flag;

    try {
        if (cmd_run->parsed()) return run_command(opts);
        if (cmd_verify->parsed()) {
            unsigned long seed = seed_flag >= 0 ? static_cast<unsigned long>(seed_flag) : 12345UL;
            ExperimentResult res = verify_suite(seed);
            const std::string dir = opts.output_override;
            for (const std::string& note : res.notes) print(opts, note);
            if (!dir.empty()) write_result_files(res, dir);
            if (res.pass) {
                print(opts, "verify: PASS (" + std::to_string(res.wall_seconds) + " s)");
                return 0;
            }
            std::cerr << "verify: FAIL (" << res.fail_reason << ")\n";
            return 1;
        }
        for (const char* name : {"spectrum", "stability", "smoothing", "contraction", "monitor"})
            if (app.get_subcommand(name)->parsed()) return experiment_command(opts, name);
    } catch (const ConfigError& e) {
        std::cerr << "config error";
        if (e.line > 0) std::cerr << " (line " << e.line << ")";
        std::cerr << ": " << e.what() << "\n";
        return 2;
    } catch (const InvalidMetricError& e) {
        std::cerr << "invalid metric: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
