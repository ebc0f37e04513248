// Benchmark CLI: drives the gateway cluster through scenarios A-D and
// reports the T1-T6 latency metrics.
//
//   bench run --scenario C --gateways 10 --reps 3 --seed 7 --scale 0.3 --out DIR
//   bench compare A.csv C.csv
//   bench export --plots A.csv C.csv --out plots.csv

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "abc/bench.h"

namespace fs = std::filesystem;
using namespace abc;

namespace {

bench::MetricsReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw bench::ConfigError("cannot open " + path);
    return bench::read_csv(in);
}

int cmd_run(const std::string& config_path, const std::string& scenario,
            std::optional<uint32_t> gateways, std::optional<uint32_t> reps,
            std::optional<uint64_t> seed, std::optional<double> scale,
            const std::string& out_dir) {
    bench::RunConfig cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw bench::ConfigError("cannot open " + config_path);
        cfg = bench::parse_config(in);
    }
    if (!scenario.empty()) bench::apply_setting(cfg, "scenario", scenario);
    if (gateways) cfg.gateways = *gateways;
    if (reps) cfg.reps = *reps;
    if (seed) cfg.seed = *seed;
    if (scale) cfg.scale = *scale;

    auto report = bench::run_scenario(cfg);
    std::cout << bench::summary_table(report);

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        fs::path csv = fs::path(out_dir) /
                       (std::string(workload::scenario_name(cfg.scenario)) + ".csv");
        std::ofstream out(csv);
        bench::write_csv(report, out);
        std::cout << "wrote " << csv.string() << "\n";
    } else {
        bench::write_csv(report, std::cout);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"appendable-block chain benchmark harness"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "run one scenario and emit CSV");
    std::string scenario, config_path, out_dir;
    std::optional<uint32_t> gateways, reps;
    std::optional<uint64_t> seed;
    std::optional<double> scale;
    run->add_option("--scenario", scenario, "A, B, C or D");
    run->add_option("--config", config_path, "key=value configuration file");
    run->add_option("--gateways", gateways, "gateway count (default 10)");
    run->add_option("--reps", reps, "repetitions (>= 2)");
    run->add_option("--seed", seed, "base RNG seed");
    run->add_option("--scale", scale, "workload scale factor (default 0.3)");
    run->add_option("--out", out_dir, "output directory for the CSV");

    // compare
    auto* cmp = app.add_subcommand("compare", "ratio table of two reports");
    std::vector<std::string> cmp_files;
    cmp->add_option("files", cmp_files, "two CSV files (baseline first)")
        ->expected(2);

    // export
    auto* exp = app.add_subcommand("export", "plot-ready table from reports");
    bool plots = false;
    std::vector<std::string> exp_files;
    std::string exp_out;
    exp->add_flag("--plots", plots, "emit the plot-data table");
    exp->add_option("files", exp_files, "CSV report files");
    exp->add_option("--out", exp_out, "output file (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, scenario, gateways, reps, seed, scale, out_dir);
        if (cmp->parsed()) {
            auto a = load_report(cmp_files[0]);
            auto b = load_report(cmp_files[1]);
            std::cout << bench::compare(a, b);
            return 0;
        }
        if (exp->parsed()) {
            std::vector<bench::MetricsReport> reports;
            for (const auto& f : exp_files) reports.push_back(load_report(f));
            if (!exp_out.empty()) {
                std::ofstream out(exp_out);
                bench::export_plot_data(reports, out);
            } else {
                bench::export_plot_data(reports, std::cout);
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
