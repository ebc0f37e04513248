#pragma once

// Benchmark harness: runs scenarios A-D over the gateway cluster, derives the
// latency metrics T1-T6 from the simulated trace, and reports them as CSV
// plus a human summary. Simulated-time columns are fully deterministic for a
// given seed; wall-clock rows are labeled separately and exempt.

#include <iosfwd>
#include <map>

#include "abc/workload.h"

namespace abc::bench {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};
struct ScaleMismatch : std::runtime_error {
    explicit ScaleMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
    workload::Scenario scenario = workload::Scenario::A;
    uint32_t gateways = 10;
    uint32_t reps = 2;
    uint64_t seed = 7;
    double scale = 0.3;  // 1.0 = the full-size benchmark shapes
    sim::NetConfig net;
};

// Applies one key=value setting; throws ConfigError on unknown keys or
// unparseable values. parse_config reads a whole file of them ('#' comments).
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse_config(std::istream& in);

// CSV schema: scenario,repetition,metric,value_ms,component.
struct CsvRow {
    std::string scenario;
    uint32_t repetition = 0;
    std::string metric;
    double value_ms = 0.0;
    std::string component;  // "sim", "wall" or "meta"
};

struct MetricStat {
    double mean = 0.0;
    double half_width = 0.0;  // Student-t, 95%
    size_t samples = 0;
};

struct MetricsReport {
    std::string scenario;
    double scale = 0.0;
    uint32_t reps = 0;
    std::vector<CsvRow> rows;
    std::map<std::string, MetricStat> stats;  // per metric, "sim" component only

    // Recomputes stats from rows (used after CSV round trips).
    void finalize();
};

// Runs reps repetitions (>= 2, else ConfigError). The repetition seed is
// seed + repetition index, so the whole report is a function of the config.
// DivergenceError from the cluster is fatal and propagates.
MetricsReport run_scenario(const RunConfig& cfg);

void write_csv(const MetricsReport& report, std::ostream& out);
MetricsReport read_csv(std::istream& in);

std::string summary_table(const MetricsReport& report);

// Per-metric ratios of b over a with propagated confidence bounds; throws
// ScaleMismatch when the reports used different scale factors.
std::string compare(const MetricsReport& a, const MetricsReport& b);

// Plot-ready table: one row per metric, one column of means per scenario.
void export_plot_data(const std::vector<MetricsReport>& reports, std::ostream& out);

// Student-t two-sided 95% quantile for the given degrees of freedom.
double student_t_95(size_t df);

}  // namespace abc::bench
