#include "abc/bench.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace abc::bench {

namespace {

constexpr const char* kHeader = "scenario,repetition,metric,value_ms,component";

double to_ms(uint64_t ns) { return static_cast<double>(ns) / 1e6; }

uint64_t wall_now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value '" + v + "' for " + key);
    }
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        uint64_t u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ConfigError("bad integer value '" + v + "' for " + key);
    }
}

// Mean simulated latencies of one repetition, keyed by metric name.
std::map<std::string, double> derive_metrics(const sim::RunTrace& trace) {
    std::map<std::string, std::vector<double>> samples;
    uint64_t first_call_submit = UINT64_MAX, last_call_return = 0;

    for (const auto& ev : trace.events) {
        if (!ev.primary) continue;
        bool accepted = ev.kind != "transaction_rejected";
        if (!accepted) continue;
        bool is_block = ev.opcode == model::OpCode::NewPureDataBlock ||
                        ev.opcode == model::OpCode::NewContextBlock;
        if (is_block) {
            samples["T1"].push_back(to_ms(ev.decided_ns - ev.submit_ns));
            samples["T2"].push_back(to_ms(ev.replicated_ns - ev.submit_ns));
            if (ev.opcode == model::OpCode::NewContextBlock)
                samples["T3"].push_back(
                    to_ms(std::max(ev.replicated_ns, ev.executed_ns) - ev.submit_ns));
        } else if (ev.gas_used == 0) {
            samples["T4"].push_back(to_ms(ev.replicated_ns - ev.submit_ns));
        } else {
            samples["T5"].push_back(to_ms(ev.returned_ns - ev.submit_ns));
            first_call_submit = std::min(first_call_submit, ev.submit_ns);
            last_call_return = std::max(last_call_return, ev.returned_ns);
        }
    }

    std::map<std::string, double> out;
    for (const auto& [name, v] : samples) {
        double sum = 0;
        for (double x : v) sum += x;
        out[name] = sum / static_cast<double>(v.size());
    }
    if (last_call_return > first_call_submit)
        out["T6"] = to_ms(last_call_return - first_call_submit);
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << v;
    return os.str();
}

}  // namespace

double student_t_95(size_t df) {
    // Two-sided 95% quantiles; beyond the table the normal limit applies.
    static const double table[] = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (df == 0) return 0.0;
    if (df <= 30) return table[df - 1];
    return 1.96;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "scenario") {
        auto s = workload::scenario_from_name(value);
        if (!s) throw ConfigError("unknown scenario '" + value + "'");
        cfg.scenario = *s;
    } else if (key == "gateways") {
        cfg.gateways = static_cast<uint32_t>(parse_u64(value, key));
        if (cfg.gateways == 0) throw ConfigError("gateways must be positive");
    } else if (key == "reps") {
        cfg.reps = static_cast<uint32_t>(parse_u64(value, key));
    } else if (key == "seed") {
        cfg.seed = parse_u64(value, key);
    } else if (key == "scale") {
        cfg.scale = parse_double(value, key);
        if (cfg.scale <= 0) throw ConfigError("scale must be positive");
    } else if (key == "latency_ns") {
        cfg.net.latency_ns = parse_u64(value, key);
    } else if (key == "jitter_ns") {
        cfg.net.jitter_ns = parse_u64(value, key);
    } else if (key == "drop_rate") {
        cfg.net.drop_rate = parse_double(value, key);
    } else if (key == "ns_per_gas") {
        cfg.net.ns_per_gas = parse_u64(value, key);
    } else if (key == "retransmit_ns") {
        cfg.net.retransmit_ns = parse_u64(value, key);
    } else if (key == "view_timeout_ns") {
        cfg.net.view_timeout_ns = parse_u64(value, key);
    } else {
        throw ConfigError("unknown configuration key '" + key + "'");
    }
}

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void MetricsReport::finalize() {
    stats.clear();
    std::map<std::string, std::vector<double>> sim_samples;
    for (const auto& row : rows) {
        if (row.component == "sim") sim_samples[row.metric].push_back(row.value_ms);
        if (row.component == "meta" && row.metric == "scale") scale = row.value_ms;
        if (!row.scenario.empty() && row.component != "meta") scenario = row.scenario;
    }
    uint32_t max_rep = 0;
    for (const auto& row : rows) max_rep = std::max(max_rep, row.repetition);
    if (reps == 0) reps = max_rep + 1;
    for (const auto& [name, v] : sim_samples) {
        MetricStat st;
        st.samples = v.size();
        double sum = 0;
        for (double x : v) sum += x;
        st.mean = sum / static_cast<double>(v.size());
        if (v.size() >= 2) {
            double var = 0;
            for (double x : v) var += (x - st.mean) * (x - st.mean);
            var /= static_cast<double>(v.size() - 1);
            st.half_width = student_t_95(v.size() - 1) * std::sqrt(var) /
                            std::sqrt(static_cast<double>(v.size()));
        }
        stats[name] = st;
    }
}

MetricsReport run_scenario(const RunConfig& cfg) {
    if (cfg.reps < 2)
        throw ConfigError("at least 2 repetitions are needed for a confidence interval");

    MetricsReport report;
    report.scenario = workload::scenario_name(cfg.scenario);
    report.scale = cfg.scale;
    report.reps = cfg.reps;
    report.rows.push_back(
        {report.scenario, 0, "scale", cfg.scale, "meta"});

    for (uint32_t rep = 0; rep < cfg.reps; ++rep) {
        sim::NetConfig net = cfg.net;
        net.seed = cfg.seed + rep;
        auto spec = workload::spec_for(cfg.scenario, cfg.scale, cfg.gateways,
                                       cfg.seed + rep);
        sim::Cluster cluster(cfg.gateways, net);
        for (auto& lane : workload::build_lanes(spec)) cluster.add_lane(std::move(lane));

        uint64_t wall0 = wall_now_ns();
        sim::RunTrace trace = cluster.run();  // DivergenceError is fatal here
        uint64_t wall_total = wall_now_ns() - wall0;

        for (const auto& [metric, value] : derive_metrics(trace))
            report.rows.push_back({report.scenario, rep, metric, value, "sim"});

        // Wall rows: measured VM time across primaries and the whole rep.
        uint64_t vm_ns = 0;
        for (const auto& ev : trace.events)
            if (ev.primary) vm_ns += ev.wall.vm_ns;
        report.rows.push_back({report.scenario, rep, "vm_total", to_ms(vm_ns), "wall"});
        report.rows.push_back(
            {report.scenario, rep, "rep_total", to_ms(wall_total), "wall"});
    }
    report.finalize();
    return report;
}

void write_csv(const MetricsReport& report, std::ostream& out) {
    out << kHeader << "\n";
    for (const auto& row : report.rows)
        out << row.scenario << "," << row.repetition << "," << row.metric << ","
            << fmt(row.value_ms) << "," << row.component << "\n";
}

MetricsReport read_csv(std::istream& in) {
    MetricsReport report;
    std::string line;
    if (!std::getline(in, line) || line != kHeader)
        throw ConfigError("missing or wrong CSV header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        CsvRow row;
        std::string rep, value;
        if (!std::getline(ls, row.scenario, ',') || !std::getline(ls, rep, ',') ||
            !std::getline(ls, row.metric, ',') || !std::getline(ls, value, ',') ||
            !std::getline(ls, row.component))
            throw ConfigError("malformed CSV row: " + line);
        row.repetition = static_cast<uint32_t>(parse_u64(rep, "repetition"));
        row.value_ms = parse_double(value, row.metric);
        report.rows.push_back(std::move(row));
    }
    report.finalize();
    return report;
}

std::string summary_table(const MetricsReport& report) {
    std::ostringstream os;
    os << "scenario " << report.scenario << "  scale " << report.scale << "  reps "
       << report.reps << "\n";
    os << std::left << std::setw(8) << "metric" << std::right << std::setw(14)
       << "mean_ms" << std::setw(14) << "ci95_ms" << "\n";
    for (const auto& [name, st] : report.stats)
        os << std::left << std::setw(8) << name << std::right << std::setw(14)
           << fmt(st.mean) << std::setw(14) << fmt(st.half_width) << "\n";
    return os.str();
}

std::string compare(const MetricsReport& a, const MetricsReport& b) {
    if (a.scale != b.scale)
        throw ScaleMismatch("cannot compare scale " + std::to_string(a.scale) +
                            " against scale " + std::to_string(b.scale));
    std::ostringstream os;
    os << "ratio " << b.scenario << "/" << a.scenario << " at scale " << a.scale
       << "\n";
    os << std::left << std::setw(8) << "metric" << std::right << std::setw(12)
       << "ratio" << std::setw(12) << "+-" << "\n";
    for (const auto& [name, sa] : a.stats) {
        auto it = b.stats.find(name);
        if (it == b.stats.end() || sa.mean == 0.0) continue;
        const auto& sb = it->second;
        double ratio = sb.mean / sa.mean;
        double rel = 0.0;
        if (sa.mean != 0.0) rel += sa.half_width / sa.mean;
        if (sb.mean != 0.0) rel += sb.half_width / sb.mean;
        os << std::left << std::setw(8) << name << std::right << std::setw(12)
           << fmt(ratio) << std::setw(12) << fmt(std::abs(ratio) * rel) << "\n";
    }
    return os.str();
}

void export_plot_data(const std::vector<MetricsReport>& reports, std::ostream& out) {
    out << "metric";
    for (const auto& r : reports) out << "," << r.scenario;
    out << "\n";
    std::vector<std::string> metrics;
    for (const auto& r : reports)
        for (const auto& [name, st] : r.stats)
            if (std::find(metrics.begin(), metrics.end(), name) == metrics.end())
                metrics.push_back(name);
    std::sort(metrics.begin(), metrics.end());
    for (const auto& name : metrics) {
        out << name;
        for (const auto& r : reports) {
            auto it = r.stats.find(name);
            out << ",";
            if (it != r.stats.end()) out << fmt(it->second.mean);
        }
        out << "\n";
    }
}

}  // namespace abc::bench
