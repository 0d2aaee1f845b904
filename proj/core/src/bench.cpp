#include "idcm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include "idcm/util.hpp"

namespace idcm {

void CostModel::validate() const {
    if (!(ck_cost_per_window >= 0) || !(etm_cost_per_window >= 0) || !(fixed_overhead >= 0)) {
        throw ConfigError("cost model values must be >= 0");
    }
}

CostModel CostModel::parse(std::string_view text) {
    CostModel cost;
    if (trim(text).empty()) {
        return cost;
    }
    for (auto part : split(text, ',')) {
        auto eq = part.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("cost model entry '" + std::string(part) + "' is not key=value");
        }
        auto key = trim(part.substr(0, eq));
        double value = 0;
        if (!parse_real(trim(part.substr(eq + 1)), value)) {
            throw ConfigError("cost model value for '" + std::string(key) + "' is not a number");
        }
        if (key == "ck") {
            cost.ck_cost_per_window = value;
        } else if (key == "etm") {
            cost.etm_cost_per_window = value;
        } else if (key == "overhead") {
            cost.fixed_overhead = value;
        } else {
            throw ConfigError("unknown cost model key '" + std::string(key) + "'");
        }
    }
    cost.validate();
    return cost;
}

double percentile(std::span<const double> values, double p) {
    if (values.empty()) {
        throw Error("percentile of an empty sample");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

LatencySummary summarize(std::span<const double> values) {
    LatencySummary s;
    if (values.empty()) {
        return s;
    }
    const double n = static_cast<double>(values.size());
    for (double v : values) {
        s.mean += v;
    }
    s.mean /= n;
    double var = 0.0;
    for (double v : values) {
        var += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(var / n);
    s.p50 = percentile(values, 50);
    s.p90 = percentile(values, 90);
    s.p99 = percentile(values, 99);
    s.max = *std::max_element(values.begin(), values.end());
    return s;
}

LatencyRun measure_latency(std::span<const Query> queries, std::span<const CandidateList> candidates,
                           const Corpus& corpus, const CascadeConfig& config, const CkModel* ck,
                           ExpensiveScorer& scorer, int warmup, int reps) {
    if (reps < 1) {
        throw ConfigError("bench: reps must be >= 1");
    }
    std::unordered_map<std::string, const Query*> by_id;
    for (const auto& q : queries) {
        by_id.emplace(q.query_id, &q);
    }
    std::vector<const Query*> resolved;
    for (const auto& list : candidates) {
        auto it = by_id.find(list.query_id);
        if (it == by_id.end()) {
            throw Error("run file references unknown query '" + list.query_id + "'");
        }
        resolved.push_back(it->second);
    }

    CascadeEngine engine(config, ck, scorer);
    for (int r = 0; r < warmup; ++r) {
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            rank_candidates(*resolved[i], candidates[i], corpus, engine);
        }
    }

    LatencyRun run;
    std::vector<std::vector<double>> times(candidates.size());
    run.records.resize(candidates.size());
    for (int r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto ck_before = engine.ck_windows();
            const auto etm_before = engine.etm_windows();
            const auto t0 = std::chrono::steady_clock::now();
            rank_candidates(*resolved[i], candidates[i], corpus, engine);
            const auto t1 = std::chrono::steady_clock::now();
            times[i].push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            auto& rec = run.records[i];
            rec.query_id = candidates[i].query_id;
            rec.ck_windows_scored = engine.ck_windows() - ck_before;
            rec.etm_windows_scored = engine.etm_windows() - etm_before;
        }
    }
    std::vector<double> medians;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        run.records[i].wall_ms = percentile(times[i], 50);
        medians.push_back(run.records[i].wall_ms);
    }
    run.summary = summarize(medians);
    return run;
}

std::vector<double> latency_cdf(std::span<const LatencyRecord> records, std::span<const double> grid) {
    if (grid.empty()) {
        throw Error("latency_cdf: empty grid");
    }
    if (records.empty()) {
        throw Error("latency_cdf: no latency records");
    }
    std::vector<double> times;
    for (const auto& r : records) {
        times.push_back(r.wall_ms);
    }
    std::sort(times.begin(), times.end());
    std::vector<double> out;
    double running = 0.0;
    for (double bound : grid) {
        auto within = std::upper_bound(times.begin(), times.end(), bound) - times.begin();
        // Unsorted grids still yield a non-decreasing curve.
        running = std::max(running, static_cast<double>(within) / static_cast<double>(times.size()));
        out.push_back(running);
    }
    return out;
}

std::vector<double> parse_grid(std::string_view text) {
    auto parts = split(text, ':');
    double start = 0, step = 0, end = 0;
    if (parts.size() != 3 || !parse_real(parts[0], start) || !parse_real(parts[1], step) ||
        !parse_real(parts[2], end)) {
        throw ConfigError("grid must be start:step:end, got '" + std::string(text) + "'");
    }
    if (!(step > 0) || end < start) {
        throw ConfigError("grid needs step > 0 and end >= start");
    }
    std::vector<double> grid;
    const auto count = static_cast<long long>(std::floor((end - start) / step + 1e-9));
    for (long long i = 0; i <= count; ++i) {
        grid.push_back(start + static_cast<double>(i) * step);
    }
    return grid;
}

double document_cost(int window_count, const CascadeConfig& config, const CostModel& cost) {
    const double n = window_count;
    if (config.selector == Selector::all) {
        return cost.fixed_overhead + n * cost.etm_cost_per_window;
    }
    const double ck = config.uses_ck() ? n * cost.ck_cost_per_window : 0.0;
    return cost.fixed_overhead + ck + std::min(config.k, window_count) * cost.etm_cost_per_window;
}

std::vector<QueryWindowCounts> window_counts_for(std::span<const CandidateList> candidates, const Corpus& corpus,
                                                 const WindowConfig& window) {
    std::vector<QueryWindowCounts> out;
    for (const auto& list : candidates) {
        QueryWindowCounts q;
        q.query_id = list.query_id;
        for (const auto& id : list.doc_ids) {
            q.window_counts.push_back(window_count(corpus.at(id).tokens.size(), window));
        }
        out.push_back(std::move(q));
    }
    return out;
}

CostSimulation simulate_cost(std::span<const QueryWindowCounts> queries, const CascadeConfig& config,
                             const CostModel& cost) {
    cost.validate();
    CascadeConfig all = config;
    all.selector = Selector::all;
    CostSimulation sim;
    double total_cascade = 0.0;
    double total_all = 0.0;
    for (const auto& q : queries) {
        double c = 0.0;
        double a = 0.0;
        for (int n : q.window_counts) {
            c += document_cost(n, config, cost);
            a += document_cost(n, all, cost);
        }
        sim.query_ids.push_back(q.query_id);
        sim.cascade_cost.push_back(c);
        sim.all_cost.push_back(a);
        sim.speedup.push_back(c > 0 ? a / c : 1.0);
        total_cascade += c;
        total_all += a;
    }
    if (!queries.empty()) {
        sim.total_speedup = total_cascade > 0 ? total_all / total_cascade : 1.0;
        sim.median_speedup = percentile(sim.speedup, 50);
        sim.cascade_summary = summarize(sim.cascade_cost);
        sim.all_summary = summarize(sim.all_cost);
    }
    return sim;
}

namespace {

std::string summary_rows(const std::string& label, const LatencySummary& s) {
    return "# " + label + "\tmean\t" + format_real(s.mean) + "\tstd\t" + format_real(s.std) + "\tp50\t" +
           format_real(s.p50) + "\tp90\t" + format_real(s.p90) + "\tp99\t" + format_real(s.p99) + "\tmax\t" +
           format_real(s.max) + '\n';
}

} // namespace

std::string format_latency_tsv(const LatencyRun& run, std::span<const double> grid) {
    std::string out = "query_id\twall_ms\tck_windows_scored\tetm_windows_scored\n";
    for (const auto& r : run.records) {
        out += r.query_id + '\t' + format_real(r.wall_ms) + '\t' + std::to_string(r.ck_windows_scored) + '\t' +
               std::to_string(r.etm_windows_scored) + '\n';
    }
    out += summary_rows("summary_ms", run.summary);
    if (!grid.empty() && !run.records.empty()) {
        auto cdf = latency_cdf(run.records, grid);
        out += "# cdf\tbound_ms\tfraction\n";
        for (std::size_t i = 0; i < grid.size(); ++i) {
            out += "# cdf\t" + format_real(grid[i]) + '\t' + format_real(cdf[i]) + '\n';
        }
    }
    return out;
}

std::string format_simulation_tsv(const CostSimulation& sim) {
    std::string out = "query_id\tcascade_cost\tall_cost\tspeedup\n";
    for (std::size_t i = 0; i < sim.query_ids.size(); ++i) {
        out += sim.query_ids[i] + '\t' + format_real(sim.cascade_cost[i]) + '\t' + format_real(sim.all_cost[i]) +
               '\t' + format_real(sim.speedup[i]) + '\n';
    }
    out += "# total_speedup\t" + format_real(sim.total_speedup) + '\n';
    out += "# median_speedup\t" + format_real(sim.median_speedup) + '\n';
    out += summary_rows("cascade_cost", sim.cascade_summary);
    out += summary_rows("all_cost", sim.all_summary);
    return out;
}

} // namespace idcm
