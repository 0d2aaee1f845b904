#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idcm/cascade.hpp"

namespace idcm {

/// Abstract per-window costs. The default 40:1 ratio says one expensive passage costs as
/// much as forty CK passages.
struct CostModel {
    double ck_cost_per_window = 1.0;
    double etm_cost_per_window = 40.0;
    double fixed_overhead = 0.0;

    void validate() const;
    /// "ck=1,etm=40,overhead=0"; omitted keys keep their defaults.
    static CostModel parse(std::string_view text);
};

struct LatencyRecord {
    std::string query_id;
    double wall_ms = 0.0;
    std::uint64_t ck_windows_scored = 0;
    std::uint64_t etm_windows_scored = 0;
};

struct LatencySummary {
    double mean = 0.0;
    double std = 0.0;  // population
    double p50 = 0.0;
    double p90 = 0.0;
    double p99 = 0.0;
    double max = 0.0;
};

/// Linear interpolation between closest ranks; `p` in [0, 100].
double percentile(std::span<const double> values, double p);
LatencySummary summarize(std::span<const double> values);

struct LatencyRun {
    std::vector<LatencyRecord> records;  // one per query, wall_ms = median over repetitions
    LatencySummary summary;
};

/// Re-ranks every query `warmup` times untimed, then `reps` timed times on one thread.
LatencyRun measure_latency(std::span<const Query> queries, std::span<const CandidateList> candidates,
                           const Corpus& corpus, const CascadeConfig& config, const CkModel* ck,
                           ExpensiveScorer& scorer, int warmup = 3, int reps = 5);

/// Fraction of records with wall_ms <= each grid bound.
std::vector<double> latency_cdf(std::span<const LatencyRecord> records, std::span<const double> grid);
/// "start:step:end", inclusive of end when reached exactly.
std::vector<double> parse_grid(std::string_view text);

/// Cost of one document. selector=all pays every window at the expensive rate and no CK.
double document_cost(int window_count, const CascadeConfig& config, const CostModel& cost);

struct QueryWindowCounts {
    std::string query_id;
    std::vector<int> window_counts;  // one per candidate
};

std::vector<QueryWindowCounts> window_counts_for(std::span<const CandidateList> candidates, const Corpus& corpus,
                                                 const WindowConfig& window);

struct CostSimulation {
    std::vector<std::string> query_ids;
    std::vector<double> cascade_cost;
    std::vector<double> all_cost;
    std::vector<double> speedup;  // all / cascade per query
    double total_speedup = 0.0;   // sum(all) / sum(cascade)
    double median_speedup = 0.0;
    LatencySummary cascade_summary;
    LatencySummary all_summary;
};

CostSimulation simulate_cost(std::span<const QueryWindowCounts> queries, const CascadeConfig& config,
                             const CostModel& cost);

std::string format_latency_tsv(const LatencyRun& run, std::span<const double> grid);
std::string format_simulation_tsv(const CostSimulation& sim);

} // namespace idcm
