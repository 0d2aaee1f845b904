#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "idcm/cascade.hpp"
#include "idcm/corpus_io.hpp"

namespace idcm {

inline constexpr int kDefaultBinarization = 2;

/// Relevance threshold actually used: `requested` for graded qrels, 1 when no grade exceeds 1.
int effective_binarization(const Qrels& qrels, int requested = kDefaultBinarization);

/// Metrics read the ranking in the order given (rank 1 first).
double ndcg_at(const QueryRanking& ranking, const Qrels& qrels, int cutoff = 10);
double mrr_at(const QueryRanking& ranking, const Qrels& qrels, int cutoff = 10, int binarization = kDefaultBinarization);
double map_at(const QueryRanking& ranking, const Qrels& qrels, int cutoff = 100, int binarization = kDefaultBinarization);

struct QueryMetrics {
    std::string query_id;
    double ndcg10 = 0.0;
    double mrr10 = 0.0;
    double map100 = 0.0;
};

struct MetricReport {
    std::vector<QueryMetrics> per_query;  // run order
    double ndcg10 = 0.0;
    double mrr10 = 0.0;
    double map100 = 0.0;
    int binarization = kDefaultBinarization;
    std::size_t query_count() const noexcept { return per_query.size(); }
};

/// Every query in the run is evaluated; the binarization point is auto-lowered for binary qrels.
MetricReport evaluate(std::span<const QueryRanking> run, const Qrels& qrels, int binarization = kDefaultBinarization);

/// Run file candidates in rank order as rankings (first-stage scores kept).
std::vector<QueryRanking> rankings_from_run(std::span<const CandidateList> run);

/// TSV: header, one row per query, then an "all" row.
std::string format_metrics_tsv(const MetricReport& report);
std::string format_metrics_text(const MetricReport& report);

/// |selected ∩ teacher top set| / min(teacher_top, window count).
double selection_recall(std::span<const int> student_selected, std::span<const double> teacher_scores,
                        int teacher_top = 3);

struct GradeRecall {
    double mean = 0.0;
    std::size_t documents = 0;
};

struct RecallReport {
    std::map<int, GradeRecall> by_grade;  // grade 0 holds unjudged documents
    double overall = 0.0;
    std::size_t documents = 0;
};

/// Recall of each student selection against full teacher score vectors, split by the
/// document's relevance grade. A null `qrels` puts every document under grade 0.
RecallReport selection_recall_report(std::span<const DiagnosticRecord> student, const TeacherScoreTable& teacher,
                                     const Qrels* qrels, int teacher_top = 3);

/// Teacher vectors from a diagnostic dump made with selector=all.
TeacherScoreTable teacher_table_from_diagnostics(std::span<const DiagnosticRecord> records);

std::string format_recall_tsv(const RecallReport& report);

struct PositionHistogram {
    std::vector<std::uint64_t> selected;   // chosen by the selector
    std::vector<std::uint64_t> top_l;      // among the selected, the l best by expensive score
    std::vector<std::uint64_t> available;  // window exists
};

PositionHistogram position_histogram(std::span<const DiagnosticRecord> records, int positions, int l);
std::string format_histogram_tsv(const PositionHistogram& histogram);

} // namespace idcm
