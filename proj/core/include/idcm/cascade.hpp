#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "idcm/ck_model.hpp"
#include "idcm/config.hpp"
#include "idcm/corpus_io.hpp"
#include "idcm/teacher.hpp"
#include "idcm/windowing.hpp"

namespace idcm {

/// Indices of the min(k, n) largest scores, ties to the smaller index. Returned ascending.
std::vector<int> select_top_k(std::span<const double> scores, int k);

/// The l aggregation inputs: scores sorted descending, filled per `fill` when fewer than l.
std::vector<double> top_l_inputs(std::span<const double> etm_scores, int l, FillRule fill = FillRule::repeat_last);

/// dot(w_ps, top_l_inputs) + bias.
double aggregate(std::span<const double> etm_scores, int l, std::span<const double> w_ps, double bias,
                 FillRule fill = FillRule::repeat_last);

/// First k windows by exact query-term match count (ties to the earlier window).
std::vector<int> select_static_top_tf(const Query& query, std::span<const PassageWindow> windows, int k);

struct DocumentScore {
    std::string doc_id;
    double score = 0.0;
    int window_count = 0;
    std::vector<int> selected_windows;  // ascending window index
    std::vector<double> etm_scores;     // parallel to selected_windows
    std::vector<double> esm_scores;     // one per window, empty for static selectors
};

/// Intra-document cascade: select windows, score only those with the expensive scorer,
/// aggregate the top-l scores.
class CascadeEngine {
public:
    /// `ck` may be null for the static and `all` selectors.
    CascadeEngine(CascadeConfig config, const CkModel* ck, ExpensiveScorer& scorer);

    DocumentScore score_document(const Query& query, const TokenizedDocument& doc);
    /// Scores all windows of all documents in one flat CK pass, then cascades per document.
    /// Results equal one-at-a-time scoring.
    std::vector<DocumentScore> score_documents(const Query& query, std::span<const TokenizedDocument* const> docs);

    const CascadeConfig& config() const noexcept { return config_; }
    /// Passages handed to the expensive scorer / CK by this engine. Under every selector
    /// except `all`, etm_windows grows by min(k, window_count) per document.
    std::uint64_t etm_windows() const noexcept { return etm_windows_; }
    std::uint64_t ck_windows() const noexcept { return ck_windows_; }

private:
    DocumentScore finish(const Query& query, const TokenizedDocument& doc, std::span<const PassageWindow> windows,
                         std::vector<double> esm);

    CascadeConfig config_;
    const CkModel* ck_;
    ExpensiveScorer& scorer_;
    std::uint64_t etm_windows_ = 0;
    std::uint64_t ck_windows_ = 0;
};

struct RankedQuery {
    QueryRanking ranking;               // sorted descending, ties by doc_id
    std::vector<DocumentScore> details; // in candidate order
};

/// Re-rank one candidate list. Missing documents raise an error naming the doc_id.
RankedQuery rank_candidates(const Query& query, const CandidateList& candidates, const Corpus& corpus,
                            CascadeEngine& engine);

/// Re-rank every query; `workers` threads each own a scorer clone. Output order and
/// values do not depend on the worker count.
std::vector<RankedQuery> rank_all(std::span<const Query> queries, std::span<const CandidateList> candidates,
                                  const Corpus& corpus, const CascadeConfig& config, const CkModel* ck,
                                  ExpensiveScorer& scorer, int workers = 1);

/// Diagnostic dump: qid, docid, window_count, selected (comma list), etm scores, esm scores.
std::string format_diagnostics(std::span<const RankedQuery> ranked);

struct DiagnosticRecord {
    std::string query_id;
    std::string doc_id;
    int window_count = 0;
    std::vector<int> selected;
    std::vector<double> etm_scores;
    std::vector<double> esm_scores;
};
std::vector<DiagnosticRecord> parse_diagnostics(std::string_view content, const std::string& source);

} // namespace idcm
