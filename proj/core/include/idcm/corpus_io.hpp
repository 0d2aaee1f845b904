#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace idcm {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kOovId = 1;
inline constexpr std::size_t kDefaultMaxQueryTokens = 30;
inline constexpr std::size_t kDefaultMaxCandidates = 100;

/// Surface form to id mapping. Ids 0 and 1 are reserved for PAD and OOV.
class Vocabulary {
public:
    Vocabulary() = default;
    /// Build from surface forms listed in id order starting at id 2.
    explicit Vocabulary(std::vector<std::string> terms);

    TokenId lookup(std::string_view term) const;
    std::size_t size() const noexcept { return terms_.size() + 2; }
    /// Surface form for an id; PAD and OOV map to "<pad>" and "<oov>".
    std::string_view term(TokenId id) const;
    /// Terms in id order, excluding the reserved ids.
    const std::vector<std::string>& terms() const noexcept { return terms_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.terms_ == b.terms_; }

private:
    std::vector<std::string> terms_;
    std::unordered_map<std::string, TokenId> ids_;
};

/// Lowercase and split on whitespace and punctuation. Never emits PAD.
std::vector<std::string> split_terms(std::string_view text);
std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab);

/// Ids assigned by descending frequency, then lexicographically. Throws on an empty corpus.
Vocabulary build_vocabulary(std::span<const std::string> texts, std::size_t min_count);

struct TokenizedDocument {
    std::string doc_id;
    std::vector<TokenId> tokens;
};

struct Query {
    std::string query_id;
    std::vector<TokenId> tokens;
};

struct RawDocument {
    std::string doc_id;
    std::string text;
};

class Corpus {
public:
    void add(TokenizedDocument doc);
    const TokenizedDocument* find(std::string_view doc_id) const;
    /// Throws naming the id when absent.
    const TokenizedDocument& at(std::string_view doc_id) const;
    const std::vector<TokenizedDocument>& documents() const noexcept { return docs_; }
    std::size_t size() const noexcept { return docs_.size(); }

private:
    std::vector<TokenizedDocument> docs_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Collection TSV: doc_id, url, title, body. Text is title + ' ' + body.
std::vector<RawDocument> read_collection(const std::filesystem::path& path);
/// Documents tokenizing to nothing are rejected with a warning and left out.
Corpus tokenize_collection(std::span<const RawDocument> raw, const Vocabulary& vocab);

/// Queries TSV: query_id, text. Token count capped at max_tokens.
std::vector<Query> read_queries(const std::filesystem::path& path, const Vocabulary& vocab,
                                std::size_t max_tokens = kDefaultMaxQueryTokens);
Query make_query(std::string query_id, std::string_view text, const Vocabulary& vocab,
                 std::size_t max_tokens = kDefaultMaxQueryTokens);

struct CandidateList {
    std::string query_id;
    std::vector<std::string> doc_ids;
    std::vector<double> first_stage_scores;
};

/// TREC six-column run: qid Q0 docid rank score tag.
std::vector<CandidateList> read_run_file(const std::filesystem::path& path,
                                         std::size_t max_candidates = kDefaultMaxCandidates);
std::vector<CandidateList> parse_run(std::string_view content, const std::string& source,
                                     std::size_t max_candidates = kDefaultMaxCandidates);

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
};

struct QueryRanking {
    std::string query_id;
    std::vector<ScoredDoc> docs;
};

/// Sort descending by score, ties by ascending doc_id.
void sort_ranking(std::vector<ScoredDoc>& docs);
/// Emits ranks 1..n per query with scores descending. Output written atomically.
std::string format_run(std::span<const QueryRanking> rankings, std::string_view tag);
void write_run_file(std::span<const QueryRanking> rankings, std::string_view tag,
                    const std::filesystem::path& path);

class Qrels {
public:
    void set(const std::string& query_id, const std::string& doc_id, int grade);
    /// Absent pairs are grade 0.
    int grade(std::string_view query_id, std::string_view doc_id) const;
    /// Grades of every judged document for a query.
    std::vector<int> grades_for(std::string_view query_id) const;
    int max_grade() const noexcept { return max_grade_; }
    bool empty() const noexcept { return judgments_.empty(); }

private:
    std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>> judgments_;
    int max_grade_ = 0;
};

/// TREC qrels: qid 0 docid grade.
Qrels read_qrels(const std::filesystem::path& path);
Qrels parse_qrels(std::string_view content, const std::string& source);

/// Document-level training triples: qid, positive docid, negative docid (TSV).
struct TrainTriple {
    std::string query_id;
    std::string positive;
    std::string negative;
};

std::vector<TrainTriple> read_triples(const std::filesystem::path& path);

/// Expensive-scorer passage scores per (query, document), in window order.
class TeacherScoreTable {
public:
    using Key = std::pair<std::string, std::string>;

    void set(const std::string& query_id, const std::string& doc_id, std::vector<double> scores);
    const std::vector<double>* find(std::string_view query_id, std::string_view doc_id) const;
    /// Throws when the pair is missing.
    const std::vector<double>& at(std::string_view query_id, std::string_view doc_id) const;
    std::size_t size() const noexcept { return table_.size(); }
    const std::map<Key, std::vector<double>>& entries() const noexcept { return table_; }

    friend bool operator==(const TeacherScoreTable&, const TeacherScoreTable&) = default;

private:
    std::map<Key, std::vector<double>> table_;
};

struct WindowConfig;

/// Teacher-score TSV: query_id, doc_id, window_index, score. Vector lengths are validated
/// against the window count of each document under `window`.
TeacherScoreTable read_teacher_scores(const std::filesystem::path& path, const WindowConfig& window,
                                      const Corpus& corpus);
TeacherScoreTable parse_teacher_scores(std::string_view content, const std::string& source,
                                       const WindowConfig& window, const Corpus& corpus);
/// Rows are emitted in the order of `order` (pairs), windows ascending.
std::string format_teacher_scores(const TeacherScoreTable& table,
                                  std::span<const TeacherScoreTable::Key> order);

} // namespace idcm
