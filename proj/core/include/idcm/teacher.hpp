#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "idcm/corpus_io.hpp"
#include "idcm/windowing.hpp"

namespace idcm {

struct ScorerInfo {
    std::string name;
    double per_passage_cost_units = 40.0;
};

/// The expensive passage scorer. score() must be deterministic for fixed inputs.
class ExpensiveScorer {
public:
    virtual ~ExpensiveScorer() = default;

    virtual const ScorerInfo& info() const noexcept = 0;
    virtual double score(const Query& query, const TokenizedDocument& doc, const PassageWindow& window) = 0;
    /// Independent instance for another worker (a new connection for process scorers).
    virtual std::unique_ptr<ExpensiveScorer> clone() const = 0;

    /// Number of passages scored through score_passages().
    std::uint64_t calls() const noexcept { return calls_.load(std::memory_order_relaxed); }
    void reset_calls() noexcept { calls_.store(0, std::memory_order_relaxed); }

protected:
    friend std::vector<std::pair<int, double>> score_passages(ExpensiveScorer&, const Query&,
                                                              const TokenizedDocument&,
                                                              std::span<const PassageWindow>,
                                                              std::span<const int>);
    std::atomic<std::uint64_t> calls_{0};
};

/// Score the requested windows (indices into `windows`) in request order.
std::vector<std::pair<int, double>> score_passages(ExpensiveScorer& scorer, const Query& query,
                                                   const TokenizedDocument& doc,
                                                   std::span<const PassageWindow> windows,
                                                   std::span<const int> requested);

/// Looks scores up in a precomputed table; a missing entry is an error.
class FileTeacher final : public ExpensiveScorer {
public:
    explicit FileTeacher(std::shared_ptr<const TeacherScoreTable> table, std::string name = "file");

    const ScorerInfo& info() const noexcept override { return info_; }
    double score(const Query& query, const TokenizedDocument& doc, const PassageWindow& window) override;
    std::unique_ptr<ExpensiveScorer> clone() const override;

private:
    std::shared_ptr<const TeacherScoreTable> table_;
    ScorerInfo info_;
};

/// Deterministic stand-in for a transformer scorer:
///   sum over query tokens t of weight(t) * tf(t, window) / real_length(window) + jitter
/// with |jitter| <= 1e-3 derived from (seed, query, doc, window).
class SyntheticTeacher final : public ExpensiveScorer {
public:
    static constexpr double kJitter = 1e-3;

    explicit SyntheticTeacher(std::uint64_t seed, std::chrono::microseconds delay_per_passage = {});

    /// Pin the hidden weight of a token; other tokens draw weights in [0.2, 2.0] from the seed.
    void set_weight(TokenId token, double weight);
    double weight(TokenId token) const;
    double jitter(std::string_view query_id, std::string_view doc_id, int window_index) const;

    const ScorerInfo& info() const noexcept override { return info_; }
    double score(const Query& query, const TokenizedDocument& doc, const PassageWindow& window) override;
    std::unique_ptr<ExpensiveScorer> clone() const override;

private:
    std::uint64_t seed_;
    std::chrono::microseconds delay_;
    std::unordered_map<TokenId, double> pinned_;
    ScorerInfo info_;
};

/// Line protocol over a child process's stdin/stdout:
///   engine -> "HELLO idcm/1", scorer -> "OK <name>"
///   engine -> "S\tqid\tdocid\twindow_index\tquery ids\twindow ids", scorer -> "<score>"
/// Window ids are the full fixed-length window including PAD (id 0).
class ProcessTeacher final : public ExpensiveScorer {
public:
    ProcessTeacher(std::string command, std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));
    ~ProcessTeacher() override;
    ProcessTeacher(const ProcessTeacher&) = delete;
    ProcessTeacher& operator=(const ProcessTeacher&) = delete;

    const ScorerInfo& info() const noexcept override { return info_; }
    double score(const Query& query, const TokenizedDocument& doc, const PassageWindow& window) override;
    std::unique_ptr<ExpensiveScorer> clone() const override;

    static std::string format_request(const Query& query, const TokenizedDocument& doc, const PassageWindow& window);

private:
    void send_line(const std::string& line);
    std::string read_line();
    void shutdown() noexcept;

    std::string command_;
    std::chrono::milliseconds timeout_;
    ScorerInfo info_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

/// Parse "file:PATH", "proc:CMD" or "synthetic:SEED".
struct TeacherSpec {
    enum class Kind { file, process, synthetic } kind = Kind::synthetic;
    std::string argument;
};
TeacherSpec parse_teacher_spec(std::string_view spec);

/// Scores every window of every candidate. Errors carry the (query, doc) context.
/// `order` receives the (query, doc) pairs in emission order.
TeacherScoreTable precompute_teacher_table(ExpensiveScorer& scorer, std::span<const Query> queries,
                                           std::span<const CandidateList> candidates, const Corpus& corpus,
                                           const WindowConfig& window,
                                           std::vector<TeacherScoreTable::Key>* order = nullptr);

} // namespace idcm
