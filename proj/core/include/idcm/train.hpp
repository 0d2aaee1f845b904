#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idcm/cascade.hpp"
#include "idcm/ck_model.hpp"
#include "idcm/config.hpp"
#include "idcm/corpus_io.hpp"
#include "idcm/teacher.hpp"

namespace idcm {

/// Adam with bias correction over a flat parameter list.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// Update `params` in place; `slot` identifies the moment buffers for this tensor.
    template <typename T>
    void update(std::size_t slot, std::span<T> params, std::span<const T> grad);
    /// Call once per optimizer step before the update() calls of that step.
    void begin_step() { ++t_; }
    long long steps() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// One Adam step over the CK tensors; embeddings are skipped when `train_embeddings` is false.
void adam_step(Adam& opt, CkModel& model, const CkModel& grad, bool train_embeddings);

struct TrainLogRecord {
    int step = 0;
    double loss = 0.0;
    std::optional<double> val_metric;
    std::optional<double> best;
};

/// One JSON object per line: {"step":..,"loss":..,"val_metric":..,"best":..}.
std::string format_train_log(std::span<const TrainLogRecord> log);

/// Held-out queries scored by the full cascade for early stopping.
struct Validation {
    std::span<const Query> queries;
    std::span<const CandidateList> candidates;
    const Qrels* qrels = nullptr;
    ExpensiveScorer* scorer = nullptr;
};

/// Early-stop metric of the full cascade (CK selection, expensive scoring, aggregation).
double validation_metric(const Validation& val, const Corpus& corpus, const CascadeConfig& cascade, const CkModel* ck,
                         EarlyStopMetric metric);

struct TrainResult {
    CkModel model;  // best validated model, or the last one without validation
    std::vector<TrainLogRecord> log;
    int steps = 0;
    int best_step = 0;
    std::optional<double> best_metric;
    bool early_stopped = false;
};

/// Documents used by distillation: every (query, candidate) pair with a teacher vector.
struct DistillExample {
    const Query* query = nullptr;
    const TokenizedDocument* doc = nullptr;
    std::vector<PassageWindow> windows;
    const std::vector<double>* teacher = nullptr;
};

/// Missing teacher entries raise an error. Documents whose loss is degenerate for the
/// chosen loss (one window for kd_ce, at most top_k windows for kd_ndcg2) are left out.
std::vector<DistillExample> distill_examples(std::span<const Query> queries, std::span<const CandidateList> candidates,
                                             const Corpus& corpus, const TeacherScoreTable& teacher,
                                             const WindowConfig& window, LossKind loss, int kd_top_k);

/// Per-document distillation loss on CK scores of all windows; adds the gradient, scaled
/// by `scale`, into `grad`. Returns the unscaled loss.
double distill_document_loss(const CkModel& model, const DistillExample& ex, LossKind loss, int kd_top_k,
                             double scale, CkModel& grad);

/// Knowledge distillation of CK from teacher passage scores.
TrainResult train_ck_distill(const CkModel& init, std::span<const Query> queries,
                             std::span<const CandidateList> candidates, const Corpus& corpus,
                             const TeacherScoreTable& teacher, const Validation* validation,
                             const PipelineConfig& config);

/// CK-only document score: max over window CK scores, with the argmax window (lowest index on ties).
struct MaxWindowScore {
    double score = 0.0;
    int window = 0;
};
MaxWindowScore ck_document_score(const CkModel& model, const Query& query, std::span<const PassageWindow> windows);

/// RankNet on max-window CK document scores from document-level triples. Gradient reaches
/// only the argmax window of each document.
TrainResult train_ck_standalone(const CkModel& init, std::span<const Query> queries,
                                std::span<const TrainTriple> triples, const Corpus& corpus,
                                const Validation* validation, const PipelineConfig& config);

struct AggregationResult {
    std::vector<double> w_ps;
    double bias = 0.0;
    std::vector<TrainLogRecord> log;
    int steps = 0;
};

/// RankNet on document pairs scored by aggregating full teacher vectors. Only W_PS and
/// (unless frozen) the bias move. Validation, when given, ranks with selector=all.
AggregationResult fit_aggregation(std::span<const TrainTriple> triples, const Corpus& corpus,
                                  const TeacherScoreTable& teacher, const Validation* validation,
                                  const PipelineConfig& config);

} // namespace idcm
