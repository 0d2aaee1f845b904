#include "idcm/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "idcm/eval.hpp"
#include "idcm/losses.hpp"
#include "idcm/util.hpp"

namespace idcm {

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0)) {
        throw ConfigError("Adam: learning rate must be > 0");
    }
}

template <typename T>
void Adam::update(std::size_t slot, std::span<T> params, std::span<const T> grad) {
    if (t_ == 0) {
        throw Error("Adam::update called before begin_step");
    }
    if (params.size() != grad.size()) {
        throw Error("Adam::update: parameter and gradient sizes differ");
    }
    if (slot >= m_.size()) {
        m_.resize(slot + 1);
        v_.resize(slot + 1);
    }
    auto& m = m_[slot];
    auto& v = v_[slot];
    if (m.empty()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        if (g == 0.0 && m[i] == 0.0 && v[i] == 0.0) {
            continue;
        }
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        params[i] = static_cast<T>(params[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
}

template void Adam::update<float>(std::size_t, std::span<float>, std::span<const float>);
template void Adam::update<double>(std::size_t, std::span<double>, std::span<const double>);

void adam_step(Adam& opt, CkModel& model, const CkModel& grad, bool train_embeddings) {
    auto params = model.tensors();
    auto grads = grad.tensors();
    opt.begin_step();
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!train_embeddings && params[i].name == "embeddings") {
            continue;
        }
        opt.update(i, params[i].data, grads[i].data);
    }
}

std::string format_train_log(std::span<const TrainLogRecord> log) {
    auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("null"); };
    std::string out;
    for (const auto& r : log) {
        out += "{\"step\":" + std::to_string(r.step) + ",\"loss\":" + format_real(r.loss) +
               ",\"val_metric\":" + opt(r.val_metric) + ",\"best\":" + opt(r.best) + "}\n";
    }
    return out;
}

double validation_metric(const Validation& val, const Corpus& corpus, const CascadeConfig& cascade, const CkModel* ck,
                         EarlyStopMetric metric) {
    if (val.qrels == nullptr || val.scorer == nullptr) {
        throw Error("validation needs qrels and an expensive scorer");
    }
    auto ranked = rank_all(val.queries, val.candidates, corpus, cascade, ck, *val.scorer);
    std::vector<QueryRanking> run;
    run.reserve(ranked.size());
    for (auto& r : ranked) {
        run.push_back(std::move(r.ranking));
    }
    auto report = evaluate(run, *val.qrels);
    return metric == EarlyStopMetric::ndcg10 ? report.ndcg10 : report.mrr10;
}

namespace {

std::unordered_map<std::string, const Query*> index_queries(std::span<const Query> queries) {
    std::unordered_map<std::string, const Query*> out;
    for (const auto& q : queries) {
        out.emplace(q.query_id, &q);
    }
    return out;
}

void shuffle(std::vector<std::size_t>& order, SplitMix& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
}

/// Fixed-order batches drawn from per-epoch shuffles.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        shuffle(order_, rng_);
    }
    std::vector<std::size_t> next(int batch_size) {
        std::vector<std::size_t> batch;
        for (int i = 0; i < batch_size; ++i) {
            if (pos_ == order_.size()) {
                shuffle(order_, rng_);
                pos_ = 0;
            }
            batch.push_back(order_[pos_++]);
        }
        return batch;
    }

private:
    std::vector<std::size_t> order_;
    SplitMix rng_;
    std::size_t pos_ = 0;
};

/// Shared optimizer loop: step, validate on schedule, track the best snapshot, stop on patience.
template <typename Snapshot>
struct LoopOutcome {
    std::vector<TrainLogRecord> log;
    int steps = 0;
    int best_step = 0;
    std::optional<double> best_metric;
    bool early_stopped = false;
    std::optional<Snapshot> best;
};

template <typename Snapshot, typename StepFn, typename ValidateFn, typename SnapshotFn>
LoopOutcome<Snapshot> run_loop(const TrainConfig& cfg, bool has_validation, StepFn&& step, ValidateFn&& validate,
                               SnapshotFn&& snapshot) {
    LoopOutcome<Snapshot> out;
    int bad = 0;
    for (int s = 1; s <= cfg.max_steps; ++s) {
        const double loss = step(s);
        if (!std::isfinite(loss)) {
            throw Error("training diverged at step " + std::to_string(s) + ": loss is " + format_real(loss));
        }
        TrainLogRecord rec;
        rec.step = s;
        rec.loss = loss;
        out.steps = s;
        const bool due = s % cfg.validation_interval == 0 || s == cfg.max_steps;
        if (has_validation && due) {
            const double metric = validate();
            rec.val_metric = metric;
            if (!out.best_metric || metric > *out.best_metric) {
                out.best_metric = metric;
                out.best_step = s;
                out.best = snapshot();
                bad = 0;
            } else {
                ++bad;
            }
            rec.best = out.best_metric;
            out.log.push_back(rec);
            if (bad >= cfg.patience) {
                out.early_stopped = true;
                break;
            }
            continue;
        }
        rec.best = out.best_metric;
        out.log.push_back(rec);
    }
    return out;
}

std::vector<double> as_doubles(std::span<const double> v) { return {v.begin(), v.end()}; }

} // namespace

std::vector<DistillExample> distill_examples(std::span<const Query> queries, std::span<const CandidateList> candidates,
                                             const Corpus& corpus, const TeacherScoreTable& teacher,
                                             const WindowConfig& window, LossKind loss, int kd_top_k) {
    auto by_id = index_queries(queries);
    std::vector<DistillExample> out;
    std::size_t skipped = 0;
    for (const auto& list : candidates) {
        auto q = by_id.find(list.query_id);
        if (q == by_id.end()) {
            throw Error("training candidates reference unknown query '" + list.query_id + "'");
        }
        for (const auto& id : list.doc_ids) {
            DistillExample ex;
            ex.query = q->second;
            ex.doc = &corpus.at(id);
            ex.teacher = teacher.find(list.query_id, id);
            if (ex.teacher == nullptr) {
                throw Error("teacher table has no scores for query " + list.query_id + ", document " + id);
            }
            ex.windows = segment(*ex.doc, window);
            if (ex.teacher->size() != ex.windows.size()) {
                throw Error("teacher scores for query " + list.query_id + ", document " + id + ": expected " +
                            std::to_string(ex.windows.size()) + " windows, got " +
                            std::to_string(ex.teacher->size()));
            }
            const auto n = ex.windows.size();
            const bool degenerate = (loss == LossKind::kd_ce && n < 2) ||
                                    (loss == LossKind::kd_ndcg2 && n <= static_cast<std::size_t>(kd_top_k));
            if (degenerate) {
                ++skipped;
                continue;
            }
            out.push_back(std::move(ex));
        }
    }
    if (skipped > 0) {
        warn("distillation: " + std::to_string(skipped) + " documents left out (too few windows for " +
             std::string(to_string(loss)) + ")");
    }
    return out;
}

double distill_document_loss(const CkModel& model, const DistillExample& ex, LossKind loss, int kd_top_k,
                             double scale, CkModel& grad) {
    auto qmask = full_mask(ex.query->tokens.size());
    const MaskedTokens query{ex.query->tokens, qmask};
    std::vector<MaskedTokens> passages;
    passages.reserve(ex.windows.size());
    for (const auto& w : ex.windows) {
        passages.push_back(MaskedTokens{w.tokens, w.pad_mask});
    }
    auto student = ck_score_passages(model, query, passages);
    ListLoss l;
    switch (loss) {
    case LossKind::kd_mse:
        l = kd_mse_loss(student, *ex.teacher);
        break;
    case LossKind::kd_ce:
        l = kd_ce_loss(student, *ex.teacher);
        break;
    case LossKind::kd_ndcg2:
        l = kd_ndcg2_loss(student, *ex.teacher, kd_top_k);
        break;
    case LossKind::ranknet:
        throw ConfigError("ranknet is a standalone loss, not a distillation loss");
    }
    for (std::size_t i = 0; i < passages.size(); ++i) {
        if (l.grad[i] != 0.0) {
            ck_backward(model, query, passages[i], l.grad[i] * scale, grad);
        }
    }
    return l.loss;
}

TrainResult train_ck_distill(const CkModel& init, std::span<const Query> queries,
                             std::span<const CandidateList> candidates, const Corpus& corpus,
                             const TeacherScoreTable& teacher, const Validation* validation,
                             const PipelineConfig& config) {
    const auto& tc = config.train;
    tc.validate();
    if (tc.loss == LossKind::ranknet) {
        throw ConfigError("distillation needs a kd_* loss, got ranknet");
    }
    const int top_k = config.effective_kd_top_k();
    auto examples = distill_examples(queries, candidates, corpus, teacher, config.cascade.window, tc.loss, top_k);

    TrainResult result;
    result.model = init;
    if (tc.max_steps == 0) {
        return result;
    }
    if (examples.empty()) {
        throw Error("distillation has no usable training documents");
    }

    CkModel& model = result.model;
    CkModel grad = model.zeros_like();
    Adam opt(tc.lr_ck);
    BatchSampler sampler(examples.size(), tc.seed);

    auto step = [&](int) {
        grad.set_zero();
        auto batch = sampler.next(tc.batch_size);
        const double scale = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        for (auto idx : batch) {
            loss += distill_document_loss(model, examples[idx], tc.loss, top_k, scale, grad);
        }
        adam_step(opt, model, grad, tc.train_embeddings);
        return loss * scale;
    };
    auto validate = [&] {
        return validation_metric(*validation, corpus, config.cascade, &model, tc.early_stop_metric);
    };
    auto outcome = run_loop<CkModel>(tc, validation != nullptr, step, validate, [&] { return model; });

    result.log = std::move(outcome.log);
    result.steps = outcome.steps;
    result.best_step = outcome.best_step;
    result.best_metric = outcome.best_metric;
    result.early_stopped = outcome.early_stopped;
    if (outcome.best) {
        result.model = std::move(*outcome.best);
    }
    return result;
}

MaxWindowScore ck_document_score(const CkModel& model, const Query& query, std::span<const PassageWindow> windows) {
    auto qmask = full_mask(query.tokens.size());
    std::vector<MaskedTokens> passages;
    for (const auto& w : windows) {
        passages.push_back(MaskedTokens{w.tokens, w.pad_mask});
    }
    auto scores = ck_score_passages(model, MaskedTokens{query.tokens, qmask}, passages);
    MaxWindowScore best{scores.front(), 0};
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > best.score) {
            best = MaxWindowScore{scores[i], static_cast<int>(i)};
        }
    }
    return best;
}

TrainResult train_ck_standalone(const CkModel& init, std::span<const Query> queries,
                                std::span<const TrainTriple> triples, const Corpus& corpus,
                                const Validation* validation, const PipelineConfig& config) {
    const auto& tc = config.train;
    tc.validate();
    auto by_id = index_queries(queries);

    struct Pair {
        const Query* query;
        std::vector<PassageWindow> pos;
        std::vector<PassageWindow> neg;
    };
    std::vector<Pair> pairs;
    for (const auto& t : triples) {
        auto q = by_id.find(t.query_id);
        if (q == by_id.end()) {
            throw Error("triple references unknown query '" + t.query_id + "'");
        }
        pairs.push_back(Pair{q->second, segment(corpus.at(t.positive), config.cascade.window),
                             segment(corpus.at(t.negative), config.cascade.window)});
    }

    TrainResult result;
    result.model = init;
    if (tc.max_steps == 0) {
        return result;
    }
    if (pairs.empty()) {
        throw Error("standalone training has no triples");
    }

    CkModel& model = result.model;
    CkModel grad = model.zeros_like();
    Adam opt(tc.lr_ck);
    BatchSampler sampler(pairs.size(), tc.seed);

    auto step = [&](int) {
        grad.set_zero();
        auto batch = sampler.next(tc.batch_size);
        const double scale = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        for (auto idx : batch) {
            const auto& p = pairs[idx];
            auto pos = ck_document_score(model, *p.query, p.pos);
            auto neg = ck_document_score(model, *p.query, p.neg);
            auto l = ranknet_loss(pos.score, neg.score);
            loss += l.loss;
            auto qmask = full_mask(p.query->tokens.size());
            const MaskedTokens query{p.query->tokens, qmask};
            const auto& wp = p.pos[static_cast<std::size_t>(pos.window)];
            const auto& wn = p.neg[static_cast<std::size_t>(neg.window)];
            ck_backward(model, query, MaskedTokens{wp.tokens, wp.pad_mask}, l.d_pos * scale, grad);
            ck_backward(model, query, MaskedTokens{wn.tokens, wn.pad_mask}, l.d_neg * scale, grad);
        }
        adam_step(opt, model, grad, tc.train_embeddings);
        return loss * scale;
    };
    auto validate = [&] {
        return validation_metric(*validation, corpus, config.cascade, &model, tc.early_stop_metric);
    };
    auto outcome = run_loop<CkModel>(tc, validation != nullptr, step, validate, [&] { return model; });

    result.log = std::move(outcome.log);
    result.steps = outcome.steps;
    result.best_step = outcome.best_step;
    result.best_metric = outcome.best_metric;
    result.early_stopped = outcome.early_stopped;
    if (outcome.best) {
        result.model = std::move(*outcome.best);
    }
    return result;
}

AggregationResult fit_aggregation(std::span<const TrainTriple> triples, const Corpus& corpus,
                                  const TeacherScoreTable& teacher, const Validation* validation,
                                  const PipelineConfig& config) {
    const auto& tc = config.train;
    tc.validate();
    const auto& cascade = config.cascade;
    cascade.validate();

    struct Pair {
        std::vector<double> pos;  // top-l inputs
        std::vector<double> neg;
    };
    std::vector<Pair> pairs;
    for (const auto& t : triples) {
        corpus.at(t.positive);
        corpus.at(t.negative);
        pairs.push_back(Pair{top_l_inputs(teacher.at(t.query_id, t.positive), cascade.l, cascade.fill),
                             top_l_inputs(teacher.at(t.query_id, t.negative), cascade.l, cascade.fill)});
    }

    AggregationResult result;
    result.w_ps = as_doubles(cascade.w_ps);
    result.bias = cascade.w_ps_bias;
    if (tc.max_steps == 0) {
        return result;
    }
    if (pairs.empty()) {
        throw Error("aggregation fitting has no triples");
    }

    Adam opt(tc.lr_wps);
    BatchSampler sampler(pairs.size(), tc.seed);
    auto score = [&](const std::vector<double>& in) {
        double s = result.bias;
        for (std::size_t i = 0; i < in.size(); ++i) {
            s += result.w_ps[i] * in[i];
        }
        return s;
    };

    auto step = [&](int) {
        std::vector<double> gw(result.w_ps.size(), 0.0);
        double gb = 0.0;
        auto batch = sampler.next(tc.batch_size);
        const double scale = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        for (auto idx : batch) {
            const auto& p = pairs[idx];
            auto l = ranknet_loss(score(p.pos), score(p.neg));
            loss += l.loss;
            for (std::size_t i = 0; i < gw.size(); ++i) {
                gw[i] += scale * (l.d_pos * p.pos[i] + l.d_neg * p.neg[i]);
            }
            gb += scale * (l.d_pos + l.d_neg);
        }
        opt.begin_step();
        opt.update<double>(0, result.w_ps, gw);
        if (!cascade.freeze_bias) {
            std::span<double> b(&result.bias, 1);
            std::span<const double> g(&gb, 1);
            opt.update<double>(1, b, g);
        }
        return loss * scale;
    };
    CascadeConfig val_cascade = cascade;
    val_cascade.selector = Selector::all;
    auto validate = [&] {
        val_cascade.w_ps = result.w_ps;
        val_cascade.w_ps_bias = result.bias;
        return validation_metric(*validation, corpus, val_cascade, nullptr, tc.early_stop_metric);
    };
    using Weights = std::pair<std::vector<double>, double>;
    auto outcome = run_loop<Weights>(tc, validation != nullptr, step, validate,
                                     [&] { return Weights{result.w_ps, result.bias}; });
    result.log = std::move(outcome.log);
    result.steps = outcome.steps;
    if (outcome.best) {
        result.w_ps = outcome.best->first;
        result.bias = outcome.best->second;
    }
    return result;
}

} // namespace idcm
