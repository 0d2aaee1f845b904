#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "idcm/ck_model.hpp"
#include "idcm/windowing.hpp"

namespace idcm {

enum class Selector { ck, ck_small, static_first, static_top_tf, all };
/// How the aggregation input is filled when fewer than l expensive scores exist.
enum class FillRule { repeat_last, zero };

std::string_view to_string(Selector s);
Selector parse_selector(std::string_view s);
std::string_view to_string(FillRule f);
FillRule parse_fill_rule(std::string_view s);

struct CascadeConfig {
    WindowConfig window;
    int k = 4;  // windows routed to the expensive scorer
    int l = 3;  // top expensive scores fed to the aggregation layer
    Selector selector = Selector::ck;
    std::vector<double> w_ps{1.0, 0.0, 0.0};
    double w_ps_bias = 0.0;
    bool freeze_bias = false;
    FillRule fill = FillRule::repeat_last;

    bool uses_ck() const noexcept { return selector == Selector::ck || selector == Selector::ck_small; }
    void validate() const;
};

enum class LossKind { ranknet, kd_mse, kd_ce, kd_ndcg2 };
enum class EarlyStopMetric { ndcg10, mrr10 };

std::string_view to_string(LossKind l);
LossKind parse_loss(std::string_view s);
std::string_view to_string(EarlyStopMetric m);
EarlyStopMetric parse_early_stop_metric(std::string_view s);

struct TrainConfig {
    LossKind loss = LossKind::kd_ndcg2;
    double lr_ck = 1e-5;
    double lr_wps = 1e-4;
    int batch_size = 8;
    EarlyStopMetric early_stop_metric = EarlyStopMetric::ndcg10;
    int patience = 3;
    int max_steps = 1000;
    int validation_interval = 100;
    std::uint64_t seed = 42;
    int kd_top_k = 0;  // 0 = use the cascade k
    bool train_embeddings = true;

    void validate() const;
};

/// Every tunable of the pipeline in one place; addressable as `key = value` lines.
struct PipelineConfig {
    CascadeConfig cascade;
    CkConfig ck;
    TrainConfig train;
    std::size_t max_query_tokens = kDefaultMaxQueryTokens;
    std::size_t max_candidates = kDefaultMaxCandidates;
    std::size_t min_count = 1;
    std::uint64_t model_seed = 1;
    /// Keys explicitly assigned through set() (config file or CLI override).
    std::set<std::string, std::less<>> assigned;

    void set(std::string_view key, std::string_view value);
    /// Parse `key = value` lines; '#' starts a comment.
    void load_text(std::string_view text, const std::string& source);
    void load_file(const std::filesystem::path& path);
    /// Canonical `key = value` text for every field, sorted by key.
    std::string snapshot() const;
    void validate() const;

    int effective_kd_top_k() const noexcept { return train.kd_top_k > 0 ? train.kd_top_k : cascade.k; }
};

} // namespace idcm
