#include "idcm/config.hpp"

#include <functional>
#include <map>

#include "idcm/util.hpp"

namespace idcm {

std::string_view to_string(Selector s) {
    switch (s) {
    case Selector::ck: return "ck";
    case Selector::ck_small: return "ck_small";
    case Selector::static_first: return "static_first";
    case Selector::static_top_tf: return "static_top_tf";
    case Selector::all: return "all";
    }
    return "?";
}

Selector parse_selector(std::string_view s) {
    for (auto sel : {Selector::ck, Selector::ck_small, Selector::static_first, Selector::static_top_tf, Selector::all}) {
        if (to_string(sel) == s) {
            return sel;
        }
    }
    throw ConfigError("unknown selector '" + std::string(s) + "'");
}

std::string_view to_string(FillRule f) { return f == FillRule::repeat_last ? "repeat_last" : "zero"; }

FillRule parse_fill_rule(std::string_view s) {
    if (s == "repeat_last") {
        return FillRule::repeat_last;
    }
    if (s == "zero") {
        return FillRule::zero;
    }
    throw ConfigError("unknown fill rule '" + std::string(s) + "'");
}

std::string_view to_string(LossKind l) {
    switch (l) {
    case LossKind::ranknet: return "ranknet";
    case LossKind::kd_mse: return "kd_mse";
    case LossKind::kd_ce: return "kd_ce";
    case LossKind::kd_ndcg2: return "kd_ndcg2";
    }
    return "?";
}

LossKind parse_loss(std::string_view s) {
    for (auto l : {LossKind::ranknet, LossKind::kd_mse, LossKind::kd_ce, LossKind::kd_ndcg2}) {
        if (to_string(l) == s) {
            return l;
        }
    }
    throw ConfigError("unknown loss '" + std::string(s) + "'");
}

std::string_view to_string(EarlyStopMetric m) { return m == EarlyStopMetric::ndcg10 ? "ndcg@10" : "mrr@10"; }

EarlyStopMetric parse_early_stop_metric(std::string_view s) {
    if (s == "ndcg@10") {
        return EarlyStopMetric::ndcg10;
    }
    if (s == "mrr@10") {
        return EarlyStopMetric::mrr10;
    }
    throw ConfigError("unknown early-stop metric '" + std::string(s) + "'");
}

void CascadeConfig::validate() const {
    window.validate();
    if (l < 1) {
        throw ConfigError("l must be >= 1");
    }
    if (selector != Selector::all) {
        if (k < 1) {
            throw ConfigError("k must be >= 1 unless the selector is 'all'");
        }
        if (l > k) {
            throw ConfigError("l (" + std::to_string(l) + ") must not exceed k (" + std::to_string(k) + ")");
        }
    }
    if (w_ps.size() != static_cast<std::size_t>(l)) {
        throw ConfigError("w_ps must have l = " + std::to_string(l) + " entries, has " + std::to_string(w_ps.size()));
    }
    if (freeze_bias && w_ps_bias != 0.0) {
        throw ConfigError("freeze_bias requires w_ps_bias = 0");
    }
}

void TrainConfig::validate() const {
    if (!(lr_ck > 0.0) || !(lr_wps > 0.0)) {
        throw ConfigError("learning rates must be positive");
    }
    if (patience < 1) {
        throw ConfigError("patience must be >= 1");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (max_steps < 0) {
        throw ConfigError("max_steps must be >= 0");
    }
    if (validation_interval < 1) {
        throw ConfigError("validation_interval must be >= 1");
    }
    if (kd_top_k < 0) {
        throw ConfigError("kd_top_k must be >= 0");
    }
}

namespace {

long long to_int(std::string_view key, std::string_view v) {
    long long out = 0;
    if (!parse_int(v, out)) {
        throw ConfigError("config key '" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'");
    }
    return out;
}

double to_real(std::string_view key, std::string_view v) {
    double out = 0;
    if (!parse_real(v, out)) {
        throw ConfigError("config key '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
    }
    return out;
}

bool to_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw ConfigError("config key '" + std::string(key) + "' expects a boolean, got '" + std::string(v) + "'");
}

std::vector<double> to_reals(std::string_view key, std::string_view v) {
    std::vector<double> out;
    if (trim(v).empty()) {
        return out;
    }
    for (auto part : split(v, ',')) {
        out.push_back(to_real(key, part));
    }
    return out;
}

std::string join_reals(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i != 0) {
            out += ',';
        }
        out += format_real(v[i]);
    }
    return out;
}

std::size_t non_negative(std::string_view key, long long v) {
    if (v < 0) {
        throw ConfigError("config key '" + std::string(key) + "' must be non-negative");
    }
    return static_cast<std::size_t>(v);
}

struct Field {
    std::function<void(PipelineConfig&, std::string_view key, std::string_view value)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

const std::map<std::string, Field, std::less<>>& fields() {
    static const std::map<std::string, Field, std::less<>> table = {
        {"w", {[](auto& c, auto k, auto v) { c.cascade.window.w = static_cast<int>(to_int(k, v)); },
               [](const auto& c) { return std::to_string(c.cascade.window.w); }}},
        {"o", {[](auto& c, auto k, auto v) { c.cascade.window.o = static_cast<int>(to_int(k, v)); },
               [](const auto& c) { return std::to_string(c.cascade.window.o); }}},
        {"max_doc_tokens",
         {[](auto& c, auto k, auto v) { c.cascade.window.max_doc_tokens = static_cast<int>(to_int(k, v)); },
          [](const auto& c) { return std::to_string(c.cascade.window.max_doc_tokens); }}},
        {"k", {[](auto& c, auto k, auto v) { c.cascade.k = static_cast<int>(to_int(k, v)); },
               [](const auto& c) { return std::to_string(c.cascade.k); }}},
        {"l", {[](auto& c, auto k, auto v) { c.cascade.l = static_cast<int>(to_int(k, v)); },
               [](const auto& c) { return std::to_string(c.cascade.l); }}},
        {"selector", {[](auto& c, auto, auto v) { c.cascade.selector = parse_selector(v); },
                      [](const auto& c) { return std::string(to_string(c.cascade.selector)); }}},
        {"w_ps", {[](auto& c, auto k, auto v) { c.cascade.w_ps = to_reals(k, v); },
                  [](const auto& c) { return join_reals(c.cascade.w_ps); }}},
        {"w_ps_bias", {[](auto& c, auto k, auto v) { c.cascade.w_ps_bias = to_real(k, v); },
                       [](const auto& c) { return format_real(c.cascade.w_ps_bias); }}},
        {"freeze_bias", {[](auto& c, auto k, auto v) { c.cascade.freeze_bias = to_bool(k, v); },
                         [](const auto& c) { return std::string(c.cascade.freeze_bias ? "true" : "false"); }}},
        {"short_doc_fill", {[](auto& c, auto, auto v) { c.cascade.fill = parse_fill_rule(v); },
                            [](const auto& c) { return std::string(to_string(c.cascade.fill)); }}},
        {"d_emb", {[](auto& c, auto k, auto v) { c.ck.dims.d_emb = non_negative(k, to_int(k, v)); },
                   [](const auto& c) { return std::to_string(c.ck.dims.d_emb); }}},
        {"d_proj", {[](auto& c, auto k, auto v) { c.ck.dims.d_proj = non_negative(k, to_int(k, v)); },
                    [](const auto& c) { return std::to_string(c.ck.dims.d_proj); }}},
        {"d_out", {[](auto& c, auto k, auto v) { c.ck.dims.d_out = non_negative(k, to_int(k, v)); },
                   [](const auto& c) { return std::to_string(c.ck.dims.d_out); }}},
        {"kernel_mus", {[](auto& c, auto k, auto v) { c.ck.kernels.mus = to_reals(k, v); },
                        [](const auto& c) { return join_reals(c.ck.kernels.mus); }}},
        {"kernel_sigmas", {[](auto& c, auto k, auto v) { c.ck.kernels.sigmas = to_reals(k, v); },
                           [](const auto& c) { return join_reals(c.ck.kernels.sigmas); }}},
        {"loss", {[](auto& c, auto, auto v) { c.train.loss = parse_loss(v); },
                  [](const auto& c) { return std::string(to_string(c.train.loss)); }}},
        {"lr_ck", {[](auto& c, auto k, auto v) { c.train.lr_ck = to_real(k, v); },
                   [](const auto& c) { return format_real(c.train.lr_ck); }}},
        {"lr_wps", {[](auto& c, auto k, auto v) { c.train.lr_wps = to_real(k, v); },
                    [](const auto& c) { return format_real(c.train.lr_wps); }}},
        {"batch_size", {[](auto& c, auto k, auto v) { c.train.batch_size = static_cast<int>(to_int(k, v)); },
                        [](const auto& c) { return std::to_string(c.train.batch_size); }}},
        {"early_stop_metric",
         {[](auto& c, auto, auto v) { c.train.early_stop_metric = parse_early_stop_metric(v); },
          [](const auto& c) { return std::string(to_string(c.train.early_stop_metric)); }}},
        {"patience", {[](auto& c, auto k, auto v) { c.train.patience = static_cast<int>(to_int(k, v)); },
                      [](const auto& c) { return std::to_string(c.train.patience); }}},
        {"max_steps", {[](auto& c, auto k, auto v) { c.train.max_steps = static_cast<int>(to_int(k, v)); },
                       [](const auto& c) { return std::to_string(c.train.max_steps); }}},
        {"validation_interval",
         {[](auto& c, auto k, auto v) { c.train.validation_interval = static_cast<int>(to_int(k, v)); },
          [](const auto& c) { return std::to_string(c.train.validation_interval); }}},
        {"seed", {[](auto& c, auto k, auto v) { c.train.seed = static_cast<std::uint64_t>(to_int(k, v)); },
                  [](const auto& c) { return std::to_string(c.train.seed); }}},
        {"kd_top_k", {[](auto& c, auto k, auto v) { c.train.kd_top_k = static_cast<int>(to_int(k, v)); },
                      [](const auto& c) { return std::to_string(c.train.kd_top_k); }}},
        {"train_embeddings", {[](auto& c, auto k, auto v) { c.train.train_embeddings = to_bool(k, v); },
                              [](const auto& c) { return std::string(c.train.train_embeddings ? "true" : "false"); }}},
        {"max_query_tokens",
         {[](auto& c, auto k, auto v) { c.max_query_tokens = non_negative(k, to_int(k, v)); },
          [](const auto& c) { return std::to_string(c.max_query_tokens); }}},
        {"max_candidates", {[](auto& c, auto k, auto v) { c.max_candidates = non_negative(k, to_int(k, v)); },
                            [](const auto& c) { return std::to_string(c.max_candidates); }}},
        {"min_count", {[](auto& c, auto k, auto v) { c.min_count = non_negative(k, to_int(k, v)); },
                       [](const auto& c) { return std::to_string(c.min_count); }}},
        {"model_seed", {[](auto& c, auto k, auto v) { c.model_seed = static_cast<std::uint64_t>(to_int(k, v)); },
                        [](const auto& c) { return std::to_string(c.model_seed); }}},
    };
    return table;
}

} // namespace

void PipelineConfig::set(std::string_view key, std::string_view value) {
    key = trim(key);
    value = trim(value);
    auto it = fields().find(key);
    if (it == fields().end()) {
        throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
    it->second.set(*this, key, value);
    assigned.emplace(key);
    // keep the aggregation width consistent when only l changes
    if (key == "l" && !assigned.contains("w_ps") && cascade.l >= 1 &&
        cascade.w_ps.size() != static_cast<std::size_t>(cascade.l)) {
        cascade.w_ps.assign(static_cast<std::size_t>(cascade.l), 0.0);
        cascade.w_ps[0] = 1.0;
    }
}

void PipelineConfig::load_text(std::string_view text, const std::string& source) {
    std::size_t line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        if (trim(line).empty()) {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw FormatError(source, line_no, "expected 'key = value'");
        }
        try {
            set(line.substr(0, eq), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw FormatError(source, line_no, e.what());
        }
    }
}

void PipelineConfig::load_file(const std::filesystem::path& path) { load_text(read_file(path), path.string()); }

std::string PipelineConfig::snapshot() const {
    std::string out;
    for (const auto& [key, field] : fields()) {
        out += key;
        out += " = ";
        out += field.get(*this);
        out += '\n';
    }
    return out;
}

void PipelineConfig::validate() const {
    cascade.validate();
    train.validate();
    ck.kernels.validate();
    if (ck.dims.d_emb == 0 || ck.dims.d_out == 0) {
        throw ConfigError("d_emb and d_out must be positive");
    }
    if (max_query_tokens < 1 || max_candidates < 1 || min_count < 1) {
        throw ConfigError("max_query_tokens, max_candidates and min_count must be >= 1");
    }
}

} // namespace idcm
