#include "idcm/cascade.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "idcm/util.hpp"

namespace idcm {

std::vector<int> select_top_k(std::span<const double> scores, int k) {
    if (scores.empty()) {
        throw Error("select_top_k: empty score sequence");
    }
    if (k < 1) {
        throw ConfigError("select_top_k: k must be >= 1");
    }
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), scores.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](int a, int b) {
                          const double sa = scores[static_cast<std::size_t>(a)];
                          const double sb = scores[static_cast<std::size_t>(b)];
                          if (sa != sb) {
                              return sa > sb;
                          }
                          return a < b;
                      });
    order.resize(take);
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<double> top_l_inputs(std::span<const double> etm_scores, int l, FillRule fill) {
    if (etm_scores.empty()) {
        throw Error("aggregate: at least one expensive score is required");
    }
    if (l < 1) {
        throw ConfigError("aggregate: l must be >= 1");
    }
    std::vector<double> sorted(etm_scores.begin(), etm_scores.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto width = static_cast<std::size_t>(l);
    if (sorted.size() >= width) {
        sorted.resize(width);
    } else {
        const double pad = fill == FillRule::repeat_last ? sorted.back() : 0.0;
        sorted.resize(width, pad);
    }
    return sorted;
}

double aggregate(std::span<const double> etm_scores, int l, std::span<const double> w_ps, double bias,
                 FillRule fill) {
    if (w_ps.size() != static_cast<std::size_t>(l)) {
        throw ConfigError("aggregate: w_ps has " + std::to_string(w_ps.size()) + " weights for l = " +
                          std::to_string(l));
    }
    auto top = top_l_inputs(etm_scores, l, fill);
    double s = bias;
    for (std::size_t i = 0; i < top.size(); ++i) {
        s += w_ps[i] * top[i];
    }
    return s;
}

std::vector<int> select_static_top_tf(const Query& query, std::span<const PassageWindow> windows, int k) {
    std::unordered_set<TokenId> terms;
    for (TokenId t : query.tokens) {
        if (t != kPadId && t != kOovId) {
            terms.insert(t);
        }
    }
    std::vector<double> counts;
    counts.reserve(windows.size());
    for (const auto& win : windows) {
        int c = 0;
        for (std::size_t i = 0; i < win.tokens.size(); ++i) {
            if (win.pad_mask[i] != 0 && terms.contains(win.tokens[i])) {
                ++c;
            }
        }
        counts.push_back(c);
    }
    return select_top_k(counts, k);
}

// ---------------------------------------------------------------------------

CascadeEngine::CascadeEngine(CascadeConfig config, const CkModel* ck, ExpensiveScorer& scorer)
    : config_(std::move(config)), ck_(ck), scorer_(scorer) {
    config_.validate();
    if (config_.uses_ck()) {
        if (ck_ == nullptr) {
            throw ConfigError("selector '" + std::string(to_string(config_.selector)) + "' needs a CK model");
        }
        if (config_.selector == Selector::ck_small && !ck_->has_projection()) {
            throw ConfigError("selector 'ck_small' needs a CK model with a pre-projection (d_proj > 0)");
        }
    }
}

DocumentScore CascadeEngine::score_document(const Query& query, const TokenizedDocument& doc) {
    const TokenizedDocument* one[] = {&doc};
    return std::move(score_documents(query, one).front());
}

std::vector<DocumentScore> CascadeEngine::score_documents(const Query& query,
                                                          std::span<const TokenizedDocument* const> docs) {
    std::vector<std::vector<PassageWindow>> windows;
    windows.reserve(docs.size());
    for (const auto* doc : docs) {
        windows.push_back(segment(*doc, config_.window));
    }

    std::vector<std::vector<double>> esm(docs.size());
    if (config_.uses_ck()) {
        auto qmask = full_mask(query.tokens.size());
        std::vector<MaskedTokens> flat;
        for (const auto& wins : windows) {
            for (const auto& w : wins) {
                flat.push_back(MaskedTokens{w.tokens, w.pad_mask});
            }
        }
        auto scores = ck_score_passages(*ck_, MaskedTokens{query.tokens, qmask}, flat);
        ck_windows_ += scores.size();
        std::size_t off = 0;
        for (std::size_t d = 0; d < docs.size(); ++d) {
            esm[d].assign(scores.begin() + static_cast<std::ptrdiff_t>(off),
                          scores.begin() + static_cast<std::ptrdiff_t>(off + windows[d].size()));
            off += windows[d].size();
        }
    }

    std::vector<DocumentScore> out;
    out.reserve(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
        out.push_back(finish(query, *docs[d], windows[d], std::move(esm[d])));
    }
    return out;
}

DocumentScore CascadeEngine::finish(const Query& query, const TokenizedDocument& doc,
                                    std::span<const PassageWindow> windows, std::vector<double> esm) {
    DocumentScore result;
    result.doc_id = doc.doc_id;
    result.window_count = static_cast<int>(windows.size());

    switch (config_.selector) {
    case Selector::ck:
    case Selector::ck_small:
        result.selected_windows = select_top_k(esm, config_.k);
        break;
    case Selector::static_first:
        for (int i = 0; i < std::min<int>(config_.k, result.window_count); ++i) {
            result.selected_windows.push_back(i);
        }
        break;
    case Selector::static_top_tf:
        result.selected_windows = select_static_top_tf(query, windows, config_.k);
        break;
    case Selector::all:
        result.selected_windows.resize(windows.size());
        std::iota(result.selected_windows.begin(), result.selected_windows.end(), 0);
        break;
    }
    result.esm_scores = std::move(esm);

    for (auto& [idx, s] : score_passages(scorer_, query, doc, windows, result.selected_windows)) {
        result.etm_scores.push_back(s);
    }
    etm_windows_ += result.selected_windows.size();
    result.score = aggregate(result.etm_scores, config_.l, config_.w_ps, config_.w_ps_bias, config_.fill);
    return result;
}

// ---------------------------------------------------------------------------

RankedQuery rank_candidates(const Query& query, const CandidateList& candidates, const Corpus& corpus,
                            CascadeEngine& engine) {
    std::vector<const TokenizedDocument*> docs;
    docs.reserve(candidates.doc_ids.size());
    for (const auto& id : candidates.doc_ids) {
        const auto* doc = corpus.find(id);
        if (doc == nullptr) {
            throw Error("candidate document '" + id + "' for query " + query.query_id + " is not in the corpus");
        }
        docs.push_back(doc);
    }
    RankedQuery out;
    out.ranking.query_id = query.query_id;
    out.details = engine.score_documents(query, docs);
    for (const auto& d : out.details) {
        out.ranking.docs.push_back(ScoredDoc{d.doc_id, d.score});
    }
    sort_ranking(out.ranking.docs);
    return out;
}

std::vector<RankedQuery> rank_all(std::span<const Query> queries, std::span<const CandidateList> candidates,
                                  const Corpus& corpus, const CascadeConfig& config, const CkModel* ck,
                                  ExpensiveScorer& scorer, int workers) {
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

    std::vector<RankedQuery> out(candidates.size());
    workers = std::max(1, std::min<int>(workers, static_cast<int>(candidates.size())));
    if (workers == 1) {
        CascadeEngine engine(config, ck, scorer);
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            out[i] = rank_candidates(*resolved[i], candidates[i], corpus, engine);
        }
        return out;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            try {
                auto local = scorer.clone();
                CascadeEngine engine(config, ck, *local);
                while (true) {
                    auto i = next.fetch_add(1);
                    if (i >= candidates.size()) {
                        break;
                    }
                    out[i] = rank_candidates(*resolved[i], candidates[i], corpus, engine);
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next.store(candidates.size());
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

template <typename V>
std::string join_list(const std::vector<V>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i != 0) {
            out += ',';
        }
        if constexpr (std::is_same_v<V, double>) {
            out += format_real(values[i]);
        } else {
            out += std::to_string(values[i]);
        }
    }
    return out;
}

} // namespace

std::string format_diagnostics(std::span<const RankedQuery> ranked) {
    std::string out;
    for (const auto& rq : ranked) {
        for (const auto& d : rq.details) {
            out += rq.ranking.query_id + '\t' + d.doc_id + '\t' + std::to_string(d.window_count) + '\t' +
                   join_list(d.selected_windows) + '\t' + join_list(d.etm_scores) + '\t' + join_list(d.esm_scores) +
                   '\n';
        }
    }
    return out;
}

std::vector<DiagnosticRecord> parse_diagnostics(std::string_view content, const std::string& source) {
    std::vector<DiagnosticRecord> out;
    std::size_t line_no = 0;
    for (auto line : split(content, '\n')) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        auto f = split(line, '\t');
        if (f.size() != 6) {
            throw FormatError(source, line_no, "expected 6 diagnostic fields");
        }
        DiagnosticRecord r;
        r.query_id = std::string(f[0]);
        r.doc_id = std::string(f[1]);
        long long n = 0;
        if (!parse_int(f[2], n) || n < 1) {
            throw FormatError(source, line_no, "invalid window count");
        }
        r.window_count = static_cast<int>(n);
        if (!f[3].empty()) {
            for (auto part : split(f[3], ',')) {
                long long idx = 0;
                if (!parse_int(part, idx) || idx < 0 || idx >= n) {
                    throw FormatError(source, line_no, "invalid selected window '" + std::string(part) + "'");
                }
                r.selected.push_back(static_cast<int>(idx));
            }
        }
        auto reals = [&](std::string_view field, std::vector<double>& dst) {
            if (field.empty()) {
                return;
            }
            for (auto part : split(field, ',')) {
                double v = 0;
                if (!parse_real(part, v)) {
                    throw FormatError(source, line_no, "invalid score '" + std::string(part) + "'");
                }
                dst.push_back(v);
            }
        };
        reals(f[4], r.etm_scores);
        reals(f[5], r.esm_scores);
        if (r.etm_scores.size() != r.selected.size()) {
            throw FormatError(source, line_no, "selected windows and expensive scores differ in length");
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace idcm
