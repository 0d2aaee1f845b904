#include "idcm/teacher.hpp"

#include <cmath>
#include <thread>

#include "idcm/util.hpp"

namespace idcm {

std::vector<std::pair<int, double>> score_passages(ExpensiveScorer& scorer, const Query& query,
                                                   const TokenizedDocument& doc,
                                                   std::span<const PassageWindow> windows,
                                                   std::span<const int> requested) {
    std::vector<std::pair<int, double>> out;
    out.reserve(requested.size());
    for (int idx : requested) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= windows.size()) {
            throw Error("window " + std::to_string(idx) + " is not a window of document '" + doc.doc_id + "'");
        }
        double s = scorer.score(query, doc, windows[static_cast<std::size_t>(idx)]);
        scorer.calls_.fetch_add(1, std::memory_order_relaxed);
        if (!std::isfinite(s)) {
            throw Error(scorer.info().name + " returned a non-finite score for (" + query.query_id + ", " +
                        doc.doc_id + ", " + std::to_string(idx) + ")");
        }
        out.emplace_back(idx, s);
    }
    return out;
}

// ---------------------------------------------------------------------------

FileTeacher::FileTeacher(std::shared_ptr<const TeacherScoreTable> table, std::string name)
    : table_(std::move(table)), info_{std::move(name), 0.0} {
    if (!table_) {
        throw Error("file teacher needs a score table");
    }
}

double FileTeacher::score(const Query& query, const TokenizedDocument& doc, const PassageWindow& window) {
    const auto* scores = table_->find(query.query_id, doc.doc_id);
    if (scores == nullptr || window.window_index < 0 ||
        static_cast<std::size_t>(window.window_index) >= scores->size()) {
        throw Error("teacher table has no score for (" + query.query_id + ", " + doc.doc_id + ", window " +
                    std::to_string(window.window_index) + ")");
    }
    return (*scores)[static_cast<std::size_t>(window.window_index)];
}

std::unique_ptr<ExpensiveScorer> FileTeacher::clone() const {
    return std::make_unique<FileTeacher>(table_, info_.name);
}

// ---------------------------------------------------------------------------

SyntheticTeacher::SyntheticTeacher(std::uint64_t seed, std::chrono::microseconds delay_per_passage)
    : seed_(seed), delay_(delay_per_passage), info_{"synthetic:" + std::to_string(seed), 40.0} {}

void SyntheticTeacher::set_weight(TokenId token, double weight) { pinned_[token] = weight; }

double SyntheticTeacher::weight(TokenId token) const {
    if (auto it = pinned_.find(token); it != pinned_.end()) {
        return it->second;
    }
    if (token == kPadId || token == kOovId) {
        return 0.0;
    }
    return 0.2 + 1.8 * unit_interval(mix64(seed_ ^ mix64(0x5eedULL + token)));
}

double SyntheticTeacher::jitter(std::string_view query_id, std::string_view doc_id, int window_index) const {
    std::uint64_t h = fnv1a64(query_id, mix64(seed_));
    h = fnv1a64("\t", h);
    h = fnv1a64(doc_id, h);
    h = mix64(h ^ static_cast<std::uint64_t>(window_index));
    return kJitter * (2.0 * unit_interval(h) - 1.0);
}

double SyntheticTeacher::score(const Query& query, const TokenizedDocument& doc, const PassageWindow& window) {
    if (delay_.count() > 0) {
        // busy-wait for sub-millisecond delays, sleep otherwise
        auto until = std::chrono::steady_clock::now() + delay_;
        if (delay_ >= std::chrono::milliseconds(2)) {
            std::this_thread::sleep_until(until);
        }
        while (std::chrono::steady_clock::now() < until) {
        }
    }
    double real = 0.0;
    std::unordered_map<TokenId, int> tf;
    for (std::size_t i = 0; i < window.tokens.size(); ++i) {
        if (window.pad_mask[i] != 0) {
            ++tf[window.tokens[i]];
            real += 1.0;
        }
    }
    double base = 0.0;
    if (real > 0.0) {
        for (TokenId t : query.tokens) {
            auto it = tf.find(t);
            if (it != tf.end()) {
                base += weight(t) * it->second / real;
            }
        }
    }
    return base + jitter(query.query_id, doc.doc_id, window.window_index);
}

std::unique_ptr<ExpensiveScorer> SyntheticTeacher::clone() const {
    auto copy = std::make_unique<SyntheticTeacher>(seed_, delay_);
    copy->pinned_ = pinned_;
    return copy;
}

// ---------------------------------------------------------------------------

TeacherSpec parse_teacher_spec(std::string_view spec) {
    auto colon = spec.find(':');
    if (colon == std::string_view::npos) {
        throw ConfigError("teacher must be file:PATH, proc:CMD or synthetic:SEED, got '" + std::string(spec) + "'");
    }
    auto kind = spec.substr(0, colon);
    TeacherSpec out;
    out.argument = std::string(spec.substr(colon + 1));
    if (kind == "file") {
        out.kind = TeacherSpec::Kind::file;
    } else if (kind == "proc") {
        out.kind = TeacherSpec::Kind::process;
    } else if (kind == "synthetic") {
        out.kind = TeacherSpec::Kind::synthetic;
        long long seed = 0;
        if (!parse_int(out.argument, seed)) {
            throw ConfigError("synthetic teacher seed must be an integer, got '" + out.argument + "'");
        }
    } else {
        throw ConfigError("unknown teacher kind '" + std::string(kind) + "'");
    }
    if (out.argument.empty()) {
        throw ConfigError("teacher spec '" + std::string(spec) + "' has an empty argument");
    }
    return out;
}

TeacherScoreTable precompute_teacher_table(ExpensiveScorer& scorer, std::span<const Query> queries,
                                           std::span<const CandidateList> candidates, const Corpus& corpus,
                                           const WindowConfig& window, std::vector<TeacherScoreTable::Key>* order) {
    std::unordered_map<std::string, const Query*> by_id;
    for (const auto& q : queries) {
        by_id.emplace(q.query_id, &q);
    }
    TeacherScoreTable table;
    for (const auto& list : candidates) {
        auto qit = by_id.find(list.query_id);
        if (qit == by_id.end()) {
            throw Error("candidate list references unknown query '" + list.query_id + "'");
        }
        for (const auto& doc_id : list.doc_ids) {
            if (table.find(list.query_id, doc_id) != nullptr) {
                continue;
            }
            const auto& doc = corpus.at(doc_id);
            auto windows = segment(doc, window);
            std::vector<int> all(windows.size());
            for (std::size_t i = 0; i < all.size(); ++i) {
                all[i] = static_cast<int>(i);
            }
            std::vector<double> scores;
            try {
                for (auto& [idx, s] : score_passages(scorer, *qit->second, doc, windows, all)) {
                    scores.push_back(s);
                }
            } catch (const Error& e) {
                throw Error("scoring (" + list.query_id + ", " + doc_id + ") failed: " + e.what());
            }
            table.set(list.query_id, doc_id, std::move(scores));
            if (order != nullptr) {
                order->emplace_back(list.query_id, doc_id);
            }
        }
    }
    return table;
}

} // namespace idcm
