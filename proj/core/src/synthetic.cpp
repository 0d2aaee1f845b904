#include "idcm/synthetic.hpp"

#include <algorithm>
#include <numeric>

#include "idcm/util.hpp"

namespace idcm {

namespace {

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i != 0) {
            out += ' ';
        }
        out += words[i];
    }
    return out;
}

int grade_for(int mass) {
    if (mass >= 16) {
        return 3;
    }
    if (mass >= 10) {
        return 2;
    }
    if (mass >= 5) {
        return 1;
    }
    return 0;
}

} // namespace

ToyCollection make_toy_collection(const ToyOptions& opt) {
    if (opt.queries < 1 || opt.candidates_per_query < 2 || opt.background_terms < 1 || opt.topic_terms < 4 ||
        opt.min_windows < 1 || opt.max_windows < opt.min_windows || opt.min_hot_windows < 1 ||
        opt.max_hot_windows < opt.min_hot_windows) {
        throw ConfigError("toy collection options are inconsistent");
    }
    opt.window.validate();
    const int w = opt.window.w;
    SplitMix rng(opt.seed);
    auto background = [&] { return "w" + std::to_string(rng.below(static_cast<std::uint64_t>(opt.background_terms))); };
    auto topic = [&](std::uint64_t i) { return "t" + std::to_string(i); };

    ToyCollection toy;
    for (int q = 0; q < opt.queries; ++q) {
        ToyQuery query;
        query.query_id = "q" + std::to_string(q + 1);
        const int n_terms = 2 + static_cast<int>(rng.below(3));
        std::vector<std::uint64_t> terms;
        while (static_cast<int>(terms.size()) < n_terms) {
            auto t = rng.below(static_cast<std::uint64_t>(opt.topic_terms));
            if (std::find(terms.begin(), terms.end(), t) == terms.end()) {
                terms.push_back(t);
            }
        }
        std::vector<std::string> qwords;
        for (auto t : terms) {
            qwords.push_back(topic(t));
        }
        query.text = join_words(qwords);

        struct Candidate {
            std::string doc_id;
            double first_stage;
        };
        std::vector<Candidate> cands;
        std::vector<int> grades;
        for (int c = 0; c < opt.candidates_per_query; ++c) {
            const std::string doc_id = "d" + std::to_string(q + 1) + "_" + std::to_string(c + 1);
            const int n_win = opt.min_windows + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                                    opt.max_windows - opt.min_windows + 1)));
            const int tail = w / 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w - w / 2 + 1)));
            const int length = (n_win - 1) * w + std::max(tail, 1);

            std::vector<std::string> words(static_cast<std::size_t>(length));
            for (auto& word : words) {
                // Off-topic topic terms act as distractors that never match the query.
                word = rng.uniform() < 0.05 ? topic(rng.below(static_cast<std::uint64_t>(opt.topic_terms)))
                                            : background();
                for (auto t : terms) {
                    if (word == topic(t)) {
                        word = background();
                        break;
                    }
                }
            }

            // Half of the documents are only weakly on topic.
            const bool weak = rng.uniform() < 0.5;
            const int max_hot = std::min(opt.max_hot_windows, n_win);
            const int min_hot = std::min(opt.min_hot_windows, max_hot);
            const int hot = min_hot + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_hot - min_hot + 1)));
            std::vector<int> order(static_cast<std::size_t>(n_win));
            std::iota(order.begin(), order.end(), 0);
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[rng.below(i)]);
            }
            int mass = 0;
            for (int h = 0; h < hot; ++h) {
                const int win = order[static_cast<std::size_t>(h)];
                const int begin = win * w;
                const int end = std::min(length, begin + w);
                const int count = weak ? 1 : 1 + static_cast<int>(rng.below(6));
                for (int m = 0; m < count; ++m) {
                    const auto pos = static_cast<std::size_t>(
                        begin + static_cast<int>(rng.below(static_cast<std::uint64_t>(end - begin))));
                    words[pos] = topic(terms[rng.below(terms.size())]);
                }
                mass += count;
            }

            toy.documents.push_back(RawDocument{doc_id, join_words(words)});
            const int grade = grade_for(mass);
            grades.push_back(grade);
            toy.judgments.push_back(Judgment{query.query_id, doc_id, grade});
            toy.qrels.set(query.query_id, doc_id, grade);
            cands.push_back(Candidate{doc_id, mass + 3.0 * rng.uniform()});
        }

        std::stable_sort(cands.begin(), cands.end(),
                         [](const Candidate& a, const Candidate& b) { return a.first_stage > b.first_stage; });
        CandidateList list;
        list.query_id = query.query_id;
        for (const auto& c : cands) {
            list.doc_ids.push_back(c.doc_id);
            list.first_stage_scores.push_back(c.first_stage);
        }
        toy.run.push_back(std::move(list));

        const auto first = static_cast<std::size_t>(toy.documents.size()) - grades.size();
        for (int t = 0; t < opt.triples_per_query; ++t) {
            const auto a = rng.below(grades.size());
            const auto b = rng.below(grades.size());
            if (grades[a] == grades[b]) {
                continue;
            }
            const auto pos = grades[a] > grades[b] ? a : b;
            const auto neg = grades[a] > grades[b] ? b : a;
            toy.triples.push_back(
                TrainTriple{query.query_id, toy.documents[first + pos].doc_id, toy.documents[first + neg].doc_id});
        }
        toy.queries.push_back(std::move(query));
    }
    return toy;
}

void write_toy_collection(const ToyCollection& toy, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string collection;
    for (const auto& d : toy.documents) {
        collection += d.doc_id + "\thttp://toy.example/" + d.doc_id + "\t\t" + d.text + '\n';
    }
    atomic_write(dir / "collection.tsv", collection);

    std::string queries;
    for (const auto& q : toy.queries) {
        queries += q.query_id + '\t' + q.text + '\n';
    }
    atomic_write(dir / "queries.tsv", queries);

    std::vector<QueryRanking> rankings;
    for (const auto& list : toy.run) {
        QueryRanking r;
        r.query_id = list.query_id;
        for (std::size_t i = 0; i < list.doc_ids.size(); ++i) {
            r.docs.push_back(ScoredDoc{list.doc_ids[i], list.first_stage_scores[i]});
        }
        rankings.push_back(std::move(r));
    }
    write_run_file(rankings, "toy-first-stage", dir / "run.tsv");

    std::string qrels;
    for (const auto& j : toy.judgments) {
        qrels += j.query_id + " 0 " + j.doc_id + ' ' + std::to_string(j.grade) + '\n';
    }
    atomic_write(dir / "qrels.txt", qrels);

    std::string triples;
    for (const auto& t : toy.triples) {
        triples += t.query_id + '\t' + t.positive + '\t' + t.negative + '\n';
    }
    atomic_write(dir / "triples.tsv", triples);
}

} // namespace idcm
