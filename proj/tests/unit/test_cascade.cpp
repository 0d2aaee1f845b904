#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "idcm/cascade.hpp"
#include "test_support.hpp"

namespace idcm {
namespace {

std::vector<int> top_k(std::vector<double> scores, int k) { return select_top_k(scores, k); }

TEST(SelectTopK, Argmax) { EXPECT_EQ(top_k({0.2, 0.9, 0.5}, 1), (std::vector<int>{1})); }
TEST(SelectTopK, TiesGoToLowerIndex) { EXPECT_EQ(top_k({0.3, 0.3, 0.1}, 1), (std::vector<int>{0})); }
TEST(SelectTopK, KLargerThanN) { EXPECT_EQ(top_k({0.1, 0.3, 0.2}, 5), (std::vector<int>{0, 1, 2})); }
TEST(SelectTopK, ReturnedAscending) { EXPECT_EQ(top_k({5, 1, 4, 9, 0}, 3), (std::vector<int>{0, 2, 3})); }
TEST(SelectTopK, Errors) {
    EXPECT_THROW(top_k({}, 1), Error);
    EXPECT_THROW(top_k({1.0}, 0), ConfigError);
}

TEST(Aggregate, MaxExtraction) {
    const std::vector<double> s{3, 1, 2};
    const std::vector<double> w{1, 0, 0};
    EXPECT_EQ(aggregate(s, 3, w, 0.0), 3.0);
}

TEST(Aggregate, FillRepeatsSmallest) {
    const std::vector<double> one{5};
    const std::vector<double> w{0.5, 0.3, 0.2};
    EXPECT_DOUBLE_EQ(aggregate(one, 3, w, 0.0), 5.0);
    const std::vector<double> two{2, 1};
    const std::vector<double> ones{1, 1, 1};
    EXPECT_DOUBLE_EQ(aggregate(two, 3, ones, 0.5), 4.5);
    EXPECT_EQ(top_l_inputs(two, 3), (std::vector<double>{2, 1, 1}));
    EXPECT_EQ(top_l_inputs(two, 3, FillRule::zero), (std::vector<double>{2, 1, 0}));
}

TEST(Aggregate, NeedsAScore) {
    const std::vector<double> w{1, 0, 0};
    EXPECT_THROW(aggregate(std::span<const double>{}, 3, w, 0.0), Error);
}

// Wraps a scorer and records every (doc, window) it is asked for.
class RecordingScorer final : public ExpensiveScorer {
public:
    explicit RecordingScorer(std::uint64_t seed) : inner_(seed) {}
    const ScorerInfo& info() const noexcept override { return inner_.info(); }
    double score(const Query& q, const TokenizedDocument& d, const PassageWindow& w) override {
        requests.emplace_back(d.doc_id, w.window_index);
        return inner_.score(q, d, w);
    }
    std::unique_ptr<ExpensiveScorer> clone() const override { return std::make_unique<RecordingScorer>(1); }

    std::vector<std::pair<std::string, int>> requests;

private:
    SyntheticTeacher inner_;
};

class CascadeTest : public ::testing::Test {
protected:
    void SetUp() override {
        SplitMix rng(77);
        corpus = testing::random_corpus(rng, 12, 40, 1, 600);
        model = convert_model<float>(testing::random_model64(CkDims{40, 6, 0, 6}, KernelBank::knrm(), 3));
        query = Query{"q", testing::random_tokens(rng, 3, 40)};
    }
    Corpus corpus;
    CkModel model;
    Query query;
};

TEST_F(CascadeTest, CkWithLargeKEqualsAll) {
    SyntheticTeacher teacher(2);
    CascadeConfig all;
    all.selector = Selector::all;
    CascadeConfig ck;
    ck.k = 40;
    CascadeEngine a(all, nullptr, teacher);
    CascadeEngine b(ck, &model, teacher);
    for (const auto& doc : corpus.documents()) {
        EXPECT_NEAR(a.score_document(query, doc).score, b.score_document(query, doc).score, 1e-12);
    }
}

TEST_F(CascadeTest, TeacherOnlySeesSelectedWindows) {
    for (auto selector : {Selector::ck, Selector::static_first, Selector::static_top_tf, Selector::all}) {
        RecordingScorer scorer(4);
        CascadeConfig cfg;
        cfg.selector = selector;
        CascadeEngine engine(cfg, &model, scorer);
        std::uint64_t expected = 0;
        for (const auto& doc : corpus.documents()) {
            scorer.requests.clear();
            const auto before = scorer.calls();
            auto r = engine.score_document(query, doc);
            const int n = r.window_count;
            const int want = selector == Selector::all ? n : std::min(cfg.k, n);
            EXPECT_EQ(static_cast<int>(r.selected_windows.size()), want);
            EXPECT_EQ(static_cast<int>(scorer.calls() - before), want);
            std::set<int> asked;
            for (const auto& [id, w] : scorer.requests) {
                asked.insert(w);
            }
            EXPECT_EQ(asked, std::set<int>(r.selected_windows.begin(), r.selected_windows.end()));
            if (selector == Selector::ck) {
                EXPECT_EQ(r.selected_windows, select_top_k(r.esm_scores, cfg.k));
            }
            expected += static_cast<std::uint64_t>(want);
        }
        EXPECT_EQ(engine.etm_windows(), expected);
    }
}

TEST_F(CascadeTest, StaticFirstPicksLeadingWindows) {
    SyntheticTeacher teacher(1);
    CascadeConfig cfg;
    cfg.selector = Selector::static_first;
    cfg.k = 3;
    CascadeEngine engine(cfg, nullptr, teacher);
    TokenizedDocument doc{"long", std::vector<TokenId>(2000, 7)};
    auto r = engine.score_document(query, doc);
    EXPECT_EQ(r.window_count, 40);
    EXPECT_EQ(r.selected_windows, (std::vector<int>{0, 1, 2}));
    EXPECT_TRUE(r.esm_scores.empty());
}

TEST_F(CascadeTest, StaticTopTfFindsTheMatchingWindow) {
    SyntheticTeacher teacher(1);
    CascadeConfig cfg;
    cfg.selector = Selector::static_top_tf;
    CascadeEngine engine(cfg, nullptr, teacher);
    TokenizedDocument doc{"d", std::vector<TokenId>(500, 3)};
    doc.tokens[5 * 50 + 20] = 99;
    Query q{"q", {99}};
    auto r = engine.score_document(q, doc);
    EXPECT_NE(std::find(r.selected_windows.begin(), r.selected_windows.end(), 5), r.selected_windows.end());
}

TEST_F(CascadeTest, BatchedScoringEqualsOneAtATime) {
    SyntheticTeacher teacher(6);
    CascadeConfig cfg;
    CascadeEngine batch(cfg, &model, teacher);
    CascadeEngine single(cfg, &model, teacher);
    std::vector<const TokenizedDocument*> docs;
    for (const auto& d : corpus.documents()) {
        docs.push_back(&d);
    }
    auto together = batch.score_documents(query, docs);
    ASSERT_EQ(together.size(), docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto alone = single.score_document(query, *docs[i]);
        EXPECT_EQ(together[i].score, alone.score);
        EXPECT_EQ(together[i].selected_windows, alone.selected_windows);
        EXPECT_EQ(together[i].esm_scores, alone.esm_scores);
    }
}

TEST_F(CascadeTest, CkSelectorNeedsModel) {
    SyntheticTeacher teacher(1);
    EXPECT_THROW(CascadeEngine(CascadeConfig{}, nullptr, teacher), ConfigError);
    CascadeConfig small;
    small.selector = Selector::ck_small;
    EXPECT_THROW(CascadeEngine(small, &model, teacher), ConfigError);
}

// Scores every window of document "dN" as N.
class ConstantScorer final : public ExpensiveScorer {
public:
    const ScorerInfo& info() const noexcept override { return info_; }
    double score(const Query&, const TokenizedDocument& d, const PassageWindow&) override {
        return values.at(d.doc_id);
    }
    std::unique_ptr<ExpensiveScorer> clone() const override { return std::make_unique<ConstantScorer>(*this); }
    ConstantScorer() = default;
    ConstantScorer(const ConstantScorer& o) : ExpensiveScorer(), values(o.values) {}

    std::map<std::string, double> values;

private:
    ScorerInfo info_{"constant", 1.0};
};

TEST(RankCandidates, SortsByScoreThenDocId) {
    Corpus corpus;
    for (const char* id : {"x1", "x2", "x3", "x4"}) {
        corpus.add(TokenizedDocument{id, {2, 3}});
    }
    ConstantScorer scorer;
    scorer.values = {{"x1", 1.0}, {"x2", 3.0}, {"x3", 2.0}, {"x4", 1.0}};
    CascadeConfig cfg;
    cfg.selector = Selector::all;
    CascadeEngine engine(cfg, nullptr, scorer);
    Query q{"q", {2}};
    auto r = rank_candidates(q, CandidateList{"q", {"x4", "x1", "x2", "x3"}, {4, 3, 2, 1}}, corpus, engine);
    std::vector<std::string> order;
    for (const auto& d : r.ranking.docs) {
        order.push_back(d.doc_id);
    }
    EXPECT_EQ(order, (std::vector<std::string>{"x2", "x3", "x1", "x4"}));
    EXPECT_EQ(r.details[0].doc_id, "x4");

    const std::vector<QueryRanking> rankings{r.ranking};
    EXPECT_EQ(format_run(rankings, "t"), "q Q0 x2 1 3 t\nq Q0 x3 2 2 t\nq Q0 x1 3 1 t\nq Q0 x4 4 1 t\n");
}

TEST(RankCandidates, MissingDocumentIsNamed) {
    Corpus corpus;
    corpus.add(TokenizedDocument{"have", {2}});
    SyntheticTeacher teacher(1);
    CascadeConfig cfg;
    cfg.selector = Selector::all;
    CascadeEngine engine(cfg, nullptr, teacher);
    try {
        rank_candidates(Query{"q", {2}}, CandidateList{"q", {"have", "ghost"}, {2, 1}}, corpus, engine);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
    }
}

TEST_F(CascadeTest, RankAllIndependentOfWorkers) {
    SplitMix rng(9);
    std::vector<Query> queries;
    std::vector<CandidateList> lists;
    for (int i = 0; i < 7; ++i) {
        queries.push_back(Query{"q" + std::to_string(i), testing::random_tokens(rng, 2, 40)});
        CandidateList list{queries.back().query_id, {}, {}};
        for (int j = 0; j < 5; ++j) {
            list.doc_ids.push_back("d" + std::to_string((i + j * 2) % 12));
            list.first_stage_scores.push_back(10.0 - j);
        }
        lists.push_back(list);
    }
    SyntheticTeacher teacher(3);
    CascadeConfig cfg;
    auto one = rank_all(queries, lists, corpus, cfg, &model, teacher, 1);
    auto four = rank_all(queries, lists, corpus, cfg, &model, teacher, 4);
    EXPECT_EQ(format_diagnostics(one), format_diagnostics(four));
    std::vector<QueryRanking> a;
    std::vector<QueryRanking> b;
    for (std::size_t i = 0; i < one.size(); ++i) {
        a.push_back(one[i].ranking);
        b.push_back(four[i].ranking);
    }
    EXPECT_EQ(format_run(a, "t"), format_run(b, "t"));

    auto records = parse_diagnostics(format_diagnostics(one), "diag");
    ASSERT_EQ(records.size(), 35u);
    EXPECT_EQ(records[0].selected, one[0].details[0].selected_windows);
    EXPECT_EQ(records[0].etm_scores, one[0].details[0].etm_scores);
}

TEST(CascadeConfig, Validation) {
    CascadeConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.l = 5;
    cfg.w_ps.assign(5, 0.2);
    EXPECT_THROW(cfg.validate(), ConfigError);  // l > k
    cfg.selector = Selector::all;
    EXPECT_NO_THROW(cfg.validate());
    cfg.l = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

} // namespace
} // namespace idcm
