#include <gtest/gtest.h>

#include <cmath>

#include "idcm/cascade.hpp"
#include "idcm/synthetic.hpp"
#include "idcm/train.hpp"
#include "test_support.hpp"

namespace idcm {
namespace {

TEST(Adam, FirstStepsMatchHandComputation) {
    Adam opt(0.1);
    std::vector<double> p{1.0, -2.0};
    const std::vector<double> g1{0.5, -4.0};
    opt.begin_step();
    opt.update<double>(0, p, g1);
    // With bias correction the first update is lr * g / (|g| + eps).
    EXPECT_NEAR(p[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
    EXPECT_NEAR(p[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);

    const std::vector<double> g2{-1.0, 0.0};
    opt.begin_step();
    opt.update<double>(0, p, g2);
    const double m = 0.9 * (0.1 * 0.5) + 0.1 * -1.0;
    const double v = 0.999 * (0.001 * 0.25) + 0.001 * 1.0;
    const double mhat = m / (1 - 0.81);
    const double vhat = v / (1 - 0.999 * 0.999);
    EXPECT_NEAR(p[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8) - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-12);
    EXPECT_EQ(opt.steps(), 2);
}

TEST(Adam, RejectsBadUse) {
    EXPECT_THROW(Adam(0.0), ConfigError);
    Adam opt(0.1);
    std::vector<double> p{1.0};
    const std::vector<double> g{1.0};
    EXPECT_THROW(opt.update<double>(0, p, g), Error);
}

TEST(TrainLog, JsonLines) {
    const std::vector<TrainLogRecord> log{{1, 0.5, std::nullopt, std::nullopt}, {2, 0.25, 0.75, 0.75}};
    EXPECT_EQ(format_train_log(log),
              "{\"step\":1,\"loss\":0.5,\"val_metric\":null,\"best\":null}\n"
              "{\"step\":2,\"loss\":0.25,\"val_metric\":0.75,\"best\":0.75}\n");
}

// Small synthetic setting shared by the training tests.
class TrainFixture : public ::testing::Test {
protected:
    void SetUp() override {
        ToyOptions opt;
        opt.queries = 8;
        opt.candidates_per_query = 4;
        opt.topic_terms = 20;
        opt.min_windows = 2;
        opt.max_windows = 7;
        toy = make_toy_collection(opt);
        std::vector<std::string> texts;
        for (const auto& d : toy.documents) {
            texts.push_back(d.text);
        }
        vocab = build_vocabulary(texts, 1);
        corpus = tokenize_collection(toy.documents, vocab);
        for (const auto& q : toy.queries) {
            queries.push_back(make_query(q.query_id, q.text, vocab));
        }
        SyntheticTeacher teacher(5);
        table = precompute_teacher_table(teacher, queries, toy.run, corpus, config.cascade.window);
        config.ck.dims = CkDims{vocab.size(), 8, 0, 8};
        config.train.lr_ck = 1e-2;
        config.train.batch_size = 4;
        config.train.max_steps = 12;
        config.train.validation_interval = 4;
        config.train.patience = 10;
        init = init_ck<float>(config.ck, vocab.size(), 1);
    }

    testing::QuietWarnings quiet;
    ToyCollection toy;
    Vocabulary vocab;
    Corpus corpus;
    std::vector<Query> queries;
    TeacherScoreTable table;
    PipelineConfig config;
    CkModel init;
};

TEST_F(TrainFixture, ZeroStepsReturnInput) {
    config.train.max_steps = 0;
    auto kd = train_ck_distill(init, queries, toy.run, corpus, table, nullptr, config);
    EXPECT_EQ(kd.model, init);
    EXPECT_TRUE(kd.log.empty());
    config.train.loss = LossKind::ranknet;
    auto sa = train_ck_standalone(init, queries, toy.triples, corpus, nullptr, config);
    EXPECT_EQ(sa.model, init);
}

TEST_F(TrainFixture, DistillIsDeterministic) {
    SyntheticTeacher val_teacher(5);
    Validation val{queries, toy.run, &toy.qrels, &val_teacher};
    for (auto loss : {LossKind::kd_mse, LossKind::kd_ce, LossKind::kd_ndcg2}) {
        config.train.loss = loss;
        auto a = train_ck_distill(init, queries, toy.run, corpus, table, &val, config);
        auto b = train_ck_distill(init, queries, toy.run, corpus, table, &val, config);
        EXPECT_EQ(format_train_log(a.log), format_train_log(b.log));
        EXPECT_EQ(a.model, b.model);
        EXPECT_NE(a.model, init);
        ASSERT_EQ(a.log.size(), 12u);
        EXPECT_FALSE(a.log[0].val_metric.has_value());
        EXPECT_TRUE(a.log[3].val_metric.has_value());
        EXPECT_TRUE(a.log[11].val_metric.has_value());
        EXPECT_TRUE(a.best_metric.has_value());
        EXPECT_GE(*a.log[11].best, *a.log[3].best);
    }
}

TEST_F(TrainFixture, BestSnapshotIsReturned) {
    SyntheticTeacher val_teacher(5);
    Validation val{queries, toy.run, &toy.qrels, &val_teacher};
    auto r = train_ck_distill(init, queries, toy.run, corpus, table, &val, config);
    ASSERT_TRUE(r.best_metric.has_value());
    const double again = validation_metric(val, corpus, config.cascade, &r.model, EarlyStopMetric::ndcg10);
    EXPECT_EQ(again, *r.best_metric);
}

TEST_F(TrainFixture, PatienceStopsEarly) {
    SyntheticTeacher val_teacher(5);
    Validation val{queries, toy.run, &toy.qrels, &val_teacher};
    config.train.validation_interval = 1;
    config.train.patience = 1;
    config.train.lr_ck = 1e-9;  // metric cannot improve after the first validation
    config.train.max_steps = 50;
    auto r = train_ck_distill(init, queries, toy.run, corpus, table, &val, config);
    EXPECT_TRUE(r.early_stopped);
    EXPECT_EQ(r.steps, 2);
    EXPECT_EQ(r.best_step, 1);
}

TEST_F(TrainFixture, DivergenceAborts) {
    for (auto& [key, scores] : table.entries()) {
        auto bad = scores;
        bad[0] = std::nan("");
        table.set(key.first, key.second, bad);
    }
    config.train.loss = LossKind::kd_mse;
    try {
        train_ck_distill(init, queries, toy.run, corpus, table, nullptr, config);
        FAIL() << "expected divergence";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("diverged at step 1"), std::string::npos) << e.what();
    }
}

TEST_F(TrainFixture, MissingTeacherEntryIsAnError) {
    TeacherScoreTable partial;
    EXPECT_THROW(train_ck_distill(init, queries, toy.run, corpus, partial, nullptr, config), Error);
}

TEST_F(TrainFixture, DistillRejectsRankNet) {
    config.train.loss = LossKind::ranknet;
    EXPECT_THROW(train_ck_distill(init, queries, toy.run, corpus, table, nullptr, config), ConfigError);
}

TEST_F(TrainFixture, DegenerateDocumentsAreLeftOut) {
    const int k = config.effective_kd_top_k();
    auto nd = distill_examples(queries, toy.run, corpus, table, config.cascade.window, LossKind::kd_ndcg2, k);
    auto mse = distill_examples(queries, toy.run, corpus, table, config.cascade.window, LossKind::kd_mse, k);
    EXPECT_EQ(mse.size(), toy.run.size() * 4);
    EXPECT_LT(nd.size(), mse.size());
    for (const auto& ex : nd) {
        EXPECT_GT(static_cast<int>(ex.windows.size()), k);
    }
}

TEST_F(TrainFixture, EmbeddingsFrozenOnRequest) {
    config.train.train_embeddings = false;
    auto start = convert_model<float>(testing::random_model64(config.ck.dims, config.ck.kernels, 3));
    auto r = train_ck_distill(start, queries, toy.run, corpus, table, nullptr, config);
    EXPECT_EQ(r.model.embeddings, start.embeddings);
    EXPECT_NE(r.model.conv_weight, start.conv_weight);
}

TEST(Standalone, GradientOnlyReachesArgmaxWindow) {
    // w=4, o=0: every window holds four distinct tokens found nowhere else.
    PipelineConfig cfg;
    cfg.cascade.window = WindowConfig{4, 0, 100};
    cfg.cascade.k = 1;
    cfg.cascade.l = 1;
    cfg.cascade.w_ps = {1.0};
    cfg.train.loss = LossKind::ranknet;
    cfg.train.max_steps = 1;
    cfg.train.batch_size = 1;
    cfg.train.lr_ck = 1e-2;
    Corpus corpus;
    corpus.add(TokenizedDocument{"pos", {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13}});
    corpus.add(TokenizedDocument{"neg", {14, 15, 16, 17, 18, 19, 20, 21}});
    const std::vector<Query> queries{Query{"q", {22, 23}}};
    const std::vector<TrainTriple> triples{{"q", "pos", "neg"}};
    const CkDims dims{24, 4, 0, 4};
    cfg.ck.dims = dims;
    auto start = convert_model<float>(testing::random_model64(dims, KernelBank::knrm(), 8));

    auto pos_windows = segment(corpus.at("pos"), cfg.cascade.window);
    auto neg_windows = segment(corpus.at("neg"), cfg.cascade.window);
    const int pos_arg = ck_document_score(start, queries[0], pos_windows).window;
    const int neg_arg = ck_document_score(start, queries[0], neg_windows).window;

    auto r = train_ck_standalone(start, queries, triples, corpus, nullptr, cfg);
    auto row_changed = [&](TokenId t) {
        for (std::size_t c = 0; c < dims.d_emb; ++c) {
            if (r.model.embeddings[t * dims.d_emb + c] != start.embeddings[t * dims.d_emb + c]) {
                return true;
            }
        }
        return false;
    };
    auto check = [&](const std::vector<PassageWindow>& windows, int arg) {
        for (const auto& w : windows) {
            for (auto t : w.tokens) {
                EXPECT_EQ(row_changed(t), w.window_index == arg) << "token " << t << " window " << w.window_index;
            }
        }
    };
    check(pos_windows, pos_arg);
    check(neg_windows, neg_arg);
}

TEST(MaxWindow, ArgmaxTiesToLowestIndex) {
    auto m = init_ck<float>(CkConfig{CkDims{10, 4, 0, 4}}, 10, 1);
    m.kernel_bias[0] = 2.0f;  // kernel weights are zero: every window scores the bias
    TokenizedDocument doc{"d", std::vector<TokenId>(200, 3)};
    auto windows = segment(doc, WindowConfig{});
    auto best = ck_document_score(m, Query{"q", {3}}, windows);
    EXPECT_EQ(best.window, 0);
    EXPECT_EQ(best.score, 2.0);
}

class AggregationFixture : public ::testing::Test {
protected:
    void SetUp() override {
        for (int i = 0; i < 6; ++i) {
            corpus.add(TokenizedDocument{"p" + std::to_string(i), std::vector<TokenId>(150, 2)});
            corpus.add(TokenizedDocument{"n" + std::to_string(i), std::vector<TokenId>(150, 2)});
        }
        // Positive documents have the higher maximum; negatives the higher runner-up scores.
        for (int i = 0; i < 6; ++i) {
            const double shift = 0.1 * i;
            table.set("q", "p" + std::to_string(i), {3.0 + shift, 0.0, 0.1});
            table.set("q", "n" + std::to_string(i), {2.0 + shift, 1.9 + shift, 1.8});
        }
        cfg.train.lr_wps = 0.05;
        cfg.train.batch_size = 1;
        cfg.train.max_steps = 100;
        cfg.cascade.w_ps = {0.0, 1.0, 0.0};
    }
    Corpus corpus;
    TeacherScoreTable table;
    PipelineConfig cfg;
};

TEST_F(AggregationFixture, OnePairLossDecreasesMonotonically) {
    const std::vector<TrainTriple> one{{"q", "p0", "n0"}};
    auto r = fit_aggregation(one, corpus, table, nullptr, cfg);
    ASSERT_EQ(r.log.size(), 100u);
    for (std::size_t i = 1; i < r.log.size(); ++i) {
        EXPECT_LT(r.log[i].loss, r.log[i - 1].loss) << "step " << r.log[i].step;
    }
}

TEST_F(AggregationFixture, LearnsToPreferHigherMaximum) {
    std::vector<TrainTriple> train;
    for (int i = 0; i < 3; ++i) {
        train.push_back({"q", "p" + std::to_string(i), "n" + std::to_string(i)});
    }
    auto r = fit_aggregation(train, corpus, table, nullptr, cfg);
    for (int i = 3; i < 6; ++i) {
        const double pos = aggregate(table.at("q", "p" + std::to_string(i)), 3, r.w_ps, r.bias);
        const double neg = aggregate(table.at("q", "n" + std::to_string(i)), 3, r.w_ps, r.bias);
        EXPECT_GT(pos, neg) << "held-out pair " << i;
    }
}

TEST_F(AggregationFixture, FrozenMaxWeightsScoreTheMaximum) {
    cfg.train.max_steps = 0;
    cfg.cascade.w_ps = {1.0, 0.0, 0.0};
    const std::vector<TrainTriple> one{{"q", "p0", "n0"}};
    auto r = fit_aggregation(one, corpus, table, nullptr, cfg);
    EXPECT_EQ(r.w_ps, (std::vector<double>{1.0, 0.0, 0.0}));
    EXPECT_EQ(aggregate(table.at("q", "n2"), 3, r.w_ps, r.bias), 2.2);
}

TEST_F(AggregationFixture, FrozenBiasStaysZero) {
    cfg.cascade.freeze_bias = true;
    const std::vector<TrainTriple> one{{"q", "p0", "n0"}};
    EXPECT_EQ(fit_aggregation(one, corpus, table, nullptr, cfg).bias, 0.0);
}

} // namespace
} // namespace idcm
