#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "idcm/cascade.hpp"
#include "idcm/ck_model.hpp"
#include "idcm/teacher.hpp"
#include "idcm/util.hpp"
#include "idcm/windowing.hpp"

namespace {

using namespace idcm;

constexpr std::size_t kVocab = 5000;

std::vector<TokenId> random_ids(SplitMix& rng, std::size_t n) {
    std::vector<TokenId> ids(n);
    for (auto& id : ids) {
        id = static_cast<TokenId>(2 + rng.below(kVocab - 2));
    }
    return ids;
}

CkModel bench_model(std::size_t d_emb, std::size_t d_out) {
    CkConfig cfg;
    cfg.dims = CkDims{kVocab, d_emb, 0, d_out};
    return init_ck<float>(cfg, kVocab, 1);
}

void BM_Segment(benchmark::State& state) {
    SplitMix rng(1);
    TokenizedDocument doc{"d", random_ids(rng, static_cast<std::size_t>(state.range(0)))};
    const WindowConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(segment(doc, cfg));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Segment)->Arg(200)->Arg(2000);

// One query against one 64-token window; the argument is the embedding width.
void BM_CkForward(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const auto model = bench_model(d, d);
    SplitMix rng(2);
    const auto q = random_ids(rng, 8);
    const auto p = random_ids(rng, 64);
    const auto qm = full_mask(q.size());
    const auto pm = full_mask(p.size());
    for (auto _ : state) {
        benchmark::DoNotOptimize(ck_forward(model, MaskedTokens{q, qm}, MaskedTokens{p, pm}));
    }
}
BENCHMARK(BM_CkForward)->Arg(32)->Arg(128)->Arg(384);

void BM_ScoreDocument(benchmark::State& state) {
    const auto model = bench_model(64, 64);
    SplitMix rng(3);
    const Query query{"q", random_ids(rng, 8)};
    const TokenizedDocument doc{"d", random_ids(rng, 2000)};
    SyntheticTeacher teacher(5);
    CascadeConfig cfg;
    cfg.selector = state.range(0) == 0 ? Selector::all : Selector::ck;
    CascadeEngine engine(cfg, &model, teacher);
    for (auto _ : state) {
        benchmark::DoNotOptimize(engine.score_document(query, doc));
    }
    state.SetLabel(state.range(0) == 0 ? "all" : "ck k=4");
}
BENCHMARK(BM_ScoreDocument)->Arg(0)->Arg(1);

} // namespace
