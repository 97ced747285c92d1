#include <benchmark/benchmark.h>

#include "kbref/embeddings.hpp"
#include "kbref/text_analysis.hpp"
#include "testutil.hpp"

using namespace kbref;

static void BM_Tokenize(benchmark::State& state) {
  std::string text =
      "Give me something to eat that is soft, but rich in starch and easy to peel!";
  for (auto _ : state) {
    auto toks = tokenize(text);
    benchmark::DoNotOptimize(toks.data());
  }
}
BENCHMARK(BM_Tokenize);

static void BM_DedupFacts(benchmark::State& state) {
  auto facts = testutil::synthetic_facts(state.range(0), 3);
  for (auto _ : state) {
    auto kept = dedup_facts(facts, 0.5);
    benchmark::DoNotOptimize(kept.data());
  }
}
BENCHMARK(BM_DedupFacts)->Arg(50)->Arg(200);

static void BM_RetrieveTopK(benchmark::State& state) {
  auto facts = testutil::synthetic_facts(state.range(0), 7, /*vocab=*/60);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& f : facts) corpus.push_back(f.tokens);
  SkipgramConfig cfg;
  cfg.dim = 32;
  cfg.epochs = 1;
  cfg.seed = 2;
  WordEmbeddings emb = train_skipgram(corpus, cfg);
  std::vector<std::string> expr = {"w1", "w20", "w33"};
  for (auto _ : state) {
    auto rr = retrieve_topk(emb, expr, facts, 50);
    benchmark::DoNotOptimize(rr.ids.data());
  }
}
BENCHMARK(BM_RetrieveTopK)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
