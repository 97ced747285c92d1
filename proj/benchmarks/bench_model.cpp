#include <benchmark/benchmark.h>

#include "kbref/graph.hpp"
#include "kbref/model.hpp"
#include "testutil.hpp"

using namespace kbref;

namespace {

struct Setup {
  testutil::GroundingFixture fx;
  GroundingModel model;
  RetrievalContext ctx;

  Setup()
      : fx(testutil::make_grounding_fixture(testutil::Signal::Mixed, 4, 123)),
        model(fx.config, fx.vocab, 1),
        ctx(fx.retrieval()) {}
};

Setup& setup() {
  static Setup s;
  return s;
}

}  // namespace

static void BM_ForwardFull(benchmark::State& state) {
  Setup& s = setup();
  for (auto _ : state) {
    ForwardResult r = s.model.forward(s.fx.samples[0], &s.fx.features, &s.ctx);
    benchmark::DoNotOptimize(r.probs.data());
  }
}
BENCHMARK(BM_ForwardFull);

static void BM_LossBackward(benchmark::State& state) {
  Setup& s = setup();
  for (auto _ : state) {
    s.model.params().zero_grad();
    Graph g;
    Var loss = s.model.loss(g, s.fx.samples[0], &s.fx.features, &s.ctx, false, 0.0);
    g.backward(loss);
    benchmark::DoNotOptimize(g.value(loss)[0]);
  }
}
BENCHMARK(BM_LossBackward);

static void BM_ImageAttention(benchmark::State& state) {
  Setup& s = setup();
  const Tensor& grid = s.fx.features.grid(s.fx.samples[0].image_id);
  for (auto _ : state) {
    Graph g;
    Var q = s.model.encode_expression(g, s.fx.samples[0].tokens);
    auto ia = s.model.image_attention(g, grid, q);
    benchmark::DoNotOptimize(g.value(ia.attended).data());
  }
}
BENCHMARK(BM_ImageAttention);

static void BM_EmmPass(benchmark::State& state) {
  Setup& s = setup();
  Rng rng(5);
  for (auto _ : state) {
    Graph g;
    Var q = s.model.encode_expression(g, s.fx.samples[0].tokens);
    std::vector<Var> facts;
    for (int k = 0; k < 4; ++k) {
      facts.push_back(g.constant(testutil::random_tensor({s.fx.config.dq}, rng)));
    }
    auto run = s.model.run_emm(g, facts, q, s.fx.config.passes);
    benchmark::DoNotOptimize(g.value(run.m).data());
  }
}
BENCHMARK(BM_EmmPass);

BENCHMARK_MAIN();
