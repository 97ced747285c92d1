#include <benchmark/benchmark.h>

#include <sstream>

#include "kbref/rng.hpp"
#include "kbref/tensor_file.hpp"

using namespace kbref;

namespace {

TensorContainer grid_container() {
  Rng rng(1);
  TensorContainer c;
  for (int i = 0; i < 8; ++i) {
    Tensor t({7, 7, 512});
    for (int64_t j = 0; j < t.size(); ++j) t[j] = rng.uniform(-1, 1);
    c.put("grid/img" + std::to_string(i), t);
  }
  return c;
}

}  // namespace

static void BM_ContainerWrite(benchmark::State& state) {
  TensorContainer c = grid_container();
  for (auto _ : state) {
    std::ostringstream out;
    c.write(out);
    benchmark::DoNotOptimize(out.str().size());
  }
}
BENCHMARK(BM_ContainerWrite);

static void BM_ContainerRead(benchmark::State& state) {
  TensorContainer c = grid_container();
  std::ostringstream out;
  c.write(out);
  std::string data = out.str();
  for (auto _ : state) {
    std::istringstream in(data);
    TensorContainer back = TensorContainer::read(in, "<mem>");
    benchmark::DoNotOptimize(back.count());
  }
}
BENCHMARK(BM_ContainerRead);

BENCHMARK_MAIN();
