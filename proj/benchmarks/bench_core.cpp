#include <benchmark/benchmark.h>

#include "arae/evalsuite.hpp"
#include "arae/nn.hpp"
#include "arae/tensor.hpp"

using namespace arae;

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(1);
  const auto a = rng.normal_tensor<float>(Shape{n, n});
  const auto b = rng.normal_tensor<float>(Shape{n, n});
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

// One forward and backward LSTM step at desk width.
static void BM_LstmStep(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  nn::LstmCell<float> cell("lstm", 32, 64);
  SeededRng rng(2);
  cell.init(rng);
  const auto x = rng.normal_tensor<float>(Shape{batch, 32});
  nn::ParamList<float> params;
  cell.collect(params);
  for (auto _ : state) {
    Tape<float> tape;
    auto s = cell.step(tape, tape.constant(x), cell.zero_state(tape, batch));
    auto loss = sum(s.h);
    tape.backward(loss);
    benchmark::DoNotOptimize(params.front()->ensure_grad().raw());
  }
}
BENCHMARK(BM_LstmStep)->Arg(1)->Arg(32)->Arg(64);

static void BM_CorpusBleu(benchmark::State& state) {
  SeededRng rng(3);
  auto s = data::synth_corpus("sentiment", 2000, rng);
  std::vector<data::Tokens> cands(s.corpus.sequences.begin(), s.corpus.sequences.begin() + 1000);
  std::vector<data::Tokens> refs(s.corpus.sequences.begin() + 1000, s.corpus.sequences.end());
  for (auto _ : state) benchmark::DoNotOptimize(eval::bleu(cands, refs));
}
BENCHMARK(BM_CorpusBleu);
BENCHMARK_MAIN();
