// Serial reference kernels against their OpenMP variants on a default-sized round.

#include <benchmark/benchmark.h>

#include "tenet/kernels.hpp"
#include "tenet/protocol.hpp"

using namespace tenet;

namespace {

struct Fixture {
  TrainingConfig config;
  Dataset data;
  SystemState state;
  std::vector<LocalObservation> observations;
  std::vector<EncodeJob> jobs;
  std::vector<EncodeResult> encoded;
  std::vector<std::vector<Reception>> receptions;
  std::vector<CloudPass> passes;
  std::vector<std::vector<double>> grad_x;
  std::vector<std::vector<double>> signals;
  std::vector<EdgeSample> edge_samples;

  explicit Fixture(std::size_t batch) : config(), data(), state() {
    config.batch_size = batch;
    data = generate_synthetic(config.master_seed, config.synthetic_spec());
    state = make_state(config);
    Rng rng(1);
    const std::size_t n = config.n_train;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < n; ++i) observations.push_back(data.observe(Split::train, b, rng));
    }
    for (std::size_t k = 0; k < observations.size(); ++k) jobs.push_back({k % n, observations[k].values, {}});
    encoded = encode_batch(state.nodes, jobs, Execution::serial);
    for (std::size_t b = 0; b < batch; ++b) {
      std::vector<Reception> rx;
      for (std::size_t i = 0; i < n; ++i) rx.push_back({i, encoded[b * n + i].message});
      receptions.push_back(std::move(rx));
    }
    passes = infer_batch(*state.cloud, receptions, Execution::serial);
    for (std::size_t b = 0; b < batch; ++b) {
      grad_x.push_back(softmax_cross_entropy(passes[b].logits, data.label(Split::train, b)).grad);
    }
    for (std::size_t b = 0; b < batch; ++b) {
      signals.push_back(std::vector<double>(config.message_dim, 0.01 * static_cast<double>(b % 7)));
    }
    for (std::size_t b = 0; b < batch; ++b) edge_samples.push_back({&encoded[b * n].cache, signals[b]});
  }
};

Execution mode(const benchmark::State& st) { return st.range(1) == 0 ? Execution::serial : Execution::parallel; }

void label(benchmark::State& st) {
  st.SetLabel(st.range(1) == 0 ? "serial" : "parallel/" + std::to_string(worker_threads()) + "t");
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_encode(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(encode_batch(f.state.nodes, f.jobs, mode(st)));
  label(st);
}

void BM_infer(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(infer_batch(*f.state.cloud, f.receptions, mode(st)));
  label(st);
}

void BM_backward(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(backward_batch(*f.state.cloud, f.passes, f.grad_x, mode(st)));
  label(st);
}

void BM_edge_gradient(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)));
  const double divisor = static_cast<double>(st.range(0));
  for (auto _ : st) {
    benchmark::DoNotOptimize(edge_gradient_batch(f.state.nodes[0], f.edge_samples, divisor, mode(st)));
  }
  label(st);
}

void sizes(benchmark::internal::Benchmark* b) {
  for (long batch : {16, 64, 256}) {
    for (long exec : {0, 1}) b->Args({batch, exec});
  }
}

}  // namespace

BENCHMARK(BM_encode)->Apply(sizes);
BENCHMARK(BM_infer)->Apply(sizes);
BENCHMARK(BM_backward)->Apply(sizes);
BENCHMARK(BM_edge_gradient)->Apply(sizes);

BENCHMARK_MAIN();
