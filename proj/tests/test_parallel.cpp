#include <omp.h>

#include "doctest.h"
#include "support.hpp"
#include "tenet/kernels.hpp"
#include "tenet/oracles.hpp"
#include "tenet/protocol.hpp"

using namespace tenet;
using tenet::test::random_vector;

namespace {

struct Fixture {
  std::vector<EdgeNode> nodes;
  std::vector<std::vector<double>> observations;
  std::vector<EncodeJob> jobs;
  CloudModel cloud{CloudSpec{8, 3, 6, 10, 4}, 9};
  std::vector<std::vector<Reception>> samples;
  std::vector<std::vector<double>> grad_x;

  explicit Fixture(std::size_t batch) {
    EncoderSpec spec;
    spec.observation_dim = 12;
    spec.hidden = {10};
    spec.message_dim = 8;
    for (std::size_t i = 0; i < 3; ++i) nodes.emplace_back(i, spec, 100 + i);
    Rng rng(7);
    for (std::size_t b = 0; b < batch * 3; ++b) observations.push_back(random_vector(rng, 12));
    for (std::size_t b = 0; b < batch * 3; ++b) jobs.push_back({b % 3, observations[b], std::nullopt});
    for (std::size_t b = 0; b < batch; ++b) {
      std::vector<Reception> rx;
      for (std::size_t i = 0; i < 3; ++i) rx.push_back({i, random_vector(rng, 8)});
      samples.push_back(std::move(rx));
      grad_x.push_back(random_vector(rng, 4));
    }
  }
};

}  // namespace

TEST_CASE("parallel kernels agree with the serial reference") {
  for (std::size_t batch : {1, 7, 8, 37, 64}) {
    Fixture f(batch);
    const auto enc_s = encode_batch(f.nodes, f.jobs, Execution::serial);
    const auto enc_p = encode_batch(f.nodes, f.jobs, Execution::parallel);
    REQUIRE(enc_s.size() == enc_p.size());
    for (std::size_t j = 0; j < enc_s.size(); ++j) CHECK(enc_s[j].message == enc_p[j].message);

    const auto pass_s = infer_batch(f.cloud, f.samples, Execution::serial);
    const auto pass_p = infer_batch(f.cloud, f.samples, Execution::parallel);
    for (std::size_t b = 0; b < batch; ++b) CHECK(pass_s[b].logits == pass_p[b].logits);

    const auto back_s = backward_batch(f.cloud, pass_s, f.grad_x, Execution::serial);
    const auto back_p = backward_batch(f.cloud, pass_p, f.grad_x, Execution::parallel);
    CHECK(relative_deviation(back_p.grads, back_s.grads) <= 1e-12);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t r = 0; r < 3; ++r) CHECK(back_p.messages[b][r] == back_s.messages[b][r]);
    }

    std::vector<std::vector<double>> signals;
    Rng rng(batch);
    std::vector<EdgeSample> edge;
    for (std::size_t j = 0; j < enc_s.size(); j += 3) signals.push_back(random_vector(rng, 8));
    for (std::size_t j = 0, s = 0; j < enc_s.size(); j += 3, ++s) edge.push_back({&enc_s[j].cache, signals[s]});
    const auto g_s = edge_gradient_batch(f.nodes[0], edge, static_cast<double>(batch), Execution::serial);
    const auto g_p = edge_gradient_batch(f.nodes[0], edge, static_cast<double>(batch), Execution::parallel);
    CHECK(relative_deviation(g_p, g_s) <= 1e-12);
  }
}

TEST_CASE("parallel results do not depend on the thread count") {
  Fixture f(50);
  const auto passes = infer_batch(f.cloud, f.samples, Execution::serial);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = backward_batch(f.cloud, passes, f.grad_x, Execution::parallel);
  omp_set_num_threads(4);
  const auto four = backward_batch(f.cloud, passes, f.grad_x, Execution::parallel);
  omp_set_num_threads(saved);
  CHECK(one.grads == four.grads);
}

TEST_CASE("training rounds do not depend on the thread count") {
  auto cfg = equivalence_config(5, false);
  cfg.async = true;
  cfg.optimizer = OptimizerKind::adam;
  const auto data = generate_synthetic(cfg.master_seed, cfg.synthetic_spec());
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  SystemState a = make_state(cfg);
  for (int k = 0; k < 5; ++k) run_training_round(a, data);
  omp_set_num_threads(3);
  SystemState b = make_state(cfg);
  for (int k = 0; k < 5; ++k) run_training_round(b, data);
  omp_set_num_threads(saved);
  CHECK(a.cloud->parameters() == b.cloud->parameters());
  CHECK(a.edge_parameters() == b.edge_parameters());
}

TEST_CASE("kernel errors surface on the calling thread") {
  Fixture f(4);
  std::vector<EncodeJob> bad = f.jobs;
  bad.back().node = 99;
  CHECK_THROWS(encode_batch(f.nodes, bad, Execution::parallel));
  std::vector<std::vector<Reception>> broken = f.samples;
  broken[2][0].signal.resize(3);
  CHECK_THROWS_AS(infer_batch(f.cloud, broken, Execution::parallel), ShapeError);
  CHECK(worker_threads() >= 1);
}
