#include <algorithm>
#include <cmath>
#include <variant>

#include "doctest.h"
#include "support.hpp"
#include "tenet/cloud.hpp"
#include "tenet/oracles.hpp"

using namespace tenet;
using tenet::test::random_vector;

namespace {

CloudSpec toy_spec(std::size_t branches) {
  CloudSpec spec;
  spec.message_dim = 4;
  spec.branches = branches;
  spec.latent = 5;
  spec.hidden = 6;
  spec.classes = 3;
  return spec;
}

std::vector<Reception> random_receptions(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<Reception> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({i, random_vector(rng, dim)});
  return out;
}

// Dense/ReLU evaluation straight from the parameter vector.
std::vector<double> straight_line(const LayerStack& stack, std::vector<double> x) {
  const auto params = stack.params();
  std::size_t offset = 0;
  for (const auto& layer : stack.layers()) {
    if (const auto* d = std::get_if<Dense>(&layer)) {
      std::vector<double> y(d->out);
      for (std::size_t r = 0; r < d->out; ++r) {
        double acc = params[offset + d->out * d->in + r];
        for (std::size_t c = 0; c < d->in; ++c) acc += params[offset + r * d->in + c] * x[c];
        y[r] = acc;
      }
      offset += d->out * d->in + d->out;
      x = std::move(y);
    } else {
      for (double& v : x) v = std::max(v, 0.0);
    }
  }
  return x;
}

}  // namespace

TEST_CASE("cloud output matches a straight-line evaluation") {
  for (std::size_t n : {1, 2, 5}) {
    CloudModel model(toy_spec(3), 10 + n);
    Rng rng(n);
    const auto rx = random_receptions(rng, n, 4);
    std::vector<double> expect(3, 0.0);
    for (std::size_t m = 0; m < 3; ++m) {
      std::vector<double> pooled(5, 0.0);
      for (const auto& r : rx) {
        const auto z = straight_line(model.inner(m), r.signal);
        for (std::size_t k = 0; k < 5; ++k) pooled[k] += z[k];
      }
      const auto u = straight_line(model.outer(m), pooled);
      for (std::size_t k = 0; k < 3; ++k) expect[k] += u[k];
    }
    const auto logits = model.infer(rx).logits;
    CHECK(relative_deviation(logits, expect) < 1e-12);
  }
}

TEST_CASE("cloud output is permutation invariant") {
  CloudModel model(toy_spec(4), 3);
  Rng rng(8);
  auto rx = random_receptions(rng, 5, 4);
  const auto base = model.infer(rx).logits;
  for (int t = 0; t < 10; ++t) {
    std::shuffle(rx.begin(), rx.end(), rng);
    CHECK(relative_deviation(model.infer(rx).logits, base) <= 1e-12);
  }
}

TEST_CASE("cloud input validation") {
  CloudModel model(toy_spec(2), 3);
  CHECK_THROWS(model.infer(std::vector<Reception>{}));
  CHECK_THROWS_AS(model.infer(std::vector<Reception>{{0, {1, 2, 3}}}), ShapeError);
  CHECK_THROWS(model.infer(std::vector<Reception>{{0, {1, 2, 3, 4}}, {0, {1, 2, 3, 4}}}));
  Rng rng(1);
  const auto pass = model.infer(random_receptions(rng, 2, 4));
  std::vector<double> grads(model.param_count());
  CloudModel other(toy_spec(2), 3);
  CHECK_THROWS(other.backward(pass, std::vector<double>{1, 0, 0}, grads));
  CloudPass empty = pass;
  empty.caches.clear();
  CHECK_THROWS(model.backward(empty, std::vector<double>{1, 0, 0}, grads));
}

TEST_CASE("zero logit gradient gives zero cloud gradients and messages") {
  CloudModel model(toy_spec(2), 4);
  Rng rng(2);
  const auto pass = model.infer(random_receptions(rng, 3, 4));
  std::vector<double> grads(model.param_count(), 0.0);
  const auto msgs = model.backward(pass, std::vector<double>(3, 0.0), grads);
  for (double g : grads) CHECK(g == 0.0);
  for (const auto& m : msgs) {
    for (double v : m) CHECK(v == 0.0);
  }
}

TEST_CASE("cloud gradients and messages match finite differences") {
  for (std::size_t branches : {1, 3}) {
    for (std::size_t n : {1, 3}) {
      CloudModel model(toy_spec(branches), 20 + branches * 10 + n);
      Rng rng(branches * 100 + n);
      const auto rx = random_receptions(rng, n, 4);
      const std::size_t label = 1;
      const auto pass = model.infer(rx);
      const auto loss = softmax_cross_entropy(pass.logits, label);
      std::vector<double> grads(model.param_count(), 0.0);
      const auto msgs = model.backward(pass, loss.grad, grads);

      const auto params = model.parameters();
      auto by_params = [&](std::span<const double> p) {
        auto copy = model.clone();
        copy->set_parameters(p);
        return softmax_cross_entropy(copy->infer(rx).logits, label).loss;
      };
      CHECK(relative_deviation(grads, finite_difference(by_params, params), 1e-4) < 1e-5);
      for (std::size_t i = 0; i < n; ++i) {
        auto by_signal = [&](std::span<const double> y) {
          auto moved = rx;
          moved[i].signal.assign(y.begin(), y.end());
          return softmax_cross_entropy(model.infer(moved).logits, label).loss;
        };
        CHECK(relative_deviation(msgs[i], finite_difference(by_signal, rx[i].signal), 1e-4) < 1e-5);
      }
    }
  }
}

TEST_CASE("cloud update and fedavg") {
  CloudModel model(toy_spec(1), 5);
  const auto before = model.parameters();
  cloud_update(model, std::vector<double>(model.param_count(), 0.0), 0.1, 4);
  CHECK(model.parameters() == before);
  CHECK_THROWS_AS(cloud_update(model, std::vector<double>(2, 0.0), 0.1, 4), ShapeError);

  const std::vector<std::vector<double>> same{{1, 2}, {1, 2}, {1, 2}};
  CHECK(fedavg(same) == std::vector<double>{1, 2});
  const std::vector<std::vector<double>> pair{{2}, {4}};
  CHECK(fedavg(pair)[0] == 3.0);
  const std::vector<std::vector<double>> ragged{{1, 2}, {1}};
  CHECK_THROWS_AS(fedavg(ragged), ShapeError);
  CHECK_THROWS(fedavg(std::vector<std::vector<double>>{}));
}

TEST_CASE("baseline models") {
  SUBCASE("sum aggregation requires S = X") {
    CHECK_THROWS(BaselineModel(BaselineSpec{BaselineKind::sum_agg, 4, 3, 1, 8}, 1));
    BaselineModel sum(BaselineSpec{BaselineKind::sum_agg, 3, 3, 1, 8}, 1);
    const auto x = sum.infer(std::vector<Reception>{{0, {1, 2, 3}}, {1, {1, 1, 1}}}).logits;
    CHECK(x == std::vector<double>{2, 3, 4});
  }
  SUBCASE("catnet rejects mismatched populations") {
    BaselineModel cat(BaselineSpec{BaselineKind::catnet, 4, 3, 3, 8}, 1);
    Rng rng(3);
    CHECK_NOTHROW(cat.infer(random_receptions(rng, 3, 4)));
    CHECK_THROWS(cat.infer(random_receptions(rng, 2, 4)));
    CHECK_THROWS(cat.infer(random_receptions(rng, 4, 4)));
  }
  SUBCASE("mhnet serves up to its head count") {
    BaselineModel mh(BaselineSpec{BaselineKind::mhnet, 4, 3, 3, 8}, 1);
    Rng rng(4);
    CHECK_NOTHROW(mh.infer(random_receptions(rng, 2, 4)));
    CHECK_THROWS(mh.infer(random_receptions(rng, 4, 4)));
  }
  SUBCASE("width solvers land near the budget") {
    CloudSpec spec;
    const std::size_t target = CloudModel(spec, 1).param_count();
    const auto w = solve_catnet_width(target, 6, spec.message_dim, spec.classes);
    const double got = static_cast<double>(catnet_param_count(6, spec.message_dim, spec.classes, w));
    CHECK(std::abs(got - target) / target < 0.05);
    const auto h = solve_mhnet_width(target, 6, spec.message_dim, spec.classes);
    const double got_mh = static_cast<double>(mhnet_param_count(6, spec.message_dim, spec.classes, h));
    CHECK(std::abs(got_mh - target) / target < 0.05);
  }
}
