#include "tenet/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tenet {

double relative_deviation(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw ShapeError("cannot compare arrays of different length");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff = std::max(diff, std::abs(a[k] - b[k]));
    scale = std::max(scale, std::abs(b[k]));
  }
  if (diff == 0.0) return 0.0;
  return diff / std::max(scale, floor);
}

std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::span<const double> x, double h) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + h;
    const double up = f(probe);
    probe[k] = x[k] - h;
    const double down = f(probe);
    probe[k] = x[k];
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

namespace {

// Scale floor for the relative error, so all-zero gradients (dead ReLUs)
// are not judged by finite-difference rounding noise alone.
constexpr double kGradFloor = 1e-4;
// Inputs closer than this to a ReLU kink or a projection boundary are redrawn.
constexpr double kKinkMargin = 1e-3;

std::vector<double> normal_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Whether every ReLU input and every projection block of a forward pass lies
// clear of the non-differentiable points.
bool clear_of_kinks(const LayerStack& stack, const ForwardCache& cache) {
  for (std::size_t l = 0; l < stack.layer_count(); ++l) {
    const auto& in = cache.values[l];
    if (std::holds_alternative<Relu>(stack.layers()[l])) {
      for (double v : in) {
        if (std::abs(v) < kKinkMargin) return false;
      }
    } else if (const auto* p = std::get_if<Projection>(&stack.layers()[l])) {
      const std::size_t half = p->dim / 2;
      auto near = [&](double power) { return std::abs(power - p->budget) < kKinkMargin * p->budget; };
      if (p->mode == PowerMode::per_rb) {
        for (std::size_t j = 0; j < half; ++j) {
          if (near(in[j] * in[j] + in[j + half] * in[j + half])) return false;
        }
      } else if (near(dot(in, in))) {
        return false;
      }
    }
  }
  return true;
}

// Gradient of L = upstream . stack(x) w.r.t. params and input, compared to
// finite differences.
double check_stack(const LayerStack& stack, std::span<const double> x, std::span<const double> upstream) {
  const auto fwd = stack.forward(x);
  const auto g = stack.backward(fwd.cache, upstream);
  LayerStack probe = stack;
  const std::vector<double> p0(stack.params().begin(), stack.params().end());
  auto loss_params = [&](std::span<const double> p) {
    probe.set_params(p);
    return dot(upstream, probe.evaluate(x));
  };
  auto loss_input = [&](std::span<const double> xin) { return dot(upstream, stack.evaluate(xin)); };
  double err = 0.0;
  if (!p0.empty()) err = relative_deviation(g.param_grads, finite_difference(loss_params, p0), kGradFloor);
  err = std::max(err, relative_deviation(g.input_grad, finite_difference(loss_input, x), kGradFloor));
  return err;
}

// Draws inputs until the forward pass avoids every kink.
template <class Make>
double checked_instance(Rng& rng, Make make) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto [stack, x] = make(rng);
    if (!clear_of_kinks(stack, stack.forward(x).cache)) continue;
    return check_stack(stack, x, normal_vector(rng, stack.output_dim()));
  }
  throw std::runtime_error("could not draw a gradient-check instance clear of kinks");
}

double check_cloud(const CloudNetwork& model, std::span<const Reception> received, std::size_t label) {
  const auto pass = model.infer(received);
  const auto loss = softmax_cross_entropy(pass.logits, label);
  std::vector<double> grads(model.param_count(), 0.0);
  const auto messages = model.backward(pass, loss.grad, grads);

  auto probe = model.clone();
  auto loss_params = [&](std::span<const double> p) {
    probe->set_parameters(p);
    return softmax_cross_entropy(probe->infer(received).logits, label).loss;
  };
  double err = relative_deviation(grads, finite_difference(loss_params, model.parameters()), kGradFloor);
  for (std::size_t r = 0; r < received.size(); ++r) {
    std::vector<Reception> perturbed(received.begin(), received.end());
    auto loss_signal = [&](std::span<const double> y) {
      perturbed[r].signal.assign(y.begin(), y.end());
      return softmax_cross_entropy(model.infer(perturbed).logits, label).loss;
    };
    err = std::max(err, relative_deviation(messages[r], finite_difference(loss_signal, received[r].signal),
                                           kGradFloor));
  }
  return err;
}

std::vector<Reception> random_receptions(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<Reception> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {i, normal_vector(rng, dim)};
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

double check_encoder(Rng& rng) {
  EncoderSpec spec;
  spec.observation_dim = uniform_size(rng, 2, 6);
  spec.hidden = {uniform_size(rng, 2, 6)};
  spec.message_dim = 2 * uniform_size(rng, 1, 3);
  spec.power_mode = std::bernoulli_distribution(0.5)(rng) ? PowerMode::sum : PowerMode::per_rb;
  spec.power_budget = 0.5;
  spec.cqie = std::bernoulli_distribution(0.5)(rng);
  for (int attempt = 0; attempt < 100; ++attempt) {
    EdgeNode node(0, spec, rng());
    const auto obs = normal_vector(rng, spec.observation_dim);
    std::vector<double> cqi;
    std::optional<std::span<const double>> side;
    if (spec.cqie) {
      cqi = normal_vector(rng, node.cqi_dim());
      for (double& c : cqi) c = std::abs(c) + 0.1;
      side = std::span<const double>(cqi);
    }
    const auto enc = node.encode(obs, side);
    if (!clear_of_kinks(node.trunk(), enc.cache.trunk) || !clear_of_kinks(node.head(), enc.cache.head)) continue;
    const auto upstream = normal_vector(rng, spec.message_dim);
    std::vector<double> grads(node.param_count(), 0.0);
    node.accumulate_gradient(enc.cache, upstream, grads);
    EdgeNode probe = node;
    auto loss = [&](std::span<const double> p) {
      probe.set_parameters(p);
      return dot(upstream, probe.encode(obs, side).message);
    };
    return relative_deviation(grads, finite_difference(loss, node.parameters()), kGradFloor);
  }
  throw std::runtime_error("could not draw an encoder instance clear of kinks");
}

}  // namespace

GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t scale) {
  if (scale == 0) throw std::invalid_argument("gradcheck scale must be positive");
  Rng rng(seed);
  GradcheckReport report;
  auto family = [&](const std::string& name, std::size_t count, const std::function<double()>& one) {
    GradcheckCase c{name, count * scale, 0.0};
    for (std::size_t k = 0; k < c.instances; ++k) c.max_error = std::max(c.max_error, one());
    report.cases.push_back(c);
    report.instances += c.instances;
    report.max_error = std::max(report.max_error, c.max_error);
  };

  family("dense", 30, [&] {
    return checked_instance(rng, [](Rng& r) {
      const std::size_t in = uniform_size(r, 1, 6);
      const std::size_t out = uniform_size(r, 1, 6);
      LayerStack s(in, {Dense{in, out}}, r());
      auto p = s.mutable_params();
      const auto bias = normal_vector(r, p.size(), 0.3);
      std::copy(bias.begin(), bias.end(), p.begin());
      return std::pair{std::move(s), normal_vector(r, in)};
    });
  });
  family("relu", 20, [&] {
    return checked_instance(rng, [](Rng& r) {
      const std::size_t d = uniform_size(r, 1, 8);
      return std::pair{LayerStack(d, {Relu{d}}, r()), normal_vector(r, d)};
    });
  });
  family("dense+relu", 20, [&] {
    return checked_instance(rng, [](Rng& r) {
      const std::size_t in = uniform_size(r, 1, 6);
      const std::size_t out = uniform_size(r, 1, 6);
      return std::pair{LayerStack(in, {Dense{in, out}, Relu{out}}, r()), normal_vector(r, in)};
    });
  });
  for (PowerMode mode : {PowerMode::per_rb, PowerMode::sum}) {
    family(std::string("projection/") + std::string(to_string(mode)), 30, [&] {
      return checked_instance(rng, [mode](Rng& r) {
        const std::size_t d = 2 * uniform_size(r, 1, 5);
        const double budget = std::uniform_real_distribution<double>(0.2, 2.0)(r);
        return std::pair{LayerStack(d, {Projection{d, budget, mode}}, r()), normal_vector(r, d)};
      });
    });
  }
  family("mlp3+projection", 30, [&] {
    return checked_instance(rng, [](Rng& r) {
      const std::size_t out = 2 * uniform_size(r, 1, 3);
      const std::vector<std::size_t> widths = {uniform_size(r, 2, 6), uniform_size(r, 2, 6), uniform_size(r, 2, 6),
                                               out};
      const auto mode = std::bernoulli_distribution(0.5)(r) ? PowerMode::sum : PowerMode::per_rb;
      auto s = LayerStack::mlp(widths, r(), Projection{out, 0.3, mode});
      return std::pair{std::move(s), normal_vector(r, widths.front())};
    });
  });
  family("encoder", 20, [&] { return check_encoder(rng); });
  for (std::size_t m : {1, 3}) {
    for (std::size_t n : {1, 3}) {
      family("cloud/M" + std::to_string(m) + "N" + std::to_string(n), 10, [&, m, n] {
        for (int attempt = 0; attempt < 100; ++attempt) {
          CloudSpec spec{4, m, 3, 5, 3};
          CloudModel model(spec, rng());
          const auto received = random_receptions(rng, n, spec.message_dim);
          bool clear = true;
          const auto pass = model.infer(received);
          for (std::size_t b = 0; b < m && clear; ++b) {
            for (std::size_t k = 0; k < n && clear; ++k) clear = clear_of_kinks(model.inner(b), pass.caches[b * (n + 1) + k]);
            clear = clear && clear_of_kinks(model.outer(b), pass.caches[b * (n + 1) + n]);
          }
          if (!clear) continue;
          return check_cloud(model, received, uniform_size(rng, 0, 2));
        }
        throw std::runtime_error("could not draw a cloud instance clear of kinks");
      });
    }
  }
  for (BaselineKind kind : {BaselineKind::catnet, BaselineKind::mhnet}) {
    family("baseline/" + std::string(to_string(kind)), 10, [&, kind] {
      for (int attempt = 0; attempt < 100; ++attempt) {
        BaselineModel model({kind, 4, 3, 3, 5}, rng());
        const std::size_t n = kind == BaselineKind::catnet ? 3 : uniform_size(rng, 1, 3);
        const auto received = random_receptions(rng, n, 4);
        const auto pass = model.infer(received);
        bool clear = true;
        for (std::size_t slot = 0; slot < pass.caches.size() && clear; ++slot) {
          const std::size_t stack = kind == BaselineKind::catnet ? 0 : pass.ens[slot];
          clear = clear_of_kinks(model.stacks()[stack], pass.caches[slot]);
        }
        if (!clear) continue;
        return check_cloud(model, received, uniform_size(rng, 0, 2));
      }
      throw std::runtime_error("could not draw a baseline instance clear of kinks");
    });
  }
  family("baseline/sumagg", 10, [&] {
    BaselineModel model({BaselineKind::sum_agg, 4, 4, 1, 0}, rng());
    auto received = random_receptions(rng, uniform_size(rng, 1, 3), 4);
    return check_cloud(model, received, uniform_size(rng, 0, 3));
  });
  return report;
}

TrainingConfig equivalence_config(std::uint64_t seed, bool encoder_sharing) {
  TrainingConfig c;
  c.classes = 4;
  c.grid = 8;
  c.window = 6;
  c.marker = 2;
  c.train_samples = 64;
  c.validation_samples = 16;
  c.test_samples = 16;
  c.n_train = 3;
  c.encoder_hidden = {8};
  c.message_dim = 4;
  c.branches = 2;
  c.latent = 4;
  c.cloud_hidden = 8;
  c.batch_size = 8;
  c.learning_rate = 0.05;
  c.optimizer = OptimizerKind::sgd;
  c.downlink_noise = false;
  c.encoder_sharing = encoder_sharing;
  c.validation_every = 0;
  c.master_seed = seed;
  return c;
}

EquivalenceReport run_equivalence(const TrainingConfig& config, const Dataset& data, std::size_t rounds) {
  TrainingConfig cfg = config;
  cfg.downlink_noise = false;
  cfg.async = false;
  cfg.optimizer = OptimizerKind::sgd;
  SystemState dtde = make_state(cfg);
  SystemState oracle = dtde;
  EquivalenceReport report;
  report.rounds = rounds;
  for (std::size_t k = 0; k < rounds; ++k) {
    run_training_round(dtde, data);
    centralized_oracle_round(oracle, data);
    double dev = relative_deviation(dtde.cloud->parameters(), oracle.cloud->parameters());
    for (std::size_t i = 0; i < dtde.nodes.size(); ++i) {
      dev = std::max(dev, relative_deviation(dtde.nodes[i].parameters(), oracle.nodes[i].parameters()));
    }
    report.per_round.push_back(dev);
    report.max_deviation = std::max(report.max_deviation, dev);
  }
  return report;
}

}  // namespace tenet
