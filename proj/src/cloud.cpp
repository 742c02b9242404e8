#include "tenet/cloud.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tenet/rng.hpp"

namespace tenet {

namespace {

std::uint64_t next_model_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

// Reception indices sorted by EN id; pins the pooling order.
std::vector<std::size_t> en_order(std::span<const Reception> received) {
  std::vector<std::size_t> order(received.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return received[a].en < received[b].en; });
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (received[order[k]].en == received[order[k - 1]].en) {
      throw std::invalid_argument("duplicate reception from EN " + std::to_string(received[order[k]].en));
    }
  }
  return order;
}

void add_into(std::vector<double>& acc, std::span<const double> v) {
  for (std::size_t k = 0; k < v.size(); ++k) acc[k] += v[k];
}

std::vector<std::size_t> two_hidden(std::size_t in, std::size_t hidden, std::size_t out) {
  return {in, hidden, hidden, out};
}

}  // namespace

CloudNetwork::CloudNetwork(std::size_t message_dim, std::size_t output_dim)
    : message_dim_(message_dim), output_dim_(output_dim), id_(next_model_id()) {}

CloudNetwork::CloudNetwork(const CloudNetwork& other)
    : message_dim_(other.message_dim_), output_dim_(other.output_dim_), stacks_(other.stacks_),
      names_(other.names_), offsets_(other.offsets_), id_(next_model_id()), revision_(0) {}

std::size_t CloudNetwork::param_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : stacks_) n += s.param_count();
  return n;
}

std::vector<double> CloudNetwork::parameters() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const auto& s : stacks_) out.insert(out.end(), s.params().begin(), s.params().end());
  return out;
}

void CloudNetwork::set_parameters(std::span<const double> values) {
  if (values.size() != param_count()) {
    throw ShapeError("cloud parameter count mismatch: expected " + std::to_string(param_count()) +
                     ", got " + std::to_string(values.size()));
  }
  ++revision_;
  for (std::size_t k = 0; k < stacks_.size(); ++k) {
    stacks_[k].set_params(values.subspan(offsets_[k], stacks_[k].param_count()));
  }
}

std::vector<ParamBlock> CloudNetwork::param_blocks() const {
  std::vector<ParamBlock> blocks;
  for (std::size_t k = 0; k < stacks_.size(); ++k) {
    for (auto b : stacks_[k].param_blocks()) {
      b.name = names_[k] + "." + b.name;
      b.offset += offsets_[k];
      blocks.push_back(std::move(b));
    }
  }
  return blocks;
}

void CloudNetwork::apply_update(Optimizer& opt, std::span<const double> grads) {
  if (grads.size() != param_count()) {
    throw ShapeError("cloud gradient has " + std::to_string(grads.size()) + " entries, model has " +
                     std::to_string(param_count()));
  }
  ++revision_;
  opt.begin_step();
  for (std::size_t k = 0; k < stacks_.size(); ++k) {
    const std::size_t n = stacks_[k].param_count();
    opt.apply(stacks_[k].mutable_params(), grads.subspan(offsets_[k], n), offsets_[k]);
  }
}

void CloudNetwork::add_stack(LayerStack stack, std::string name) {
  offsets_.push_back(param_count());
  stacks_.push_back(std::move(stack));
  names_.push_back(std::move(name));
}

void CloudNetwork::stamp(CloudPass& pass) const {
  pass.model_id = id_;
  pass.revision = revision_;
}

void CloudNetwork::check_pass(const CloudPass& pass, std::size_t expected_caches) const {
  if (pass.model_id != id_ || pass.revision != revision_) {
    throw std::invalid_argument("cloud pass is stale or was produced by another model");
  }
  if (pass.caches.size() != expected_caches) {
    throw std::invalid_argument("cloud pass is missing caches");
  }
}

void CloudNetwork::check_receptions(std::span<const Reception> received) const {
  if (received.empty()) throw std::invalid_argument("cloud inference needs at least one reception");
  for (const auto& r : received) {
    if (r.signal.size() != message_dim_) {
      throw ShapeError("received signal from EN " + std::to_string(r.en) + " has length " +
                       std::to_string(r.signal.size()) + ", expected " + std::to_string(message_dim_));
    }
  }
}

CloudModel::CloudModel(const CloudSpec& spec, std::uint64_t seed)
    : CloudNetwork(spec.message_dim, spec.classes), spec_(spec) {
  if (spec_.branches == 0) throw std::invalid_argument("cloud model needs at least one branch");
  for (std::size_t m = 0; m < spec_.branches; ++m) {
    const std::vector<std::size_t> zw{spec_.message_dim, spec_.hidden, spec_.latent};
    const std::vector<std::size_t> uw{spec_.latent, spec_.hidden, spec_.classes};
    add_stack(LayerStack::mlp(zw, stream_seed(seed, Stream::init_cloud, {m, 0})),
              "branch" + std::to_string(m) + ".inner");
    add_stack(LayerStack::mlp(uw, stream_seed(seed, Stream::init_cloud, {m, 1})),
              "branch" + std::to_string(m) + ".outer");
  }
}

std::unique_ptr<CloudNetwork> CloudModel::clone() const { return std::make_unique<CloudModel>(*this); }

// caches layout per branch m: [z_m(y_order[0]) .. z_m(y_order[n-1]), u_m]
CloudPass CloudModel::infer(std::span<const Reception> received) const {
  check_receptions(received);
  CloudPass pass;
  pass.order = en_order(received);
  for (std::size_t k : pass.order) pass.ens.push_back(received[k].en);
  const std::size_t n = received.size();
  pass.caches.reserve(spec_.branches * (n + 1));
  pass.logits.assign(spec_.classes, 0.0);
  for (std::size_t m = 0; m < spec_.branches; ++m) {
    std::vector<double> pooled(spec_.latent, 0.0);
    for (std::size_t k : pass.order) {
      auto r = inner(m).forward(received[k].signal);
      add_into(pooled, r.output);
      pass.caches.push_back(std::move(r.cache));
    }
    auto q = outer(m).forward(pooled);
    add_into(pass.logits, q.output);
    pass.caches.push_back(std::move(q.cache));
  }
  stamp(pass);
  return pass;
}

std::vector<std::vector<double>> CloudModel::backward(const CloudPass& pass, std::span<const double> grad_x,
                                                      std::span<double> grads) const {
  const std::size_t n = pass.order.size();
  check_pass(pass, spec_.branches * (n + 1));
  if (grad_x.size() != spec_.classes) throw ShapeError("logit gradient length mismatch");
  if (grads.size() != param_count()) throw ShapeError("cloud gradient buffer size mismatch");
  std::vector<std::vector<double>> messages(n, std::vector<double>(spec_.message_dim, 0.0));
  for (std::size_t m = 0; m < spec_.branches; ++m) {
    const std::size_t base = m * (n + 1);
    auto d_pooled = outer(m).backward_accumulate(
        pass.caches[base + n], grad_x, grads.subspan(outer_offset(m), outer(m).param_count()));
    for (std::size_t k = 0; k < n; ++k) {
      auto d_signal = inner(m).backward_accumulate(
          pass.caches[base + k], d_pooled, grads.subspan(inner_offset(m), inner(m).param_count()));
      add_into(messages[pass.order[k]], d_signal);
    }
  }
  return messages;
}

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::sum_agg:
      return "sumagg";
    case BaselineKind::catnet:
      return "catnet";
    case BaselineKind::mhnet:
      return "mhnet";
  }
  return "unknown";
}

BaselineModel::BaselineModel(const BaselineSpec& spec, std::uint64_t seed)
    : CloudNetwork(spec.message_dim, spec.classes), spec_(spec) {
  switch (spec_.kind) {
    case BaselineKind::sum_agg:
      if (spec_.message_dim != spec_.classes) {
        throw std::invalid_argument("sum aggregation requires message dimension (" +
                                    std::to_string(spec_.message_dim) + ") == classes (" +
                                    std::to_string(spec_.classes) + ")");
      }
      break;
    case BaselineKind::catnet:
      if (spec_.population == 0) throw std::invalid_argument("catnet needs a fixed population");
      add_stack(LayerStack::mlp(two_hidden(spec_.population * spec_.message_dim, spec_.hidden, spec_.classes),
                                stream_seed(seed, Stream::init_cloud, {0})),
                "catnet");
      break;
    case BaselineKind::mhnet:
      if (spec_.population == 0) throw std::invalid_argument("mhnet needs at least one head");
      for (std::size_t h = 0; h < spec_.population; ++h) {
        add_stack(LayerStack::mlp(two_hidden(spec_.message_dim, spec_.hidden, spec_.classes),
                                  stream_seed(seed, Stream::init_cloud, {h})),
                  "head" + std::to_string(h));
      }
      break;
  }
}

std::unique_ptr<CloudNetwork> BaselineModel::clone() const { return std::make_unique<BaselineModel>(*this); }

CloudPass BaselineModel::infer(std::span<const Reception> received) const {
  check_receptions(received);
  CloudPass pass;
  pass.order = en_order(received);
  for (std::size_t k : pass.order) pass.ens.push_back(received[k].en);
  switch (spec_.kind) {
    case BaselineKind::sum_agg: {
      pass.logits.assign(spec_.classes, 0.0);
      for (std::size_t k : pass.order) add_into(pass.logits, received[k].signal);
      break;
    }
    case BaselineKind::catnet: {
      if (received.size() != spec_.population) {
        throw std::invalid_argument("catnet was built for " + std::to_string(spec_.population) +
                                    " ENs but received " + std::to_string(received.size()));
      }
      std::vector<double> joined;
      joined.reserve(spec_.population * spec_.message_dim);
      for (std::size_t slot = 0; slot < pass.order.size(); ++slot) {
        const auto& r = received[pass.order[slot]];
        if (r.en != slot) {
          throw std::invalid_argument("catnet expects ENs 0.." + std::to_string(spec_.population - 1));
        }
        joined.insert(joined.end(), r.signal.begin(), r.signal.end());
      }
      auto out = stacks_[0].forward(joined);
      pass.logits = std::move(out.output);
      pass.caches.push_back(std::move(out.cache));
      break;
    }
    case BaselineKind::mhnet: {
      pass.logits.assign(spec_.classes, 0.0);
      for (std::size_t k : pass.order) {
        const auto& r = received[k];
        if (r.en >= spec_.population) {
          throw std::invalid_argument("mhnet has " + std::to_string(spec_.population) +
                                      " heads; no head for EN " + std::to_string(r.en));
        }
        auto out = stacks_[r.en].forward(r.signal);
        add_into(pass.logits, out.output);
        pass.caches.push_back(std::move(out.cache));
      }
      break;
    }
  }
  stamp(pass);
  return pass;
}

std::vector<std::vector<double>> BaselineModel::backward(const CloudPass& pass, std::span<const double> grad_x,
                                                         std::span<double> grads) const {
  const std::size_t n = pass.order.size();
  if (grad_x.size() != spec_.classes) throw ShapeError("logit gradient length mismatch");
  if (grads.size() != param_count()) throw ShapeError("cloud gradient buffer size mismatch");
  std::vector<std::vector<double>> messages(n);
  switch (spec_.kind) {
    case BaselineKind::sum_agg:
      check_pass(pass, 0);
      for (auto& m : messages) m.assign(grad_x.begin(), grad_x.end());
      break;
    case BaselineKind::catnet: {
      check_pass(pass, 1);
      auto d_joined = stacks_[0].backward_accumulate(pass.caches[0], grad_x, grads);
      for (std::size_t slot = 0; slot < n; ++slot) {
        auto first = d_joined.begin() + static_cast<std::ptrdiff_t>(slot * spec_.message_dim);
        messages[pass.order[slot]].assign(first, first + static_cast<std::ptrdiff_t>(spec_.message_dim));
      }
      break;
    }
    case BaselineKind::mhnet: {
      check_pass(pass, n);
      for (std::size_t slot = 0; slot < n; ++slot) {
        const std::size_t head = pass.ens[slot];
        messages[pass.order[slot]] = stacks_[head].backward_accumulate(
            pass.caches[slot], grad_x, grads.subspan(stack_offset(head), stacks_[head].param_count()));
      }
      break;
    }
  }
  return messages;
}

std::size_t catnet_param_count(std::size_t population, std::size_t message_dim, std::size_t classes,
                               std::size_t hidden) {
  const std::size_t in = population * message_dim;
  return in * hidden + hidden + hidden * hidden + hidden + hidden * classes + classes;
}

std::size_t mhnet_param_count(std::size_t heads, std::size_t message_dim, std::size_t classes,
                              std::size_t hidden) {
  return heads * catnet_param_count(1, message_dim, classes, hidden);
}

namespace {

template <class CountFn>
std::size_t solve_width(std::size_t target, double tolerance, CountFn count, const char* what) {
  std::size_t best = 1;
  double best_err = INFINITY;
  for (std::size_t h = 1; h <= 8192; ++h) {
    const double err = std::abs(static_cast<double>(count(h)) - static_cast<double>(target));
    if (err < best_err) {
      best_err = err;
      best = h;
    }
    if (static_cast<double>(count(h)) > 2.0 * static_cast<double>(target)) break;
  }
  if (best_err > tolerance * static_cast<double>(target)) {
    throw std::invalid_argument(std::string("no ") + what + " width matches a budget of " +
                                std::to_string(target) + " parameters");
  }
  return best;
}

}  // namespace

std::size_t solve_catnet_width(std::size_t target, std::size_t population, std::size_t message_dim,
                               std::size_t classes, double tolerance) {
  return solve_width(target, tolerance,
                     [&](std::size_t h) { return catnet_param_count(population, message_dim, classes, h); },
                     "catnet");
}

std::size_t solve_mhnet_width(std::size_t target, std::size_t heads, std::size_t message_dim,
                              std::size_t classes, double tolerance) {
  return solve_width(target, tolerance,
                     [&](std::size_t h) { return mhnet_param_count(heads, message_dim, classes, h); },
                     "mhnet");
}

CloudPass cloud_infer(const CloudNetwork& model, std::span<const Reception> received) {
  return model.infer(received);
}

CloudBackwardResult cloud_backward(const CloudNetwork& model, std::span<const CloudPass> passes,
                                   std::span<const std::vector<double>> grad_x) {
  if (passes.size() != grad_x.size()) throw ShapeError("one logit gradient per cloud pass is required");
  CloudBackwardResult out;
  out.grads.assign(model.param_count(), 0.0);
  out.messages.reserve(passes.size());
  for (std::size_t b = 0; b < passes.size(); ++b) {
    out.messages.push_back(model.backward(passes[b], grad_x[b], out.grads));
  }
  return out;
}

void cloud_update(CloudNetwork& model, std::span<const double> grads, double eta, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<double> scaled(grads.begin(), grads.end());
  for (double& g : scaled) g /= static_cast<double>(batch_size);
  Optimizer sgd(OptimizerKind::sgd, eta, model.param_count());
  model.apply_update(sgd, scaled);
}

std::vector<double> fedavg(std::span<const std::vector<double>> candidates) {
  if (candidates.empty()) throw std::invalid_argument("fedavg needs at least one candidate");
  const std::size_t n = candidates.front().size();
  std::vector<double> mean(n, 0.0);
  for (const auto& c : candidates) {
    if (c.size() != n) throw ShapeError("fedavg candidates differ in shape");
    for (std::size_t k = 0; k < n; ++k) mean[k] += c[k];
  }
  for (double& x : mean) x /= static_cast<double>(candidates.size());
  return mean;
}

}  // namespace tenet
