#include "tenet/nn.hpp"

#include "tenet/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>

namespace tenet {

namespace {

std::uint64_t next_stack_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_projection_args(std::size_t dim, double budget) {
  if (dim % 2 != 0) throw ShapeError("projection needs an even length, got " + std::to_string(dim));
  if (!(budget >= 0.0)) throw std::invalid_argument("power budget must be non-negative");
}

}  // namespace

std::string_view to_string(PowerMode mode) {
  return mode == PowerMode::per_rb ? "per_rb" : "sum";
}

PowerMode parse_power_mode(std::string_view text) {
  if (text == "per_rb" || text == "ppc") return PowerMode::per_rb;
  if (text == "sum" || text == "spc") return PowerMode::sum;
  throw std::invalid_argument("unknown power mode '" + std::string(text) + "'");
}

std::size_t layer_input_dim(const Layer& layer) {
  return std::visit(overloaded{[](const Dense& d) { return d.in; },
                               [](const Relu& r) { return r.dim; },
                               [](const Projection& p) { return p.dim; }},
                    layer);
}

std::size_t layer_output_dim(const Layer& layer) {
  return std::visit(overloaded{[](const Dense& d) { return d.out; },
                               [](const Relu& r) { return r.dim; },
                               [](const Projection& p) { return p.dim; }},
                    layer);
}

std::size_t layer_param_count(const Layer& layer) {
  if (const auto* d = std::get_if<Dense>(&layer)) return d->out * d->in + d->out;
  return 0;
}

LayerStack::LayerStack(std::size_t input_dim, std::vector<Layer> layers, std::uint64_t seed)
    : input_dim_(input_dim), output_dim_(input_dim), layers_(std::move(layers)), seed_(seed),
      id_(next_stack_id()) {
  std::size_t dim = input_dim;
  std::size_t total = 0;
  offsets_.reserve(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (layer_input_dim(layer) != dim) {
      throw ShapeError("layer " + std::to_string(l) + " expects input " +
                           std::to_string(layer_input_dim(layer)) + " but receives " +
                           std::to_string(dim),
                       l);
    }
    if (const auto* p = std::get_if<Projection>(&layer)) check_projection_args(p->dim, p->budget);
    offsets_.push_back(total);
    total += layer_param_count(layer);
    dim = layer_output_dim(layer);
  }
  output_dim_ = dim;
  params_.assign(total, 0.0);

  Rng rng(seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto* d = std::get_if<Dense>(&layers_[l]);
    if (d == nullptr) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(d->in + d->out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    double* w = params_.data() + offsets_[l];
    for (std::size_t k = 0; k < d->in * d->out; ++k) w[k] = dist(rng);
  }
}

LayerStack LayerStack::mlp(std::span<const std::size_t> widths, std::uint64_t seed,
                           std::optional<Projection> output_projection) {
  if (widths.empty()) throw ShapeError("mlp needs at least an input width");
  std::vector<Layer> layers;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    layers.emplace_back(Dense{widths[k], widths[k + 1]});
    if (k + 2 < widths.size()) layers.emplace_back(Relu{widths[k + 1]});
  }
  if (output_projection) layers.emplace_back(*output_projection);
  return LayerStack(widths.front(), std::move(layers), seed);
}

LayerStack::LayerStack(const LayerStack& other)
    : input_dim_(other.input_dim_), output_dim_(other.output_dim_), layers_(other.layers_),
      offsets_(other.offsets_), params_(other.params_), seed_(other.seed_),
      id_(next_stack_id()), revision_(0) {}

LayerStack& LayerStack::operator=(const LayerStack& other) {
  if (this != &other) {
    input_dim_ = other.input_dim_;
    output_dim_ = other.output_dim_;
    layers_ = other.layers_;
    offsets_ = other.offsets_;
    params_ = other.params_;
    seed_ = other.seed_;
    id_ = next_stack_id();
    revision_ = 0;
  }
  return *this;
}

std::span<double> LayerStack::mutable_params() noexcept {
  ++revision_;
  return params_;
}

void LayerStack::set_params(std::span<const double> values) {
  if (values.size() != params_.size()) {
    throw ShapeError("parameter count mismatch: expected " + std::to_string(params_.size()) +
                     ", got " + std::to_string(values.size()));
  }
  ++revision_;
  std::copy(values.begin(), values.end(), params_.begin());
}

std::vector<ParamBlock> LayerStack::param_blocks() const {
  std::vector<ParamBlock> blocks;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto* d = std::get_if<Dense>(&layers_[l]);
    if (d == nullptr) continue;
    const std::string prefix = "layer" + std::to_string(l);
    blocks.push_back({prefix + ".weight", d->out, d->in, offsets_[l]});
    blocks.push_back({prefix + ".bias", d->out, 1, offsets_[l] + d->out * d->in});
  }
  return blocks;
}

ForwardResult LayerStack::forward(std::span<const double> input) const {
  if (input.size() != input_dim_) {
    throw ShapeError("input dimension " + std::to_string(input.size()) + " does not match layer 0 (" +
                         std::to_string(input_dim_) + ")",
                     0);
  }
  ForwardResult result;
  auto& values = result.cache.values;
  values.reserve(layers_.size() + 1);
  values.emplace_back(input.begin(), input.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::vector<double>& x = values.back();
    std::vector<double> y;
    std::visit(overloaded{
                   [&](const Dense& d) {
                     const double* w = params_.data() + offsets_[l];
                     const double* b = w + d.out * d.in;
                     y.resize(d.out);
                     for (std::size_t r = 0; r < d.out; ++r) {
                       const double* row = w + r * d.in;
                       double acc = b[r];
                       for (std::size_t c = 0; c < d.in; ++c) acc += row[c] * x[c];
                       y[r] = acc;
                     }
                   },
                   [&](const Relu&) {
                     y.resize(x.size());
                     for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] > 0.0 ? x[k] : 0.0;
                   },
                   [&](const Projection& p) { y = project_power(x, p.budget, p.mode); }},
               layers_[l]);
    values.push_back(std::move(y));
  }
  result.output = values.back();
  result.cache.stack_id = id_;
  result.cache.revision = revision_;
  return result;
}

std::vector<double> LayerStack::evaluate(std::span<const double> input) const {
  return forward(input).output;
}

void LayerStack::check_cache(const ForwardCache& cache) const {
  if (cache.stack_id != id_ || cache.revision != revision_) {
    throw std::invalid_argument("forward cache is stale or belongs to another stack");
  }
  if (cache.values.size() != layers_.size() + 1) {
    throw std::invalid_argument("forward cache depth does not match the stack");
  }
}

GradientSet LayerStack::backward(const ForwardCache& cache, std::span<const double> upstream) const {
  GradientSet grads;
  grads.param_grads.assign(params_.size(), 0.0);
  grads.input_grad = backward_accumulate(cache, upstream, grads.param_grads);
  return grads;
}

std::vector<double> LayerStack::backward_accumulate(const ForwardCache& cache,
                                                    std::span<const double> upstream,
                                                    std::span<double> param_grads) const {
  check_cache(cache);
  if (upstream.size() != output_dim_) {
    throw ShapeError("upstream dimension " + std::to_string(upstream.size()) +
                     " does not match stack output " + std::to_string(output_dim_));
  }
  if (param_grads.size() != params_.size()) {
    throw ShapeError("gradient buffer size does not match parameter count");
  }
  std::vector<double> g(upstream.begin(), upstream.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const std::vector<double>& x = cache.values[l];
    std::vector<double> gin;
    std::visit(overloaded{
                   [&](const Dense& d) {
                     const double* w = params_.data() + offsets_[l];
                     double* dw = param_grads.data() + offsets_[l];
                     double* db = dw + d.out * d.in;
                     gin.assign(d.in, 0.0);
                     for (std::size_t r = 0; r < d.out; ++r) {
                       const double gr = g[r];
                       db[r] += gr;
                       if (gr == 0.0) continue;
                       const double* row = w + r * d.in;
                       double* drow = dw + r * d.in;
                       for (std::size_t c = 0; c < d.in; ++c) {
                         drow[c] += gr * x[c];
                         gin[c] += row[c] * gr;
                       }
                     }
                   },
                   [&](const Relu&) {
                     gin.resize(x.size());
                     for (std::size_t k = 0; k < x.size(); ++k) gin[k] = x[k] > 0.0 ? g[k] : 0.0;
                   },
                   [&](const Projection& p) { gin = project_power_backward(x, p.budget, p.mode, g); }},
               layers_[l]);
    g = std::move(gin);
  }
  return g;
}

std::vector<double> project_power(std::span<const double> v, double budget, PowerMode mode) {
  check_projection_args(v.size(), budget);
  std::vector<double> s(v.begin(), v.end());
  const std::size_t half = v.size() / 2;
  if (mode == PowerMode::per_rb) {
    for (std::size_t j = 0; j < half; ++j) {
      const double p = v[j] * v[j] + v[j + half] * v[j + half];
      if (p <= budget) continue;
      const double scale = std::sqrt(budget / p);
      s[j] = scale * v[j];
      s[j + half] = scale * v[j + half];
    }
  } else {
    double q = 0.0;
    for (double x : v) q += x * x;
    if (q > budget) {
      const double scale = std::sqrt(budget / q);
      for (double& x : s) x *= scale;
    }
  }
  return s;
}

// On a clipped group with power p the map is v -> c v, c = sqrt(P/p), whose
// Jacobian c (I - v v^T / p) is symmetric.
std::vector<double> project_power_backward(std::span<const double> v, double budget,
                                           PowerMode mode, std::span<const double> upstream) {
  check_projection_args(v.size(), budget);
  if (upstream.size() != v.size()) throw ShapeError("projection upstream length mismatch");
  std::vector<double> g(upstream.begin(), upstream.end());
  const std::size_t half = v.size() / 2;
  if (mode == PowerMode::per_rb) {
    for (std::size_t j = 0; j < half; ++j) {
      const double vr = v[j];
      const double vi = v[j + half];
      const double p = vr * vr + vi * vi;
      if (p <= budget) continue;
      const double c = std::sqrt(budget / p);
      const double dot = (vr * upstream[j] + vi * upstream[j + half]) / p;
      g[j] = c * (upstream[j] - vr * dot);
      g[j + half] = c * (upstream[j + half] - vi * dot);
    }
  } else {
    double q = 0.0;
    double dot = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      q += v[k] * v[k];
      dot += v[k] * upstream[k];
    }
    if (q > budget) {
      const double c = std::sqrt(budget / q);
      for (std::size_t k = 0; k < v.size(); ++k) g[k] = c * (upstream[k] - v[k] * dot / q);
    }
  }
  return g;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - shift);
    total += p[k];
  }
  for (double& x : p) x /= total;
  return p;
}

LossResult softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::out_of_range("label " + std::to_string(label) + " out of range for " +
                            std::to_string(logits.size()) + " classes");
  }
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - shift);
  const double log_total = std::log(total);
  LossResult out;
  out.loss = log_total - (logits[label] - shift);
  out.grad.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.grad[k] = std::exp(logits[k] - shift - log_total);
  }
  out.grad[label] -= 1.0;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

void sgd_step(std::span<double> params, std::span<const double> grads, double eta) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k] -= eta * grads[k];
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + std::string(text) + "'");
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, std::size_t param_count)
    : kind_(kind), lr_(learning_rate) {
  if (kind_ == OptimizerKind::adam) {
    m_.assign(param_count, 0.0);
    v_.assign(param_count, 0.0);
  }
}

void Optimizer::begin_step() { ++steps_; }

void Optimizer::apply(std::span<double> params, std::span<const double> grads, std::size_t offset) {
  if (kind_ == OptimizerKind::sgd) {
    sgd_step(params, grads, lr_);
    return;
  }
  if (params.size() != grads.size() || offset + params.size() > m_.size()) {
    throw ShapeError("adam: parameter block does not fit the optimizer state");
  }
  const double t = static_cast<double>(std::max<std::uint64_t>(steps_, 1));
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double& m = m_[offset + k];
    double& v = v_[offset + k];
    m = beta1_ * m + (1.0 - beta1_) * grads[k];
    v = beta2_ * v + (1.0 - beta2_) * grads[k] * grads[k];
    params[k] -= lr_ * (m / c1) / (std::sqrt(v / c2) + eps_);
  }
}

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace tenet
