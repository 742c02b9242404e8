#include "tenet/edge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tenet/rng.hpp"

namespace tenet {

EdgeNode::EdgeNode(std::size_t id, const EncoderSpec& spec, std::uint64_t seed) : id_(id), spec_(spec) {
  if (spec_.message_dim == 0 || spec_.message_dim % 2 != 0) {
    throw ShapeError("message dimension must be positive and even, got " +
                     std::to_string(spec_.message_dim));
  }
  if (spec_.observation_dim == 0) throw ShapeError("observation dimension must be positive");
  std::vector<Layer> trunk_layers;
  std::size_t width = spec_.observation_dim;
  for (std::size_t h : spec_.hidden) {
    trunk_layers.emplace_back(Dense{width, h});
    trunk_layers.emplace_back(Relu{h});
    width = h;
  }
  trunk_ = LayerStack(spec_.observation_dim, std::move(trunk_layers), seed);
  const std::size_t head_in = width + cqi_dim();
  head_ = LayerStack(head_in,
                     {Dense{head_in, spec_.message_dim},
                      Projection{spec_.message_dim, spec_.power_budget, spec_.power_mode}},
                     mix64(seed ^ 0x5eedULL));
}

std::vector<double> EdgeNode::parameters() const {
  std::vector<double> out;
  out.reserve(param_count());
  out.insert(out.end(), trunk_.params().begin(), trunk_.params().end());
  out.insert(out.end(), head_.params().begin(), head_.params().end());
  return out;
}

void EdgeNode::set_parameters(std::span<const double> values) {
  if (values.size() != param_count()) {
    throw ShapeError("encoder parameter count mismatch: expected " + std::to_string(param_count()) +
                     ", got " + std::to_string(values.size()));
  }
  trunk_.set_params(values.first(trunk_.param_count()));
  head_.set_params(values.subspan(trunk_.param_count()));
}

std::vector<ParamBlock> EdgeNode::param_blocks() const {
  std::vector<ParamBlock> blocks;
  for (auto b : trunk_.param_blocks()) {
    b.name = "trunk." + b.name;
    blocks.push_back(std::move(b));
  }
  for (auto b : head_.param_blocks()) {
    b.name = "head." + b.name;
    b.offset += trunk_.param_count();
    blocks.push_back(std::move(b));
  }
  return blocks;
}

EncodeResult EdgeNode::encode(std::span<const double> observation,
                              std::optional<std::span<const double>> cqi) const {
  if (cqi.has_value() != spec_.cqie) {
    throw std::invalid_argument(spec_.cqie ? "CQIE encoder needs the channel magnitude"
                                           : "encoder without CQIE was given channel magnitude");
  }
  if (cqi && cqi->size() != cqi_dim()) {
    throw ShapeError("CQI length " + std::to_string(cqi->size()) + " != " + std::to_string(cqi_dim()));
  }
  EncodeResult result;
  auto trunk_out = trunk_.forward(observation);
  std::vector<double> head_in = std::move(trunk_out.output);
  if (cqi) {
    for (double g : *cqi) {
      head_in.push_back(spec_.cqi_scaling == CqiScaling::log10 ? std::log10(std::max(g, 1e-300)) : g);
    }
  }
  auto head_out = head_.forward(head_in);
  result.message = std::move(head_out.output);
  result.cache.trunk = std::move(trunk_out.cache);
  result.cache.head = std::move(head_out.cache);
  return result;
}

void EdgeNode::accumulate_gradient(const EncoderCache& cache, std::span<const double> upstream,
                                   std::span<double> grads) const {
  if (grads.size() != param_count()) throw ShapeError("encoder gradient buffer size mismatch");
  const std::size_t nt = trunk_.param_count();
  auto head_in_grad = head_.backward_accumulate(cache.head, upstream, grads.subspan(nt));
  head_in_grad.resize(trunk_.output_dim());  // the CQI side input carries no parameters
  trunk_.backward_accumulate(cache.trunk, head_in_grad, grads.first(nt));
}

void EdgeNode::apply_update(Optimizer& opt, std::span<const double> grads) {
  if (grads.size() != param_count()) throw ShapeError("encoder gradient size mismatch");
  const std::size_t nt = trunk_.param_count();
  opt.begin_step();
  opt.apply(trunk_.mutable_params(), grads.first(nt), 0);
  opt.apply(head_.mutable_params(), grads.subspan(nt), nt);
}

std::vector<double> edge_gradient(const EdgeNode& node, std::span<const EdgeSample> batch,
                                  double divisor) {
  std::vector<double> grads(node.param_count(), 0.0);
  for (const EdgeSample& s : batch) {
    if (s.cache == nullptr) throw std::invalid_argument("edge sample without encoder cache");
    if (s.signal.size() != node.message_dim()) {
      throw ShapeError("gradient signal length " + std::to_string(s.signal.size()) +
                       " != message dimension " + std::to_string(node.message_dim()));
    }
    node.accumulate_gradient(*s.cache, s.signal, grads);
  }
  for (double& g : grads) g /= divisor;
  return grads;
}

void local_update_exact(EdgeNode& node, std::span<const EdgeSample> batch, double eta,
                        std::size_t batch_size) {
  if (batch.empty() || batch_size == 0) throw std::invalid_argument("local update needs a non-empty batch");
  const auto grads = edge_gradient(node, batch, static_cast<double>(batch_size));
  Optimizer sgd(OptimizerKind::sgd, eta, node.param_count());
  node.apply_update(sgd, grads);
}

void local_update_wireless(EdgeNode& node, std::span<const EdgeSample> batch, double eta,
                           std::size_t batch_size) {
  local_update_exact(node, batch, eta, batch_size);
}

void local_update_async(EdgeNode& node, std::span<const EdgeSample> active, double eta) {
  if (active.empty()) return;
  local_update_exact(node, active, eta, active.size());
}

std::vector<double> local_update_shared(const EdgeNode& node, std::span<const double> shared,
                                        std::span<const EdgeSample> batch, double eta,
                                        std::size_t batch_size) {
  if (shared.size() != node.param_count()) {
    throw ShapeError("shared encoder has " + std::to_string(shared.size()) + " parameters, node has " +
                     std::to_string(node.param_count()));
  }
  std::vector<double> candidate(shared.begin(), shared.end());
  if (batch.empty()) return candidate;
  const auto grads = edge_gradient(node, batch, static_cast<double>(batch_size));
  sgd_step(candidate, grads, eta);
  return candidate;
}

}  // namespace tenet
