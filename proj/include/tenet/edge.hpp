#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tenet/nn.hpp"

namespace tenet {

enum class CqiScaling { raw, log10 };

struct EncoderSpec {
  std::size_t observation_dim = 0;      // A
  std::vector<std::size_t> hidden;      // trunk widths, ReLU after each
  std::size_t message_dim = 0;          // S (even)
  PowerMode power_mode = PowerMode::per_rb;
  double power_budget = 1.0;            // p_E
  bool cqie = false;
  CqiScaling cqi_scaling = CqiScaling::raw;
};

struct LocalObservation {
  std::vector<double> values;
  std::size_t sample_index = 0;
  std::size_t source_index = 0;
};

// Cached intermediate values of one encode, needed for the local backward.
struct EncoderCache {
  ForwardCache trunk;
  ForwardCache head;
};

struct EncodeResult {
  std::vector<double> message;
  EncoderCache cache;
};

// One edge node: an encoder f(a [, |h|]) whose last dense layer may take the
// channel magnitude as side input, followed by the power projection.
class EdgeNode {
 public:
  EdgeNode() = default;
  EdgeNode(std::size_t id, const EncoderSpec& spec, std::uint64_t seed);

  std::size_t id() const noexcept { return id_; }
  const EncoderSpec& spec() const noexcept { return spec_; }
  std::size_t message_dim() const noexcept { return spec_.message_dim; }
  std::size_t cqi_dim() const noexcept { return spec_.cqie ? spec_.message_dim / 2 : 0; }
  std::size_t param_count() const noexcept { return trunk_.param_count() + head_.param_count(); }

  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);
  std::vector<ParamBlock> param_blocks() const;

  EncodeResult encode(std::span<const double> observation,
                      std::optional<std::span<const double>> cqi = std::nullopt) const;

  // Adds (ds/dpsi)^T upstream into `grads` (size param_count()).
  void accumulate_gradient(const EncoderCache& cache, std::span<const double> upstream,
                           std::span<double> grads) const;

  // Applies `grads` (flat encoder layout) through `opt`.
  void apply_update(Optimizer& opt, std::span<const double> grads);

  const LayerStack& trunk() const noexcept { return trunk_; }
  const LayerStack& head() const noexcept { return head_; }

 private:
  std::size_t id_ = 0;
  EncoderSpec spec_;
  LayerStack trunk_;
  LayerStack head_;
};

// Per-sample material of one local update: the cache from this node's
// encode and the received gradient signal (d_i exactly, or y_E).
struct EdgeSample {
  const EncoderCache* cache = nullptr;
  std::span<const double> signal;
};

// (1/divisor) sum_b (ds_b/dpsi)^T signal_b
std::vector<double> edge_gradient(const EdgeNode& node, std::span<const EdgeSample> batch,
                                  double divisor);

// psi <- psi - (eta/B) sum_b (ds_b/dpsi)^T d_b
void local_update_exact(EdgeNode& node, std::span<const EdgeSample> batch, double eta,
                        std::size_t batch_size);
// Same rule with the decoded downlink signal y_E in place of d.
void local_update_wireless(EdgeNode& node, std::span<const EdgeSample> batch, double eta,
                           std::size_t batch_size);
// Averages over the active samples only; an empty active set leaves psi as is.
void local_update_async(EdgeNode& node, std::span<const EdgeSample> active, double eta);
// Candidate psi_i = shared - (eta/B) sum_b ...; `batch` caches must come from
// encodes made with the shared parameters loaded into `node`.
std::vector<double> local_update_shared(const EdgeNode& node, std::span<const double> shared,
                                        std::span<const EdgeSample> batch, double eta,
                                        std::size_t batch_size);

}  // namespace tenet
