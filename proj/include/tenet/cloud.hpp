#pragma once

// Cloud-side inference models. CloudModel is the M-branch sum-pooling
// architecture x = sum_m u_m(sum_i z_m(y_i)); BaselineModel covers the
// sum-aggregation, concatenation (CatNet) and multi-head (MHNet) variants.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tenet/nn.hpp"

namespace tenet {

// One received uplink signal y_C,i tagged with the EN that sent it.
struct Reception {
  std::size_t en = 0;
  std::vector<double> signal;
};

struct CloudPass {
  std::vector<double> logits;
  std::vector<std::size_t> order;  // reception indices in evaluation order
  std::vector<std::size_t> ens;    // EN id of each evaluated reception
  std::vector<ForwardCache> caches;
  std::uint64_t model_id = 0;
  std::uint64_t revision = 0;
};

// Shared plumbing for cloud networks built from a list of LayerStacks whose
// parameters are laid out back to back.
class CloudNetwork {
 public:
  virtual ~CloudNetwork() = default;

  virtual std::string_view kind() const = 0;
  virtual std::unique_ptr<CloudNetwork> clone() const = 0;
  virtual CloudPass infer(std::span<const Reception> received) const = 0;
  // Adds the parameter gradient into `grads` and returns the per-reception
  // input gradients m_i = (dx/dy_i)^T grad_x, aligned with the original
  // reception order of `pass`.
  virtual std::vector<std::vector<double>> backward(const CloudPass& pass,
                                                    std::span<const double> grad_x,
                                                    std::span<double> grads) const = 0;

  std::size_t message_dim() const noexcept { return message_dim_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  std::size_t param_count() const noexcept;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);
  std::vector<ParamBlock> param_blocks() const;
  void apply_update(Optimizer& opt, std::span<const double> grads);

  const std::vector<LayerStack>& stacks() const noexcept { return stacks_; }

 protected:
  CloudNetwork(std::size_t message_dim, std::size_t output_dim);
  CloudNetwork(const CloudNetwork& other);
  CloudNetwork& operator=(const CloudNetwork&) = delete;

  void add_stack(LayerStack stack, std::string name);
  std::size_t stack_offset(std::size_t k) const { return offsets_[k]; }
  void stamp(CloudPass& pass) const;
  void check_pass(const CloudPass& pass, std::size_t expected_caches) const;
  void check_receptions(std::span<const Reception> received) const;

  std::size_t message_dim_;
  std::size_t output_dim_;
  std::vector<LayerStack> stacks_;
  std::vector<std::string> names_;
  std::vector<std::size_t> offsets_;
  std::uint64_t id_ = 0;
  std::uint64_t revision_ = 0;
};

struct CloudSpec {
  std::size_t message_dim = 16;  // S
  std::size_t branches = 5;      // M
  std::size_t latent = 32;       // R
  std::size_t hidden = 64;
  std::size_t classes = 4;       // X
};

class CloudModel final : public CloudNetwork {
 public:
  CloudModel(const CloudSpec& spec, std::uint64_t seed);

  std::string_view kind() const override { return "proposed"; }
  std::unique_ptr<CloudNetwork> clone() const override;
  CloudPass infer(std::span<const Reception> received) const override;
  std::vector<std::vector<double>> backward(const CloudPass& pass, std::span<const double> grad_x,
                                            std::span<double> grads) const override;

  const CloudSpec& spec() const noexcept { return spec_; }
  std::size_t branches() const noexcept { return spec_.branches; }
  const LayerStack& inner(std::size_t m) const { return stacks_[2 * m]; }
  const LayerStack& outer(std::size_t m) const { return stacks_[2 * m + 1]; }
  std::size_t inner_offset(std::size_t m) const { return stack_offset(2 * m); }
  std::size_t outer_offset(std::size_t m) const { return stack_offset(2 * m + 1); }

 private:
  CloudSpec spec_;
};

enum class BaselineKind { sum_agg, catnet, mhnet };

std::string_view to_string(BaselineKind kind);

struct BaselineSpec {
  BaselineKind kind = BaselineKind::sum_agg;
  std::size_t message_dim = 16;
  std::size_t classes = 4;
  std::size_t population = 1;  // N_fixed for catnet, N_heads for mhnet
  std::size_t hidden = 64;     // width of the two hidden layers
};

class BaselineModel final : public CloudNetwork {
 public:
  BaselineModel(const BaselineSpec& spec, std::uint64_t seed);

  std::string_view kind() const override { return to_string(spec_.kind); }
  std::unique_ptr<CloudNetwork> clone() const override;
  CloudPass infer(std::span<const Reception> received) const override;
  std::vector<std::vector<double>> backward(const CloudPass& pass, std::span<const double> grad_x,
                                            std::span<double> grads) const override;

  const BaselineSpec& spec() const noexcept { return spec_; }

 private:
  BaselineSpec spec_;
};

std::size_t catnet_param_count(std::size_t population, std::size_t message_dim, std::size_t classes,
                               std::size_t hidden);
std::size_t mhnet_param_count(std::size_t heads, std::size_t message_dim, std::size_t classes,
                              std::size_t hidden);
// Hidden width whose parameter count is closest to `target`; throws when no
// width lands within `tolerance` (relative).
std::size_t solve_catnet_width(std::size_t target, std::size_t population, std::size_t message_dim,
                               std::size_t classes, double tolerance = 0.05);
std::size_t solve_mhnet_width(std::size_t target, std::size_t heads, std::size_t message_dim,
                              std::size_t classes, double tolerance = 0.05);

struct CloudBackwardResult {
  std::vector<double> grads;                              // summed over samples
  std::vector<std::vector<std::vector<double>>> messages;  // [sample][reception]
};

CloudPass cloud_infer(const CloudNetwork& model, std::span<const Reception> received);
CloudBackwardResult cloud_backward(const CloudNetwork& model, std::span<const CloudPass> passes,
                                   std::span<const std::vector<double>> grad_x);
// SGD on the batch average: phi <- phi - (eta / B) grads.
void cloud_update(CloudNetwork& model, std::span<const double> grads, double eta, std::size_t batch_size);

std::vector<double> fedavg(std::span<const std::vector<double>> candidates);

}  // namespace tenet
