#pragma once

// Feed-forward network engine: dense/ReLU/power-projection layers with
// forward passes, vector-Jacobian products and first-order optimizers.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tenet {

enum class PowerMode { per_rb, sum };

std::string_view to_string(PowerMode mode);
PowerMode parse_power_mode(std::string_view text);

// Shape/dimension violation. `layer` names the offending layer when known.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what, std::optional<std::size_t> layer = std::nullopt)
      : std::invalid_argument(what), layer_(layer) {}
  std::optional<std::size_t> layer() const noexcept { return layer_; }

 private:
  std::optional<std::size_t> layer_;
};

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
};

struct Relu {
  std::size_t dim = 0;
};

// Power-constraint output activation. `dim` must be even: entries j and
// j + dim/2 form the real/imaginary parts of resource block j.
struct Projection {
  std::size_t dim = 0;
  double budget = 1.0;
  PowerMode mode = PowerMode::per_rb;
};

using Layer = std::variant<Dense, Relu, Projection>;

std::size_t layer_input_dim(const Layer& layer);
std::size_t layer_output_dim(const Layer& layer);
std::size_t layer_param_count(const Layer& layer);

struct ParamBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  std::size_t size() const noexcept { return rows * cols; }
};

// values[l] is the input of layer l; values.back() is the stack output.
struct ForwardCache {
  std::vector<std::vector<double>> values;
  std::uint64_t stack_id = 0;
  std::uint64_t revision = 0;

  std::size_t depth() const noexcept { return values.empty() ? 0 : values.size() - 1; }
  const std::vector<double>& output() const { return values.back(); }
};

struct ForwardResult {
  std::vector<double> output;
  ForwardCache cache;
};

struct GradientSet {
  std::vector<double> param_grads;
  std::vector<double> input_grad;
};

class LayerStack {
 public:
  LayerStack() = default;
  LayerStack(std::size_t input_dim, std::vector<Layer> layers, std::uint64_t seed);

  // Dense layers of the given widths with ReLU between them (none after the
  // last dense layer), optionally followed by a power projection.
  static LayerStack mlp(std::span<const std::size_t> widths, std::uint64_t seed,
                        std::optional<Projection> output_projection = std::nullopt);

  LayerStack(const LayerStack& other);
  LayerStack& operator=(const LayerStack& other);
  LayerStack(LayerStack&&) noexcept = default;
  LayerStack& operator=(LayerStack&&) noexcept = default;

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t param_count() const noexcept { return params_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  std::span<const double> params() const noexcept { return params_; }
  // Any mutable access invalidates caches produced before it.
  std::span<double> mutable_params() noexcept;
  void set_params(std::span<const double> values);
  std::vector<ParamBlock> param_blocks() const;

  ForwardResult forward(std::span<const double> input) const;
  std::vector<double> evaluate(std::span<const double> input) const;

  GradientSet backward(const ForwardCache& cache, std::span<const double> upstream) const;
  // Adds the parameter VJP into `param_grads` (size param_count()) and
  // returns the input gradient.
  std::vector<double> backward_accumulate(const ForwardCache& cache,
                                          std::span<const double> upstream,
                                          std::span<double> param_grads) const;

 private:
  void check_cache(const ForwardCache& cache) const;

  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<Layer> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::uint64_t seed_ = 0;
  std::uint64_t id_ = 0;
  std::uint64_t revision_ = 0;
};

std::vector<double> project_power(std::span<const double> v, double budget, PowerMode mode);
std::vector<double> project_power_backward(std::span<const double> v, double budget,
                                           PowerMode mode, std::span<const double> upstream);

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;
};

std::vector<double> softmax(std::span<const double> logits);
LossResult softmax_cross_entropy(std::span<const double> logits, std::size_t label);

// Index of the largest logit; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

void sgd_step(std::span<double> params, std::span<const double> grads, double eta);

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

// Applies one update to a parameter vector that may be split over several
// blocks: call begin_step() once, then apply() for each block with its
// offset into the flat parameter layout.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double learning_rate, std::size_t param_count);

  OptimizerKind kind() const noexcept { return kind_; }
  double learning_rate() const noexcept { return lr_; }
  void begin_step();
  void apply(std::span<double> params, std::span<const double> grads, std::size_t offset);

 private:
  OptimizerKind kind_ = OptimizerKind::sgd;
  double lr_ = 0.0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::uint64_t steps_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

double l2_norm(std::span<const double> v);

}  // namespace tenet
