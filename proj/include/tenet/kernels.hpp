#pragma once

// Batched per-sample work for one training round. The parallel variants use
// OpenMP over samples and reduce partial sums in a fixed chunk order, so the
// result does not depend on the number of threads. The serial variants
// accumulate directly and serve as the reference implementation.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tenet/cloud.hpp"
#include "tenet/edge.hpp"

namespace tenet {

enum class Execution { serial, parallel };

// Samples per partial-sum chunk in the parallel reductions.
inline constexpr std::size_t kReductionChunk = 8;

struct EncodeJob {
  std::size_t node = 0;
  std::span<const double> observation;
  std::optional<std::vector<double>> cqi;
};

std::vector<EncodeResult> encode_batch(std::span<const EdgeNode> nodes, std::span<const EncodeJob> jobs,
                                       Execution exec);

std::vector<CloudPass> infer_batch(const CloudNetwork& model, std::span<const std::vector<Reception>> samples,
                                   Execution exec);

CloudBackwardResult backward_batch(const CloudNetwork& model, std::span<const CloudPass> passes,
                                   std::span<const std::vector<double>> grad_x, Execution exec);

// (1/divisor) sum_b (ds_b/dpsi)^T signal_b
std::vector<double> edge_gradient_batch(const EdgeNode& node, std::span<const EdgeSample> batch, double divisor,
                                        Execution exec);

// Number of OpenMP threads available to the parallel variants.
int worker_threads();

}  // namespace tenet
