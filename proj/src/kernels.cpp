#include "tenet/kernels.hpp"

#include <omp.h>

#include <stdexcept>
#include <string>

namespace tenet {

namespace {

std::size_t chunk_count(std::size_t n) { return (n + kReductionChunk - 1) / kReductionChunk; }

// Sums per-chunk buffers into `total` in chunk order.
void reduce_chunks(const std::vector<std::vector<double>>& partial, std::vector<double>& total) {
  for (const auto& p : partial) {
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += p[k];
  }
}

}  // namespace

int worker_threads() { return omp_get_max_threads(); }

std::vector<EncodeResult> encode_batch(std::span<const EdgeNode> nodes, std::span<const EncodeJob> jobs,
                                       Execution exec) {
  for (const auto& job : jobs) {
    if (job.node >= nodes.size()) throw std::out_of_range("encode job names node " + std::to_string(job.node));
  }
  std::vector<EncodeResult> out(jobs.size());
  auto run = [&](std::size_t j) {
    const auto& job = jobs[j];
    std::optional<std::span<const double>> cqi;
    if (job.cqi) cqi = std::span<const double>(*job.cqi);
    out[j] = nodes[job.node].encode(job.observation, cqi);
  };
  if (exec == Execution::serial) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run(j);
    return out;
  }
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    try {
      run(j);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<CloudPass> infer_batch(const CloudNetwork& model, std::span<const std::vector<Reception>> samples,
                                   Execution exec) {
  std::vector<CloudPass> out(samples.size());
  if (exec == Execution::serial) {
    for (std::size_t b = 0; b < samples.size(); ++b) out[b] = model.infer(samples[b]);
    return out;
  }
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < samples.size(); ++b) {
    try {
      out[b] = model.infer(samples[b]);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

CloudBackwardResult backward_batch(const CloudNetwork& model, std::span<const CloudPass> passes,
                                   std::span<const std::vector<double>> grad_x, Execution exec) {
  if (exec == Execution::serial) return cloud_backward(model, passes, grad_x);
  if (passes.size() != grad_x.size()) throw ShapeError("one logit gradient per cloud pass is required");
  const std::size_t n = passes.size();
  const std::size_t chunks = chunk_count(n);
  CloudBackwardResult out;
  out.grads.assign(model.param_count(), 0.0);
  out.messages.resize(n);
  std::vector<std::vector<double>> partial(chunks);
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < chunks; ++c) {
    try {
      partial[c].assign(model.param_count(), 0.0);
      const std::size_t end = std::min(n, (c + 1) * kReductionChunk);
      for (std::size_t b = c * kReductionChunk; b < end; ++b) {
        out.messages[b] = model.backward(passes[b], grad_x[b], partial[c]);
      }
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  reduce_chunks(partial, out.grads);
  return out;
}

std::vector<double> edge_gradient_batch(const EdgeNode& node, std::span<const EdgeSample> batch, double divisor,
                                        Execution exec) {
  if (exec == Execution::serial) return edge_gradient(node, batch, divisor);
  const std::size_t n = batch.size();
  const std::size_t chunks = chunk_count(n);
  std::vector<std::vector<double>> partial(chunks);
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < chunks; ++c) {
    try {
      const std::size_t end = std::min(n, (c + 1) * kReductionChunk);
      partial[c] = edge_gradient(node, batch.subspan(c * kReductionChunk, end - c * kReductionChunk), 1.0);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  std::vector<double> grads(node.param_count(), 0.0);
  reduce_chunks(partial, grads);
  for (double& g : grads) g /= divisor;
  return grads;
}

}  // namespace tenet
