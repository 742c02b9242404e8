#pragma once

// Numerical self-checks: finite-difference gradient oracle over every layer
// type and model, and the DTDE vs. centralized-SGD trajectory comparison.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tenet/protocol.hpp"

namespace tenet {

// max_k |a_k - b_k| / max(max_k |b_k|, floor)
double relative_deviation(std::span<const double> a, std::span<const double> b, double floor = 1e-300);

// Central differences of f around x with step h.
std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::span<const double> x, double h = 1e-5);

struct GradcheckCase {
  std::string family;
  std::size_t instances = 0;
  double max_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  std::size_t instances = 0;
  double max_error = 0.0;
  double tolerance = 1e-5;
  bool passed() const noexcept { return max_error <= tolerance; }
};

// `scale` multiplies the per-family instance counts (1 gives 250 instances).
GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t scale = 1);

struct EquivalenceReport {
  std::size_t rounds = 0;
  double max_deviation = 0.0;          // over all rounds and parameter arrays
  std::vector<double> per_round;
  double tolerance = 1e-10;
  bool passed() const noexcept { return max_deviation <= tolerance; }
};

// Toy configuration used by the equivalence checks.
TrainingConfig equivalence_config(std::uint64_t seed, bool encoder_sharing);

// Runs DTDE rounds and centralized oracle rounds side by side from the same
// initial state, with the downlink noise switched off.
EquivalenceReport run_equivalence(const TrainingConfig& config, const Dataset& data, std::size_t rounds);

}  // namespace tenet
