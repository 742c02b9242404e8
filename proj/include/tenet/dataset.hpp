#pragma once

// Global states, labels and the cropped local views the edge nodes see.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tenet/edge.hpp"
#include "tenet/rng.hpp"

namespace tenet {

enum class Split { train, validation, test };

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t grid = 16;
  std::size_t window = 12;
  std::size_t marker = 4;       // side of the square class marker in each corner
  double amplitude = 1.0;       // marker level before the per-sample gain
  double noise = 2.0;           // pixel noise std
  std::size_t train = 4000;
  std::size_t validation = 1000;
  std::size_t test = 2000;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t height, std::size_t width, std::size_t window, std::size_t classes);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t window() const noexcept { return window_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t state_dim() const noexcept { return height_ * width_; }
  std::size_t observation_dim() const noexcept { return window_ * window_; }

  std::size_t size(Split split) const { return labels(split).size(); }
  std::span<const double> state(Split split, std::size_t index) const;
  std::size_t label(Split split, std::size_t index) const { return labels(split).at(index); }
  const std::vector<std::size_t>& labels(Split split) const;

  void add(Split split, std::span<const double> state, std::size_t label);

  // One uniformly placed window of a global state, flattened row-major.
  LocalObservation observe(Split split, std::size_t index, Rng& rng) const;
  LocalObservation crop_at(Split split, std::size_t index, std::size_t row, std::size_t col) const;

 private:
  std::vector<double>& states(Split split);
  const std::vector<double>& states(Split split) const;
  std::vector<std::size_t>& labels_mut(Split split);

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t window_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> states_[3];
  std::vector<std::size_t> labels_[3];
};

Dataset generate_synthetic(std::uint64_t seed, const SyntheticSpec& spec);

// N independent window placements of one global state (overlap allowed).
std::vector<LocalObservation> crop_observations(const Dataset& data, Split split, std::size_t index,
                                                std::size_t n, Rng& rng);

// Flat binary container: u64 count, u64 height, u64 width, u64 classes,
// count*height*width float64 states, count int32 labels (little-endian).
// Samples are dealt into train/validation/test in file order.
Dataset load_flat_dataset(const std::filesystem::path& path, std::size_t window,
                          double validation_fraction, double test_fraction);
void save_flat_dataset(const std::filesystem::path& path, const Dataset& data, Split split);

struct CalibrationReport {
  double full_state_accuracy = 0.0;
  double single_crop_accuracy = 0.0;
};

// Multinomial logistic regression trained on the train split and scored on
// the test split, once on full states and once on one random crop each.
CalibrationReport calibrate_crop_gap(const Dataset& data, std::uint64_t seed, std::size_t epochs = 20);

}  // namespace tenet
