#include "tenet/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tenet/nn.hpp"

namespace tenet {

namespace {

std::size_t split_index(Split split) { return static_cast<std::size_t>(split); }

template <class T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error("dataset file is truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

Dataset::Dataset(std::size_t height, std::size_t width, std::size_t window, std::size_t classes)
    : height_(height), width_(width), window_(window), classes_(classes) {
  if (window_ == 0 || window_ > height_ || window_ > width_) {
    throw std::invalid_argument("crop window " + std::to_string(window_) + " does not fit a " +
                                std::to_string(height_) + "x" + std::to_string(width_) + " grid");
  }
  if (classes_ < 2) throw std::invalid_argument("a classification task needs at least two classes");
}

std::vector<double>& Dataset::states(Split split) { return states_[split_index(split)]; }
const std::vector<double>& Dataset::states(Split split) const { return states_[split_index(split)]; }
const std::vector<std::size_t>& Dataset::labels(Split split) const { return labels_[split_index(split)]; }
std::vector<std::size_t>& Dataset::labels_mut(Split split) { return labels_[split_index(split)]; }

std::span<const double> Dataset::state(Split split, std::size_t index) const {
  if (index >= size(split)) throw std::out_of_range("sample index out of range");
  return std::span<const double>(states(split)).subspan(index * state_dim(), state_dim());
}

void Dataset::add(Split split, std::span<const double> state, std::size_t label) {
  if (state.size() != state_dim()) throw ShapeError("global state has the wrong size");
  if (label >= classes_) throw std::out_of_range("label out of range");
  states(split).insert(states(split).end(), state.begin(), state.end());
  labels_mut(split).push_back(label);
}

LocalObservation Dataset::crop_at(Split split, std::size_t index, std::size_t row, std::size_t col) const {
  if (row + window_ > height_ || col + window_ > width_) throw std::out_of_range("crop outside the grid");
  const auto s = state(split, index);
  LocalObservation obs;
  obs.sample_index = index;
  obs.source_index = index;
  obs.values.reserve(observation_dim());
  for (std::size_t r = 0; r < window_; ++r) {
    const double* line = s.data() + (row + r) * width_ + col;
    obs.values.insert(obs.values.end(), line, line + window_);
  }
  return obs;
}

LocalObservation Dataset::observe(Split split, std::size_t index, Rng& rng) const {
  std::uniform_int_distribution<std::size_t> rows(0, height_ - window_);
  std::uniform_int_distribution<std::size_t> cols(0, width_ - window_);
  const std::size_t r = rows(rng);
  const std::size_t c = cols(rng);
  return crop_at(split, index, r, c);
}

std::vector<LocalObservation> crop_observations(const Dataset& data, Split split, std::size_t index,
                                                std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("need at least one observation");
  std::vector<LocalObservation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(data.observe(split, index, rng));
  return out;
}

// Each corner holds a square marker whose sign encodes one bit of the label;
// diagonal corners repeat a bit when there are fewer bits than corners.
// A window misses part of the border, so one crop sees only some of them.
Dataset generate_synthetic(std::uint64_t seed, const SyntheticSpec& spec) {
  if (spec.grid < spec.window) throw std::invalid_argument("grid must be at least the crop window");
  if (2 * spec.marker > spec.grid) throw std::invalid_argument("markers overlap");
  if (spec.classes < 2 || spec.classes > 16) throw std::invalid_argument("synthetic task supports 2..16 classes");
  Dataset data(spec.grid, spec.grid, spec.window, spec.classes);
  const std::size_t bits = std::bit_width(spec.classes - 1);
  // corner order: top-left, top-right, bottom-right, bottom-left
  const std::size_t g = spec.grid;
  const std::size_t k = spec.marker;
  const std::size_t corner_row[4] = {0, 0, g - k, g - k};
  const std::size_t corner_col[4] = {0, g - k, g - k, 0};

  const std::pair<Split, std::size_t> plan[3] = {
      {Split::train, spec.train}, {Split::validation, spec.validation}, {Split::test, spec.test}};
  std::vector<double> state(g * g);
  for (const auto& [split, count] : plan) {
    Rng rng = keyed_rng(seed, Stream::dataset, {static_cast<std::uint64_t>(split)});
    std::uniform_int_distribution<std::size_t> label_dist(0, spec.classes - 1);
    std::uniform_real_distribution<double> gain_dist(0.5, 1.5);
    std::normal_distribution<double> noise(0.0, spec.noise);
    for (std::size_t n = 0; n < count; ++n) {
      const std::size_t label = label_dist(rng);
      const double gain = spec.amplitude * gain_dist(rng);
      for (double& x : state) x = noise(rng);
      for (std::size_t c = 0; c < 4; ++c) {
        const std::size_t bit = (label >> (c % bits)) & 1U;
        const double level = bit ? gain : -gain;
        for (std::size_t r = 0; r < k; ++r) {
          for (std::size_t q = 0; q < k; ++q) state[(corner_row[c] + r) * g + corner_col[c] + q] += level;
        }
      }
      data.add(split, state, label);
    }
  }
  return data;
}

Dataset load_flat_dataset(const std::filesystem::path& path, std::size_t window,
                          double validation_fraction, double test_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  const auto count = read_le<std::uint64_t>(in);
  const auto height = read_le<std::uint64_t>(in);
  const auto width = read_le<std::uint64_t>(in);
  const auto classes = read_le<std::uint64_t>(in);
  if (count == 0 || height == 0 || width == 0) throw std::runtime_error("dataset header describes no data");
  Dataset data(height, width, window, classes);
  std::vector<double> states(count * height * width);
  for (double& x : states) x = read_le<double>(in);
  const auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(count)));
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(count)));
  if (n_val + n_test >= count) throw std::invalid_argument("split fractions leave no training data");
  const std::size_t n_train = count - n_val - n_test;
  for (std::size_t n = 0; n < count; ++n) {
    const auto label = read_le<std::int32_t>(in);
    if (label < 0) throw std::runtime_error("negative label in dataset");
    const Split split = n < n_train ? Split::train : (n < n_train + n_val ? Split::validation : Split::test);
    data.add(split, std::span<const double>(states).subspan(n * height * width, height * width),
             static_cast<std::size_t>(label));
  }
  return data;
}

void save_flat_dataset(const std::filesystem::path& path, const Dataset& data, Split split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  write_le<std::uint64_t>(out, data.size(split));
  write_le<std::uint64_t>(out, data.height());
  write_le<std::uint64_t>(out, data.width());
  write_le<std::uint64_t>(out, data.classes());
  for (std::size_t n = 0; n < data.size(split); ++n) {
    for (double x : data.state(split, n)) write_le<double>(out, x);
  }
  for (std::size_t n = 0; n < data.size(split); ++n) {
    write_le<std::int32_t>(out, static_cast<std::int32_t>(data.label(split, n)));
  }
}

namespace {

double logistic_accuracy(const std::vector<std::vector<double>>& train_x, const std::vector<std::size_t>& train_y,
                         const std::vector<std::vector<double>>& test_x, const std::vector<std::size_t>& test_y,
                         std::size_t classes, std::uint64_t seed, std::size_t epochs) {
  const std::size_t dim = train_x.front().size();
  LayerStack model(dim, {Dense{dim, classes}}, seed);
  std::fill(model.mutable_params().begin(), model.mutable_params().end(), 0.0);
  Rng rng(seed);
  std::vector<std::size_t> order(train_x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = 32;
  const double eta = 0.005;
  std::vector<double> grads(model.param_count());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        auto fwd = model.forward(train_x[order[k]]);
        auto loss = softmax_cross_entropy(fwd.output, train_y[order[k]]);
        model.backward_accumulate(fwd.cache, loss.grad, grads);
      }
      sgd_step(model.mutable_params(), grads, eta / static_cast<double>(end - start));
    }
  }
  std::size_t correct = 0;
  for (std::size_t n = 0; n < test_x.size(); ++n) {
    if (argmax(model.evaluate(test_x[n])) == test_y[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_x.size());
}

}  // namespace

CalibrationReport calibrate_crop_gap(const Dataset& data, std::uint64_t seed, std::size_t epochs) {
  if (data.size(Split::train) == 0 || data.size(Split::test) == 0) {
    throw std::invalid_argument("calibration needs train and test samples");
  }
  auto collect = [&](Split split, bool crop) {
    std::vector<std::vector<double>> xs;
    Rng rng = keyed_rng(seed, Stream::crop, {static_cast<std::uint64_t>(split), 0xca11ULL});
    for (std::size_t n = 0; n < data.size(split); ++n) {
      if (crop) {
        xs.push_back(data.observe(split, n, rng).values);
      } else {
        const auto s = data.state(split, n);
        xs.emplace_back(s.begin(), s.end());
      }
    }
    return xs;
  };
  CalibrationReport report;
  report.full_state_accuracy =
      logistic_accuracy(collect(Split::train, false), data.labels(Split::train), collect(Split::test, false),
                        data.labels(Split::test), data.classes(), seed, epochs);
  report.single_crop_accuracy =
      logistic_accuracy(collect(Split::train, true), data.labels(Split::train), collect(Split::test, true),
                        data.labels(Split::test), data.classes(), seed, epochs);
  return report;
}

}  // namespace tenet
