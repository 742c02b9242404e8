#pragma once

// Flat `key = value` experiment configuration. Lines starting with '#' are
// comments, lists are comma separated and unknown keys are errors.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tenet/protocol.hpp"

namespace tenet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  TrainingConfig training;
  std::string preset = "train";

  // external flat-binary dataset instead of the synthetic task
  std::optional<std::string> dataset_path;
  double dataset_validation_fraction = 0.1;
  double dataset_test_fraction = 0.2;

  // final evaluation grid on the test split; empty lists fall back to
  // eval_snr_db and n_test
  std::vector<double> eval_snr_grid;
  std::vector<std::size_t> eval_ntest_grid;
  std::size_t eval_limit = 0;

  // overrides the preset's default sweep points
  std::vector<double> sweep_values;
  // validation accuracy that counts as converged in the batch sweep
  double target_accuracy = 0.5;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Every key with its current value, in a fixed order; parse_config of the
// rendered text reproduces the configuration.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& config);
std::string render_config(const ExperimentConfig& config);

// Keys whose values fix the parameter shapes and the encoder map.
bool is_model_key(std::string_view key);

}  // namespace tenet
