#pragma once

// Experiment driver: builds the dataset, trains, evaluates the final grid and
// writes metrics.csv, result.json and checkpoint.bin into an output folder.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tenet/config.hpp"
#include "tenet/dataset.hpp"
#include "tenet/protocol.hpp"

namespace tenet {

inline constexpr std::string_view kMetricsHeader =
    "round,phase_time_ms,train_loss,val_accuracy,snr_up_db_mean,snr_dn_db_mean,mean_active_ens,"
    "param_norm_cloud,param_norm_edges";

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_numeric = 2 };

// Aggregates round records into CSV rows, one per `cadence` rounds.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::size_t cadence);
  // Returns the finished row when `rec` closes a window.
  std::optional<std::string> add(const RoundRecord& rec);

 private:
  std::size_t cadence_;
  std::size_t count_ = 0;
  double time_ms_ = 0.0;
  double loss_ = 0.0;
  double active_ = 0.0;
  double snr_up_ = 0.0;
  double snr_dn_ = 0.0;
  std::size_t links_ = 0;
};

std::string metrics_csv(const std::vector<RoundRecord>& records, std::size_t cadence);

Dataset build_dataset(const ExperimentConfig& config);

struct ExperimentOutcome {
  int exit_code = exit_ok;
  nlohmann::json result;
};

// Trains one configuration into `out_dir` (metrics.csv, checkpoint.bin) and
// returns the trained state.
SystemState train_to_directory(const ExperimentConfig& config, const Dataset& data,
                               const std::filesystem::path& out_dir);

nlohmann::json evaluate_grid(const SystemState& state, const Dataset& data, const ExperimentConfig& config);

// Runs the config's preset: train, equivalence, snr-sweep, ntest-sweep,
// batch-sweep, m-sweep, power-sweep, cqie-sweep or arch-sweep.
ExperimentOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

std::vector<std::string> preset_names();

void write_json(const std::filesystem::path& path, const nlohmann::json& value);

}  // namespace tenet
