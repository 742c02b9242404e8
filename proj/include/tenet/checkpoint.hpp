#pragma once

// Versioned binary container for trained parameters: magic, format version,
// the rendered config, then named little-endian float64 arrays with shapes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tenet/config.hpp"
#include "tenet/protocol.hpp"

namespace tenet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;
  std::uint64_t round = 0;
  std::vector<NamedArray> arrays;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Checkpoint make_checkpoint(const SystemState& state, const ExperimentConfig& config);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void save_checkpoint(const SystemState& state, const ExperimentConfig& config, const std::filesystem::path& path);
// Rebuilds the state described by the checkpoint's own config.
SystemState load_checkpoint(const std::filesystem::path& path);
// Loads parameters into an existing state; rejects checkpoints whose model
// configuration or array shapes differ from the state's.
void load_checkpoint_into(SystemState& state, const std::filesystem::path& path);

}  // namespace tenet
