#include "tenet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace tenet {

namespace {

constexpr char kMagic[8] = {'T', 'E', 'N', 'E', 'T', 'C', 'K', 'P'};
// Upper bound on any length field, so a corrupt header cannot request a
// huge allocation.
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 34;

template <class T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw CheckpointError("checkpoint is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::uint64_t get_length(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > kMaxLength) throw CheckpointError("checkpoint length field is corrupt");
  return n;
}

std::string get_string(std::istream& in) {
  const auto n = get_length(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("checkpoint is truncated");
  return s;
}

void add_blocks(std::vector<NamedArray>& out, const std::string& prefix, const std::vector<ParamBlock>& blocks,
                const std::vector<double>& params) {
  for (const auto& b : blocks) {
    NamedArray a;
    a.name = prefix + b.name;
    a.shape = {b.rows, b.cols};
    a.values.assign(params.begin() + static_cast<std::ptrdiff_t>(b.offset),
                    params.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()));
    out.push_back(std::move(a));
  }
}

std::vector<NamedArray> state_arrays(const SystemState& state) {
  std::vector<NamedArray> out;
  for (const auto& node : state.nodes) {
    add_blocks(out, "edge" + std::to_string(node.id()) + ".", node.param_blocks(), node.parameters());
  }
  add_blocks(out, "cloud.", state.cloud->param_blocks(), state.cloud->parameters());
  if (!state.shared_encoder.empty()) {
    add_blocks(out, "shared.", state.nodes.front().param_blocks(), state.shared_encoder);
  }
  return out;
}

void check_model_config(const SystemState& state, const std::string& config_text) {
  ExperimentConfig mine;
  mine.training = state.config;
  const auto stored = parse_config(config_text);
  const auto a = config_entries(mine);
  const auto b = config_entries(stored);
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (is_model_key(a[k].first) && a[k].second != b[k].second) {
      throw CheckpointError("checkpoint was written for " + a[k].first + " = " + b[k].second +
                            ", the target state has " + a[k].first + " = " + a[k].second);
    }
  }
}

std::vector<double> gather(const std::map<std::string, const NamedArray*>& by_name, const std::string& prefix,
                           const std::vector<ParamBlock>& blocks, std::size_t count) {
  std::vector<double> params(count);
  for (const auto& b : blocks) {
    const auto it = by_name.find(prefix + b.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint has no array named " + prefix + b.name);
    const NamedArray& a = *it->second;
    if (a.shape != std::vector<std::uint64_t>{b.rows, b.cols}) {
      throw CheckpointError("array " + a.name + " has the wrong shape");
    }
    std::copy(a.values.begin(), a.values.end(), params.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  return params;
}

}  // namespace

Checkpoint make_checkpoint(const SystemState& state, const ExperimentConfig& config) {
  Checkpoint ckpt;
  ExperimentConfig echo = config;
  echo.training = state.config;
  ckpt.config_text = render_config(echo);
  ckpt.round = state.round;
  ckpt.arrays = state_arrays(state);
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, ckpt.version);
  put<std::uint64_t>(out, ckpt.config_text.size());
  out.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
  put<std::uint64_t>(out, ckpt.round);
  put<std::uint64_t>(out, ckpt.arrays.size());
  for (const auto& a : ckpt.arrays) {
    std::uint64_t expected = 1;
    for (auto d : a.shape) expected *= d;
    if (expected != a.values.size()) throw CheckpointError("array " + a.name + " does not match its shape");
    put<std::uint64_t>(out, a.name.size());
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put<std::uint64_t>(out, a.shape.size());
    for (auto d : a.shape) put<std::uint64_t>(out, d);
    for (double v : a.values) put<double>(out, v);
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic)) throw CheckpointError("checkpoint is truncated");
  if (!std::equal(magic, magic + sizeof magic, kMagic)) throw CheckpointError(path.string() + " is not a checkpoint");
  Checkpoint ckpt;
  ckpt.version = get<std::uint32_t>(in);
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(ckpt.version) +
                          " is not supported (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  ckpt.config_text = get_string(in);
  ckpt.round = get<std::uint64_t>(in);
  const auto count = get_length(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedArray a;
    a.name = get_string(in);
    const auto ndim = get_length(in);
    std::uint64_t size = 1;
    for (std::uint64_t d = 0; d < ndim; ++d) {
      a.shape.push_back(get_length(in));
      size *= a.shape.back();
      if (size > kMaxLength) throw CheckpointError("checkpoint array is implausibly large");
    }
    a.values.resize(size);
    for (double& v : a.values) v = get<double>(in);
    ckpt.arrays.push_back(std::move(a));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const SystemState& state, const ExperimentConfig& config, const std::filesystem::path& path) {
  write_checkpoint(path, make_checkpoint(state, config));
}

namespace {

void restore(SystemState& state, const Checkpoint& ckpt) {
  check_model_config(state, ckpt.config_text);
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : ckpt.arrays) by_name[a.name] = &a;
  const auto expected = state_arrays(state);
  if (expected.size() != ckpt.arrays.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.arrays.size()) + " arrays, the state needs " +
                          std::to_string(expected.size()));
  }
  for (auto& node : state.nodes) {
    node.set_parameters(gather(by_name, "edge" + std::to_string(node.id()) + ".", node.param_blocks(),
                               node.param_count()));
  }
  state.cloud->set_parameters(gather(by_name, "cloud.", state.cloud->param_blocks(), state.cloud->param_count()));
  if (!state.shared_encoder.empty()) {
    state.shared_encoder =
        gather(by_name, "shared.", state.nodes.front().param_blocks(), state.nodes.front().param_count());
  }
  state.round = ckpt.round;
}

}  // namespace

SystemState load_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  SystemState state = make_state(parse_config(ckpt.config_text).training);
  restore(state, ckpt);
  return state;
}

void load_checkpoint_into(SystemState& state, const std::filesystem::path& path) { restore(state, read_checkpoint(path)); }

}  // namespace tenet
