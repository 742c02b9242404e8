#include "tenet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace tenet {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::size_t parse_size(const std::string& key, const std::string& text) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  return value;
}

double parse_double(const std::string& key, const std::string& text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key + ": expected a number, got '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  if (text.empty()) return items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) out += ",";
    out += fmt(values[k]);
  }
  return out;
}

struct Field {
  std::string key;
  bool model = false;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SIZE_FIELD(name, model)                                                                    \
  Field {                                                                                          \
    #name, model, [](ExperimentConfig& c, const std::string& v) { c.training.name = parse_size(#name, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.training.name); }                             \
  }
#define DOUBLE_FIELD(name, model)                                                                  \
  Field {                                                                                          \
    #name, model, [](ExperimentConfig& c, const std::string& v) { c.training.name = parse_double(#name, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.training.name); }                             \
  }
#define BOOL_FIELD(name, model)                                                                    \
  Field {                                                                                          \
    #name, model, [](ExperimentConfig& c, const std::string& v) { c.training.name = parse_bool(#name, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.training.name); }                             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"preset", false, [](ExperimentConfig& c, const std::string& v) { c.preset = v; },
            [](const ExperimentConfig& c) { return c.preset; }},
      SIZE_FIELD(classes, true),
      SIZE_FIELD(grid, false),
      SIZE_FIELD(window, true),
      SIZE_FIELD(marker, false),
      DOUBLE_FIELD(signal_amplitude, false),
      DOUBLE_FIELD(pixel_noise, false),
      SIZE_FIELD(train_samples, false),
      SIZE_FIELD(validation_samples, false),
      SIZE_FIELD(test_samples, false),
      SIZE_FIELD(n_train, true),
      Field{"encoder_hidden", true,
            [](ExperimentConfig& c, const std::string& v) {
              c.training.encoder_hidden.clear();
              for (const auto& item : split_list(v)) {
                c.training.encoder_hidden.push_back(parse_size("encoder_hidden", item));
              }
            },
            [](const ExperimentConfig& c) { return join(c.training.encoder_hidden); }},
      SIZE_FIELD(message_dim, true),
      Field{"cloud_arch", true,
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.training.cloud_arch = parse_cloud_arch(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("cloud_arch: ") + e.what());
              }
            },
            [](const ExperimentConfig& c) { return std::string(to_string(c.training.cloud_arch)); }},
      SIZE_FIELD(branches, true),
      SIZE_FIELD(latent, true),
      SIZE_FIELD(cloud_hidden, true),
      SIZE_FIELD(baseline_hidden, true),
      SIZE_FIELD(rounds, false),
      SIZE_FIELD(batch_size, false),
      DOUBLE_FIELD(learning_rate, false),
      Field{"optimizer", false,
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.training.optimizer = parse_optimizer(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("optimizer: ") + e.what());
              }
            },
            [](const ExperimentConfig& c) { return std::string(to_string(c.training.optimizer)); }},
      DOUBLE_FIELD(snr_up_min_db, false),
      DOUBLE_FIELD(snr_up_max_db, false),
      DOUBLE_FIELD(snr_dn_min_db, false),
      DOUBLE_FIELD(snr_dn_max_db, false),
      BOOL_FIELD(uplink_noise, false),
      BOOL_FIELD(downlink_noise, false),
      BOOL_FIELD(fading, false),
      BOOL_FIELD(snr_per_round, false),
      Field{"power_mode", true,
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.training.power_mode = parse_power_mode(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("power_mode: ") + e.what());
              }
            },
            [](const ExperimentConfig& c) { return std::string(to_string(c.training.power_mode)); }},
      DOUBLE_FIELD(edge_power, true),
      DOUBLE_FIELD(cloud_power, false),
      BOOL_FIELD(pathloss, true),
      DOUBLE_FIELD(pathloss_exponent, false),
      DOUBLE_FIELD(distance_min, false),
      DOUBLE_FIELD(distance_max, false),
      DOUBLE_FIELD(pathloss_reference, false),
      BOOL_FIELD(async, false),
      BOOL_FIELD(encoder_sharing, true),
      BOOL_FIELD(cqie, true),
      SIZE_FIELD(validation_every, false),
      SIZE_FIELD(validation_limit, false),
      Field{"eval_snr_db", false,
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "none") {
                c.training.eval_snr_db.reset();
              } else {
                c.training.eval_snr_db = parse_double("eval_snr_db", v);
              }
            },
            [](const ExperimentConfig& c) {
              return c.training.eval_snr_db ? fmt(*c.training.eval_snr_db) : std::string("none");
            }},
      SIZE_FIELD(n_test, false),
      BOOL_FIELD(wall_clock_timing, false),
      Field{"master_seed", false,
            [](ExperimentConfig& c, const std::string& v) {
              c.training.master_seed = parse_size("master_seed", v);
            },
            [](const ExperimentConfig& c) { return std::to_string(c.training.master_seed); }},
      Field{"dataset_path", false,
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "none" || v.empty()) {
                c.dataset_path.reset();
              } else {
                c.dataset_path = v;
              }
            },
            [](const ExperimentConfig& c) { return c.dataset_path.value_or("none"); }},
      Field{"dataset_validation_fraction", false,
            [](ExperimentConfig& c, const std::string& v) {
              c.dataset_validation_fraction = parse_double("dataset_validation_fraction", v);
            },
            [](const ExperimentConfig& c) { return fmt(c.dataset_validation_fraction); }},
      Field{"dataset_test_fraction", false,
            [](ExperimentConfig& c, const std::string& v) {
              c.dataset_test_fraction = parse_double("dataset_test_fraction", v);
            },
            [](const ExperimentConfig& c) { return fmt(c.dataset_test_fraction); }},
      Field{"eval_snr_grid", false,
            [](ExperimentConfig& c, const std::string& v) {
              c.eval_snr_grid.clear();
              for (const auto& item : split_list(v)) c.eval_snr_grid.push_back(parse_double("eval_snr_grid", item));
            },
            [](const ExperimentConfig& c) { return join(c.eval_snr_grid); }},
      Field{"eval_ntest_grid", false,
            [](ExperimentConfig& c, const std::string& v) {
              c.eval_ntest_grid.clear();
              for (const auto& item : split_list(v)) c.eval_ntest_grid.push_back(parse_size("eval_ntest_grid", item));
            },
            [](const ExperimentConfig& c) { return join(c.eval_ntest_grid); }},
      Field{"eval_limit", false,
            [](ExperimentConfig& c, const std::string& v) { c.eval_limit = parse_size("eval_limit", v); },
            [](const ExperimentConfig& c) { return fmt(c.eval_limit); }},
      Field{"sweep_values", false,
            [](ExperimentConfig& c, const std::string& v) {
              c.sweep_values.clear();
              for (const auto& item : split_list(v)) c.sweep_values.push_back(parse_double("sweep_values", item));
            },
            [](const ExperimentConfig& c) { return join(c.sweep_values); }},
      Field{"target_accuracy", false,
            [](ExperimentConfig& c, const std::string& v) { c.target_accuracy = parse_double("target_accuracy", v); },
            [](const ExperimentConfig& c) { return fmt(c.target_accuracy); }},
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::vector<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    seen.push_back(key);
    it->set(config, value);
  }
  try {
    config.training.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

std::string render_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [key, value] : config_entries(config)) out += key + " = " + value + "\n";
  return out;
}

bool is_model_key(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f.model;
  }
  return false;
}

}  // namespace tenet
