#include "tenet/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "tenet/checkpoint.hpp"
#include "tenet/oracles.hpp"

namespace tenet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

json config_json(const ExperimentConfig& config) {
  json out = json::object();
  for (const auto& [key, value] : config_entries(config)) out[key] = value;
  return out;
}

json snr_json(std::optional<double> snr) { return snr ? json(*snr) : json(nullptr); }

std::size_t default_ntest(const TrainingConfig& t) { return t.n_test != 0 ? t.n_test : t.n_train; }

std::optional<std::size_t> rounds_to_target(const std::vector<RoundRecord>& records, double target) {
  for (const auto& r : records) {
    if (r.val_accuracy && *r.val_accuracy >= target) return r.round;
  }
  return std::nullopt;
}

std::vector<double> sweep_points(const ExperimentConfig& config, std::vector<double> defaults) {
  return config.sweep_values.empty() ? defaults : config.sweep_values;
}

std::string point_name(std::string_view tag, double value) { return std::string(tag) + "_" + num(value); }

TrainResult train_logged(const ExperimentConfig& config, const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  auto csv = open_out(dir / "metrics.csv");
  csv << kMetricsHeader << "\n";
  csv.flush();
  const auto& t = config.training;
  TrainResult result{make_state(t), {}};
  MetricsWriter writer(t.validation_every);
  for (std::size_t k = 1; k <= t.rounds; ++k) {
    RoundRecord rec = run_training_round(result.state, data);
    if (t.validation_every != 0 && k % t.validation_every == 0) {
      EvalOptions opts;
      opts.split = Split::validation;
      opts.snr_db = t.eval_snr_db;
      opts.seed = t.master_seed;
      opts.limit = t.validation_limit;
      rec.val_accuracy = evaluate(result.state, data, opts).accuracy;
    }
    if (auto row = writer.add(rec)) {
      csv << *row << "\n";
      csv.flush();
    }
    result.records.push_back(std::move(rec));
  }
  save_checkpoint(result.state, config, dir / "checkpoint.bin");
  return result;
}

json point_summary(const TrainResult& run, const Dataset& data, const ExperimentConfig& config, double target) {
  json out;
  out["grid"] = evaluate_grid(run.state, data, config);
  const auto reached = rounds_to_target(run.records, target);
  out["rounds_to_target"] = reached ? json(*reached) : json(nullptr);
  std::optional<double> last_val;
  for (const auto& r : run.records) {
    if (r.val_accuracy) last_val = r.val_accuracy;
  }
  out["final_val_accuracy"] = last_val ? json(*last_val) : json(nullptr);
  out["accuracy"] = out["grid"].front()["accuracy"];
  return out;
}

ExperimentOutcome run_train(const ExperimentConfig& config, const Dataset& data, const fs::path& out_dir) {
  const auto run = train_logged(config, data, out_dir);
  ExperimentOutcome outcome;
  outcome.result["rounds"] = run.state.round;
  outcome.result["grid"] = evaluate_grid(run.state, data, config);
  return outcome;
}

ExperimentOutcome run_equivalence_preset(const ExperimentConfig& config, const Dataset& data) {
  ExperimentOutcome outcome;
  bool ok = true;
  for (bool sharing : {false, true}) {
    TrainingConfig t = config.training;
    t.encoder_sharing = sharing;
    t.n_test = 0;
    const std::size_t rounds = sharing ? 20 : 50;
    const auto report = run_equivalence(t, data, rounds);
    json entry;
    entry["rounds"] = rounds;
    entry["max_relative_deviation"] = report.max_deviation;
    entry["tolerance"] = report.tolerance;
    entry["passed"] = report.passed();
    outcome.result[sharing ? "fedavg" : "centralized"] = entry;
    ok = ok && report.passed();
  }
  outcome.exit_code = ok ? exit_ok : exit_numeric;
  return outcome;
}

ExperimentOutcome run_point_sweep(const ExperimentConfig& config, const Dataset& data, const fs::path& out_dir,
                                  std::string_view tag, const std::vector<double>& values,
                                  void (*apply)(ExperimentConfig&, double)) {
  ExperimentOutcome outcome;
  outcome.result["parameter"] = tag;
  json points = json::array();
  for (double v : values) {
    ExperimentConfig point = config;
    apply(point, v);
    point.training.validate();
    const auto run = train_logged(point, data, out_dir / point_name(tag, v));
    json entry = point_summary(run, data, point, config.target_accuracy);
    entry["value"] = v;
    points.push_back(std::move(entry));
  }
  outcome.result["points"] = std::move(points);
  return outcome;
}

}  // namespace

MetricsWriter::MetricsWriter(std::size_t cadence) : cadence_(cadence == 0 ? 1 : cadence) {}

std::optional<std::string> MetricsWriter::add(const RoundRecord& rec) {
  ++count_;
  time_ms_ += rec.phase_time_ms;
  loss_ += rec.train_loss;
  active_ += rec.mean_active_ens;
  for (double s : rec.snr_up_db) snr_up_ += s;
  for (double s : rec.snr_dn_db) snr_dn_ += s;
  links_ += rec.snr_up_db.size();
  if (rec.round % cadence_ != 0) return std::nullopt;
  const double n = static_cast<double>(count_);
  const double links = static_cast<double>(std::max<std::size_t>(links_, 1));
  std::string row = std::to_string(rec.round) + "," + num(time_ms_) + "," + num(loss_ / n) + "," +
                    (rec.val_accuracy ? num(*rec.val_accuracy) : std::string()) + "," + num(snr_up_ / links) + "," +
                    num(snr_dn_ / links) + "," + num(active_ / n) + "," + num(rec.param_norm_cloud) + "," +
                    num(rec.param_norm_edges);
  *this = MetricsWriter(cadence_);
  return row;
}

std::string metrics_csv(const std::vector<RoundRecord>& records, std::size_t cadence) {
  std::string out(kMetricsHeader);
  out += "\n";
  MetricsWriter writer(cadence);
  for (const auto& r : records) {
    if (auto row = writer.add(r)) out += *row + "\n";
  }
  return out;
}

Dataset build_dataset(const ExperimentConfig& config) {
  if (config.dataset_path) {
    return load_flat_dataset(*config.dataset_path, config.training.window, config.dataset_validation_fraction,
                             config.dataset_test_fraction);
  }
  return generate_synthetic(config.training.master_seed, config.training.synthetic_spec());
}

SystemState train_to_directory(const ExperimentConfig& config, const Dataset& data, const fs::path& out_dir) {
  return train_logged(config, data, out_dir).state;
}

json evaluate_grid(const SystemState& state, const Dataset& data, const ExperimentConfig& config) {
  std::vector<std::optional<double>> snrs;
  if (config.eval_snr_grid.empty()) {
    snrs.push_back(state.config.eval_snr_db);
  } else {
    for (double s : config.eval_snr_grid) snrs.emplace_back(s);
  }
  std::vector<std::size_t> ntests = config.eval_ntest_grid;
  if (ntests.empty()) ntests.push_back(default_ntest(state.config));
  json grid = json::array();
  for (const auto& snr : snrs) {
    for (std::size_t n : ntests) {
      EvalOptions opts;
      opts.split = Split::test;
      opts.n_test = n;
      opts.snr_db = snr;
      opts.seed = state.config.master_seed;
      opts.limit = config.eval_limit;
      const auto r = evaluate(state, data, opts);
      grid.push_back({{"snr_db", snr_json(snr)},
                      {"n_test", n},
                      {"architecture", std::string(to_string(state.config.cloud_arch))},
                      {"accuracy", r.accuracy},
                      {"loss", r.loss},
                      {"samples", r.samples}});
    }
  }
  return grid;
}

std::vector<std::string> preset_names() {
  return {"train",      "equivalence", "snr-sweep",  "ntest-sweep", "batch-sweep",
          "m-sweep",    "power-sweep", "cqie-sweep", "arch-sweep"};
}

void write_json(const fs::path& path, const json& value) {
  auto out = open_out(path);
  out << value.dump(2) << "\n";
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  config.training.validate();
  fs::create_directories(out_dir);
  const Dataset data = build_dataset(config);
  const std::string& preset = config.preset;
  ExperimentOutcome outcome;

  if (preset == "train") {
    outcome = run_train(config, data, out_dir);
  } else if (preset == "equivalence") {
    outcome = run_equivalence_preset(config, data);
  } else if (preset == "snr-sweep") {
    ExperimentConfig c = config;
    c.eval_snr_grid = sweep_points(config, {0, 5, 10, 15, 20, 25, 30});
    outcome = run_train(c, data, out_dir);
  } else if (preset == "ntest-sweep") {
    ExperimentConfig c = config;
    c.training.encoder_sharing = true;
    c.training.n_test = 0;
    train_to_directory(c, data, out_dir);
    const SystemState restored = load_checkpoint(out_dir / "checkpoint.bin");
    const auto points = sweep_points(config, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    c.eval_ntest_grid.clear();
    for (double v : points) c.eval_ntest_grid.push_back(static_cast<std::size_t>(v));
    outcome.result["checkpoint"] = (out_dir / "checkpoint.bin").string();
    outcome.result["grid"] = evaluate_grid(restored, data, c);
  } else if (preset == "batch-sweep") {
    outcome = run_point_sweep(config, data, out_dir, "batch_size", sweep_points(config, {16, 64, 256}),
                              [](ExperimentConfig& c, double v) { c.training.batch_size = static_cast<std::size_t>(v); });
  } else if (preset == "m-sweep") {
    outcome = run_point_sweep(config, data, out_dir, "branches", sweep_points(config, {1, 3, 5, 9}),
                              [](ExperimentConfig& c, double v) { c.training.branches = static_cast<std::size_t>(v); });
  } else if (preset == "power-sweep") {
    // 0: per-RB budgets p_E = p_C = 1; 1: sum budgets p_E = S/2, p_C = N S/2.
    outcome = run_point_sweep(config, data, out_dir, "sum_power", sweep_points(config, {0, 1}),
                              [](ExperimentConfig& c, double v) {
                                auto& t = c.training;
                                if (v != 0.0) {
                                  t.power_mode = PowerMode::sum;
                                  t.edge_power = static_cast<double>(t.message_dim / 2);
                                  t.cloud_power = static_cast<double>(t.n_train * t.message_dim / 2);
                                } else {
                                  t.power_mode = PowerMode::per_rb;
                                  t.edge_power = 1.0;
                                  t.cloud_power = 1.0;
                                }
                              });
  } else if (preset == "cqie-sweep") {
    outcome = run_point_sweep(config, data, out_dir, "cqie", sweep_points(config, {0, 1}),
                              [](ExperimentConfig& c, double v) { c.training.cqie = v != 0.0; });
  } else if (preset == "arch-sweep") {
    // 0 proposed, 1 catnet, 2 mhnet, 3 sumagg
    std::vector<double> defaults = {0, 1, 2};
    if (config.training.message_dim == config.training.classes) defaults.push_back(3);
    outcome = run_point_sweep(config, data, out_dir, "cloud_arch", sweep_points(config, defaults),
                              [](ExperimentConfig& c, double v) {
                                static constexpr CloudArch archs[] = {CloudArch::proposed, CloudArch::catnet,
                                                                      CloudArch::mhnet, CloudArch::sum_agg};
                                const auto k = static_cast<std::size_t>(v);
                                if (k >= 4) throw ConfigError("arch-sweep values must be 0..3");
                                c.training.cloud_arch = archs[k];
                              });
  } else {
    throw ConfigError("unknown preset '" + preset + "'");
  }

  outcome.result["preset"] = preset;
  outcome.result["config"] = config_json(config);
  outcome.result["exit_code"] = outcome.exit_code;
  write_json(out_dir / "result.json", outcome.result);
  return outcome;
}

}  // namespace tenet
