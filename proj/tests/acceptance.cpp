// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tenet/checkpoint.hpp"
#include "tenet/experiment.hpp"
#include "tenet/oracles.hpp"
#include "tenet/protocol.hpp"

using namespace tenet;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTol = 1e-5;
constexpr std::size_t kGradInstances = 200;
constexpr double kGradSeconds = 60.0;
constexpr double kEquivTol = 1e-10;
constexpr double kEquivSeconds = 30.0;
constexpr std::size_t kUnbiasedDraws = 20000;
constexpr double kUnbiasedNoise = 0.1;
constexpr double kUnbiasedSe = 4.0;
constexpr double kUnbiasedSeconds = 120.0;
constexpr std::size_t kChannelDraws = 100000;
constexpr double kChannelRel = 0.03;
constexpr std::size_t kPowerDraws = 100000;
constexpr double kPowerSlack = 1e-12;
constexpr double kPermTol = 1e-12;
constexpr std::size_t kSeeds = 5;
constexpr double kRunSeconds = 600.0;
constexpr double kCqieGap = 0.10;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string list(const std::vector<double>& v, const char* f = "%.3f") {
  std::string out = "[";
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? " " : "") + fmt(f, v[k]);
  return out + "]";
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

Dataset dataset_for(const TrainingConfig& c) { return generate_synthetic(c.master_seed, c.synthetic_spec()); }

double test_accuracy(const SystemState& state, const Dataset& data, std::optional<double> snr, std::size_t n_test) {
  EvalOptions opts;
  opts.split = Split::test;
  opts.snr_db = snr;
  opts.n_test = n_test;
  opts.seed = state.config.master_seed;
  return evaluate(state, data, opts).accuracy;
}

// Every trend run is timed so the per-run budget can be checked.
struct TimedRun {
  TrainResult result;
  double seconds = 0.0;
};

TimedRun timed_train(const TrainingConfig& cfg, const Dataset& data) {
  const auto t0 = Clock::now();
  TimedRun run{train(cfg, data), 0.0};
  run.seconds = seconds_since(t0);
  return run;
}

TrainingConfig trend_config(std::uint64_t seed) {
  TrainingConfig c;
  c.master_seed = seed;
  c.validation_every = 0;
  return c;
}

// 1
Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  const auto rep = run_gradcheck(1, 1);
  const double secs = seconds_since(t0);
  std::string families;
  for (const auto& c : rep.cases) families += c.family + ",";
  if (!families.empty()) families.pop_back();
  const bool ok = rep.instances >= kGradInstances && rep.max_error <= kGradTol && secs < kGradSeconds;
  return {ok, std::to_string(rep.instances) + " instances over {" + families + "}, max rel err " +
                  fmt("%.2e", rep.max_error) + " (tol 1e-5), " + fmt("%.2f", secs) + " s"};
}

Outcome equivalence(bool sharing, std::size_t rounds) {
  const auto t0 = Clock::now();
  const auto cfg = equivalence_config(1, sharing);
  const auto data = dataset_for(cfg);
  const auto rep = run_equivalence(cfg, data, rounds);
  const double secs = seconds_since(t0);
  const bool ok = rep.rounds == rounds && rep.max_deviation <= kEquivTol && secs < kEquivSeconds;
  return {ok, std::to_string(rep.rounds) + " rounds, N=" + std::to_string(cfg.n_train) +
                  ", B=" + std::to_string(cfg.batch_size) + ", max rel dev " + fmt("%.2e", rep.max_deviation) +
                  " (tol 1e-10), " + fmt("%.2f", secs) + " s"};
}

// 2
Outcome centralized_equivalence() { return equivalence(false, 50); }

// 3
Outcome fedavg_equivalence() { return equivalence(true, 20); }

// 4: one batch of the toy system; the update term is (1/B) sum_b (ds_b/dpsi)^T y_E,b.
Outcome unbiasedness() {
  const auto t0 = Clock::now();
  auto cfg = equivalence_config(2, false);
  const auto data = dataset_for(cfg);
  SystemState state = make_state(cfg);
  const auto& node = state.nodes[0];
  const std::size_t batch = cfg.batch_size;
  const std::size_t blocks = cfg.message_dim / 2;
  Rng rng(77);

  std::vector<EncodeResult> enc(batch);
  std::vector<std::vector<cplx>> packed(batch);
  std::vector<ChannelRealization> channels(batch);
  std::vector<double> alphas(batch);
  std::vector<std::vector<double>> exact(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<Reception> rx;
    std::vector<EncodeResult> own(cfg.n_train);
    for (std::size_t i = 0; i < cfg.n_train; ++i) {
      own[i] = state.nodes[i].encode(data.observe(Split::train, b, rng).values);
      auto ch = sample_channel(rng, blocks, std::nullopt, 0.0, kUnbiasedNoise);
      rx.push_back({i, uplink_transmit(pack(own[i].message), ch, std::vector<cplx>(blocks))});
      if (i == 0) channels[b] = ch;
    }
    const auto pass = state.cloud->infer(rx);
    const auto loss = softmax_cross_entropy(pass.logits, data.label(Split::train, b));
    std::vector<double> scratch(state.cloud->param_count(), 0.0);
    const auto msgs = state.cloud->backward(pass, loss.grad, scratch);
    enc[b] = std::move(own[0]);
    packed[b] = pack(msgs[0]);
    alphas[b] = compute_alpha_per_rb(packed[b], cfg.cloud_power);
    exact[b] = downlink_decode(downlink_transmit(packed[b], channels[b], alphas[b], std::vector<cplx>(blocks)),
                               channels[b].phase(), alphas[b]);
  }
  std::vector<EdgeSample> clean;
  for (std::size_t b = 0; b < batch; ++b) clean.push_back({&enc[b].cache, exact[b]});
  const auto target = edge_gradient(node, clean, static_cast<double>(batch));

  std::vector<double> sum(target.size(), 0.0), sq(target.size(), 0.0);
  std::vector<std::vector<double>> noisy(batch);
  for (std::size_t d = 0; d < kUnbiasedDraws; ++d) {
    std::vector<EdgeSample> samples;
    for (std::size_t b = 0; b < batch; ++b) {
      noisy[b] = downlink_decode(downlink_transmit(packed[b], channels[b], alphas[b], rng), channels[b].phase(),
                                 alphas[b]);
      samples.push_back({&enc[b].cache, noisy[b]});
    }
    const auto g = edge_gradient(node, samples, static_cast<double>(batch));
    for (std::size_t p = 0; p < g.size(); ++p) {
      sum[p] += g[p];
      sq[p] += g[p] * g[p];
    }
  }
  double worst = 0.0;
  std::size_t tested = 0;
  const double n = static_cast<double>(kUnbiasedDraws);
  for (std::size_t p = 0; p < target.size(); ++p) {
    const double m = sum[p] / n;
    const double var = std::max(sq[p] / n - m * m, 0.0);
    const double se = std::sqrt(var / n);
    if (se == 0.0) {
      if (m != target[p]) worst = INFINITY;
      continue;
    }
    ++tested;
    worst = std::max(worst, std::abs(m - target[p]) / se);
  }
  const double secs = seconds_since(t0);
  return {worst < kUnbiasedSe && secs < kUnbiasedSeconds,
          std::to_string(kUnbiasedDraws) + " draws at sigma_E^2=0.1, " + std::to_string(tested) +
              " components, worst |mean-noiseless|/SE " + fmt("%.2f", worst) + " (limit 4), " + fmt("%.1f", secs) +
              " s"};
}

// 5
Outcome channel_statistics() {
  Rng rng(5);
  const std::size_t blocks = 4;
  double exact_err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto ch = sample_channel(rng, blocks);
    std::vector<double> s(2 * blocks);
    for (double& v : s) v = std::normal_distribution<double>(0, 1)(rng);
    const auto y = uplink_transmit(pack(s), ch, std::vector<cplx>(blocks));
    const auto gain = ch.effective_gain();
    for (std::size_t k = 0; k < s.size(); ++k) exact_err = std::max(exact_err, std::abs(y[k] - gain[k] * s[k]));
  }

  const double sigma_c = 0.05;
  const double sigma_e = 0.1;
  ChannelRealization ch = sample_channel(rng, 1, std::nullopt, sigma_c, sigma_e);
  const std::vector<cplx> s{{0.3, -0.4}};
  const double alpha = 1.7;
  const double gain = std::abs(ch.h[0]);
  double up = 0.0, dn = 0.0;
  for (std::size_t d = 0; d < kChannelDraws; ++d) {
    const auto y = uplink_transmit(s, ch, rng);
    up += std::norm(cplx(y[0] - gain * 0.3, y[1] + gain * 0.4));
    const auto ye = downlink_decode(downlink_transmit(s, ch, alpha, rng), ch.phase(), alpha);
    dn += std::norm(cplx(ye[0] - gain * 0.3, ye[1] + gain * 0.4));
  }
  up /= static_cast<double>(kChannelDraws);
  dn /= static_cast<double>(kChannelDraws);
  const double dn_expect = sigma_e / (alpha * alpha);
  const double up_rel = std::abs(up / sigma_c - 1.0);
  const double dn_rel = std::abs(dn / dn_expect - 1.0);

  // Same noise draw, channel rotated: quarter turns are exact in floating point.
  double quarter_err = 0.0, general_err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto base = sample_channel(rng, blocks);
    const auto noise = draw_complex_noise(rng, blocks, 0.1);
    std::vector<double> msg(2 * blocks);
    for (double& v : msg) v = std::normal_distribution<double>(0, 1)(rng);
    const auto ref = uplink_transmit(pack(msg), base, noise);
    ChannelRealization quarter = base, general = base;
    const double theta = std::uniform_real_distribution<double>(-M_PI, M_PI)(rng);
    for (auto& h : quarter.h) h = cplx(-h.imag(), h.real());
    for (auto& h : general.h) h *= std::polar(1.0, theta);
    const auto yq = uplink_transmit(pack(msg), quarter, noise);
    const auto yg = uplink_transmit(pack(msg), general, noise);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      quarter_err = std::max(quarter_err, std::abs(yq[k] - ref[k]));
      general_err = std::max(general_err, std::abs(yg[k] - ref[k]) / (1.0 + std::abs(ref[k])));
    }
  }
  const bool ok = exact_err == 0.0 && up_rel <= kChannelRel && dn_rel <= kChannelRel && quarter_err == 0.0 &&
                  general_err <= 1e-14;
  return {ok, "zero-noise |y-Hs| max " + fmt("%.1e", exact_err) + ", uplink var rel err " + fmt("%.4f", up_rel) +
                  ", downlink var rel err " + fmt("%.4f", dn_rel) + " (tol 0.03), rotation: quarter-turn diff " +
                  fmt("%.1e", quarter_err) + ", arbitrary-phase rel diff " + fmt("%.1e", general_err)};
}

// 6
Outcome power_feasibility() {
  Rng rng(6);
  double worst_edge = -INFINITY, worst_cloud = -INFINITY;
  for (PowerMode mode : {PowerMode::per_rb, PowerMode::sum}) {
    EncoderSpec spec;
    spec.observation_dim = 10;
    spec.hidden = {8};
    spec.message_dim = 8;
    spec.power_mode = mode;
    spec.power_budget = mode == PowerMode::sum ? 4.0 : 1.0;
    const double p_c = mode == PowerMode::sum ? 12.0 : 1.0;
    EdgeNode node(0, spec, 1);
    for (std::size_t d = 0; d < kPowerDraws / 2; ++d) {
      if (d % 500 == 0) {
        node = EdgeNode(0, spec, rng());
        auto p = node.parameters();
        const double scale = std::exp(std::uniform_real_distribution<double>(-3, 4)(rng));
        for (double& v : p) v *= scale;
        node.set_parameters(p);
      }
      std::vector<double> obs(10);
      const double obs_scale = std::exp(std::uniform_real_distribution<double>(-4, 4)(rng));
      for (double& v : obs) v = std::normal_distribution<double>(0, obs_scale)(rng);
      const auto s = pack(node.encode(obs).message);
      if (mode == PowerMode::per_rb) {
        for (const auto& z : s) worst_edge = std::max(worst_edge, std::norm(z) - spec.power_budget);
      } else {
        double total = 0.0;
        for (const auto& z : s) total += std::norm(z);
        worst_edge = std::max(worst_edge, total - spec.power_budget);
      }

      std::vector<std::vector<cplx>> msgs(3, std::vector<cplx>(4));
      for (auto& m : msgs) {
        const double ms = std::exp(std::uniform_real_distribution<double>(-8, 8)(rng));
        for (auto& z : m) z = {std::normal_distribution<double>(0, ms)(rng), std::normal_distribution<double>(0, ms)(rng)};
      }
      if (mode == PowerMode::per_rb) {
        for (const auto& m : msgs) {
          const double a = compute_alpha_per_rb(m, p_c);
          for (const auto& z : m) worst_cloud = std::max(worst_cloud, std::norm(a * z) - p_c);
        }
      } else {
        const double a = compute_alpha_sum(msgs, p_c);
        double total = 0.0;
        for (const auto& m : msgs) {
          for (const auto& z : m) total += std::norm(a * z);
        }
        worst_cloud = std::max(worst_cloud, total - p_c);
      }
    }
  }
  const bool ok = worst_edge <= kPowerSlack && worst_cloud <= kPowerSlack;
  return {ok, std::to_string(kPowerDraws) + " encodes and downlinks (PPC and SPC), worst excess edge " +
                  fmt("%.2e", worst_edge) + ", cloud " + fmt("%.2e", worst_cloud) + " (slack 1e-12)"};
}

// 7
Outcome scalability() {
  const fs::path dir = fs::temp_directory_path() / "tenet_acceptance_scalability";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ExperimentConfig config;
  config.training = trend_config(1);
  config.training.encoder_sharing = true;
  config.training.rounds = 100;
  const auto data = dataset_for(config.training);
  const auto trained = train(config.training, data);
  save_checkpoint(trained.state, config, dir / "checkpoint.bin");
  const SystemState restored = load_checkpoint(dir / "checkpoint.bin");
  const auto cloud_params = restored.cloud->parameters();
  const auto edge_params = restored.edge_parameters();

  bool served = true;
  std::vector<double> acc;
  for (std::size_t n = 1; n <= 12; ++n) {
    EvalOptions opts;
    opts.split = Split::test;
    opts.n_test = n;
    opts.snr_db = 20.0;
    opts.limit = 200;
    acc.push_back(evaluate(restored, data, opts).accuracy);
    served = served && restored.cloud->parameters() == cloud_params && restored.edge_parameters() == edge_params;
  }
  served = served && cloud_params == trained.state.cloud->parameters();

  Rng rng(7);
  double perm = 0.0;
  for (int t = 0; t < 50; ++t) {
    std::vector<Reception> rx;
    for (std::size_t i = 0; i < 12; ++i) {
      std::vector<double> y(config.training.message_dim);
      for (double& v : y) v = std::normal_distribution<double>(0, 1)(rng);
      rx.push_back({i, y});
    }
    const auto ref = restored.cloud->infer(rx).logits;
    std::shuffle(rx.begin(), rx.end(), rng);
    perm = std::max(perm, relative_deviation(restored.cloud->infer(rx).logits, ref));
  }

  TrainingConfig cat = trend_config(1);
  cat.cloud_arch = CloudArch::catnet;
  cat.n_train = 4;
  const auto cat_state = make_state(cat);
  std::size_t rejected = 0;
  for (std::size_t n : {3, 5}) {
    std::vector<Reception> rx;
    for (std::size_t i = 0; i < n; ++i) rx.push_back({i, std::vector<double>(cat.message_dim, 0.1)});
    try {
      cat_state.cloud->infer(rx);
    } catch (const std::invalid_argument&) {
      ++rejected;
    }
  }
  auto cat_bad = cat;
  cat_bad.n_test = 6;
  try {
    cat_bad.validate();
  } catch (const std::invalid_argument&) {
    ++rejected;
  }
  const bool ok = served && perm <= kPermTol && rejected == 3;
  return {ok, "one checkpoint served N_test=1..12 with unchanged parameters: " + std::string(served ? "yes" : "no") +
                  ", accuracy " + list(acc, "%.2f") + ", permutation rel dev " + fmt("%.1e", perm) +
                  " (tol 1e-12), catnet rejections " + std::to_string(rejected) + "/3"};
}

// 8a
Outcome trend_snr() {
  std::vector<double> low, high;
  double slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const auto cfg = trend_config(seed);
    const auto data = dataset_for(cfg);
    const auto run = timed_train(cfg, data);
    slowest = std::max(slowest, run.seconds);
    low.push_back(test_accuracy(run.result.state, data, 0.0, 0));
    high.push_back(test_accuracy(run.result.state, data, 20.0, 0));
  }
  const bool ok = mean(high) >= mean(low) && slowest < kRunSeconds;
  return {ok, "accuracy at 20 dB " + list(high) + " mean " + fmt("%.3f", mean(high)) + " vs 0 dB " + list(low) +
                  " mean " + fmt("%.3f", mean(low)) + ", slowest run " + fmt("%.1f", slowest) + " s"};
}

// 8b
Outcome trend_ntest() {
  std::vector<std::vector<double>> acc(5);  // N_test 2..6
  double slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    auto cfg = trend_config(seed);
    cfg.encoder_sharing = true;
    const auto data = dataset_for(cfg);
    const auto run = timed_train(cfg, data);
    slowest = std::max(slowest, run.seconds);
    for (std::size_t n = 2; n <= 6; ++n) acc[n - 2].push_back(test_accuracy(run.result.state, data, 20.0, n));
  }
  std::vector<double> means;
  for (const auto& a : acc) means.push_back(mean(a));
  bool ok = slowest < kRunSeconds;
  for (std::size_t k = 1; k < means.size(); ++k) ok = ok && means[k] >= means[k - 1];
  return {ok, "mean accuracy for N_test=2..6 " + list(means) + " (N_train=3, sharing, 20 dB), slowest run " +
                  fmt("%.1f", slowest) + " s"};
}

// 8c: the proposed model is trained once at N_train=8 with asynchronous
// coordination; CatNet is trained synchronously at each N_test.
Outcome trend_catnet() {
  const std::vector<std::size_t> populations{6, 8};
  std::vector<std::vector<double>> prop(populations.size()), cat(populations.size());
  double slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    auto cfg = trend_config(seed);
    cfg.n_train = 8;
    cfg.async = true;
    const auto data = dataset_for(cfg);
    const auto run = timed_train(cfg, data);
    slowest = std::max(slowest, run.seconds);
    for (std::size_t k = 0; k < populations.size(); ++k) {
      prop[k].push_back(test_accuracy(run.result.state, data, 20.0, populations[k]));
      auto c = trend_config(seed);
      c.cloud_arch = CloudArch::catnet;
      c.n_train = populations[k];
      const auto crun = timed_train(c, data);
      slowest = std::max(slowest, crun.seconds);
      cat[k].push_back(test_accuracy(crun.result.state, data, 20.0, 0));
    }
  }
  bool ok = slowest < kRunSeconds;
  std::string detail;
  for (std::size_t k = 0; k < populations.size(); ++k) {
    ok = ok && mean(prop[k]) >= mean(cat[k]);
    detail += "N_test=" + std::to_string(populations[k]) + ": proposed " + list(prop[k]) + " mean " +
              fmt("%.3f", mean(prop[k])) + " vs catnet " + list(cat[k]) + " mean " + fmt("%.3f", mean(cat[k])) + "; ";
  }
  return {ok, detail + "20 dB, slowest run " + fmt("%.1f", slowest) + " s"};
}

// 8d
Outcome trend_batch() {
  const std::vector<std::size_t> sizes{16, 64, 256};
  const double target = 0.5;
  std::vector<std::vector<double>> rounds(sizes.size());
  double slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      auto cfg = trend_config(seed);
      cfg.batch_size = sizes[k];
      cfg.validation_every = 10;
      cfg.validation_limit = 500;
      const auto data = dataset_for(cfg);
      const auto run = timed_train(cfg, data);
      slowest = std::max(slowest, run.seconds);
      double reached = static_cast<double>(cfg.rounds + cfg.validation_every);
      for (const auto& r : run.result.records) {
        if (r.val_accuracy && *r.val_accuracy >= target) {
          reached = static_cast<double>(r.round);
          break;
        }
      }
      rounds[k].push_back(reached);
    }
  }
  bool ok = slowest < kRunSeconds;
  std::string detail;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (k) ok = ok && mean(rounds[k]) < mean(rounds[k - 1]);
    detail += "B=" + std::to_string(sizes[k]) + " rounds " + list(rounds[k], "%.0f") + " mean " +
              fmt("%.1f", mean(rounds[k])) + "; ";
  }
  return {ok, detail + "target validation accuracy 0.5, slowest run " + fmt("%.1f", slowest) + " s"};
}

// 8e
Outcome trend_cqie() {
  std::vector<double> with, without;
  double slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    for (bool cqie : {false, true}) {
      auto cfg = trend_config(seed);
      cfg.pathloss = true;
      cfg.cqie = cqie;
      const auto data = dataset_for(cfg);
      const auto run = timed_train(cfg, data);
      slowest = std::max(slowest, run.seconds);
      (cqie ? with : without).push_back(test_accuracy(run.result.state, data, 20.0, 0));
    }
  }
  const double gap = mean(with) - mean(without);
  const bool ok = gap >= kCqieGap && slowest < kRunSeconds;
  return {ok, "pathloss on (d in [10,50] m, exponent 2.7), 20 dB: CQIE " + list(with) + " vs no CQIE " +
                  list(without) + ", mean gap " + fmt("%+.3f", gap) + " (need >= 0.10), slowest run " +
                  fmt("%.1f", slowest) + " s"};
}

// 9
Outcome determinism() {
  ExperimentConfig config;
  config.training = trend_config(3);
  config.training.rounds = 60;
  config.training.async = true;
  config.training.encoder_sharing = true;
  config.training.validation_every = 10;
  config.training.validation_limit = 200;
  config.eval_limit = 200;
  const fs::path base = fs::temp_directory_path() / "tenet_acceptance_determinism";
  fs::remove_all(base);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  run_experiment(config, base / "a");
  run_experiment(config, base / "b");
  const auto a = slurp(base / "a" / "metrics.csv");
  const auto b = slurp(base / "b" / "metrics.csv");
  const auto rows = std::count(a.begin(), a.end(), '\n');
  const bool ok = !a.empty() && a == b;
  return {ok, "two runs of one (config, seed): metrics.csv " + std::to_string(a.size()) + " bytes, " +
                  std::to_string(rows) + " lines, identical: " + (a == b ? "yes" : "no")};
}

struct Criterion {
  std::string id;
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"1", "gradient oracle", gradient_oracle},
      {"2", "centralized equivalence", centralized_equivalence},
      {"3", "fedavg equivalence", fedavg_equivalence},
      {"4", "wireless backprop unbiasedness", unbiasedness},
      {"5", "channel statistics", channel_statistics},
      {"6", "power feasibility", power_feasibility},
      {"7", "scalability", scalability},
      {"8a", "trend: snr", trend_snr},
      {"8b", "trend: n_test with sharing", trend_ntest},
      {"8c", "trend: proposed vs catnet", trend_catnet},
      {"8d", "trend: batch size convergence", trend_batch},
      {"8e", "trend: cqie under pathloss", trend_cqie},
      {"9", "determinism", determinism},
  };

  CLI::App app{"Acceptance criteria"};
  std::vector<std::string> only;
  bool list_only = false;
  app.add_option("--only", only, "Criterion ids to run (default: all)");
  app.add_flag("--list", list_only, "List criterion ids");
  CLI11_PARSE(app, argc, argv);

  if (list_only) {
    for (const auto& c : criteria) std::printf("%s %s\n", c.id.c_str(), c.name.c_str());
    return 0;
  }
  for (const auto& id : only) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.id == id; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", id.c_str());
      return 2;
    }
  }

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    if (!out.pass) ++failures;
    std::printf("%s [%s] %s: %s\n", out.pass ? "PASS" : "FAIL", c.id.c_str(), c.name.c_str(), out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
