#include "tenet/protocol.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tenet {

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw std::invalid_argument("config: " + field + " " + why);
}

std::vector<double> magnitudes_or_none(const TrainingConfig& config, const ChannelRealization& ch) {
  return config.cqie ? ch.magnitude() : std::vector<double>{};
}

// y = H s + n with H applied as an explicit diagonal gain in real form.
std::vector<double> apply_gain(std::span<const double> gain, std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = gain[k] * v[k];
  return out;
}

ChannelRealization realize_channel(const TrainingConfig& config, Rng& rng, double distance, double up_var,
                                   double dn_var) {
  const std::size_t blocks = config.message_dim / 2;
  std::optional<Pathloss> pathloss;
  if (config.pathloss) pathloss = Pathloss{distance, config.pathloss_exponent, config.pathloss_reference};
  if (config.fading) return sample_channel(rng, blocks, pathloss, up_var, dn_var);
  ChannelRealization ch;
  ch.pathloss_factor = pathloss ? std::pow(distance / config.pathloss_reference, -config.pathloss_exponent) : 1.0;
  ch.h.assign(blocks, cplx(std::sqrt(ch.pathloss_factor), 0.0));
  ch.uplink_noise_var = up_var;
  ch.downlink_noise_var = dn_var;
  return ch;
}

struct EvalLink {
  ChannelRealization channel;
  std::vector<cplx> uplink_noise;
};

EvalLink draw_eval_link(const TrainingConfig& config, std::uint64_t seed, Split split, std::size_t index,
                        std::size_t en, std::optional<double> snr_db) {
  Rng rng = keyed_rng(seed, Stream::eval_link, {static_cast<std::uint64_t>(split), index, en});
  std::uniform_real_distribution<double> dist(config.distance_min, config.distance_max);
  const double distance = dist(rng);
  const double var = snr_db ? snr_to_noise_var(*snr_db) : 0.0;
  EvalLink link;
  link.channel = realize_channel(config, rng, distance, var, 0.0);
  link.uplink_noise = draw_complex_noise(rng, config.message_dim / 2, var);
  return link;
}

std::vector<double> infer_with(const std::vector<EdgeNode>& nodes, const CloudNetwork& cloud,
                               const TrainingConfig& config, std::span<const LocalObservation> observations,
                               std::span<const ChannelRealization> channels,
                               std::span<const std::vector<cplx>> uplink_noise) {
  const std::size_t n = observations.size();
  if (channels.size() != n || uplink_noise.size() != n) {
    throw ShapeError("inference needs one channel and one noise draw per observation");
  }
  if (nodes.size() < n) throw std::invalid_argument("more observations than serving nodes");
  std::vector<Reception> received(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cqi = magnitudes_or_none(config, channels[i]);
    std::optional<std::span<const double>> side;
    if (config.cqie) side = std::span<const double>(cqi);
    const auto enc = nodes[i].encode(observations[i].values, side);
    received[i].en = i;
    received[i].signal = uplink_transmit(pack(enc.message), channels[i], uplink_noise[i]);
  }
  return cloud.infer(received).logits;
}

}  // namespace

std::string_view to_string(CloudArch arch) {
  switch (arch) {
    case CloudArch::proposed: return "proposed";
    case CloudArch::sum_agg: return "sumagg";
    case CloudArch::catnet: return "catnet";
    case CloudArch::mhnet: return "mhnet";
  }
  return "?";
}

CloudArch parse_cloud_arch(std::string_view text) {
  if (text == "proposed") return CloudArch::proposed;
  if (text == "sumagg") return CloudArch::sum_agg;
  if (text == "catnet") return CloudArch::catnet;
  if (text == "mhnet") return CloudArch::mhnet;
  throw std::invalid_argument("unknown cloud architecture '" + std::string(text) + "'");
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::edge_forward: return "edge_forward";
    case Phase::uplink: return "uplink";
    case Phase::cloud_backprop: return "cloud_backprop";
    case Phase::downlink: return "downlink";
    case Phase::edge_backprop: return "edge_backprop";
  }
  return "?";
}

SyntheticSpec TrainingConfig::synthetic_spec() const {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.grid = grid;
  spec.window = window;
  spec.marker = marker;
  spec.amplitude = signal_amplitude;
  spec.noise = pixel_noise;
  spec.train = train_samples;
  spec.validation = validation_samples;
  spec.test = test_samples;
  return spec;
}

EncoderSpec TrainingConfig::encoder_spec() const {
  EncoderSpec spec;
  spec.observation_dim = observation_dim();
  spec.hidden = encoder_hidden;
  spec.message_dim = message_dim;
  spec.power_mode = power_mode;
  spec.power_budget = edge_power;
  spec.cqie = cqie;
  spec.cqi_scaling = pathloss ? CqiScaling::log10 : CqiScaling::raw;
  return spec;
}

void TrainingConfig::validate() const {
  if (classes < 2) config_error("classes", "must be at least 2");
  if (window == 0 || window > grid) config_error("window", "must lie in [1, grid]");
  if (message_dim == 0 || message_dim % 2 != 0) config_error("message_dim", "must be positive and even");
  if (n_train == 0) config_error("n_train", "must be at least 1");
  if (batch_size == 0) config_error("batch_size", "must be at least 1");
  if (batch_size > train_samples) config_error("batch_size", "exceeds the training split");
  if (branches == 0) config_error("branches", "must be at least 1");
  if (latent == 0 || cloud_hidden == 0) config_error("latent", "and cloud_hidden must be positive");
  if (!(learning_rate >= 0.0)) config_error("learning_rate", "must be non-negative");
  if (snr_up_min_db > snr_up_max_db) config_error("snr_up_min_db", "exceeds snr_up_max_db");
  if (snr_dn_min_db > snr_dn_max_db) config_error("snr_dn_min_db", "exceeds snr_dn_max_db");
  if (!(edge_power > 0.0)) config_error("edge_power", "must be positive");
  if (!(cloud_power > 0.0)) config_error("cloud_power", "must be positive");
  if (!(pathloss_reference > 0.0)) config_error("pathloss_reference", "must be positive");
  if (!(distance_min > 0.0) || distance_min > distance_max) {
    config_error("distance_min", "must be positive and at most distance_max");
  }
  if (cloud_arch == CloudArch::sum_agg && message_dim != classes) {
    config_error("cloud_arch", "sumagg requires message_dim == classes");
  }
  if (cloud_arch == CloudArch::catnet && async) config_error("async", "is not supported by catnet");
  const std::size_t nt = n_test == 0 ? n_train : n_test;
  if (nt > n_train && !encoder_sharing) config_error("n_test", "exceeds n_train without encoder sharing");
  if (cloud_arch == CloudArch::catnet && nt != n_train) config_error("n_test", "must equal n_train for catnet");
  if (cloud_arch == CloudArch::mhnet && nt > n_train) config_error("n_test", "exceeds the mhnet head count");
}

double drop_probability(std::size_t n_train) {
  if (n_train == 0) throw std::invalid_argument("n_train must be at least 1");
  return static_cast<double>(n_train - 1) / (2.0 * static_cast<double>(n_train));
}

std::vector<std::size_t> minibatch_for_round(std::uint64_t master_seed, std::size_t dataset_size,
                                             std::size_t batch_size, std::size_t round) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (batch_size > dataset_size) {
    throw std::invalid_argument("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                                std::to_string(dataset_size));
  }
  if (round == 0) throw std::invalid_argument("rounds are numbered from 1");
  const std::size_t per_epoch = dataset_size / batch_size;
  const std::size_t epoch = (round - 1) / per_epoch;
  const std::size_t slot = (round - 1) % per_epoch;
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = keyed_rng(master_seed, Stream::schedule, {epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return {order.begin() + static_cast<std::ptrdiff_t>(slot * batch_size),
          order.begin() + static_cast<std::ptrdiff_t>((slot + 1) * batch_size)};
}

std::vector<std::vector<std::size_t>> schedule_minibatches(std::uint64_t master_seed, std::size_t dataset_size,
                                                           std::size_t batch_size, std::size_t rounds) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(rounds);
  for (std::size_t k = 1; k <= rounds; ++k) out.push_back(minibatch_for_round(master_seed, dataset_size, batch_size, k));
  if (rounds == 0) minibatch_for_round(master_seed, dataset_size, batch_size, 1);
  return out;
}

ActiveSets all_active(std::size_t n_train, std::size_t batch_size) {
  ActiveSets sets;
  std::vector<std::size_t> everyone(n_train);
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});
  std::vector<std::size_t> all_samples(batch_size);
  std::iota(all_samples.begin(), all_samples.end(), std::size_t{0});
  sets.per_sample.assign(batch_size, everyone);
  sets.per_en.assign(n_train, all_samples);
  return sets;
}

ActiveSets sample_active_sets(Rng& rng, std::size_t n_train, std::size_t batch_size) {
  const double p = drop_probability(n_train);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ActiveSets sets;
  sets.per_sample.resize(batch_size);
  sets.per_en.resize(n_train);
  for (std::size_t b = 0; b < batch_size; ++b) {
    auto& active = sets.per_sample[b];
    for (;;) {
      active.clear();
      for (std::size_t i = 0; i < n_train; ++i) {
        if (unif(rng) >= p) active.push_back(i);
      }
      if (!active.empty()) break;
      ++sets.redraws;
    }
    for (std::size_t i : active) sets.per_en[i].push_back(b);
  }
  return sets;
}

LinkDraw draw_training_link(const TrainingConfig& config, std::size_t round, std::size_t position,
                            std::size_t en) {
  Rng rng = keyed_rng(config.master_seed, Stream::link, {round, position, en});
  std::uniform_real_distribution<double> up(config.snr_up_min_db, config.snr_up_max_db);
  std::uniform_real_distribution<double> dn(config.snr_dn_min_db, config.snr_dn_max_db);
  LinkDraw link;
  link.snr_up_db = up(rng);
  link.snr_dn_db = dn(rng);
  if (config.snr_per_round) {
    Rng round_rng = keyed_rng(config.master_seed, Stream::link, {round, ~std::uint64_t{0}});
    link.snr_up_db = up(round_rng);
    link.snr_dn_db = dn(round_rng);
  }
  std::uniform_real_distribution<double> dist(config.distance_min, config.distance_max);
  const double distance = dist(rng);
  const double up_var = config.uplink_noise ? snr_to_noise_var(link.snr_up_db) : 0.0;
  const double dn_var = config.downlink_noise ? snr_to_noise_var(link.snr_dn_db) : 0.0;
  link.channel = realize_channel(config, rng, distance, up_var, dn_var);
  link.uplink_noise = draw_complex_noise(rng, config.message_dim / 2, up_var);
  link.downlink_noise = draw_complex_noise(rng, config.message_dim / 2, dn_var);
  return link;
}

SystemState::SystemState(const SystemState& other)
    : config(other.config),
      nodes(other.nodes),
      cloud(other.cloud ? other.cloud->clone() : nullptr),
      edge_optimizers(other.edge_optimizers),
      cloud_optimizer(other.cloud_optimizer),
      shared_encoder(other.shared_encoder),
      round(other.round) {}

SystemState& SystemState::operator=(const SystemState& other) {
  if (this != &other) {
    SystemState copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::vector<double> SystemState::edge_parameters() const {
  std::vector<double> out;
  for (const auto& node : nodes) {
    const auto p = node.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::unique_ptr<CloudNetwork> make_cloud(const TrainingConfig& config) {
  const std::uint64_t seed = stream_seed(config.master_seed, Stream::init_cloud, {0});
  CloudSpec spec{config.message_dim, config.branches, config.latent, config.cloud_hidden, config.classes};
  if (config.cloud_arch == CloudArch::proposed) return std::make_unique<CloudModel>(spec, seed);
  BaselineSpec base;
  base.message_dim = config.message_dim;
  base.classes = config.classes;
  base.population = config.n_train;
  base.hidden = config.baseline_hidden;
  switch (config.cloud_arch) {
    case CloudArch::sum_agg: base.kind = BaselineKind::sum_agg; break;
    case CloudArch::catnet: base.kind = BaselineKind::catnet; break;
    case CloudArch::mhnet: base.kind = BaselineKind::mhnet; break;
    case CloudArch::proposed: break;
  }
  if (base.hidden == 0 && base.kind != BaselineKind::sum_agg) {
    const std::size_t target = CloudModel(spec, seed).param_count();
    base.hidden = base.kind == BaselineKind::catnet
                      ? solve_catnet_width(target, config.n_train, config.message_dim, config.classes)
                      : solve_mhnet_width(target, config.n_train, config.message_dim, config.classes);
  }
  return std::make_unique<BaselineModel>(base, seed);
}

SystemState make_state(const TrainingConfig& config) {
  config.validate();
  SystemState state;
  state.config = config;
  const EncoderSpec spec = config.encoder_spec();
  for (std::size_t i = 0; i < config.n_train; ++i) {
    const std::uint64_t key = config.encoder_sharing ? 0 : i;
    state.nodes.emplace_back(i, spec, stream_seed(config.master_seed, Stream::init_edge, {key}));
    state.edge_optimizers.emplace_back(config.optimizer, config.learning_rate, state.nodes.back().param_count());
  }
  state.cloud = make_cloud(config);
  state.cloud_optimizer = Optimizer(config.optimizer, config.learning_rate, state.cloud->param_count());
  if (config.encoder_sharing) state.shared_encoder = state.nodes.front().parameters();
  return state;
}

std::vector<EdgeNode> serving_nodes(const SystemState& state, std::size_t n_test) {
  const std::size_t n_train = state.nodes.size();
  if (n_test == 0) throw std::invalid_argument("N_test must be at least 1");
  if (n_test <= n_train) return {state.nodes.begin(), state.nodes.begin() + static_cast<std::ptrdiff_t>(n_test)};
  if (!state.config.encoder_sharing) {
    throw std::invalid_argument("N_test = " + std::to_string(n_test) + " exceeds N_train = " +
                                std::to_string(n_train) + " without encoder sharing");
  }
  std::vector<EdgeNode> nodes(state.nodes.begin(), state.nodes.end());
  for (std::size_t i = n_train; i < n_test; ++i) {
    EdgeNode extra(i, state.config.encoder_spec(), 0);
    extra.set_parameters(state.shared_encoder);
    nodes.push_back(std::move(extra));
  }
  return nodes;
}

namespace {

void check_dataset(const TrainingConfig& config, const Dataset& data) {
  if (data.observation_dim() != config.observation_dim()) {
    throw ShapeError("dataset crops have " + std::to_string(data.observation_dim()) + " values, config expects " +
                     std::to_string(config.observation_dim()));
  }
  if (data.classes() != config.classes) throw ShapeError("dataset class count does not match the config");
}

struct RoundInputs {
  std::vector<std::size_t> batch;
  ActiveSets active;
  std::vector<std::vector<LinkDraw>> links;               // [b][i]
  std::vector<std::vector<LocalObservation>> observations;  // [b][i]
};

RoundInputs draw_round_inputs(const SystemState& state, const Dataset& data, std::size_t k) {
  const auto& cfg = state.config;
  const std::size_t n = state.nodes.size();
  RoundInputs in;
  in.batch = minibatch_for_round(cfg.master_seed, data.size(Split::train), cfg.batch_size, k);
  const std::size_t batch = in.batch.size();
  if (cfg.async) {
    Rng rng = keyed_rng(cfg.master_seed, Stream::activity, {k});
    in.active = sample_active_sets(rng, n, batch);
  } else {
    in.active = all_active(n, batch);
  }
  in.links.assign(batch, std::vector<LinkDraw>(n));
  in.observations.assign(batch, std::vector<LocalObservation>(n));
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      in.links[b][i] = draw_training_link(cfg, k, b, i);
      Rng crop_rng = keyed_rng(cfg.master_seed, Stream::crop, {k, b, i});
      in.observations[b][i] = data.observe(Split::train, in.batch[b], crop_rng);
    }
  }
  return in;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

RoundRecord run_training_round(SystemState& state, const Dataset& data, const PhaseObserver& observer) {
  const auto& cfg = state.config;
  check_dataset(cfg, data);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t k = state.round + 1;
  const std::size_t n = state.nodes.size();
  const std::size_t s_dim = cfg.message_dim;
  RoundInputs in = draw_round_inputs(state, data, k);
  const std::size_t batch = in.batch.size();
  auto notify = [&](Phase phase) {
    if (observer) observer(phase, state);
  };

  RoundRecord rec;
  rec.round = k;
  rec.batch = in.batch;
  rec.active_per_en = in.active.per_en;
  rec.active_per_sample = in.active.per_sample;
  rec.redraws = in.active.redraws;

  // Phase 1: every active EN encodes its crop of every scheduled sample.
  std::vector<EncodeJob> jobs;
  std::vector<std::vector<std::size_t>> job_of(batch, std::vector<std::size_t>(n, SIZE_MAX));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i : in.active.per_sample[b]) {
      EncodeJob job;
      job.node = i;
      job.observation = in.observations[b][i].values;
      if (cfg.cqie) job.cqi = in.links[b][i].channel.magnitude();
      job_of[b][i] = jobs.size();
      jobs.push_back(std::move(job));
    }
  }
  const auto encoded = encode_batch(state.nodes, jobs, Execution::parallel);
  notify(Phase::edge_forward);

  // Phase 2: uplink over the fading fronthaul.
  std::vector<std::vector<Reception>> received(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i : in.active.per_sample[b]) {
      const auto& link = in.links[b][i];
      received[b].push_back(
          {i, uplink_transmit(pack(encoded[job_of[b][i]].message), link.channel, link.uplink_noise)});
      rec.fronthaul.uplink_values += s_dim;
      rec.snr_up_db.push_back(link.snr_up_db);
      rec.snr_dn_db.push_back(link.snr_dn_db);
    }
  }
  notify(Phase::uplink);

  // Phase 3: the cloud infers, backpropagates once for its own gradient and
  // the downlink messages, then commits its update.
  const auto passes = infer_batch(*state.cloud, received, Execution::parallel);
  std::vector<std::vector<double>> grad_x(batch);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t label = data.label(Split::train, in.batch[b]);
    auto loss = softmax_cross_entropy(passes[b].logits, label);
    loss_sum += loss.loss;
    if (argmax(passes[b].logits) == label) ++correct;
    grad_x[b] = std::move(loss.grad);
  }
  auto back = backward_batch(*state.cloud, passes, grad_x, Execution::parallel);
  for (double& g : back.grads) g /= static_cast<double>(batch);
  state.cloud->apply_update(state.cloud_optimizer, back.grads);
  notify(Phase::cloud_backprop);

  // Phase 4: power-scaled downlink of m_i and phase-compensated decoding.
  std::vector<std::vector<std::vector<double>>> y_edge(batch, std::vector<std::vector<double>>(n));
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& order = in.active.per_sample[b];
    std::vector<std::vector<cplx>> packed;
    packed.reserve(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) packed.push_back(pack(back.messages[b][r]));
    const double alpha_sum =
        cfg.power_mode == PowerMode::sum ? compute_alpha_sum(packed, cfg.cloud_power) : 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      const std::size_t i = order[r];
      const auto& link = in.links[b][i];
      const double alpha = cfg.power_mode == PowerMode::sum ? alpha_sum
                                                            : compute_alpha_per_rb(packed[r], cfg.cloud_power);
      const auto rx = downlink_transmit(packed[r], link.channel, alpha, link.downlink_noise);
      y_edge[b][i] = downlink_decode(rx, link.channel.phase(), alpha);
      rec.fronthaul.downlink_values += s_dim;
    }
  }
  notify(Phase::downlink);

  // Phase 5: local updates from the decoded gradients, staged then committed.
  std::vector<std::vector<double>> grads(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mine = in.active.per_en[i];
    if (mine.empty()) continue;
    std::vector<EdgeSample> samples;
    samples.reserve(mine.size());
    for (std::size_t b : mine) samples.push_back({&encoded[job_of[b][i]].cache, y_edge[b][i]});
    const double divisor = static_cast<double>(cfg.async ? mine.size() : batch);
    grads[i] = edge_gradient_batch(state.nodes[i], samples, divisor, Execution::parallel);
  }
  if (cfg.encoder_sharing) {
    std::vector<std::vector<double>> candidates;
    candidates.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (grads[i].empty()) {
        candidates.push_back(state.shared_encoder);
        continue;
      }
      EdgeNode local = state.nodes[i];
      local.set_parameters(state.shared_encoder);
      local.apply_update(state.edge_optimizers[i], grads[i]);
      candidates.push_back(local.parameters());
    }
    state.shared_encoder = fedavg(candidates);
    for (auto& node : state.nodes) node.set_parameters(state.shared_encoder);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (!grads[i].empty()) state.nodes[i].apply_update(state.edge_optimizers[i], grads[i]);
    }
  }
  state.round = k;
  notify(Phase::edge_backprop);

  rec.train_loss = loss_sum / static_cast<double>(batch);
  rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(batch);
  std::size_t active_total = 0;
  for (const auto& a : in.active.per_sample) active_total += a.size();
  rec.mean_active_ens = static_cast<double>(active_total) / static_cast<double>(batch);
  rec.param_norm_cloud = l2_norm(state.cloud->parameters());
  rec.param_norm_edges = l2_norm(state.edge_parameters());
  rec.phase_time_ms = cfg.wall_clock_timing ? elapsed_ms(start) : 0.0;
  return rec;
}

void centralized_oracle_round(SystemState& state, const Dataset& data) {
  const auto& cfg = state.config;
  if (cfg.async) throw std::invalid_argument("the centralized oracle covers synchronous rounds only");
  if (cfg.optimizer != OptimizerKind::sgd) throw std::invalid_argument("the centralized oracle uses plain SGD");
  check_dataset(cfg, data);
  const std::size_t k = state.round + 1;
  const std::size_t n = state.nodes.size();
  const RoundInputs in = draw_round_inputs(state, data, k);
  const std::size_t batch = in.batch.size();

  std::vector<double> cloud_grads(state.cloud->param_count(), 0.0);
  std::vector<std::vector<double>> edge_grads(n);
  for (std::size_t i = 0; i < n; ++i) edge_grads[i].assign(state.nodes[i].param_count(), 0.0);

  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<EncodeResult> enc(n);
    std::vector<std::vector<double>> gains(n);
    std::vector<Reception> received(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& link = in.links[b][i];
      const auto cqi = magnitudes_or_none(cfg, link.channel);
      std::optional<std::span<const double>> side;
      if (cfg.cqie) side = std::span<const double>(cqi);
      enc[i] = state.nodes[i].encode(in.observations[b][i].values, side);
      gains[i] = link.channel.effective_gain();
      auto y = apply_gain(gains[i], enc[i].message);
      const auto noise = unpack(link.uplink_noise);
      for (std::size_t j = 0; j < y.size(); ++j) y[j] += noise[j];
      received[i] = {i, std::move(y)};
    }
    const auto pass = state.cloud->infer(received);
    const auto loss = softmax_cross_entropy(pass.logits, data.label(Split::train, in.batch[b]));
    const auto grad_y = state.cloud->backward(pass, loss.grad, cloud_grads);
    for (std::size_t i = 0; i < n; ++i) {
      state.nodes[i].accumulate_gradient(enc[i].cache, apply_gain(gains[i], grad_y[i]), edge_grads[i]);
    }
  }

  const double step = cfg.learning_rate / static_cast<double>(batch);
  auto cloud_params = state.cloud->parameters();
  sgd_step(cloud_params, cloud_grads, step);
  state.cloud->set_parameters(cloud_params);
  if (cfg.encoder_sharing) {
    std::vector<double> total(state.shared_encoder.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < total.size(); ++p) total[p] += edge_grads[i][p];
    }
    sgd_step(state.shared_encoder, total, step / static_cast<double>(n));
    for (auto& node : state.nodes) node.set_parameters(state.shared_encoder);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      auto p = state.nodes[i].parameters();
      sgd_step(p, edge_grads[i], step);
      state.nodes[i].set_parameters(p);
    }
  }
  state.round = k;
}

std::vector<double> run_inference(const SystemState& state, std::span<const LocalObservation> observations,
                                  std::span<const ChannelRealization> channels,
                                  std::span<const std::vector<cplx>> uplink_noise) {
  if (observations.empty()) throw std::invalid_argument("inference needs at least one EN");
  const auto nodes = serving_nodes(state, observations.size());
  return infer_with(nodes, *state.cloud, state.config, observations, channels, uplink_noise);
}

EvalResult evaluate(const SystemState& state, const Dataset& data, const EvalOptions& options) {
  const auto& cfg = state.config;
  check_dataset(cfg, data);
  const std::size_t n_test = options.n_test != 0 ? options.n_test : state.nodes.size();
  const auto nodes = serving_nodes(state, n_test);
  std::size_t count = data.size(options.split);
  if (options.limit != 0) count = std::min(count, options.limit);
  if (count == 0) throw std::invalid_argument("evaluation split is empty");

  std::vector<double> losses(count);
  std::vector<unsigned char> hits(count);
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::size_t idx = 0; idx < count; ++idx) {
    try {
      std::vector<LocalObservation> obs(n_test);
      std::vector<ChannelRealization> channels(n_test);
      std::vector<std::vector<cplx>> noise(n_test);
      for (std::size_t i = 0; i < n_test; ++i) {
        Rng crop_rng = keyed_rng(options.seed, Stream::eval_crop, {static_cast<std::uint64_t>(options.split), idx, i});
        obs[i] = data.observe(options.split, idx, crop_rng);
        auto link = draw_eval_link(cfg, options.seed, options.split, idx, i, options.snr_db);
        channels[i] = std::move(link.channel);
        noise[i] = std::move(link.uplink_noise);
      }
      const auto logits = infer_with(nodes, *state.cloud, cfg, obs, channels, noise);
      const std::size_t label = data.label(options.split, idx);
      losses[idx] = softmax_cross_entropy(logits, label).loss;
      hits[idx] = argmax(logits) == label ? 1 : 0;
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  EvalResult result;
  result.samples = count;
  for (std::size_t idx = 0; idx < count; ++idx) {
    result.loss += losses[idx];
    result.accuracy += hits[idx];
  }
  result.loss /= static_cast<double>(count);
  result.accuracy /= static_cast<double>(count);
  return result;
}

TrainResult train(const TrainingConfig& config, const Dataset& data, const PhaseObserver& observer) {
  TrainResult result{make_state(config), {}};
  result.records.reserve(config.rounds);
  for (std::size_t k = 1; k <= config.rounds; ++k) {
    RoundRecord rec = run_training_round(result.state, data, observer);
    if (config.validation_every != 0 && k % config.validation_every == 0) {
      EvalOptions opts;
      opts.split = Split::validation;
      opts.snr_db = config.eval_snr_db;
      opts.seed = config.master_seed;
      opts.limit = config.validation_limit;
      rec.val_accuracy = evaluate(result.state, data, opts).accuracy;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

}  // namespace tenet
