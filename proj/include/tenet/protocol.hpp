#pragma once

// Cooperative inference and the five-phase decentralized training round:
// edge forward, uplink, cloud backpropagation, downlink, edge backpropagation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tenet/channel.hpp"
#include "tenet/cloud.hpp"
#include "tenet/dataset.hpp"
#include "tenet/edge.hpp"
#include "tenet/kernels.hpp"
#include "tenet/nn.hpp"

namespace tenet {

enum class CloudArch { proposed, sum_agg, catnet, mhnet };

std::string_view to_string(CloudArch arch);
CloudArch parse_cloud_arch(std::string_view text);

struct TrainingConfig {
  // task
  std::size_t classes = 4;
  std::size_t grid = 16;
  std::size_t window = 12;
  std::size_t marker = 4;
  double signal_amplitude = 1.0;
  double pixel_noise = 2.0;
  std::size_t train_samples = 4000;
  std::size_t validation_samples = 1000;
  std::size_t test_samples = 2000;

  // networks
  std::size_t n_train = 3;
  std::vector<std::size_t> encoder_hidden = {64};
  std::size_t message_dim = 16;  // S
  CloudArch cloud_arch = CloudArch::proposed;
  std::size_t branches = 5;      // M
  std::size_t latent = 32;       // R
  std::size_t cloud_hidden = 64;
  std::size_t baseline_hidden = 0;  // 0 solves for the proposed model's budget

  // optimization
  std::size_t rounds = 400;      // K
  std::size_t batch_size = 64;   // B
  double learning_rate = 1e-3;   // eta
  OptimizerKind optimizer = OptimizerKind::adam;

  // fronthaul
  double snr_up_min_db = 0.0;
  double snr_up_max_db = 30.0;
  double snr_dn_min_db = 0.0;
  double snr_dn_max_db = 30.0;
  bool uplink_noise = true;
  bool downlink_noise = true;
  bool fading = true;            // false: |h| = 1 on every block
  bool snr_per_round = false;    // one SNR pair per round instead of per sample
  PowerMode power_mode = PowerMode::per_rb;
  double edge_power = 1.0;       // p_E
  double cloud_power = 1.0;      // p_C
  bool pathloss = false;
  double pathloss_exponent = 2.7;
  double distance_min = 10.0;
  double distance_max = 50.0;
  double pathloss_reference = 1.0;

  // protocol variants
  bool async = false;
  bool encoder_sharing = false;
  bool cqie = false;

  // evaluation
  std::size_t validation_every = 10;
  std::size_t validation_limit = 0;  // 0 = whole split
  std::optional<double> eval_snr_db;  // unset: noiseless evaluation links
  std::size_t n_test = 0;             // 0 = n_train

  bool wall_clock_timing = false;
  std::uint64_t master_seed = 1;

  std::size_t observation_dim() const noexcept { return window * window; }
  SyntheticSpec synthetic_spec() const;
  EncoderSpec encoder_spec() const;
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

double drop_probability(std::size_t n_train);

// Round k (1-based) draws its batch from epoch (k-1)/per_epoch: a seeded
// shuffle of [0, dataset_size) cut into floor(dataset_size/B) batches.
std::vector<std::size_t> minibatch_for_round(std::uint64_t master_seed, std::size_t dataset_size,
                                             std::size_t batch_size, std::size_t round);
std::vector<std::vector<std::size_t>> schedule_minibatches(std::uint64_t master_seed, std::size_t dataset_size,
                                                           std::size_t batch_size, std::size_t rounds);

struct ActiveSets {
  std::vector<std::vector<std::size_t>> per_sample;  // N(b): active EN ids, ascending
  std::vector<std::vector<std::size_t>> per_en;      // B_i: active sample positions, ascending
  std::size_t redraws = 0;                           // samples redrawn because no EN was active
};

ActiveSets sample_active_sets(Rng& rng, std::size_t n_train, std::size_t batch_size);
ActiveSets all_active(std::size_t n_train, std::size_t batch_size);

// Random quantities of one (round, sample, EN) link, drawn from one keyed
// stream in a fixed order: SNRs, distance, fading, uplink and downlink noise.
struct LinkDraw {
  double snr_up_db = 0.0;
  double snr_dn_db = 0.0;
  ChannelRealization channel;
  std::vector<cplx> uplink_noise;
  std::vector<cplx> downlink_noise;
};

LinkDraw draw_training_link(const TrainingConfig& config, std::size_t round, std::size_t position,
                            std::size_t en);

struct SystemState {
  TrainingConfig config;
  std::vector<EdgeNode> nodes;
  std::unique_ptr<CloudNetwork> cloud;
  std::vector<Optimizer> edge_optimizers;
  Optimizer cloud_optimizer;
  std::vector<double> shared_encoder;  // consensus parameters when sharing
  std::size_t round = 0;

  SystemState() = default;
  SystemState(const SystemState& other);
  SystemState& operator=(const SystemState& other);
  SystemState(SystemState&&) noexcept = default;
  SystemState& operator=(SystemState&&) noexcept = default;

  std::vector<double> edge_parameters() const;  // all nodes back to back
};

SystemState make_state(const TrainingConfig& config);
std::unique_ptr<CloudNetwork> make_cloud(const TrainingConfig& config);

enum class Phase { edge_forward, uplink, cloud_backprop, downlink, edge_backprop };

std::string_view to_string(Phase phase);

// Values crossing the EN/cloud boundary during one round.
struct FronthaulCounter {
  std::size_t uplink_values = 0;
  std::size_t downlink_values = 0;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> batch;
  std::vector<std::vector<std::size_t>> active_per_en;
  std::vector<std::vector<std::size_t>> active_per_sample;
  std::size_t redraws = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
  std::vector<double> snr_up_db;  // per transmitted (sample, EN) link
  std::vector<double> snr_dn_db;
  double mean_active_ens = 0.0;
  double param_norm_cloud = 0.0;
  double param_norm_edges = 0.0;
  FronthaulCounter fronthaul;
  double phase_time_ms = 0.0;
};

// Called after each phase completes, with the state as it stands then.
using PhaseObserver = std::function<void(Phase, const SystemState&)>;

RoundRecord run_training_round(SystemState& state, const Dataset& data, const PhaseObserver& observer = {});

// One step of plain end-to-end SGD on the composite graph with the channels
// embedded as fixed diagonal maps, using the same batch, crops and link draws
// as run_training_round. The shared-encoder variant applies eta/N to the
// single encoder. Requires synchronous coordination and SGD.
void centralized_oracle_round(SystemState& state, const Dataset& data);

struct EvalOptions {
  Split split = Split::validation;
  std::size_t n_test = 0;             // 0 = n_train
  std::optional<double> snr_db;       // unset: noiseless
  std::uint64_t seed = 0;
  std::size_t limit = 0;              // 0 = whole split
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t samples = 0;
};

EvalResult evaluate(const SystemState& state, const Dataset& data, const EvalOptions& options);

// Executes cooperative inference for one global state with `n` ENs.
std::vector<double> run_inference(const SystemState& state, std::span<const LocalObservation> observations,
                                  std::span<const ChannelRealization> channels,
                                  std::span<const std::vector<cplx>> uplink_noise);

struct TrainResult {
  SystemState state;
  std::vector<RoundRecord> records;
};

TrainResult train(const TrainingConfig& config, const Dataset& data, const PhaseObserver& observer = {});

// Nodes that serve N_test ENs: the trained nodes in order, or with a shared
// encoder, copies of the consensus encoder beyond n_train.
std::vector<EdgeNode> serving_nodes(const SystemState& state, std::size_t n_test);

}  // namespace tenet
