#pragma once

// Complex-baseband fronthaul links: Rayleigh block fading per resource
// block, phase precoding on the uplink, and the reciprocal downlink used to
// return gradients without CSI at the cloud.

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tenet/nn.hpp"
#include "tenet/rng.hpp"

namespace tenet {

using cplx = std::complex<double>;

// Noise variance for a given SNR with unit transmit power.
double snr_to_noise_var(double snr_db);

struct Pathloss {
  double distance = 1.0;
  double exponent = 2.7;
  double reference = 1.0;  // distance at which the gain is 1
};

struct ChannelRealization {
  std::vector<cplx> h;
  double uplink_noise_var = 0.0;
  double downlink_noise_var = 0.0;
  double pathloss_factor = 1.0;

  std::size_t blocks() const noexcept { return h.size(); }
  std::vector<double> magnitude() const;
  std::vector<double> phase() const;
  // Diagonal of H = diag([|h|; |h|]), length 2 * blocks().
  std::vector<double> effective_gain() const;
};

ChannelRealization sample_channel(Rng& rng, std::size_t blocks,
                                  std::optional<Pathloss> pathloss = std::nullopt,
                                  double uplink_noise_var = 0.0, double downlink_noise_var = 0.0);

// [s_R; s_I] <-> s_R + j s_I
std::vector<cplx> pack(std::span<const double> real_form);
std::vector<double> unpack(std::span<const cplx> complex_form);

// CN(0, var I): real and imaginary parts each carry var / 2.
std::vector<cplx> draw_complex_noise(Rng& rng, std::size_t n, double var);

// Received real-form signal y_C = H s + n for the given noise draw.
std::vector<double> uplink_transmit(std::span<const cplx> message, const ChannelRealization& ch,
                                    std::span<const cplx> noise);
std::vector<double> uplink_transmit(std::span<const cplx> message, const ChannelRealization& ch,
                                    Rng& rng);

// Power scaling for the downlink gradient message of one EN.
double compute_alpha_per_rb(std::span<const cplx> message, double p_c);
// Sum-power scaling shared by all ENs' messages of one sample.
double compute_alpha_sum(std::span<const std::vector<cplx>> messages, double p_c);

inline constexpr double kAlphaFloor = 1e-12;

std::vector<cplx> downlink_transmit(std::span<const cplx> message, const ChannelRealization& ch,
                                    double alpha, std::span<const cplx> noise);
std::vector<cplx> downlink_transmit(std::span<const cplx> message, const ChannelRealization& ch,
                                    double alpha, Rng& rng);

// Phase compensation and de-scaling at the EN; returns the real form y_E.
std::vector<double> downlink_decode(std::span<const cplx> received, std::span<const double> phase,
                                    double alpha);

}  // namespace tenet
