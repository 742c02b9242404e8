#include "tenet/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tenet {

namespace {

void check_same_blocks(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a) + " blocks vs channel with " +
                     std::to_string(b));
  }
}

}  // namespace

double snr_to_noise_var(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

std::vector<double> ChannelRealization::magnitude() const {
  std::vector<double> out(h.size());
  for (std::size_t j = 0; j < h.size(); ++j) out[j] = std::abs(h[j]);
  return out;
}

std::vector<double> ChannelRealization::phase() const {
  std::vector<double> out(h.size());
  for (std::size_t j = 0; j < h.size(); ++j) out[j] = std::arg(h[j]);
  return out;
}

std::vector<double> ChannelRealization::effective_gain() const {
  std::vector<double> out(2 * h.size());
  for (std::size_t j = 0; j < h.size(); ++j) out[j] = out[j + h.size()] = std::abs(h[j]);
  return out;
}

ChannelRealization sample_channel(Rng& rng, std::size_t blocks, std::optional<Pathloss> pathloss,
                                  double uplink_noise_var, double downlink_noise_var) {
  if (blocks == 0) throw std::invalid_argument("channel needs at least one resource block");
  ChannelRealization ch;
  if (pathloss) {
    if (!(pathloss->distance > 0.0)) throw std::invalid_argument("pathloss distance must be positive");
    ch.pathloss_factor = std::pow(pathloss->distance / pathloss->reference, -pathloss->exponent);
  }
  ch.uplink_noise_var = uplink_noise_var;
  ch.downlink_noise_var = downlink_noise_var;
  ch.h = draw_complex_noise(rng, blocks, ch.pathloss_factor);
  return ch;
}

std::vector<cplx> pack(std::span<const double> real_form) {
  if (real_form.size() % 2 != 0) {
    throw ShapeError("pack needs an even length, got " + std::to_string(real_form.size()));
  }
  const std::size_t half = real_form.size() / 2;
  std::vector<cplx> out(half);
  for (std::size_t j = 0; j < half; ++j) out[j] = {real_form[j], real_form[j + half]};
  return out;
}

std::vector<double> unpack(std::span<const cplx> complex_form) {
  const std::size_t half = complex_form.size();
  std::vector<double> out(2 * half);
  for (std::size_t j = 0; j < half; ++j) {
    out[j] = complex_form[j].real();
    out[j + half] = complex_form[j].imag();
  }
  return out;
}

std::vector<cplx> draw_complex_noise(Rng& rng, std::size_t n, double var) {
  std::vector<cplx> out(n);
  if (var <= 0.0) return out;
  std::normal_distribution<double> dist(0.0, std::sqrt(var / 2.0));
  for (auto& z : out) {
    const double re = dist(rng);
    const double im = dist(rng);
    z = {re, im};
  }
  return out;
}

std::vector<double> uplink_transmit(std::span<const cplx> message, const ChannelRealization& ch,
                                    std::span<const cplx> noise) {
  check_same_blocks(message.size(), ch.blocks(), "uplink message");
  check_same_blocks(noise.size(), ch.blocks(), "uplink noise");
  // Precoding with e^{-j angle h} followed by the fading product h collapses
  // to the real gain |h|; evaluating it in that form keeps y = H s + n exact.
  std::vector<cplx> received(message.size());
  for (std::size_t j = 0; j < message.size(); ++j) {
    received[j] = std::abs(ch.h[j]) * message[j] + noise[j];
  }
  return unpack(received);
}

std::vector<double> uplink_transmit(std::span<const cplx> message, const ChannelRealization& ch,
                                    Rng& rng) {
  const auto noise = draw_complex_noise(rng, ch.blocks(), ch.uplink_noise_var);
  return uplink_transmit(message, ch, noise);
}

double compute_alpha_per_rb(std::span<const cplx> message, double p_c) {
  if (!(p_c > 0.0)) throw std::invalid_argument("cloud power budget must be positive");
  double peak = 0.0;
  for (const cplx& z : message) peak = std::max(peak, std::norm(z));
  return std::sqrt(p_c / std::max(peak, kAlphaFloor));
}

double compute_alpha_sum(std::span<const std::vector<cplx>> messages, double p_c) {
  if (!(p_c > 0.0)) throw std::invalid_argument("cloud power budget must be positive");
  double total = 0.0;
  for (const auto& m : messages) {
    for (const cplx& z : m) total += std::norm(z);
  }
  return std::sqrt(p_c / std::max(total, kAlphaFloor));
}

std::vector<cplx> downlink_transmit(std::span<const cplx> message, const ChannelRealization& ch,
                                    double alpha, std::span<const cplx> noise) {
  check_same_blocks(message.size(), ch.blocks(), "downlink message");
  check_same_blocks(noise.size(), ch.blocks(), "downlink noise");
  std::vector<cplx> received(message.size());
  for (std::size_t j = 0; j < message.size(); ++j) {
    received[j] = alpha * std::conj(ch.h[j]) * message[j] + noise[j];
  }
  return received;
}

std::vector<cplx> downlink_transmit(std::span<const cplx> message, const ChannelRealization& ch,
                                    double alpha, Rng& rng) {
  const auto noise = draw_complex_noise(rng, ch.blocks(), ch.downlink_noise_var);
  return downlink_transmit(message, ch, alpha, noise);
}

std::vector<double> downlink_decode(std::span<const cplx> received, std::span<const double> phase,
                                    double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("power scaling factor must be positive");
  if (received.size() != phase.size()) throw ShapeError("downlink decode: phase length mismatch");
  std::vector<cplx> decoded(received.size());
  for (std::size_t j = 0; j < received.size(); ++j) {
    decoded[j] = std::polar(1.0, phase[j]) * received[j] / alpha;
  }
  return unpack(decoded);
}

}  // namespace tenet
