#pragma once

// Stand-in for the over-the-air path: a chip-spaced multipath channel with
// CFO and AWGN, a deterministic per-location channel generator, and the
// 5-tap Wiener channel estimator trained on the known SYNC chips.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "wlanfp/dsss_modem.hpp"
#include "wlanfp/error.hpp"
#include "wlanfp/world.hpp"

namespace wlanfp {

inline constexpr std::size_t kEstimateTaps = 5;

struct MultipathChannel {
  std::vector<Complex> taps{Complex(1.0, 0.0)};  // chip-spaced FIR
  std::size_t delay_samples = 0;
  double cfo_hz = 0.0;
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
};

struct ChannelEstimate {
  std::array<Complex, kEstimateTaps> taps{};
  friend bool operator==(const ChannelEstimate&, const ChannelEstimate&) = default;
};

/// SplitMix64 finalizer folded over the arguments.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (auto p : parts) {
    h ^= p + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    std::uint64_t z = h;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    h = z ^ (z >> 31);
  }
  return h;
}

namespace channel {

/// delay -> chip-spaced FIR -> CFO rotation -> complex AWGN. Noise power is
/// 10^(-snr_db/10) relative to a unit-power transmit waveform.
inline Waveform apply_channel(const Waveform& wf, const MultipathChannel& ch, const ModemConfig& cfg = {}) {
  bool any = false;
  for (const auto& t : ch.taps) any = any || t != Complex{};
  if (!any) throw InvalidArgument("channel needs at least one nonzero tap");
  const std::size_t spc = cfg.samples_per_chip;
  const std::size_t span = (ch.taps.size() - 1) * spc;

  Waveform out;
  out.sample_rate = wf.sample_rate;
  out.samples.assign(wf.size() + ch.delay_samples + span, Complex{});
  for (std::size_t k = 0; k < ch.taps.size(); ++k) {
    const Complex h = ch.taps[k];
    if (h == Complex{}) continue;
    const std::size_t shift = ch.delay_samples + k * spc;
    for (std::size_t n = 0; n < wf.size(); ++n) out.samples[n + shift] += h * wf.samples[n];
  }
  if (ch.cfo_hz != 0.0) {
    const double w = 2.0 * std::numbers::pi * ch.cfo_hz / wf.sample_rate;
    for (std::size_t n = 0; n < out.size(); ++n) out.samples[n] *= std::polar(1.0, w * static_cast<double>(n));
  }
  if (std::isfinite(ch.snr_db)) {
    const double sigma = std::sqrt(std::pow(10.0, -ch.snr_db / 10.0) / 2.0);
    std::mt19937_64 rng(ch.seed);
    std::normal_distribution<double> g(0.0, sigma);
    for (auto& s : out.samples) {
      const double re = g(rng);
      s += Complex(re, g(rng));
    }
  }
  return out;
}

/// Chip-rate samples y_i = integrate-and-dump at offset + i*spc, zero outside
/// the capture.
inline std::vector<Complex> chip_samples(const Waveform& wf, std::ptrdiff_t offset, std::size_t count,
                                         const ModemConfig& cfg) {
  std::vector<Complex> y(count);
  const auto spc = static_cast<std::ptrdiff_t>(cfg.samples_per_chip);
  const auto n = static_cast<std::ptrdiff_t>(wf.size());
  for (std::size_t i = 0; i < count; ++i) {
    const std::ptrdiff_t start = offset + static_cast<std::ptrdiff_t>(i) * spc;
    Complex acc{};
    for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(start, 0); k < std::min(start + spc, n); ++k)
      acc += wf.samples[static_cast<std::size_t>(k)];
    y[i] = acc / static_cast<double>(spc);
  }
  return y;
}

/// Solves (R + noise_reg * tr(R)/n * I) w = p, where R is the autocorrelation
/// of the reference chips and p their cross-correlation with the received
/// chip-rate samples starting at `offset`. Tap k is the gain at a delay of k
/// chips after `offset`. `noise_reg` is dimensionless, so scaling the input
/// by g scales every tap by g.
inline std::vector<Complex> wiener_taps(const Waveform& received, std::span<const std::int8_t> reference_chips,
                                        std::ptrdiff_t offset, std::size_t n_taps, double noise_reg,
                                        const ModemConfig& cfg = {}) {
  if (n_taps == 0) throw InvalidArgument("estimator needs at least one tap");
  if (reference_chips.size() < n_taps) throw InvalidArgument("reference shorter than the tap count");
  if (!(noise_reg >= 0)) throw InvalidArgument("noise regularization must be non-negative");
  const std::size_t len = reference_chips.size();
  const auto y = chip_samples(received, offset, len, cfg);

  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_taps), static_cast<Eigen::Index>(n_taps));
  Eigen::VectorXcd p = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n_taps));
  for (std::size_t j = 0; j < n_taps; ++j) {
    for (std::size_t k = j; k < n_taps; ++k) {
      double acc = 0;
      for (std::size_t i = k; i < len; ++i)
        acc += static_cast<double>(reference_chips[i - j]) * static_cast<double>(reference_chips[i - k]);
      r(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = acc;
      r(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = acc;
    }
    Complex acc{};
    for (std::size_t i = j; i < len; ++i) acc += y[i] * static_cast<double>(reference_chips[i - j]);
    p(static_cast<Eigen::Index>(j)) = acc;
  }
  const double lambda = noise_reg * r.trace() / static_cast<double>(n_taps);
  r.diagonal().array() += lambda;

  Eigen::LLT<Eigen::MatrixXd> llt(r);
  if (llt.info() != Eigen::Success) throw NumericError("Wiener normal equations are singular");
  const Eigen::VectorXd re = llt.solve(p.real());
  const Eigen::VectorXd im = llt.solve(p.imag());
  std::vector<Complex> w(n_taps);
  for (std::size_t k = 0; k < n_taps; ++k)
    w[k] = Complex(re(static_cast<Eigen::Index>(k)), im(static_cast<Eigen::Index>(k)));
  for (const auto& t : w)
    if (!std::isfinite(t.real()) || !std::isfinite(t.imag())) throw NumericError("Wiener solution is not finite");
  return w;
}

inline ChannelEstimate wiener_estimate(const Waveform& received, std::span<const std::int8_t> reference_chips,
                                       std::ptrdiff_t offset, double noise_reg, const ModemConfig& cfg = {}) {
  const auto w = wiener_taps(received, reference_chips, offset, kEstimateTaps, noise_reg, cfg);
  ChannelEstimate est;
  std::copy(w.begin(), w.end(), est.taps.begin());
  return est;
}

/// Known SYNC field on air, DBPSK-modulated from a +1 phase and spread.
inline Chips sync_reference_chips(const ModemConfig& cfg = {}) {
  return dsss::barker_spread(dsss::dbpsk_encode(phy::scrambled_sync_bits()), cfg.barker);
}

// ---------------------------------------------------------------- world model

/// Log-distance path loss, in dB, before shadowing.
inline double path_loss_db(double distance_m, const WorldConfig& world) {
  const double d = std::max(distance_m, world.reference_distance_m);
  return 10.0 * world.path_loss_exponent * std::log10(d / world.reference_distance_m);
}

struct LocationStatics {
  double distance_m = 0.0;
  double shadowing_db = 0.0;
  std::array<double, kEstimateTaps> pdp{};       // normalized power per tap
  std::array<Complex, kEstimateTaps> shape{};  // unit-energy tap vector
};

inline LocationStatics location_statics(const LocationGrid& grid, const WorldConfig& world, int location_id,
                                        std::size_t ap_index) {
  if (ap_index >= world.aps.size()) throw InvalidArgument("unknown AP index " + std::to_string(ap_index));
  const Point& where = grid.at(location_id);
  LocationStatics s;
  s.distance_m = distance(where, world.aps[ap_index].position);

  std::mt19937_64 rng(mix_seed({world.seed, static_cast<std::uint64_t>(location_id), ap_index, 0x5A11ULL}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
  s.shadowing_db = world.shadowing_sigma_db * gauss(rng);

  const auto& prof = world.channel;
  const double tau = std::max(1e-3, prof.delay_spread_chips + prof.delay_spread_per_m * s.distance_m);
  double total = 0;
  for (std::size_t k = 0; k < kEstimateTaps; ++k) total += s.pdp[k] = std::exp(-static_cast<double>(k) / tau);
  for (auto& p : s.pdp) p /= total;

  auto cn = [&] {
    const double re = gauss(rng);
    return Complex(re, gauss(rng)) / std::numbers::sqrt2;
  };
  const double k = std::max(0.0, prof.rician_k);
  const Complex los = std::polar(std::sqrt(k / (k + 1.0)), uni(rng));
  s.shape[0] = std::sqrt(s.pdp[0]) * (los + std::sqrt(1.0 / (k + 1.0)) * cn());
  for (std::size_t i = 1; i < kEstimateTaps; ++i) s.shape[i] = std::sqrt(s.pdp[i]) * cn();
  double energy = 0;
  for (const auto& t : s.shape) energy += std::norm(t);
  for (auto& t : s.shape) t /= std::sqrt(energy);
  return s;
}

/// Mean received power of a location/AP link in dB (path loss and shadowing).
inline double mean_channel_gain_db(const LocationGrid& grid, const WorldConfig& world, int location_id,
                                   std::size_t ap_index) {
  const auto s = location_statics(grid, world, location_id, ap_index);
  return -(path_loss_db(s.distance_m, world) + s.shadowing_db);
}

/// Channel for one capture at `location_id` from AP `ap_index`. The static
/// part depends only on (world seed, location, AP); `capture_seed` drives the
/// per-capture gain and tap jitter, carrier phase, CFO, delay and noise.
inline MultipathChannel location_channel_model(const LocationGrid& grid, const WorldConfig& world, int location_id,
                                               std::size_t ap_index, std::uint64_t capture_seed) {
  const auto s = location_statics(grid, world, location_id, ap_index);
  const double amplitude = std::pow(10.0, -(path_loss_db(s.distance_m, world) + s.shadowing_db) / 20.0);
  const auto& prof = world.channel;

  std::mt19937_64 rng(mix_seed({capture_seed, static_cast<std::uint64_t>(location_id), ap_index, 0xCA97ULL}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> cfo(-prof.max_cfo_hz, prof.max_cfo_hz);
  std::uniform_int_distribution<std::size_t> delay(prof.min_delay_samples, prof.max_delay_samples);

  const double gain = std::pow(10.0, prof.gain_jitter_db * gauss(rng) / 20.0);
  MultipathChannel ch;
  ch.taps.resize(kEstimateTaps);
  for (std::size_t k = 0; k < kEstimateTaps; ++k) {
    const double re = gauss(rng);
    const Complex jitter = Complex(re, gauss(rng)) / std::numbers::sqrt2;
    ch.taps[k] = amplitude * (gain * s.shape[k] + prof.tap_jitter * std::sqrt(s.pdp[k]) * jitter);
  }
  const Complex rot = std::polar(1.0, phase(rng));
  for (auto& t : ch.taps) t *= rot;
  ch.cfo_hz = prof.max_cfo_hz > 0 ? cfo(rng) : 0.0;
  ch.delay_samples = delay(rng);
  ch.snr_db = world.reference_snr_db;
  ch.seed = rng();
  return ch;
}

/// Overload keyed on the world seed alone, using the world's grid.
inline MultipathChannel location_channel_model(int location_id, std::size_t ap_index, const WorldConfig& world,
                                               std::uint64_t capture_seed = 0) {
  return location_channel_model(world_grid(world), world, location_id, ap_index, capture_seed);
}

}  // namespace channel
}  // namespace wlanfp
