#pragma once

// 1 Mbps DSSS baseband: DBPSK, 11-chip Barker spreading, rectangular chip
// synthesis, integrate-and-dump matched filtering, rational resampling,
// coarse CFO handling and code-phase acquisition.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wlanfp/error.hpp"
#include "wlanfp/phy_frames.hpp"

namespace wlanfp {

using Complex = std::complex<double>;

struct Waveform {
  std::vector<Complex> samples;
  double sample_rate = 0.0;  // Hz

  std::size_t size() const noexcept { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

using Symbols = std::vector<std::int8_t>;  // +1 / -1
using Chips = std::vector<std::int8_t>;    // +1 / -1

inline constexpr std::array<std::int8_t, 11> kBarker11{+1, -1, +1, +1, -1, +1, +1, +1, -1, -1, -1};

struct ModemConfig {
  double chip_rate = 11e6;
  std::size_t samples_per_chip = 2;
  std::array<std::int8_t, 11> barker = kBarker11;
  double detection_threshold = 0.3;  // noise sits near 1/11; multipath splits the peak across paths
  // Symbols integrated by the acquisition metric.
  std::size_t sync_window_symbols = 16;

  double working_rate() const { return chip_rate * static_cast<double>(samples_per_chip); }
  std::size_t chips_per_symbol() const { return barker.size(); }
  std::size_t samples_per_symbol() const { return barker.size() * samples_per_chip; }
  double symbol_rate() const { return chip_rate / static_cast<double>(barker.size()); }

  void validate() const {
    if (!(chip_rate > 0)) throw InvalidArgument("chip rate must be positive");
    if (samples_per_chip == 0) throw InvalidArgument("samples per chip must be positive");
    if (!(detection_threshold >= 0 && detection_threshold <= 1))
      throw InvalidArgument("detection threshold must lie in [0, 1]");
    if (sync_window_symbols == 0) throw InvalidArgument("sync window must hold at least one symbol");
  }
};

struct SampleSpan {
  std::size_t start = 0;
  std::size_t length = 0;
};

struct Detection {
  bool found = false;
  std::size_t offset = 0;
  double peak = 0.0;
};

struct DespreadResult {
  Bits bits;
  std::vector<Complex> soft;  // one despread correlation per symbol
};

namespace dsss {

inline bool same_rate(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

inline void require_working_rate(const Waveform& wf, const ModemConfig& cfg) {
  if (!same_rate(wf.sample_rate, cfg.working_rate()))
    throw InvalidArgument("waveform rate " + std::to_string(wf.sample_rate) + " Hz does not match working rate " +
                          std::to_string(cfg.working_rate()) + " Hz");
}

// ---------------------------------------------------------------- DBPSK

inline Symbols dbpsk_encode(std::span<const std::uint8_t> bits, std::int8_t initial_phase = +1) {
  Symbols out(bits.size());
  std::int8_t prev = initial_phase >= 0 ? std::int8_t{1} : std::int8_t{-1};
  for (std::size_t k = 0; k < bits.size(); ++k) {
    prev = static_cast<std::int8_t>(bits[k] ? -prev : prev);
    out[k] = prev;
  }
  return out;
}

inline Bits dbpsk_decode(std::span<const std::int8_t> symbols, std::int8_t initial_phase = +1) {
  Bits out(symbols.size());
  std::int8_t prev = initial_phase >= 0 ? std::int8_t{1} : std::int8_t{-1};
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    out[k] = symbols[k] != prev ? 1 : 0;
    prev = symbols[k];
  }
  return out;
}

inline Chips barker_spread(std::span<const std::int8_t> symbols,
                           const std::array<std::int8_t, 11>& barker = kBarker11) {
  Chips chips;
  chips.reserve(symbols.size() * barker.size());
  for (auto s : symbols)
    for (auto b : barker) chips.push_back(static_cast<std::int8_t>(s * b));
  return chips;
}

inline Waveform synthesize_waveform(std::span<const std::int8_t> chips, const ModemConfig& cfg) {
  cfg.validate();
  Waveform wf;
  wf.sample_rate = cfg.working_rate();
  wf.samples.reserve(chips.size() * cfg.samples_per_chip);
  for (auto c : chips) wf.samples.insert(wf.samples.end(), cfg.samples_per_chip, Complex(c, 0.0));
  return wf;
}

/// Convenience chain: PPDU air bits -> DBPSK -> Barker -> rectangular chips.
inline Waveform modulate_ppdu(const Ppdu& ppdu, const ModemConfig& cfg) {
  const auto air = ppdu.air_bits();
  return synthesize_waveform(barker_spread(dbpsk_encode(air), cfg.barker), cfg);
}

// ---------------------------------------------------------------- filtering

/// Mean of the `samples_per_chip` samples starting at `pos`; samples past the
/// end count as zero.
inline Complex integrate_dump(std::span<const Complex> x, std::size_t pos, std::size_t spc) {
  Complex acc{};
  const std::size_t end = std::min(x.size(), pos + spc);
  for (std::size_t i = pos; i < end; ++i) acc += x[i];
  return acc / static_cast<double>(spc);
}

inline Waveform matched_filter(const Waveform& wf, const ModemConfig& cfg) {
  require_working_rate(wf, cfg);
  Waveform out;
  out.sample_rate = wf.sample_rate;
  out.samples.resize(wf.size());
  const std::size_t spc = cfg.samples_per_chip;
  if (wf.size() == 0) return out;
  // Running window sum over [n, n + spc).
  Complex acc{};
  for (std::size_t i = 0; i < std::min(spc, wf.size()); ++i) acc += wf.samples[i];
  for (std::size_t n = 0; n < wf.size(); ++n) {
    out.samples[n] = acc / static_cast<double>(spc);
    acc -= wf.samples[n];
    if (n + spc < wf.size()) acc += wf.samples[n + spc];
  }
  return out;
}

/// Despread correlation of one symbol whose first chip starts at `pos`.
inline Complex despread_symbol(std::span<const Complex> x, std::size_t pos, const ModemConfig& cfg) {
  Complex acc{};
  const std::size_t spc = cfg.samples_per_chip;
  for (std::size_t i = 0; i < cfg.barker.size(); ++i)
    acc += static_cast<double>(cfg.barker[i]) * integrate_dump(x, pos + i * spc, spc);
  return acc;
}

// ---------------------------------------------------------------- resampling

namespace detail {

inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

inline double kaiser(double u, double beta) {
  if (std::abs(u) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - u * u)) / std::cyl_bessel_i(0.0, beta);
}

/// Smallest L/M with target/source == L/M exactly (to 1e-9), both <= limit.
inline std::pair<std::size_t, std::size_t> rational_ratio(double source, double target, std::size_t limit = 1000) {
  const double r = target / source;
  for (std::size_t m = 1; m <= limit; ++m) {
    const double l = std::round(r * static_cast<double>(m));
    if (l >= 1 && l <= static_cast<double>(limit) && std::abs(l - r * static_cast<double>(m)) < 1e-9 * static_cast<double>(m)) {
      const auto li = static_cast<std::size_t>(l);
      const auto g = std::gcd(li, m);
      return {li / g, m / g};
    }
  }
  throw InvalidArgument("resampling ratio " + std::to_string(target) + "/" + std::to_string(source) +
                        " is not a small rational");
}

}  // namespace detail

/// Polyphase rational resampler with a Kaiser-windowed sinc prototype. Output
/// sample k sits at input time k*M/L, so the filter adds no delay.
inline Waveform resample_rational(const Waveform& wf, double target_rate) {
  if (!(wf.sample_rate > 0) || !(target_rate > 0)) throw InvalidArgument("sample rates must be positive");
  const auto [up, down] = detail::rational_ratio(wf.sample_rate, target_rate);
  Waveform out;
  out.sample_rate = target_rate;
  if (up == down) {
    out.samples = wf.samples;
    return out;
  }

  constexpr double kCutoffScale = 0.95;
  constexpr double kBeta = 8.0;
  constexpr double kZeroCrossings = 16.0;
  const double rho = std::min(1.0, static_cast<double>(up) / static_cast<double>(down)) * kCutoffScale;
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(kZeroCrossings / rho));

  // taps[p][t + half] weights x[q + t] for output phase p.
  std::vector<std::vector<double>> taps(up, std::vector<double>(static_cast<std::size_t>(2 * half + 1)));
  for (std::size_t p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    double sum = 0;
    for (std::ptrdiff_t t = -half; t <= half; ++t) {
      const double u = frac - static_cast<double>(t);
      const double g = rho * detail::sinc(rho * u) * detail::kaiser(u / static_cast<double>(half + 1), kBeta);
      taps[p][static_cast<std::size_t>(t + half)] = g;
      sum += g;
    }
    for (auto& g : taps[p]) g /= sum;
  }

  const std::size_t n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(wf.size()) * static_cast<double>(up) / static_cast<double>(down)));
  out.samples.resize(n_out);
  const auto n_in = static_cast<std::ptrdiff_t>(wf.size());
  for (std::size_t k = 0; k < n_out; ++k) {
    const std::size_t num = k * down;
    const auto q = static_cast<std::ptrdiff_t>(num / up);
    const auto& h = taps[num % up];
    Complex acc{};
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-half, -q);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(half, n_in - 1 - q);
    for (std::ptrdiff_t t = lo; t <= hi; ++t)
      acc += h[static_cast<std::size_t>(t + half)] * wf.samples[static_cast<std::size_t>(q + t)];
    out.samples[k] = acc;
  }
  return out;
}

// ---------------------------------------------------------------- CFO

/// Multiplies sample n by exp(-j 2 pi cfo n / fs).
inline Waveform apply_cfo_correction(const Waveform& wf, double cfo_hz) {
  Waveform out = wf;
  if (cfo_hz == 0.0) return out;
  const double w = -2.0 * std::numbers::pi * cfo_hz / wf.sample_rate;
  for (std::size_t n = 0; n < out.size(); ++n) out.samples[n] *= std::polar(1.0, w * static_cast<double>(n));
  return out;
}

namespace detail {

/// Lag-`lag` product of despread SYNC symbols with the modulation wiped off
/// by the known scrambled SYNC pattern, summed at the best alignment of the
/// span within the SYNC field. Its angle is 2 pi cfo lag / symbol_rate.
inline Complex sync_lag_product(const Waveform& wf, const ModemConfig& cfg, SampleSpan span, std::size_t lag) {
  const std::size_t sps = cfg.samples_per_symbol();
  const std::size_t usable = std::min(span.length, wf.size() > span.start ? wf.size() - span.start : 0);
  const std::size_t k = std::min(usable / sps, phy::kSyncBits);
  if (k < lag + 8) throw InvalidArgument("CFO span must cover at least " + std::to_string(lag + 8) + " symbols");

  std::vector<Complex> s(k);
  for (std::size_t m = 0; m < k; ++m) s[m] = despread_symbol(wf.samples, span.start + m * sps, cfg);
  std::vector<Complex> z(k);
  for (std::size_t m = lag; m < k; ++m) z[m] = s[m] * std::conj(s[m - lag]);

  // flips[i] = parity of SYNC bits 1..i, so bits (a, b] flip the phase iff flips[a] != flips[b].
  static const std::vector<std::uint8_t> flips = [] {
    const Bits sync = phy::scrambled_sync_bits();
    std::vector<std::uint8_t> f(sync.size());
    for (std::size_t i = 1; i < sync.size(); ++i) f[i] = static_cast<std::uint8_t>(f[i - 1] ^ sync[i]);
    return f;
  }();
  Complex best{};
  double best_mag = -1.0;
  for (std::size_t align = 0; align + k <= phy::kSyncBits; ++align) {
    Complex c{};
    for (std::size_t m = lag; m < k; ++m) c += flips[align + m] != flips[align + m - lag] ? -z[m] : z[m];
    if (std::abs(c) > best_mag) {
      best_mag = std::abs(c);
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// Delayed autocorrelation at a one-symbol lag over SYNC symbols. The known
/// scrambled SYNC pattern wipes off the DBPSK modulation, so the lag product
/// carries only the CFO rotation and the range is +-symbol_rate/2. `span`
/// must start on a symbol boundary inside the SYNC field.
inline double estimate_coarse_cfo(const Waveform& wf, const ModemConfig& cfg, SampleSpan span) {
  require_working_rate(wf, cfg);
  return std::arg(detail::sync_lag_product(wf, cfg, span, 1)) * cfg.symbol_rate() / (2.0 * std::numbers::pi);
}

/// Residual offset after coarse correction, from the same wipe-off at a
/// longer lag. Inter-chip interference from multipath biases the one-symbol
/// product by a fixed phase; spreading that phase over `lag` symbols shrinks
/// the frequency bias by the same factor. Range is +-symbol_rate/(2 lag).
inline double estimate_fine_cfo(const Waveform& wf, const ModemConfig& cfg, SampleSpan span, std::size_t lag = 32) {
  require_working_rate(wf, cfg);
  if (lag == 0) throw InvalidArgument("CFO lag must be positive");
  return std::arg(detail::sync_lag_product(wf, cfg, span, lag)) * cfg.symbol_rate() /
         (2.0 * std::numbers::pi * static_cast<double>(lag));
}

// ---------------------------------------------------------------- acquisition

/// Sliding Barker correlator over a whole capture. The normalized metric at
/// offset n is sum_m |c(n + m*sps)|^2 / (11 * sum_j |mf(n + j*spc)|^2) over
/// `sync_window_symbols` symbols, which lies in [0, 1] by Cauchy-Schwarz.
class SyncSearcher {
 public:
  SyncSearcher(const Waveform& wf, const ModemConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    require_working_rate(wf, cfg);
    const auto mf = matched_filter(wf, cfg);
    const std::size_t n = wf.size();
    const std::size_t spc = cfg.samples_per_chip;
    const std::size_t sps = cfg.samples_per_symbol();
    corr_energy_.assign(n + sps, 0.0);
    sample_energy_.assign(n + spc, 0.0);
    std::vector<double> p(n), e(n);
    for (std::size_t i = 0; i < n; ++i) {
      Complex c{};
      for (std::size_t b = 0; b < cfg.barker.size(); ++b) {
        const std::size_t idx = i + b * spc;
        if (idx < n) c += static_cast<double>(cfg.barker[b]) * mf.samples[idx];
      }
      p[i] = std::norm(c);
      e[i] = std::norm(mf.samples[i]);
    }
    // Strided suffix sums.
    for (std::size_t i = n; i-- > 0;) {
      corr_energy_[i] = p[i] + corr_energy_[i + sps];
      sample_energy_[i] = e[i] + sample_energy_[i + spc];
    }
    const std::size_t span = cfg.sync_window_symbols * sps;
    last_offset_ = n >= span ? n - span : 0;
    usable_ = n >= span;
  }

  double correlation(std::size_t n) const {
    const std::size_t sps = cfg_.samples_per_symbol();
    const std::size_t m = cfg_.sync_window_symbols;
    return corr_energy_[n] - corr_energy_[n + m * sps];
  }

  double metric(std::size_t n) const {
    const std::size_t spc = cfg_.samples_per_chip;
    const std::size_t chips = cfg_.sync_window_symbols * cfg_.chips_per_symbol();
    const double energy = sample_energy_[n] - sample_energy_[n + chips * spc];
    if (!(energy > 0)) return 0.0;
    return std::clamp(correlation(n) / (static_cast<double>(cfg_.chips_per_symbol()) * energy), 0.0, 1.0);
  }

  /// First acquisition at or after `from`: the earliest offset whose metric
  /// reaches the threshold opens a search window of sync_window_symbols + 1
  /// symbols, and the offset with the largest (unnormalized) correlation
  /// energy in it wins, earliest on ties.
  Detection find(std::size_t from = 0) const {
    Detection det;
    if (!usable_) return det;
    std::size_t first = last_offset_ + 1;
    for (std::size_t n = from; n <= last_offset_; ++n) {
      const double m = metric(n);
      if (m > det.peak) {
        det.peak = m;
        det.offset = n;
      }
      if (m >= cfg_.detection_threshold) {
        first = n;
        break;
      }
    }
    if (first > last_offset_) return det;

    const std::size_t window = (cfg_.sync_window_symbols + 1) * cfg_.samples_per_symbol();
    const std::size_t stop = std::min(last_offset_, first + window);
    std::size_t best = first;
    double best_corr = correlation(first);
    for (std::size_t n = first + 1; n <= stop; ++n) {
      const double c = correlation(n);
      if (c > best_corr * (1.0 + 1e-9)) {
        best_corr = c;
        best = n;
      }
    }
    det.found = true;
    det.offset = best;
    det.peak = metric(best);
    return det;
  }

  std::size_t last_offset() const noexcept { return last_offset_; }

 private:
  ModemConfig cfg_;
  std::vector<double> corr_energy_;
  std::vector<double> sample_energy_;
  std::size_t last_offset_ = 0;
  bool usable_ = false;
};

inline Detection code_phase_search(const Waveform& wf, const ModemConfig& cfg) { return SyncSearcher(wf, cfg).find(0); }

// ---------------------------------------------------------------- demodulation

/// Despreads `n_bits` symbols starting at `offset` and decodes phase changes.
/// The first symbol is compared against the transmitter's +1 initial phase.
inline DespreadResult despread_dbpsk_decode(const Waveform& wf, std::size_t offset, const ModemConfig& cfg,
                                            std::size_t n_bits) {
  require_working_rate(wf, cfg);
  const std::size_t sps = cfg.samples_per_symbol();
  if (offset > wf.size() || n_bits > (wf.size() - offset) / sps)
    throw InvalidArgument("capture too short to despread " + std::to_string(n_bits) + " symbols at offset " +
                          std::to_string(offset));
  DespreadResult r;
  r.bits.resize(n_bits);
  r.soft.resize(n_bits);
  Complex prev(1.0, 0.0);
  for (std::size_t m = 0; m < n_bits; ++m) {
    const Complex s = despread_symbol(wf.samples, offset + m * sps, cfg);
    r.soft[m] = s;
    r.bits[m] = (s * std::conj(prev)).real() < 0 ? 1 : 0;
    prev = s;
  }
  return r;
}

}  // namespace dsss
}  // namespace wlanfp
