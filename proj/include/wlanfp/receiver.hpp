#pragma once

// Capture processing: resample -> acquire -> SFD -> coarse CFO -> PLCP
// header -> despread/decode -> descramble -> beacon parse, plus the Wiener
// channel estimate and RSS that make up one fingerprint row. Also the raw IQ
// capture file format (cf32 little-endian + JSON sidecar).

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wlanfp/channel_sim.hpp"
#include "wlanfp/dsss_modem.hpp"
#include "wlanfp/error.hpp"
#include "wlanfp/phy_frames.hpp"

namespace wlanfp {

inline constexpr double kCaptureRate = 25e6;
inline constexpr double kCenterFrequency = 2.412e9;
inline constexpr double kCaptureSeconds = 0.080;
inline constexpr double kReceiverGainDb = 30.0;

struct IqCapture {
  Waveform waveform;
  double center_freq = kCenterFrequency;
  double capture_seconds = 0.0;
  double gain_db = kReceiverGainDb;

  static IqCapture from_waveform(Waveform wf, double center_freq = kCenterFrequency,
                                 double gain_db = kReceiverGainDb) {
    IqCapture c;
    c.capture_seconds = wf.duration();
    c.waveform = std::move(wf);
    c.center_freq = center_freq;
    c.gain_db = gain_db;
    return c;
  }
};

struct FingerprintSample {
  std::string ssid;
  MacAddress mac;
  double rss_db = 0.0;
  std::array<double, kEstimateTaps> taps_re{};
  std::array<double, kEstimateTaps> taps_im{};

  ChannelEstimate estimate() const {
    ChannelEstimate e;
    for (std::size_t k = 0; k < kEstimateTaps; ++k) e.taps[k] = Complex(taps_re[k], taps_im[k]);
    return e;
  }

  friend bool operator==(const FingerprintSample&, const FingerprintSample&) = default;
};

/// Everything the receiver learned about one decoded beacon.
struct DecodedFrame {
  FingerprintSample sample;
  BeaconPayload payload;
  PlcpHeader header;
  std::size_t frame_start = 0;  // first SYNC sample of the strongest path
  std::size_t first_path = 0;   // start of the estimated channel window
  double cfo_hz = 0.0;
  double noise_reg = 0.0;
  ChannelEstimate estimate;
};

namespace rx {

/// Samples covered by a PPDU with this header at 1 Mbps.
inline std::size_t frame_window(const PlcpHeader& header, const ModemConfig& cfg) {
  return (phy::kPlcpBits + header.length_bits) * cfg.samples_per_symbol();
}

/// 10*log10 of the mean |s|^2 over [frame_start, frame_start + total_len).
inline double compute_rss(const Waveform& wf, std::size_t frame_start, std::size_t total_len_samples) {
  if (total_len_samples == 0) throw InvalidArgument("RSS window is empty");
  if (frame_start > wf.size() || total_len_samples > wf.size() - frame_start)
    throw InvalidArgument("RSS window exceeds the capture");
  double acc = 0;
  for (std::size_t n = frame_start; n < frame_start + total_len_samples; ++n) acc += std::norm(wf.samples[n]);
  return 10.0 * std::log10(acc / static_cast<double>(total_len_samples));
}

inline std::array<double, kEstimateTaps> tap_magnitudes(const ChannelEstimate& est) {
  std::array<double, kEstimateTaps> m{};
  for (std::size_t k = 0; k < kEstimateTaps; ++k) m[k] = std::abs(est.taps[k]);
  return m;
}

namespace detail {

inline const Bits& sfd_bits() {
  static const Bits sfd = [] {
    Bits b;
    phy::append_lsb_first(b, phy::kSfd, phy::kSfdBits);
    return b;
  }();
  return sfd;
}

// Taps examined on either side of the acquired path when locating the first
// arrival, and the fraction of the strongest tap that counts as an arrival.
inline constexpr std::size_t kPrecursorChips = 4;
inline constexpr double kFirstPathFraction = 0.5;
// Chip-rate noise samples averaged from the capture head.
inline constexpr std::size_t kNoiseChips = 4096;
inline constexpr std::size_t kMinNoiseChips = 64;

/// Noise variance at chip rate from the signal-free samples before `end`.
inline double head_noise_variance(const Waveform& wf, std::size_t end, const ModemConfig& cfg) {
  const std::size_t spc = cfg.samples_per_chip;
  const std::size_t chips = std::min(end / spc, kNoiseChips);
  if (chips < kMinNoiseChips) return 0.0;
  const std::size_t start = end - chips * spc;
  double acc = 0;
  for (std::size_t i = 0; i < chips; ++i) acc += std::norm(dsss::integrate_dump(wf.samples, start + i * spc, spc));
  return acc / static_cast<double>(chips);
}

inline void swap_float_bytes(std::vector<float>& buf) {
  for (auto& f : buf) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    f = std::bit_cast<float>((u >> 24) | ((u >> 8) & 0xFF00U) | ((u << 8) & 0xFF0000U) | (u << 24));
  }
}

inline std::optional<std::size_t> find_sfd(const Bits& descrambled, std::size_t from) {
  const auto& sfd = sfd_bits();
  for (std::size_t j = from; j + sfd.size() <= descrambled.size(); ++j)
    if (std::equal(sfd.begin(), sfd.end(), descrambled.begin() + static_cast<std::ptrdiff_t>(j))) return j;
  return std::nullopt;
}

inline std::optional<DecodedFrame> try_decode(const Waveform& wf, std::size_t lock, const ModemConfig& cfg) {
  const std::size_t sps = cfg.samples_per_symbol();
  const std::size_t available = (wf.size() - lock) / sps;
  const std::size_t probe_len = std::min<std::size_t>(phy::kPlcpBits, available);
  if (probe_len < 7 + phy::kSfdBits) return std::nullopt;

  // Symbol timing is known; the SFD pins down where the SYNC started.
  const auto probe = phy::descramble(dsss::despread_dbpsk_decode(wf, lock, cfg, probe_len).bits, 0);
  const auto sfd_at = find_sfd(probe, 7);
  if (!sfd_at) return std::nullopt;
  const auto start_signed = static_cast<std::ptrdiff_t>(lock) +
                            (static_cast<std::ptrdiff_t>(*sfd_at) - static_cast<std::ptrdiff_t>(phy::kSyncBits)) *
                                static_cast<std::ptrdiff_t>(sps);
  if (start_signed < 0) return std::nullopt;
  const auto frame_start = static_cast<std::size_t>(start_signed);
  if (frame_start + phy::kPlcpBits * sps > wf.size()) return std::nullopt;

  DecodedFrame out;
  out.frame_start = frame_start;
  const SampleSpan sync{frame_start, phy::kSyncBits * sps};
  const double coarse = dsss::estimate_coarse_cfo(wf, cfg, sync);
  out.cfo_hz = coarse + dsss::estimate_fine_cfo(dsss::apply_cfo_correction(wf, coarse), cfg, sync);
  const Waveform fixed = dsss::apply_cfo_correction(wf, out.cfo_hz);

  const auto plcp = phy::descramble(dsss::despread_dbpsk_decode(fixed, frame_start, cfg, phy::kPlcpBits).bits, 0);
  if (!std::equal(sfd_bits().begin(), sfd_bits().end(), plcp.begin() + phy::kSyncBits)) return std::nullopt;
  out.header = phy::parse_plcp(std::span(plcp).subspan(phy::kPreambleBits, phy::kHeaderBits));
  if (!out.header.crc_ok || out.header.signal != phy::kSignal1Mbps) return std::nullopt;

  const std::size_t window = frame_window(out.header, cfg);
  if (frame_start + window > wf.size()) return std::nullopt;
  const std::size_t total_bits = phy::kPlcpBits + out.header.length_bits;
  const auto bits = phy::descramble(dsss::despread_dbpsk_decode(fixed, frame_start, cfg, total_bits).bits, 0);
  try {
    out.payload = phy::decode_beacon_psdu(std::span(bits).subspan(phy::kPlcpBits));
  } catch (const Error&) {
    return std::nullopt;
  }

  // Channel estimate on the SYNC. Acquisition locks to the strongest path, so
  // widen the window by a few chips to find the first arrival, then estimate
  // the five taps from there.
  const Chips reference = channel::sync_reference_chips(cfg);
  const std::size_t spc = cfg.samples_per_chip;
  const double noise_var = head_noise_variance(fixed, frame_start > 2 * sps ? frame_start - 2 * sps : 0, cfg);
  double sync_power = 0;
  for (const auto& y : channel::chip_samples(fixed, static_cast<std::ptrdiff_t>(frame_start), reference.size(), cfg))
    sync_power += std::norm(y);
  sync_power /= static_cast<double>(reference.size());
  const double channel_power = sync_power - noise_var;
  out.noise_reg = channel_power > 0 && noise_var > 0
                      ? noise_var * static_cast<double>(kEstimateTaps) /
                            (channel_power * static_cast<double>(reference.size()))
                      : 0.0;

  const std::ptrdiff_t wide_start =
      static_cast<std::ptrdiff_t>(frame_start) - static_cast<std::ptrdiff_t>(kPrecursorChips * spc);
  const auto wide = channel::wiener_taps(fixed, reference, wide_start, kPrecursorChips + kEstimateTaps,
                                         out.noise_reg, cfg);
  double strongest = 0;
  for (const auto& t : wide) strongest = std::max(strongest, std::abs(t));
  std::size_t first = kPrecursorChips;
  for (std::size_t k = 0; k < wide.size(); ++k) {
    if (std::abs(wide[k]) >= kFirstPathFraction * strongest) {
      first = k;
      break;
    }
  }
  const std::ptrdiff_t path_start = wide_start + static_cast<std::ptrdiff_t>(first * spc);
  out.estimate = channel::wiener_estimate(fixed, reference, path_start, out.noise_reg, cfg);
  out.first_path = path_start >= 0 && static_cast<std::size_t>(path_start) + window <= wf.size()
                       ? static_cast<std::size_t>(path_start)
                       : frame_start;

  out.sample.ssid = out.payload.ssid;
  out.sample.mac = out.payload.mac;
  out.sample.rss_db = compute_rss(wf, out.first_path, window);
  for (std::size_t k = 0; k < kEstimateTaps; ++k) {
    out.sample.taps_re[k] = out.estimate.taps[k].real();
    out.sample.taps_im[k] = out.estimate.taps[k].imag();
  }
  return out;
}

}  // namespace detail

/// Every beacon that passes both the PLCP CRC and the MPDU FCS, in order of
/// frame start. Captures not at the working rate are resampled first.
inline std::vector<DecodedFrame> decode_frames(const IqCapture& cap, const ModemConfig& cfg = {}) {
  cfg.validate();
  if (!(cap.waveform.sample_rate > 0)) throw InvalidArgument("capture has no sample rate");
  const Waveform wf = dsss::same_rate(cap.waveform.sample_rate, cfg.working_rate())
                          ? cap.waveform
                          : dsss::resample_rational(cap.waveform, cfg.working_rate());
  std::vector<DecodedFrame> frames;
  const dsss::SyncSearcher searcher(wf, cfg);
  const std::size_t skip = cfg.sync_window_symbols * cfg.samples_per_symbol();
  std::size_t pos = 0;
  while (pos <= searcher.last_offset()) {
    const Detection det = searcher.find(pos);
    if (!det.found) break;
    if (auto frame = detail::try_decode(wf, det.offset, cfg)) {
      pos = frame->frame_start + frame_window(frame->header, cfg);
      frames.push_back(std::move(*frame));
    } else {
      pos = det.offset + skip;
    }
  }
  return frames;
}

inline std::vector<FingerprintSample> decode_capture(const IqCapture& cap, const ModemConfig& cfg = {}) {
  std::vector<FingerprintSample> out;
  for (auto& f : decode_frames(cap, cfg)) out.push_back(std::move(f.sample));
  return out;
}

// ---------------------------------------------------------------- IQ files

/// Writes interleaved little-endian float32 I/Q plus a JSON sidecar.
inline void write_iq_capture(const IqCapture& cap, const std::filesystem::path& iq_path,
                             const std::filesystem::path& meta_path) {
  {
    std::ofstream os(iq_path, std::ios::binary);
    if (!os) throw IoError("cannot write " + iq_path.string());
    std::vector<float> buf;
    buf.reserve(2 * cap.waveform.size());
    for (const auto& s : cap.waveform.samples) {
      buf.push_back(static_cast<float>(s.real()));
      buf.push_back(static_cast<float>(s.imag()));
    }
    if constexpr (std::endian::native == std::endian::big) detail::swap_float_bytes(buf);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!os) throw IoError("short write to " + iq_path.string());
  }
  nlohmann::json meta = {{"datatype", "cf32_le"},
                         {"sample_rate", cap.waveform.sample_rate},
                         {"center_freq", cap.center_freq},
                         {"capture_seconds", cap.capture_seconds},
                         {"gain_db", cap.gain_db},
                         {"sample_count", cap.waveform.size()}};
  std::ofstream ms(meta_path);
  if (!ms) throw IoError("cannot write " + meta_path.string());
  ms << meta.dump(2) << '\n';
  if (!ms) throw IoError("short write to " + meta_path.string());
}

inline IqCapture read_iq_capture(const std::filesystem::path& iq_path, const std::filesystem::path& meta_path) {
  std::ifstream ms(meta_path);
  if (!ms) throw IoError("cannot open " + meta_path.string());
  IqCapture cap;
  std::uint64_t count = 0;
  try {
    nlohmann::json meta;
    ms >> meta;
    if (meta.value("datatype", std::string("cf32_le")) != "cf32_le")
      throw ParseError("unsupported IQ datatype in " + meta_path.string());
    cap.waveform.sample_rate = meta.at("sample_rate").get<double>();
    cap.center_freq = meta.at("center_freq").get<double>();
    cap.capture_seconds = meta.at("capture_seconds").get<double>();
    cap.gain_db = meta.at("gain_db").get<double>();
    count = meta.contains("sample_count")
                ? meta["sample_count"].get<std::uint64_t>()
                : static_cast<std::uint64_t>(std::llround(cap.capture_seconds * cap.waveform.sample_rate));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid IQ metadata " + meta_path.string() + ": " + e.what());
  }
  if (!(cap.waveform.sample_rate > 0)) throw ParseError("IQ metadata sample_rate must be positive");
  if (std::abs(cap.capture_seconds * cap.waveform.sample_rate - static_cast<double>(count)) > 0.5)
    throw ParseError("IQ metadata is inconsistent: capture_seconds * sample_rate != sample_count");

  std::error_code ec;
  const auto bytes = std::filesystem::file_size(iq_path, ec);
  if (ec) throw IoError("cannot stat " + iq_path.string());
  if (bytes != count * 2 * sizeof(float))
    throw IoError(iq_path.string() + " holds " + std::to_string(bytes) + " bytes, metadata expects " +
                  std::to_string(count * 2 * sizeof(float)));
  std::ifstream is(iq_path, std::ios::binary);
  if (!is) throw IoError("cannot open " + iq_path.string());
  std::vector<float> buf(2 * count);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw IoError("short read from " + iq_path.string());
  if constexpr (std::endian::native == std::endian::big) detail::swap_float_bytes(buf);
  cap.waveform.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) cap.waveform.samples[i] = Complex(buf[2 * i], buf[2 * i + 1]);
  return cap;
}

}  // namespace rx
}  // namespace wlanfp
