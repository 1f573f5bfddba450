#pragma once

// Offline-phase data: survey logs, the radio map, labeled feature matrices,
// grid decimation and synthetic surveys driven through the full PHY chain.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "wlanfp/channel_sim.hpp"
#include "wlanfp/error.hpp"
#include "wlanfp/receiver.hpp"
#include "wlanfp/world.hpp"

namespace wlanfp {

struct ApIdentity {
  std::string ssid;
  MacAddress mac;
  friend bool operator==(const ApIdentity&, const ApIdentity&) = default;
};

inline bool matches(const FingerprintSample& s, const ApIdentity& ap) { return s.ssid == ap.ssid && s.mac == ap.mac; }

struct RadioMap {
  LocationGrid grid;
  std::vector<ApIdentity> aps;
  std::map<int, std::vector<FingerprintSample>> samples;  // arrival order per location

  std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& [id, v] : samples) n += v.size();
    return n;
  }

  std::size_t count(int location, const ApIdentity& ap) const {
    auto it = samples.find(location);
    if (it == samples.end()) return 0;
    return static_cast<std::size_t>(std::count_if(it->second.begin(), it->second.end(),
                                                  [&](const FingerprintSample& s) { return matches(s, ap); }));
  }

  /// Registers the sample's AP on first sight and appends it.
  void add(int location, FingerprintSample s) {
    const ApIdentity ap{s.ssid, s.mac};
    if (std::find(aps.begin(), aps.end(), ap) == aps.end()) aps.push_back(ap);
    samples[location].push_back(std::move(s));
  }
};

enum class FeatureMode { RssOnly, RssPlusChannel };

inline std::string to_string(FeatureMode m) { return m == FeatureMode::RssOnly ? "rss_only" : "rss_plus_channel"; }

inline FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "rss_only" || s == "rss") return FeatureMode::RssOnly;
  if (s == "rss_plus_channel" || s == "rss+channel" || s == "channel") return FeatureMode::RssPlusChannel;
  throw InvalidArgument("unknown feature mode '" + std::string(s) + "'");
}

inline std::size_t features_per_ap(FeatureMode m) { return m == FeatureMode::RssOnly ? 1 : 1 + kEstimateTaps; }

/// Row-major dense matrix of features.
struct FeatureMatrix {
  std::size_t cols = 0;
  std::vector<double> values;

  std::size_t rows() const { return cols ? values.size() / cols : 0; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  void push_row(std::span<const double> r) {
    if (r.size() != cols) throw InvalidArgument("row width does not match matrix");
    values.insert(values.end(), r.begin(), r.end());
  }
};

struct LabeledDataset {
  FeatureMatrix features;
  std::vector<int> labels;
  FeatureMode feature_mode = FeatureMode::RssOnly;
  std::vector<ApIdentity> ap_set;
};

namespace radiomap {

// ---------------------------------------------------------------- survey log

inline const std::vector<std::string>& log_columns() {
  static const std::vector<std::string> cols{"SSID",  "MAC-ID", "RSSI (dB)", "W1 R", "W2 R", "W3 R", "W4 R",
                                             "W5 R",  "W1 I",   "W2 I",      "W3 I", "W4 I", "W5 I"};
  return cols;
}
inline constexpr const char* kLocationColumn = "location_id";

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q.push_back('"');
    q.push_back(c);
  }
  q.push_back('"');
  return q;
}

inline std::vector<std::string> split_csv(const std::string& line, std::size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", lineno);
  out.push_back(std::move(cur));
  return out;
}

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline double parse_number(const std::string& s, std::size_t lineno) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("malformed number '" + s + "'", lineno);
  }
}

inline void write_row(std::ostream& os, const FingerprintSample& s, std::optional<int> location) {
  os << csv_field(s.ssid) << ',' << s.mac.to_string() << ',' << fmt6(s.rss_db);
  for (double v : s.taps_re) os << ',' << fmt6(v);
  for (double v : s.taps_im) os << ',' << fmt6(v);
  if (location) os << ',' << *location;
  os << '\n';
}

inline void write_header(std::ostream& os, bool with_location) {
  const auto& cols = log_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  if (with_location) os << ',' << kLocationColumn;
  os << '\n';
}

}  // namespace detail

/// Survey log with the fingerprint columns followed by location_id. Values
/// carry 6 significant digits.
inline void write_survey_log(const RadioMap& map, std::ostream& os) {
  detail::write_header(os, true);
  for (const auto& [id, list] : map.samples)
    for (const auto& s : list) detail::write_row(os, s, id);
}

/// Strict per-location file: the fingerprint columns only.
inline void write_location_log(const std::vector<FingerprintSample>& samples, std::ostream& os) {
  detail::write_header(os, false);
  for (const auto& s : samples) detail::write_row(os, s, std::nullopt);
}

/// Parses either layout. Rows without a location column are filed under
/// `default_location`. The grid of the returned map is empty.
inline RadioMap read_survey_log(std::istream& is, int default_location = 0) {
  RadioMap map;
  map.grid.entries.clear();
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw ParseError("survey log is empty", 1);
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv(line, lineno);
  const auto& cols = log_columns();
  const bool with_location = header.size() == cols.size() + 1;
  if ((header.size() != cols.size() && !with_location) || !std::equal(cols.begin(), cols.end(), header.begin()) ||
      (with_location && header.back() != kLocationColumn))
    throw ParseError("survey log header does not match the fingerprint schema", lineno);

  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv(line, lineno);
    if (f.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " columns, found " + std::to_string(f.size()),
                       lineno);
    FingerprintSample s;
    s.ssid = f[0];
    try {
      s.mac = MacAddress::parse(f[1]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
    s.rss_db = detail::parse_number(f[2], lineno);
    for (std::size_t k = 0; k < kEstimateTaps; ++k) {
      s.taps_re[k] = detail::parse_number(f[3 + k], lineno);
      s.taps_im[k] = detail::parse_number(f[3 + kEstimateTaps + k], lineno);
    }
    int location = default_location;
    if (with_location) {
      const double v = detail::parse_number(f.back(), lineno);
      if (v != static_cast<int>(v)) throw ParseError("location_id must be an integer", lineno);
      location = static_cast<int>(v);
    }
    map.add(location, std::move(s));
  }
  return map;
}

inline RadioMap load_survey_log(const std::filesystem::path& path, int default_location = 0) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open survey log " + path.string());
  return read_survey_log(is, default_location);
}

// ---------------------------------------------------------------- datasets

/// One row per observation. For several APs the k-th sample of each AP at a
/// location are paired (arrival order); locations contribute
/// min-over-APs rows.
inline LabeledDataset build_dataset(const RadioMap& map, const std::vector<ApIdentity>& ap_set, FeatureMode mode) {
  if (ap_set.empty()) throw InvalidArgument("dataset needs at least one AP");
  LabeledDataset ds;
  ds.feature_mode = mode;
  ds.ap_set = ap_set;
  ds.features.cols = ap_set.size() * features_per_ap(mode);

  std::vector<double> row(ds.features.cols);
  for (const auto& [id, list] : map.samples) {
    std::vector<std::vector<const FingerprintSample*>> per_ap(ap_set.size());
    for (const auto& s : list)
      for (std::size_t a = 0; a < ap_set.size(); ++a)
        if (matches(s, ap_set[a])) per_ap[a].push_back(&s);
    std::size_t n = per_ap[0].size();
    for (std::size_t a = 0; a < ap_set.size(); ++a) {
      if (per_ap[a].empty())
        throw InvalidArgument("location " + std::to_string(id) + " has no samples from " + ap_set[a].ssid + " (" +
                              ap_set[a].mac.to_string() + ")");
      n = std::min(n, per_ap[a].size());
    }
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t c = 0;
      for (std::size_t a = 0; a < ap_set.size(); ++a) {
        const auto& s = *per_ap[a][k];
        row[c++] = s.rss_db;
        if (mode == FeatureMode::RssPlusChannel)
          for (double m : rx::tap_magnitudes(s.estimate())) row[c++] = m;
      }
      ds.features.push_row(row);
      ds.labels.push_back(id);
    }
  }
  return ds;
}

/// Keeps location ids with id = 1 (mod factor) and scales the grid spacing.
inline RadioMap decimate(const RadioMap& map, int factor) {
  if (factor < 1) throw InvalidArgument("decimation factor must be at least 1");
  RadioMap out;
  out.aps = map.aps;
  out.grid.spacing_m = map.grid.spacing_m * factor;
  auto keep = [&](int id) { return ((id - 1) % factor + factor) % factor == 0; };
  for (const auto& [id, p] : map.grid.entries)
    if (keep(id)) out.grid.entries.emplace(id, p);
  for (const auto& [id, list] : map.samples)
    if (keep(id)) out.samples.emplace(id, list);
  return out;
}

// ---------------------------------------------------------------- synthesis

struct SurveyOptions {
  std::size_t samples_per_ap = 30;
  std::uint64_t seed = 1;
  std::size_t max_locations = 0;  // 0 = whole grid
  std::size_t jobs = 1;
  std::size_t retry_factor = 10;
  ModemConfig modem;
};

/// Transmit waveform of one AP's beacon, padded to the world's MPDU size.
inline Waveform beacon_waveform(const AccessPoint& ap, const WorldConfig& world, const ModemConfig& modem) {
  BeaconPayload p{ap.ssid, ap.mac, 100, 0};
  p.body_padding = phy::padding_for_mpdu_bits(ap.ssid.size(), world.mpdu_bits);
  const auto ppdu = phy::assemble_ppdu(phy::encode_beacon_psdu(p));
  Waveform wf = dsss::modulate_ppdu(ppdu, modem);
  wf.samples.insert(wf.samples.end(), 4 * modem.samples_per_symbol(), Complex{});
  return wf;
}

/// One capture of `ap_index` at `location` through the channel model; the
/// decoded sample, if the beacon survived.
inline std::optional<FingerprintSample> survey_capture(const LocationGrid& grid, const WorldConfig& world,
                                                       const Waveform& tx, int location, std::size_t ap_index,
                                                       std::uint64_t capture_seed, const ModemConfig& modem) {
  const auto ch = channel::location_channel_model(grid, world, location, ap_index, capture_seed);
  const auto rx_wf = channel::apply_channel(tx, ch, modem);
  const auto& ap = world.aps[ap_index];
  for (auto& s : rx::decode_capture(IqCapture::from_waveform(rx_wf), modem))
    if (s.ssid == ap.ssid && s.mac == ap.mac) return s;
  return std::nullopt;
}

/// Samples per location interleave the APs (sample k of every AP, then k+1),
/// mirroring alternating log rows.
inline RadioMap synthesize_survey(const LocationGrid& full_grid, const WorldConfig& world,
                                  const SurveyOptions& opt = {}) {
  world.validate();
  const LocationGrid grid = opt.max_locations ? full_grid.head(opt.max_locations) : full_grid;
  std::vector<Waveform> tx;
  for (const auto& ap : world.aps) tx.push_back(beacon_waveform(ap, world, opt.modem));

  const auto ids = grid.ids();
  std::vector<std::vector<FingerprintSample>> results(ids.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::string first_error;

  auto worker = [&] {
    for (std::size_t i = next++; i < ids.size(); i = next++) {
      const int loc = ids[i];
      std::vector<std::vector<FingerprintSample>> per_ap(world.aps.size());
      try {
        for (std::size_t a = 0; a < world.aps.size(); ++a) {
          std::size_t attempt = 0;
          const std::size_t cap = opt.retry_factor * std::max<std::size_t>(opt.samples_per_ap, 1);
          while (per_ap[a].size() < opt.samples_per_ap) {
            if (attempt >= cap)
              throw SurveyError("location " + std::to_string(loc) + ": only " + std::to_string(per_ap[a].size()) +
                                " of " + std::to_string(opt.samples_per_ap) + " beacons from " +
                                world.aps[a].ssid + " decoded after " + std::to_string(attempt) + " captures");
            const auto seed = mix_seed({opt.seed, static_cast<std::uint64_t>(loc), a, attempt++});
            if (auto s = survey_capture(grid, world, tx[a], loc, a, seed, opt.modem)) per_ap[a].push_back(*s);
          }
        }
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (first_error.empty()) first_error = e.what();
        continue;
      }
      for (std::size_t k = 0; k < opt.samples_per_ap; ++k)
        for (auto& list : per_ap) results[i].push_back(std::move(list[k]));
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(opt.jobs, 1, std::max<std::size_t>(ids.size(), 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (!first_error.empty()) throw SurveyError(first_error);

  RadioMap map;
  map.grid = grid;
  for (const auto& ap : world.aps) map.aps.push_back({ap.ssid, ap.mac});
  for (std::size_t i = 0; i < ids.size(); ++i) map.samples[ids[i]] = std::move(results[i]);
  return map;
}

}  // namespace radiomap
}  // namespace wlanfp
