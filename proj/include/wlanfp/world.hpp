#pragma once

// Survey geometry and the synthetic-world description: location grid, access
// point placement and the propagation constants used by the channel model.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wlanfp/error.hpp"
#include "wlanfp/phy_frames.hpp"

namespace wlanfp {

inline constexpr double kFootMeters = 0.3048;
inline constexpr double kDefaultSpacingM = 4 * kFootMeters;  // 1.2192 m

struct Point {
  double x_m = 0.0;
  double y_m = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x_m - b.x_m, a.y_m - b.y_m); }

struct LocationGrid {
  std::map<int, Point> entries;  // location id -> coordinates
  double spacing_m = kDefaultSpacingM;

  std::size_t size() const noexcept { return entries.size(); }
  bool contains(int id) const { return entries.contains(id); }

  const Point& at(int id) const {
    auto it = entries.find(id);
    if (it == entries.end()) throw InvalidArgument("unknown location id " + std::to_string(id));
    return it->second;
  }

  std::vector<int> ids() const {
    std::vector<int> out;
    out.reserve(entries.size());
    for (const auto& [id, p] : entries) out.push_back(id);
    return out;
  }

  /// First `n` locations in id order.
  LocationGrid head(std::size_t n) const {
    LocationGrid g;
    g.spacing_m = spacing_m;
    for (const auto& [id, p] : entries) {
      if (g.entries.size() >= n) break;
      g.entries.emplace(id, p);
    }
    return g;
  }

  friend bool operator==(const LocationGrid&, const LocationGrid&) = default;
};

/// 59 survey points walked around a rectangular loop of 20 x 10 spacings,
/// starting at the origin and heading along +x. The 60th loop point would
/// coincide with one spacing short of the start, so the walk stops at 59.
inline LocationGrid default_grid(std::size_t count = 59, double spacing_m = kDefaultSpacingM) {
  constexpr int kLong = 20;
  constexpr int kShort = 10;
  constexpr int kLoop = 2 * (kLong + kShort);
  LocationGrid g;
  g.spacing_m = spacing_m;
  for (std::size_t k = 0; k < count; ++k) {
    const int s = static_cast<int>(k % kLoop);
    int ix = 0, iy = 0;
    if (s <= kLong) {
      ix = s;
    } else if (s <= kLong + kShort) {
      ix = kLong;
      iy = s - kLong;
    } else if (s <= 2 * kLong + kShort) {
      ix = kLong - (s - kLong - kShort);
      iy = kShort;
    } else {
      iy = kShort - (s - 2 * kLong - kShort);
    }
    g.entries.emplace(static_cast<int>(k) + 1, Point{ix * spacing_m, iy * spacing_m});
  }
  return g;
}

// ---------------------------------------------------------------- grid CSV

inline void write_grid_csv(const LocationGrid& grid, std::ostream& os) {
  os << "id,x_m,y_m\n";
  char buf[96];
  for (const auto& [id, p] : grid.entries) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", id, p.x_m, p.y_m);
    os << buf;
  }
}

/// Reads "id,x_m,y_m" rows. Spacing is taken from the first two ids.
inline LocationGrid read_grid_csv(std::istream& is) {
  LocationGrid g;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw ParseError("grid file is empty", 1);
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,x_m,y_m") throw ParseError("grid header must be 'id,x_m,y_m'", 1);
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id_s, x_s, y_s, extra;
    if (!std::getline(row, id_s, ',') || !std::getline(row, x_s, ',') || !std::getline(row, y_s, ',') ||
        std::getline(row, extra, ','))
      throw ParseError("grid row must have 3 columns", lineno);
    try {
      std::size_t used = 0;
      const int id = std::stoi(id_s, &used);
      if (used != id_s.size()) throw std::invalid_argument("id");
      const double x = std::stod(x_s), y = std::stod(y_s);
      if (!g.entries.emplace(id, Point{x, y}).second) throw ParseError("duplicate location id", lineno);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("malformed grid row '" + line + "'", lineno);
    }
  }
  if (g.entries.size() >= 2) {
    auto it = g.entries.begin();
    const Point a = it->second;
    g.spacing_m = distance(a, (++it)->second);
  }
  return g;
}

inline LocationGrid load_grid(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open grid file " + path.string());
  return read_grid_csv(is);
}

// ---------------------------------------------------------------- world

struct AccessPoint {
  std::string ssid;
  MacAddress mac;
  Point position;
};

/// Per-location channel statistics and per-capture variability.
struct ChannelProfile {
  double delay_spread_chips = 0.8;   // exponential PDP decay constant near the AP
  double delay_spread_per_m = 0.03;  // growth of the decay constant with distance
  double rician_k = 3.0;             // first-path K factor
  double tap_jitter = 0.1;           // per-capture tap perturbation, relative to tap rms
  double gain_jitter_db = 1.0;       // per-capture common gain spread
  double max_cfo_hz = 20e3;
  std::size_t min_delay_samples = 200;
  std::size_t max_delay_samples = 600;
};

struct WorldConfig {
  std::uint64_t seed = 1;
  double path_loss_exponent = 3.0;
  double shadowing_sigma_db = 4.0;
  double reference_distance_m = 1.0;
  double reference_snr_db = 70.0;  // SNR of a unit-gain link, relative to unit TX power
  std::size_t mpdu_bits = 800;
  std::optional<std::filesystem::path> grid_file;
  std::vector<AccessPoint> aps;
  ChannelProfile channel;

  void validate() const {
    if (aps.empty()) throw InvalidArgument("world declares no access points");
    if (!(path_loss_exponent > 0)) throw InvalidArgument("path-loss exponent must be positive");
    if (!(shadowing_sigma_db >= 0)) throw InvalidArgument("shadowing sigma must be non-negative");
    if (!(reference_distance_m > 0)) throw InvalidArgument("reference distance must be positive");
    if (channel.min_delay_samples > channel.max_delay_samples) throw InvalidArgument("delay range is inverted");
  }
};

/// Two APs on opposite corners of the default loop, named like the survey logs.
inline WorldConfig default_world() {
  WorldConfig w;
  const LocationGrid g = default_grid();
  double max_x = 0, max_y = 0;
  for (const auto& [id, p] : g.entries) {
    max_x = std::max(max_x, p.x_m);
    max_y = std::max(max_y, p.y_m);
  }
  w.aps.push_back({"TEST24", MacAddress::parse("C0-3F-0E-90-EE-13"), {-2.0, -2.0}});
  w.aps.push_back({"TEST25", MacAddress::parse("44-94-FC-65-F7-BA"), {max_x + 2.0, max_y + 2.0}});
  return w;
}

inline nlohmann::json world_to_json(const WorldConfig& w) {
  nlohmann::json j;
  j["seed"] = w.seed;
  j["path_loss_exponent"] = w.path_loss_exponent;
  j["shadowing_sigma_db"] = w.shadowing_sigma_db;
  j["reference_distance_m"] = w.reference_distance_m;
  j["reference_snr_db"] = w.reference_snr_db;
  j["mpdu_bits"] = w.mpdu_bits;
  if (w.grid_file) j["grid"] = w.grid_file->string();
  for (const auto& ap : w.aps)
    j["aps"].push_back({{"ssid", ap.ssid}, {"mac", ap.mac.to_string()}, {"x_m", ap.position.x_m}, {"y_m", ap.position.y_m}});
  const auto& c = w.channel;
  j["channel"] = {{"delay_spread_chips", c.delay_spread_chips},
                  {"delay_spread_per_m", c.delay_spread_per_m},
                  {"rician_k", c.rician_k},
                  {"tap_jitter", c.tap_jitter},
                  {"gain_jitter_db", c.gain_jitter_db},
                  {"max_cfo_hz", c.max_cfo_hz},
                  {"min_delay_samples", c.min_delay_samples},
                  {"max_delay_samples", c.max_delay_samples}};
  return j;
}

/// Missing keys keep their defaults; `base_dir` resolves a relative grid path.
inline WorldConfig world_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  WorldConfig w;
  try {
    w.seed = j.value("seed", w.seed);
    w.path_loss_exponent = j.value("path_loss_exponent", w.path_loss_exponent);
    w.shadowing_sigma_db = j.value("shadowing_sigma_db", w.shadowing_sigma_db);
    w.reference_distance_m = j.value("reference_distance_m", w.reference_distance_m);
    w.reference_snr_db = j.value("reference_snr_db", w.reference_snr_db);
    w.mpdu_bits = j.value("mpdu_bits", w.mpdu_bits);
    if (j.contains("grid") && !j["grid"].is_null()) {
      std::filesystem::path g = j["grid"].get<std::string>();
      w.grid_file = g.is_relative() && !base_dir.empty() ? base_dir / g : g;
    }
    if (j.contains("aps")) {
      for (const auto& a : j.at("aps"))
        w.aps.push_back({a.at("ssid").get<std::string>(), MacAddress::parse(a.at("mac").get<std::string>()),
                         {a.at("x_m").get<double>(), a.at("y_m").get<double>()}});
    } else {
      w.aps = default_world().aps;
    }
    if (j.contains("channel")) {
      const auto& c = j["channel"];
      auto& p = w.channel;
      p.delay_spread_chips = c.value("delay_spread_chips", p.delay_spread_chips);
      p.delay_spread_per_m = c.value("delay_spread_per_m", p.delay_spread_per_m);
      p.rician_k = c.value("rician_k", p.rician_k);
      p.tap_jitter = c.value("tap_jitter", p.tap_jitter);
      p.gain_jitter_db = c.value("gain_jitter_db", p.gain_jitter_db);
      p.max_cfo_hz = c.value("max_cfo_hz", p.max_cfo_hz);
      p.min_delay_samples = c.value("min_delay_samples", p.min_delay_samples);
      p.max_delay_samples = c.value("max_delay_samples", p.max_delay_samples);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid world config: ") + e.what());
  }
  w.validate();
  return w;
}

inline WorldConfig load_world(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open world config " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("world config " + path.string() + " is not valid JSON: " + e.what());
  }
  return world_from_json(j, path.parent_path());
}

/// The grid a world refers to, or the default loop.
inline LocationGrid world_grid(const WorldConfig& w) { return w.grid_file ? load_grid(*w.grid_file) : default_grid(); }

}  // namespace wlanfp
