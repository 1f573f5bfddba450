#pragma once

// Subcommand implementations for the wlanfp command-line tool. Kept in a
// header so tests can drive `run` in-process.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wlanfp/wlanfp.hpp"

namespace wlanfp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

inline constexpr const char* kOutputDirEnv = "WLANFP_OUTPUT_DIR";

namespace fs = std::filesystem;

inline fs::path default_output_dir() {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? fs::path(env) : fs::current_path();
}

inline fs::path resolve_output(const std::string& given, const std::string& fallback_name) {
  if (given.empty()) return default_output_dir() / fallback_name;
  return fs::path(given);
}

/// Writes through a sibling temp file and renames it into place, so a failed
/// command never leaves a partial file behind.
inline void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  try {
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os) throw IoError("cannot write " + tmp.string());
      body(os);
      os.flush();
      if (!os) throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  } catch (...) {
    fs::remove(tmp, ec);
    throw;
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct WorldArgs {
  std::string world_path;
  std::string grid_path;

  WorldConfig world() const { return world_path.empty() ? default_world() : load_world(world_path); }

  LocationGrid grid(const WorldConfig& w) const { return grid_path.empty() ? world_grid(w) : load_grid(grid_path); }
};

inline void add_world_options(CLI::App* cmd, WorldArgs& a) {
  cmd->add_option("--world", a.world_path, "World config (JSON); built-in two-AP world if omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--grid", a.grid_path, "Location grid CSV (id,x_m,y_m); overrides the world's grid")
      ->check(CLI::ExistingFile);
}

inline int parse_granularity(const std::string& s) {
  std::string t = s;
  if (t.size() > 2 && (t.ends_with("ft") || t.ends_with("Ft"))) t.resize(t.size() - 2);
  if (t == "4") return 4;
  if (t == "8") return 8;
  if (t == "12") return 12;
  throw CLI::ValidationError("--granularity", "expected 4ft, 8ft or 12ft, got '" + s + "'");
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::size_t jobs = 1;
};

// ---------------------------------------------------------------- commands

struct SynthSurveyArgs {
  WorldArgs where;
  std::optional<std::uint64_t> seed;
  std::size_t locations = 0;
  std::size_t samples_per_ap = 30;
  std::string out;
  std::string per_location_dir;
  std::string grid_out;
};

inline void cmd_synth_survey(const SynthSurveyArgs& a, Context& ctx) {
  WorldConfig world = a.where.world();
  if (a.seed) world.seed = *a.seed;
  const LocationGrid grid = a.where.grid(world);
  radiomap::SurveyOptions opt;
  opt.samples_per_ap = a.samples_per_ap;
  opt.seed = world.seed;
  opt.max_locations = a.locations;
  opt.jobs = ctx.jobs;
  const RadioMap map = radiomap::synthesize_survey(grid, world, opt);

  const fs::path out = resolve_output(a.out, "survey.csv");
  write_atomic(out, [&](std::ostream& os) { radiomap::write_survey_log(map, os); });
  if (!a.per_location_dir.empty()) {
    for (const auto& [id, list] : map.samples) {
      char name[32];
      std::snprintf(name, sizeof name, "location_%02d.csv", id);
      write_atomic(fs::path(a.per_location_dir) / name,
                   [&](std::ostream& os) { radiomap::write_location_log(list, os); });
    }
  }
  if (!a.grid_out.empty()) write_atomic(a.grid_out, [&](std::ostream& os) { write_grid_csv(map.grid, os); });
  ctx.out << "wrote " << map.sample_count() << " samples from " << map.samples.size() << " locations and "
          << map.aps.size() << " APs to " << out.string() << '\n';
}

struct SynthCaptureArgs {
  WorldArgs where;
  int location = 1;
  std::size_t ap = 0;
  std::uint64_t seed = 1;
  std::size_t beacons = 1;
  bool noise_only = false;
  double sample_rate = kCaptureRate;
  std::string out;
};

/// Builds an IQ capture through the channel model, resampled to the capture
/// rate. Beacons are spaced by one frame plus a 1 ms gap.
inline void cmd_synth_capture(const SynthCaptureArgs& a, Context& ctx) {
  const WorldConfig world = a.where.world();
  const LocationGrid grid = a.where.grid(world);
  const ModemConfig modem;
  if (a.ap >= world.aps.size()) throw InvalidArgument("world has no AP index " + std::to_string(a.ap));
  Waveform wf;
  wf.sample_rate = modem.working_rate();
  const Waveform tx = radiomap::beacon_waveform(world.aps[a.ap], world, modem);
  const std::size_t beacons = a.noise_only ? 1 : std::max<std::size_t>(a.beacons, 1);
  for (std::size_t b = 0; b < beacons; ++b) {
    const auto ch = channel::location_channel_model(grid, world, a.location, a.ap, mix_seed({a.seed, b}));
    Waveform src = tx;
    if (a.noise_only)
      for (auto& s : src.samples) s = {};
    const auto part = channel::apply_channel(src, ch, modem);
    wf.samples.insert(wf.samples.end(), part.samples.begin(), part.samples.end());
    if (b + 1 == beacons) break;
    MultipathChannel gap;
    gap.taps = {Complex{}};
    gap.snr_db = ch.snr_db;
    gap.seed = mix_seed({a.seed, b, 0x6A9ULL});
    Waveform silence;
    silence.sample_rate = wf.sample_rate;
    silence.samples.assign(static_cast<std::size_t>(1e-3 * wf.sample_rate), Complex{});
    const auto g = channel::apply_channel(silence, gap, modem);
    wf.samples.insert(wf.samples.end(), g.samples.begin(), g.samples.end());
  }
  const Waveform cap_wf = dsss::resample_rational(wf, a.sample_rate);
  const IqCapture cap = IqCapture::from_waveform(cap_wf);
  const fs::path iq = resolve_output(a.out, "capture.cf32");
  fs::path meta = iq;
  meta += ".json";
  // Sidecar first, then the samples; both via temp files.
  const fs::path tmp_dir = iq.parent_path().empty() ? fs::path(".") : iq.parent_path();
  fs::path tmp_iq = iq;
  tmp_iq += ".tmp-iq";
  fs::path tmp_meta = meta;
  tmp_meta += ".tmp";
  std::error_code ec;
  fs::create_directories(tmp_dir, ec);
  try {
    rx::write_iq_capture(cap, tmp_iq, tmp_meta);
    fs::rename(tmp_iq, iq);
    fs::rename(tmp_meta, meta);
  } catch (const fs::filesystem_error& e) {
    fs::remove(tmp_iq, ec);
    fs::remove(tmp_meta, ec);
    throw IoError(e.what());
  } catch (...) {
    fs::remove(tmp_iq, ec);
    fs::remove(tmp_meta, ec);
    throw;
  }
  ctx.out << "wrote " << cap.waveform.size() << " samples at " << cap.waveform.sample_rate << " Hz to "
          << iq.string() << '\n';
}

struct DecodeArgs {
  std::string iq;
  std::string meta;
  std::optional<int> location;
  std::string out;
};

inline void cmd_decode(const DecodeArgs& a, Context& ctx) {
  fs::path meta = a.meta;
  if (meta.empty()) {
    meta = a.iq;
    meta += ".json";
  }
  const IqCapture cap = rx::read_iq_capture(a.iq, meta);
  const auto samples = rx::decode_capture(cap);
  const fs::path out = resolve_output(a.out, "decoded.csv");

  // Appends to an existing log of the same layout, else starts a new one.
  RadioMap existing;
  const bool with_location = a.location.has_value();
  if (fs::exists(out)) {
    std::istringstream is(read_file(out));
    existing = radiomap::read_survey_log(is, a.location.value_or(0));
  }
  write_atomic(out, [&](std::ostream& os) {
    if (with_location) {
      RadioMap m = existing;
      for (const auto& s : samples) m.add(*a.location, s);
      radiomap::write_survey_log(m, os);
    } else {
      std::vector<FingerprintSample> rows;
      for (const auto& [id, list] : existing.samples) rows.insert(rows.end(), list.begin(), list.end());
      rows.insert(rows.end(), samples.begin(), samples.end());
      radiomap::write_location_log(rows, os);
    }
  });
  ctx.out << "decoded " << samples.size() << " beacon" << (samples.size() == 1 ? "" : "s") << " from "
          << a.iq << '\n';
}

struct TrainArgs {
  std::string log;
  WorldArgs where;
  std::size_t aps = 1;
  std::string features = "rss_only";
  std::string granularity = "4ft";
  std::size_t train_per_location = 0;
  double C = 1.0;
  double gamma = 0.0;
  std::string out;
};

inline RadioMap load_map_with_grid(const std::string& log, const WorldArgs& where) {
  RadioMap map = radiomap::load_survey_log(log);
  const WorldConfig world = where.world();
  map.grid = where.grid(world);
  for (const auto& [id, list] : map.samples)
    if (!map.grid.contains(id)) throw InvalidArgument("survey log location " + std::to_string(id) + " is not in the grid");
  return map;
}

inline void cmd_train(const TrainArgs& a, Context& ctx) {
  RadioMap map = load_map_with_grid(a.log, a.where);
  map = radiomap::decimate(map, parse_granularity(a.granularity) / 4);
  if (a.train_per_location) map = eval::split_per_location(map, a.train_per_location).first;
  const auto aps = eval::scenario_aps(map, a.aps);
  const auto ds = radiomap::build_dataset(map, aps, parse_feature_mode(a.features));
  SvmParams p;
  p.C = a.C;
  p.gamma = a.gamma;
  const auto model = svm::train_multiclass(ds, p);
  const fs::path out = resolve_output(a.out, "model.svm");
  write_atomic(out, [&](std::ostream& os) { svm::save_model(model, os); });
  ctx.out << "trained " << model.machines.size() << " machines on " << ds.labels.size() << " rows ("
          << model.classes.size() << " locations, " << model.pool.rows() << " support vectors) -> " << out.string()
          << '\n';
}

struct EvalArgs {
  std::string log;
  WorldArgs where;
  std::vector<std::string> granularities;
  std::vector<std::size_t> aps;
  std::vector<std::string> features;
  std::uint64_t seed = 1;
  std::size_t train_per_location = 30;
  bool shuffle = false;
  bool with_mean = false;
  std::string out_dir;
};

inline void write_outputs(const std::vector<EvalReport>& reports, const fs::path& dir, bool with_mean,
                          Context& ctx, bool write_cdfs) {
  write_atomic(dir / "reports.csv", [&](std::ostream& os) { eval::write_report_csv(reports, os); });
  if (write_cdfs)
    for (const auto& r : reports)
      write_atomic(dir / ("cdf_" + r.scenario.key() + ".csv"), [&](std::ostream& os) { eval::write_cdf_csv(r.cdf, os); });
  eval::TableOptions to;
  to.include_mean = with_mean;
  const auto table = eval::summary_table(reports, to);
  write_atomic(dir / "summary.csv", [&](std::ostream& os) { os << table.csv(); });
  ctx.out << table.text();
}

inline void cmd_eval(const EvalArgs& a, Context& ctx) {
  const RadioMap map = load_map_with_grid(a.log, a.where);
  eval::ScenarioFilter f;
  if (!a.granularities.empty()) {
    f.granularities.clear();
    for (const auto& g : a.granularities) f.granularities.push_back(parse_granularity(g));
  }
  if (!a.aps.empty()) f.ap_counts = a.aps;
  if (!a.features.empty()) {
    f.modes.clear();
    for (const auto& m : a.features) f.modes.push_back(parse_feature_mode(m));
  }
  ScenarioSpec base;
  base.seed = a.seed;
  base.train_per_location = a.train_per_location;
  base.shuffle = a.shuffle;
  const auto specs = eval::scenario_matrix(f, base);
  if (specs.empty()) throw InvalidArgument("scenario filters select nothing");
  const auto reports = eval::evaluate_all(map, specs, ctx.jobs);
  const fs::path dir = a.out_dir.empty() ? default_output_dir() : fs::path(a.out_dir);
  write_outputs(reports, dir, a.with_mean, ctx, true);
}

struct ReportArgs {
  std::vector<std::string> inputs;
  bool with_mean = false;
  std::string out;
};

/// Renders the summary table from one or more report CSVs, averaging the
/// same scenario across files (e.g. several seeds).
inline void cmd_report(const ReportArgs& a, Context& ctx) {
  std::vector<EvalReport> all;
  for (const auto& in : a.inputs) {
    std::istringstream is(read_file(in));
    auto r = eval::read_report_csv(is);
    all.insert(all.end(), r.begin(), r.end());
  }
  const auto avg = eval::average_by_scenario(all);
  eval::TableOptions to;
  to.include_mean = a.with_mean;
  const auto table = eval::summary_table(avg, to);
  const fs::path out = resolve_output(a.out, "summary.csv");
  write_atomic(out, [&](std::ostream& os) { os << table.csv(); });
  ctx.out << table.text();
}

// ---------------------------------------------------------------- entry

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"WLAN beacon fingerprinting: survey synthesis, decoding, SVM training and evaluation", "wlanfp"};
  app.require_subcommand(1);
  Context ctx{out, err};
  app.add_option("-j,--jobs", ctx.jobs, "Worker threads for surveys and scenario sweeps")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}));
  app.footer(std::string("Default output directory: $") + kOutputDirEnv + " or the current directory.\n"
             "Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.");

  SynthSurveyArgs ss;
  auto* c_ss = app.add_subcommand("synth-survey", "Synthesize a survey log through the simulated PHY and channel");
  add_world_options(c_ss, ss.where);
  c_ss->add_option("--seed", ss.seed, "World and capture seed (default: the world's seed)");
  c_ss->add_option("--locations", ss.locations, "Survey only the first N locations (0 = all)")->capture_default_str();
  c_ss->add_option("--samples-per-ap", ss.samples_per_ap, "Decoded beacons per AP per location")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_ss->add_option("-o,--out", ss.out, "Output log (default: <output dir>/survey.csv)");
  c_ss->add_option("--per-location-dir", ss.per_location_dir,
                   "Also write one location-free log per location into this directory");
  c_ss->add_option("--grid-out", ss.grid_out, "Also write the grid used as CSV");

  SynthCaptureArgs sc;
  auto* c_sc = app.add_subcommand("synth-capture", "Write a synthetic IQ capture (cf32 + JSON sidecar)");
  add_world_options(c_sc, sc.where);
  c_sc->add_option("--location", sc.location, "Location id")->capture_default_str();
  c_sc->add_option("--ap", sc.ap, "AP index in the world")->capture_default_str();
  c_sc->add_option("--seed", sc.seed, "Capture seed")->capture_default_str();
  c_sc->add_option("--beacons", sc.beacons, "Beacons in the capture")->capture_default_str();
  c_sc->add_flag("--noise-only", sc.noise_only, "Receiver noise only, no beacon");
  c_sc->add_option("--sample-rate", sc.sample_rate, "Capture sample rate in Hz")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_sc->add_option("-o,--out", sc.out, "IQ file; the sidecar gets a .json suffix (default: <output dir>/capture.cf32)");

  DecodeArgs dc;
  auto* c_dc = app.add_subcommand("decode", "Decode beacons from an IQ capture into survey log rows");
  c_dc->add_option("iq", dc.iq, "IQ file (interleaved float32 little-endian)")->required()->check(CLI::ExistingFile);
  c_dc->add_option("--meta", dc.meta, "Metadata sidecar (default: <iq>.json)")->check(CLI::ExistingFile);
  c_dc->add_option("--location", dc.location, "Tag rows with this location id (adds the location_id column)");
  c_dc->add_option("-o,--out", dc.out, "Log to append to (default: <output dir>/decoded.csv)");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a one-vs-one SVM from a survey log and save the model");
  c_tr->add_option("log", tr.log, "Survey log with a location_id column")->required()->check(CLI::ExistingFile);
  add_world_options(c_tr, tr.where);
  c_tr->add_option("--aps", tr.aps, "Number of APs used as features")->capture_default_str();
  c_tr->add_option("--features", tr.features, "rss_only or rss_plus_channel")->capture_default_str();
  c_tr->add_option("--granularity", tr.granularity, "4ft, 8ft or 12ft")->capture_default_str();
  c_tr->add_option("--train-per-location", tr.train_per_location,
                   "Use only the first N rows per location (0 = all rows)")
      ->capture_default_str();
  c_tr->add_option("--C", tr.C, "Soft-margin penalty")->capture_default_str()->check(CLI::PositiveNumber);
  c_tr->add_option("--gamma", tr.gamma, "RBF gamma (0 = 1/feature count)")->capture_default_str();
  c_tr->add_option("-o,--out", tr.out, "Model file (default: <output dir>/model.svm)");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate the scenario matrix on a survey log");
  c_ev->add_option("log", ev.log, "Survey log with a location_id column")->required()->check(CLI::ExistingFile);
  add_world_options(c_ev, ev.where);
  c_ev->add_option("--granularity", ev.granularities, "4ft, 8ft and/or 12ft (default: all)");
  c_ev->add_option("--aps", ev.aps, "AP counts, 1 and/or 2 (default: both)");
  c_ev->add_option("--features", ev.features, "rss_only and/or rss_plus_channel (default: both)");
  c_ev->add_option("--seed", ev.seed, "Scenario seed (used by --shuffle)")->capture_default_str();
  c_ev->add_option("--train-per-location", ev.train_per_location, "Training rows per location")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_ev->add_flag("--shuffle", ev.shuffle, "Shuffle each location's rows with the seed before splitting");
  c_ev->add_flag("--with-mean", ev.with_mean, "Add an arithmetic-mean error row to the table");
  c_ev->add_option("-o,--out-dir", ev.out_dir, "Directory for reports.csv, summary.csv and cdf_*.csv");

  ReportArgs rp;
  auto* c_rp = app.add_subcommand("report", "Render the summary table from report CSVs, averaging across files");
  c_rp->add_option("reports", rp.inputs, "reports.csv files from eval")->required()->check(CLI::ExistingFile);
  c_rp->add_flag("--with-mean", rp.with_mean, "Add an arithmetic-mean error row");
  c_rp->add_option("-o,--out", rp.out, "Summary CSV (default: <output dir>/summary.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_ss) cmd_synth_survey(ss, ctx);
    else if (*c_sc) cmd_synth_capture(sc, ctx);
    else if (*c_dc) cmd_decode(dc, ctx);
    else if (*c_tr) cmd_train(tr, ctx);
    else if (*c_ev) cmd_eval(ev, ctx);
    else if (*c_rp) cmd_report(rp, ctx);
    return kExitOk;
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace wlanfp::cli
