#pragma once

// Scenario harness: per-location train/test split, distance errors, CDFs,
// the scenario matrix and the summary table.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "wlanfp/error.hpp"
#include "wlanfp/radiomap.hpp"
#include "wlanfp/svm.hpp"

namespace wlanfp {

struct ScenarioSpec {
  int granularity_ft = 4;  // 4, 8 or 12
  std::size_t ap_count = 1;
  FeatureMode feature_mode = FeatureMode::RssOnly;
  std::size_t train_per_location = 30;  // log rows per location, split evenly across APs
  std::uint64_t seed = 1;
  bool shuffle = false;  // seeded shuffle of each location's samples before the split
  SvmParams svm;

  int decimation_factor() const {
    if (granularity_ft != 4 && granularity_ft != 8 && granularity_ft != 12)
      throw InvalidArgument("granularity must be 4, 8 or 12 ft");
    return granularity_ft / 4;
  }

  std::string key() const {
    return std::to_string(granularity_ft) + "ft-" + std::to_string(ap_count) + "ap-" + to_string(feature_mode);
  }
};

/// Points (error_m, cumulative fraction), errors ascending and unique.
using Cdf = std::vector<std::pair<double, double>>;

struct EvalReport {
  ScenarioSpec scenario;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double accuracy = 0.0;
  double error_p50_m = 0.0;
  double error_mean_m = 0.0;
  double error_max_m = 0.0;
  Cdf cdf;
  std::map<std::pair<int, int>, std::size_t> confusion;  // (true, predicted) -> count
};

namespace eval {

/// First `n_train` rows of each location go to training, the rest to test.
/// The count is split evenly across the map's APs so each AP contributes
/// n_train / |APs| training samples per location.
inline std::pair<RadioMap, RadioMap> split_per_location(const RadioMap& map, std::size_t n_train) {
  if (map.aps.empty()) throw InvalidArgument("radio map has no access points");
  if (n_train == 0 || n_train % map.aps.size() != 0)
    throw InvalidArgument("training count per location must be a positive multiple of the AP count (" +
                          std::to_string(map.aps.size()) + ")");
  const std::size_t per_ap = n_train / map.aps.size();
  RadioMap train, test;
  train.grid = test.grid = map.grid;
  train.aps = test.aps = map.aps;
  for (const auto& [id, list] : map.samples) {
    for (const auto& ap : map.aps)
      if (map.count(id, ap) < 2 * per_ap)
        throw InvalidArgument("location " + std::to_string(id) + " has " + std::to_string(map.count(id, ap)) +
                              " samples from " + ap.ssid + ", needs at least " + std::to_string(2 * per_ap));
    std::vector<std::size_t> seen(map.aps.size(), 0);
    auto& tr = train.samples[id];
    auto& te = test.samples[id];
    for (const auto& s : list) {
      const auto a = static_cast<std::size_t>(
          std::find_if(map.aps.begin(), map.aps.end(), [&](const ApIdentity& ap) { return matches(s, ap); }) -
          map.aps.begin());
      if (a < map.aps.size() && seen[a]++ < per_ap)
        tr.push_back(s);
      else
        te.push_back(s);
    }
  }
  return {std::move(train), std::move(test)};
}

inline double distance_error(const LocationGrid& grid, int true_id, int predicted_id) {
  if (true_id == predicted_id) {
    grid.at(true_id);
    return 0.0;
  }
  return distance(grid.at(true_id), grid.at(predicted_id));
}

inline Cdf error_cdf(std::vector<double> errors) {
  if (errors.empty()) throw InvalidArgument("error CDF needs at least one error");
  std::sort(errors.begin(), errors.end());
  Cdf out;
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (i + 1 == errors.size() || errors[i + 1] != errors[i]) out.emplace_back(errors[i], static_cast<double>(i + 1) / n);
  return out;
}

/// Fraction of errors <= e.
inline double cdf_at(const Cdf& cdf, double e) {
  double f = 0.0;
  for (const auto& [x, p] : cdf) {
    if (x > e) break;
    f = p;
  }
  return f;
}

/// Smallest error whose cumulative fraction reaches q.
inline double cdf_quantile(const Cdf& cdf, double q) {
  for (const auto& [x, p] : cdf)
    if (p >= q) return x;
  return cdf.empty() ? 0.0 : cdf.back().first;
}

inline std::vector<ApIdentity> scenario_aps(const RadioMap& map, std::size_t ap_count) {
  if (ap_count == 0 || ap_count > map.aps.size())
    throw InvalidArgument("scenario needs " + std::to_string(ap_count) + " APs, map has " +
                          std::to_string(map.aps.size()));
  return {map.aps.begin(), map.aps.begin() + static_cast<std::ptrdiff_t>(ap_count)};
}

inline RadioMap shuffled(const RadioMap& map, std::uint64_t seed) {
  RadioMap out = map;
  for (auto& [id, list] : out.samples) {
    std::mt19937_64 rng(mix_seed({seed, static_cast<std::uint64_t>(id), 0x5u}));
    std::shuffle(list.begin(), list.end(), rng);
  }
  return out;
}

inline EvalReport evaluate(const RadioMap& map, const ScenarioSpec& spec) {
  const RadioMap dec = radiomap::decimate(spec.shuffle ? shuffled(map, spec.seed) : map, spec.decimation_factor());
  if (dec.samples.empty()) throw InvalidArgument("radio map has no samples");
  for (const auto& [id, list] : dec.samples) dec.grid.at(id);
  const auto [train_map, test_map] = split_per_location(dec, spec.train_per_location);
  const auto aps = scenario_aps(dec, spec.ap_count);
  const LabeledDataset train = radiomap::build_dataset(train_map, aps, spec.feature_mode);
  const LabeledDataset test = radiomap::build_dataset(test_map, aps, spec.feature_mode);
  if (test.labels.empty()) throw InvalidArgument("test set is empty");

  const MulticlassModel model = svm::train_multiclass(train, spec.svm);
  const std::vector<int> pred = svm::predict(model, test.features);

  EvalReport r;
  r.scenario = spec;
  r.n_train = train.labels.size();
  r.n_test = test.labels.size();
  std::vector<double> errors(pred.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    errors[i] = distance_error(dec.grid, test.labels[i], pred[i]);
    hits += pred[i] == test.labels[i];
    ++r.confusion[{test.labels[i], pred[i]}];
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
  r.error_mean_m = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
  r.error_max_m = *std::max_element(errors.begin(), errors.end());
  r.cdf = error_cdf(std::move(errors));
  r.error_p50_m = cdf_quantile(r.cdf, 0.5);
  return r;
}

// ---------------------------------------------------------------- matrix

struct ScenarioFilter {
  std::vector<int> granularities{4, 8, 12};
  std::vector<std::size_t> ap_counts{1, 2};
  std::vector<FeatureMode> modes{FeatureMode::RssOnly, FeatureMode::RssPlusChannel};
};

/// Scenarios in summary-table column order: granularity, AP count, mode.
inline std::vector<ScenarioSpec> scenario_matrix(const ScenarioFilter& f, const ScenarioSpec& base = {}) {
  std::vector<ScenarioSpec> out;
  for (int g : {4, 8, 12}) {
    if (std::find(f.granularities.begin(), f.granularities.end(), g) == f.granularities.end()) continue;
    for (std::size_t a : {std::size_t{1}, std::size_t{2}}) {
      if (std::find(f.ap_counts.begin(), f.ap_counts.end(), a) == f.ap_counts.end()) continue;
      for (FeatureMode m : {FeatureMode::RssOnly, FeatureMode::RssPlusChannel}) {
        if (std::find(f.modes.begin(), f.modes.end(), m) == f.modes.end()) continue;
        ScenarioSpec s = base;
        s.granularity_ft = g;
        s.ap_count = a;
        s.feature_mode = m;
        out.push_back(s);
      }
    }
  }
  return out;
}

/// Evaluates scenarios on up to `jobs` threads; results keep input order.
inline std::vector<EvalReport> evaluate_all(const RadioMap& map, const std::vector<ScenarioSpec>& specs,
                                            std::size_t jobs = 1) {
  std::vector<EvalReport> out(specs.size());
  std::vector<std::exception_ptr> errs(specs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        out[i] = evaluate(map, specs[i]);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(specs.size(), 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------- output

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Two decimals with trailing zeros (and a bare point) removed.
inline std::string trimmed2(double v) {
  std::string s = fmt("%.2f", v);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s == "-0" ? "0" : s;
}

}  // namespace detail

struct TableOptions {
  bool mark_p50 = true;      // flag the error row as the 50th percentile
  bool include_mean = false; // extra row with the arithmetic mean error
};

struct SummaryTable {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> footnotes;

  std::string csv() const {
    std::ostringstream os;
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << radiomap::detail::csv_field(r[i]);
      os << '\n';
    }
    for (const auto& f : footnotes) os << radiomap::detail::csv_field(f) << '\n';
    return os.str();
  }

  /// Tab separated, one line per row, footnotes last.
  std::string tsv() const {
    std::ostringstream os;
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "\t" : "") << r[i];
      os << '\n';
    }
    for (const auto& f : footnotes) os << f << '\n';
    return os.str();
  }

  /// Aligned columns; the title cell goes on its own line so it does not
  /// widen the label column.
  std::string text() const {
    auto grid = rows;
    std::ostringstream os;
    if (!grid.empty() && !grid[0].empty()) {
      os << grid[0][0] << '\n';
      grid[0][0].clear();
    }
    std::vector<std::size_t> w;
    for (const auto& r : grid)
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (w.size() <= i) w.push_back(0);
        w[i] = std::max(w[i], r[i].size());
      }
    for (const auto& r : grid) {
      std::string line;
      for (std::size_t i = 0; i < r.size(); ++i) {
        std::string cell = r[i];
        cell.resize(w[i], ' ');
        line += (i ? "  " : "") + cell;
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      os << line << '\n';
    }
    for (const auto& f : footnotes) os << f << '\n';
    return os.str();
  }
};

/// Columns follow granularity x AP count x mode; reports may arrive in any
/// order and only the scenarios present get a column.
inline SummaryTable summary_table(std::vector<EvalReport> reports, const TableOptions& opt = {}) {
  std::stable_sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    const auto& x = a.scenario;
    const auto& y = b.scenario;
    return std::tuple(x.granularity_ft, x.ap_count, x.feature_mode) <
           std::tuple(y.granularity_ft, y.ap_count, y.feature_mode);
  });
  SummaryTable t;
  std::vector<std::string> h1{"Scenario Results for WLAN fingerprinting using RSSI and channel estimates"}, h2{""}, h3{""};
  const std::string err_label = std::string("Mean Distance Error (meters)") + (opt.mark_p50 ? "*" : "");
  std::vector<std::string> acc{"Accuracy (%)"}, err{err_label}, mean{"Arithmetic Mean Error (meters)"};
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& s = reports[i].scenario;
    const bool new_g = i == 0 || reports[i - 1].scenario.granularity_ft != s.granularity_ft;
    const bool new_a = new_g || reports[i - 1].scenario.ap_count != s.ap_count;
    h1.push_back(new_g ? std::to_string(s.granularity_ft) + "Ft. Granularity" : "");
    h2.push_back(new_a ? std::to_string(s.ap_count) + " AP" : "");
    h3.push_back(s.feature_mode == FeatureMode::RssOnly ? "RSSI only" : "RSSI & Channel");
    acc.push_back(detail::fmt("%.1f%%", 100.0 * reports[i].accuracy));
    err.push_back(detail::trimmed2(reports[i].error_p50_m));
    mean.push_back(detail::trimmed2(reports[i].error_mean_m));
  }
  t.rows = {h1, h2, h3};
  if (!reports.empty()) {
    t.rows.push_back(acc);
    t.rows.push_back(err);
    if (opt.include_mean) t.rows.push_back(mean);
  }
  if (opt.mark_p50 && !reports.empty()) t.footnotes.push_back("* 50th percentile of the distance error");
  return t;
}

inline void write_report_csv(const std::vector<EvalReport>& reports, std::ostream& os) {
  os << "scenario,granularity_ft,ap_count,feature_mode,train_per_location,seed,n_train,n_test,accuracy,"
        "error_p50_m,error_mean_m,error_max_m\n";
  for (const auto& r : reports) {
    const auto& s = r.scenario;
    os << s.key() << ',' << s.granularity_ft << ',' << s.ap_count << ',' << to_string(s.feature_mode) << ','
       << s.train_per_location << ',' << s.seed << ',' << r.n_train << ',' << r.n_test << ','
       << detail::fmt("%.17g", r.accuracy) << ',' << detail::fmt("%.17g", r.error_p50_m) << ','
       << detail::fmt("%.17g", r.error_mean_m) << ',' << detail::fmt("%.17g", r.error_max_m) << '\n';
  }
}

inline void write_cdf_csv(const Cdf& cdf, std::ostream& os) {
  os << "error_m,fraction\n";
  for (const auto& [e, f] : cdf) os << detail::fmt("%.17g", e) << ',' << detail::fmt("%.17g", f) << '\n';
}

/// Reads the scenario report CSV back (CDFs and confusion are not stored).
inline std::vector<EvalReport> read_report_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || line.rfind("scenario,granularity_ft,", 0) != 0)
    throw ParseError("not a scenario report", 1);
  std::vector<EvalReport> out;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = radiomap::detail::split_csv(line, lineno);
    if (f.size() != 12) throw ParseError("report row needs 12 columns", lineno);
    EvalReport r;
    auto num = [&](std::size_t i) { return radiomap::detail::parse_number(f[i], lineno); };
    r.scenario.granularity_ft = static_cast<int>(num(1));
    r.scenario.ap_count = static_cast<std::size_t>(num(2));
    try {
      r.scenario.feature_mode = parse_feature_mode(f[3]);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), lineno);
    }
    r.scenario.train_per_location = static_cast<std::size_t>(num(4));
    r.scenario.seed = std::stoull(f[5]);
    r.n_train = static_cast<std::size_t>(num(6));
    r.n_test = static_cast<std::size_t>(num(7));
    r.accuracy = num(8);
    r.error_p50_m = num(9);
    r.error_mean_m = num(10);
    r.error_max_m = num(11);
    out.push_back(std::move(r));
  }
  return out;
}

/// Averages matching scenarios across seeds (accuracy and errors).
inline std::vector<EvalReport> average_by_scenario(const std::vector<EvalReport>& reports) {
  std::map<std::string, std::pair<EvalReport, std::size_t>> acc;
  std::vector<std::string> order;
  for (const auto& r : reports) {
    auto [it, fresh] = acc.try_emplace(r.scenario.key(), r, 0);
    if (fresh) {
      order.push_back(it->first);
      it->second.first.accuracy = it->second.first.error_p50_m = it->second.first.error_mean_m = 0;
      it->second.first.cdf.clear();
      it->second.first.confusion.clear();
    }
    auto& [sum, n] = it->second;
    sum.accuracy += r.accuracy;
    sum.error_p50_m += r.error_p50_m;
    sum.error_mean_m += r.error_mean_m;
    sum.error_max_m = std::max(sum.error_max_m, r.error_max_m);
    ++n;
  }
  std::vector<EvalReport> out;
  for (const auto& k : order) {
    auto [r, n] = acc[k];
    r.accuracy /= static_cast<double>(n);
    r.error_p50_m /= static_cast<double>(n);
    r.error_mean_m /= static_cast<double>(n);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace eval
}  // namespace wlanfp
