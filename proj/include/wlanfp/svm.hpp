#pragma once

// C-SVC with an SMO solver (maximal violating pair working-set selection),
// one-vs-one multiclass voting over a shared support-vector pool, a min-max
// feature scaler and a versioned text model format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wlanfp/error.hpp"
#include "wlanfp/radiomap.hpp"

namespace wlanfp {

enum class KernelType { Linear, Rbf };

inline std::string to_string(KernelType k) { return k == KernelType::Linear ? "linear" : "rbf"; }

inline KernelType parse_kernel(std::string_view s) {
  if (s == "linear") return KernelType::Linear;
  if (s == "rbf") return KernelType::Rbf;
  throw InvalidArgument("unknown kernel '" + std::string(s) + "'");
}

struct SvmParams {
  double C = 1.0;
  KernelType kernel = KernelType::Rbf;
  double gamma = 0.0;  // <= 0 means 1 / feature count
  double tol = 1e-3;   // stopping tolerance on the maximal violation
  std::size_t max_iter = 10'000'000;

  void validate() const {
    if (!(C > 0) || !std::isfinite(C)) throw InvalidArgument("C must be positive");
    if (!(tol > 0)) throw InvalidArgument("tolerance must be positive");
    if (!std::isfinite(gamma)) throw InvalidArgument("gamma must be finite");
  }
};

struct Kernel {
  KernelType type = KernelType::Rbf;
  double gamma = 1.0;

  double operator()(std::span<const double> a, std::span<const double> b) const {
    if (type == KernelType::Linear) {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      return s;
    }
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double t = a[i] - b[i];
      d += t * t;
    }
    return std::exp(-gamma * d);
  }
};

inline Kernel make_kernel(const SvmParams& p, std::size_t n_features) {
  return {p.kernel, p.gamma > 0 ? p.gamma : 1.0 / static_cast<double>(std::max<std::size_t>(n_features, 1))};
}

// ---------------------------------------------------------------- scaling

/// Per-column affine map of the training range onto [-1, 1]. Constant
/// columns map to 0.
struct FeatureScaler {
  std::vector<double> lo, hi;

  static FeatureScaler fit(const FeatureMatrix& x) {
    if (x.rows() == 0) throw InvalidArgument("cannot fit a scaler on zero rows");
    FeatureScaler s;
    s.lo.assign(x.cols, std::numeric_limits<double>::infinity());
    s.hi.assign(x.cols, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto row = x.row(r);
      for (std::size_t c = 0; c < x.cols; ++c) {
        if (!std::isfinite(row[c])) throw NumericError("non-finite feature in training data");
        s.lo[c] = std::min(s.lo[c], row[c]);
        s.hi[c] = std::max(s.hi[c], row[c]);
      }
    }
    return s;
  }

  void apply(std::span<double> row) const {
    if (row.size() != lo.size()) throw InvalidArgument("feature width does not match scaler");
    for (std::size_t c = 0; c < row.size(); ++c)
      row[c] = hi[c] > lo[c] ? -1.0 + 2.0 * (row[c] - lo[c]) / (hi[c] - lo[c]) : 0.0;
  }

  FeatureMatrix apply(const FeatureMatrix& x) const {
    FeatureMatrix out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) apply(out.row(r));
    return out;
  }
};

// ---------------------------------------------------------------- binary SMO

/// Result of one two-class problem. `alpha` covers every training row;
/// `coef`, `support` and `support_vectors` only the rows with alpha > 0.
/// `support_vectors` is filled when trained from features.
struct BinarySvm {
  std::vector<double> alpha;
  std::vector<std::size_t> support;
  FeatureMatrix support_vectors;
  Kernel kernel;
  std::vector<double> coef;  // alpha_i * y_i
  double rho = 0.0;          // decision = sum coef_i K(x_i, x) - rho
  double objective = 0.0;    // 0.5 a'Qa - e'a
  std::size_t iterations = 0;
};

namespace svm {

namespace detail {

inline bool in_up(double y, double a, double C) { return (y > 0 && a < C) || (y < 0 && a > 0); }
inline bool in_low(double y, double a, double C) { return (y > 0 && a > 0) || (y < 0 && a < C); }

}  // namespace detail

/// Dense kernel matrix over the rows of `x`.
inline std::vector<double> gram(const FeatureMatrix& x, const Kernel& k) {
  const std::size_t n = x.rows();
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) K[i * n + j] = K[j * n + i] = k(x.row(i), x.row(j));
  return K;
}

/// Dual objective 0.5 a'Qa - e'a with Q_ij = y_i y_j K_ij.
inline double dual_objective(const std::vector<double>& K, const std::vector<double>& y,
                             const std::vector<double>& alpha) {
  const std::size_t n = y.size();
  double quad = 0, lin = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] == 0) continue;
    lin += alpha[i];
    for (std::size_t j = 0; j < n; ++j) quad += alpha[i] * alpha[j] * y[i] * y[j] * K[i * n + j];
  }
  return 0.5 * quad - lin;
}

/// SMO on a precomputed kernel matrix, labels in {-1, +1}.
inline BinarySvm solve_smo(const std::vector<double>& K, const std::vector<double>& y, double C, double tol,
                           std::size_t max_iter = 10'000'000) {
  const std::size_t n = y.size();
  if (K.size() != n * n) throw InvalidArgument("kernel matrix size does not match labels");
  bool pos = false, neg = false;
  for (double v : y) {
    if (v != 1.0 && v != -1.0) throw InvalidArgument("binary labels must be +1 or -1");
    (v > 0 ? pos : neg) = true;
  }
  if (!pos || !neg) throw InvalidArgument("binary problem needs both classes");

  BinarySvm m;
  m.alpha.assign(n, 0.0);
  std::vector<double> G(n, -1.0);  // gradient of the dual objective
  auto& a = m.alpha;
  constexpr double kTau = 1e-12;

  for (; m.iterations < max_iter; ++m.iterations) {
    double gmax = -std::numeric_limits<double>::infinity(), gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * G[t];
      if (detail::in_up(y[t], a[t], C) && v > gmax) gmax = v, i = t;
      if (detail::in_low(y[t], a[t], C) && v < gmin) gmin = v, j = t;
    }
    if (i == n || j == n || gmax - gmin < tol) break;

    const double Kii = K[i * n + i], Kjj = K[j * n + j], Kij = K[i * n + j];
    const double old_ai = a[i], old_aj = a[j];
    if (y[i] != y[j]) {
      double quad = Kii + Kjj - 2 * Kij;
      if (quad <= 0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0) {
        if (a[j] < 0) a[j] = 0, a[i] = diff;
      } else if (a[i] < 0) {
        a[i] = 0, a[j] = -diff;
      }
      if (diff > 0) {
        if (a[i] > C) a[i] = C, a[j] = C - diff;
      } else if (a[j] > C) {
        a[j] = C, a[i] = C + diff;
      }
    } else {
      double quad = Kii + Kjj - 2 * Kij;
      if (quad <= 0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > C) {
        if (a[i] > C) a[i] = C, a[j] = sum - C;
      } else if (a[j] < 0) {
        a[j] = 0, a[i] = sum;
      }
      if (sum > C) {
        if (a[j] > C) a[j] = C, a[i] = sum - C;
      } else if (a[i] < 0) {
        a[i] = 0, a[j] = sum;
      }
    }
    const double dai = a[i] - old_ai, daj = a[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t)
      G[t] += y[t] * (y[i] * K[t * n + i] * dai + y[j] * K[t * n + j] * daj);
  }

  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (a[t] >= C) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (a[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  m.rho = n_free ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2;

  double obj = 0;
  for (std::size_t t = 0; t < n; ++t) {
    obj += a[t] * (G[t] - 1.0);
    if (a[t] > 0) {
      m.support.push_back(t);
      m.coef.push_back(a[t] * y[t]);
    }
  }
  m.objective = obj / 2;
  return m;
}

inline BinarySvm train_binary_smo(const FeatureMatrix& x, const std::vector<double>& y, const SvmParams& p) {
  p.validate();
  if (x.rows() != y.size()) throw InvalidArgument("feature rows and labels differ in count");
  const Kernel k = make_kernel(p, x.cols);
  BinarySvm m = solve_smo(gram(x, k), y, p.C, p.tol, p.max_iter);
  m.kernel = k;
  m.support_vectors.cols = x.cols;
  for (std::size_t s : m.support) m.support_vectors.push_row(x.row(s));
  return m;
}

inline double decision_value(const BinarySvm& m, std::span<const double> x) {
  if (x.size() != m.support_vectors.cols) throw InvalidArgument("feature width does not match the machine");
  double s = -m.rho;
  for (std::size_t t = 0; t < m.coef.size(); ++t) s += m.coef[t] * m.kernel(m.support_vectors.row(t), x);
  return s;
}

/// Per-point KKT check on the margins y_i f(x_i): alpha = 0 needs margin
/// >= 1 - tol, free points |margin - 1| <= tol, alpha = C margin <= 1 + tol.
/// Box and equality feasibility are reported separately.
struct KktReport {
  double max_violation = 0.0;
  double box_violation = 0.0;
  double equality_violation = 0.0;
  bool ok(double tol) const { return max_violation <= tol && box_violation <= 0.0 && equality_violation <= 1e-9; }
};

inline KktReport kkt_audit(const std::vector<double>& K, const std::vector<double>& y,
                           const std::vector<double>& alpha, double rho, double C) {
  const std::size_t n = y.size();
  KktReport r;
  double eq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r.box_violation = std::max({r.box_violation, -alpha[i], alpha[i] - C});
    eq += y[i] * alpha[i];
    double f = -rho;
    for (std::size_t j = 0; j < n; ++j) f += alpha[j] * y[j] * K[i * n + j];
    const double margin = y[i] * f;
    double v = 0;
    if (alpha[i] <= 0)
      v = 1.0 - margin;
    else if (alpha[i] >= C)
      v = margin - 1.0;
    else
      v = std::abs(margin - 1.0);
    r.max_violation = std::max(r.max_violation, v);
  }
  r.equality_violation = std::abs(eq);
  return r;
}

}  // namespace svm

// ---------------------------------------------------------------- multiclass

/// One-vs-one machine between classes[first] (positive) and classes[second].
struct PairMachine {
  std::size_t first = 0, second = 0;
  std::vector<std::size_t> sv;  // indices into the shared pool
  std::vector<double> coef;
  double rho = 0.0;
};

struct MulticlassModel {
  SvmParams params;
  Kernel kernel;
  FeatureScaler scaler;
  FeatureMode feature_mode = FeatureMode::RssOnly;
  std::vector<ApIdentity> ap_set;
  std::vector<int> classes;  // ascending
  FeatureMatrix pool;        // scaled support vectors shared by all machines
  std::vector<PairMachine> machines;

  std::size_t n_features() const { return scaler.lo.size(); }
};

namespace svm {

/// Trains every class pair on scaled features. Rows in the pool appear once
/// however many machines use them.
inline MulticlassModel train_multiclass(const LabeledDataset& ds, const SvmParams& p = {}) {
  p.validate();
  const auto& x = ds.features;
  if (x.rows() != ds.labels.size() || x.rows() == 0) throw InvalidArgument("training set is empty or inconsistent");
  MulticlassModel m;
  m.params = p;
  m.feature_mode = ds.feature_mode;
  m.ap_set = ds.ap_set;
  m.scaler = FeatureScaler::fit(x);
  m.kernel = make_kernel(p, x.cols);
  const FeatureMatrix xs = m.scaler.apply(x);

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t r = 0; r < ds.labels.size(); ++r) by_class[ds.labels[r]].push_back(r);
  if (by_class.size() < 2) throw InvalidArgument("training set needs at least two classes");
  std::vector<std::vector<std::size_t>> members;
  for (auto& [c, rows] : by_class) {
    m.classes.push_back(c);
    members.push_back(std::move(rows));
  }

  const std::vector<double> K = gram(xs, m.kernel);
  const std::size_t N = xs.rows();
  std::vector<std::size_t> pool_index(N, SIZE_MAX);
  m.pool.cols = xs.cols;

  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      std::vector<std::size_t> rows = members[a];
      rows.insert(rows.end(), members[b].begin(), members[b].end());
      const std::size_t n = rows.size();
      std::vector<double> y(n), Ksub(n * n);
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = i < members[a].size() ? 1.0 : -1.0;
        for (std::size_t j = 0; j < n; ++j) Ksub[i * n + j] = K[rows[i] * N + rows[j]];
      }
      const BinarySvm bm = solve_smo(Ksub, y, p.C, p.tol, p.max_iter);
      PairMachine pm{a, b, {}, bm.coef, bm.rho};
      for (std::size_t s : bm.support) {
        const std::size_t r = rows[s];
        if (pool_index[r] == SIZE_MAX) {
          pool_index[r] = m.pool.rows();
          m.pool.push_row(xs.row(r));
        }
        pm.sv.push_back(pool_index[r]);
      }
      m.machines.push_back(std::move(pm));
    }
  }
  return m;
}

/// Majority vote; ties go to the lowest class id.
inline int predict(const MulticlassModel& m, std::span<const double> raw) {
  std::vector<double> x(raw.begin(), raw.end());
  m.scaler.apply(x);
  std::vector<double> kv(m.pool.rows());
  for (std::size_t i = 0; i < kv.size(); ++i) kv[i] = m.kernel(m.pool.row(i), x);
  std::vector<int> votes(m.classes.size(), 0);
  for (const auto& pm : m.machines) {
    double s = -pm.rho;
    for (std::size_t t = 0; t < pm.sv.size(); ++t) s += pm.coef[t] * kv[pm.sv[t]];
    ++votes[s > 0 ? pm.first : pm.second];
  }
  const auto best = std::max_element(votes.begin(), votes.end()) - votes.begin();
  return m.classes[static_cast<std::size_t>(best)];
}

inline std::vector<int> predict(const MulticlassModel& m, const FeatureMatrix& x) {
  if (x.cols != m.n_features()) throw InvalidArgument("feature width does not match the model");
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict(m, x.row(r));
  return out;
}

// ---------------------------------------------------------------- model file

inline constexpr const char* kModelMagic = "wlanfp-svm";
inline constexpr int kModelVersion = 1;

namespace detail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T expect(std::istream& is, const char* key) {
  std::string k;
  T v{};
  if (!(is >> k) || k != key) throw ParseError(std::string("model file: expected '") + key + "'");
  if (!(is >> v)) throw ParseError(std::string("model file: bad value for '") + key + "'");
  return v;
}

inline double read_double(std::istream& is) {
  std::string s;
  if (!(is >> s)) throw ParseError("model file: truncated");
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    // stod rejects subnormal/out-of-range spellings; fall back to strtod
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw ParseError("model file: malformed number '" + s + "'");
    return v;
  }
}

}  // namespace detail

inline void save_model(const MulticlassModel& m, std::ostream& os) {
  using detail::g17;
  os << kModelMagic << ' ' << kModelVersion << '\n';
  os << "kernel " << to_string(m.params.kernel) << '\n';
  os << "C " << g17(m.params.C) << '\n';
  os << "gamma " << g17(m.kernel.gamma) << '\n';
  os << "tol " << g17(m.params.tol) << '\n';
  os << "feature_mode " << to_string(m.feature_mode) << '\n';
  os << "aps " << m.ap_set.size() << '\n';
  for (const auto& ap : m.ap_set) os << ap.mac.to_string() << ' ' << std::quoted(ap.ssid) << '\n';
  os << "features " << m.n_features() << '\n';
  for (std::size_t c = 0; c < m.n_features(); ++c) os << g17(m.scaler.lo[c]) << ' ' << g17(m.scaler.hi[c]) << '\n';
  os << "classes " << m.classes.size() << '\n';
  for (std::size_t i = 0; i < m.classes.size(); ++i) os << (i ? " " : "") << m.classes[i];
  os << '\n';
  os << "pool " << m.pool.rows() << '\n';
  for (std::size_t r = 0; r < m.pool.rows(); ++r) {
    const auto row = m.pool.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? " " : "") << g17(row[c]);
    os << '\n';
  }
  os << "machines " << m.machines.size() << '\n';
  for (const auto& pm : m.machines) {
    os << pm.first << ' ' << pm.second << ' ' << g17(pm.rho) << ' ' << pm.sv.size();
    for (std::size_t t = 0; t < pm.sv.size(); ++t) os << ' ' << pm.sv[t] << ' ' << g17(pm.coef[t]);
    os << '\n';
  }
  os << "end\n";
}

inline MulticlassModel load_model(std::istream& is) {
  MulticlassModel m;
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kModelMagic) throw ParseError("not a wlanfp SVM model file");
  if (version != kModelVersion) throw ParseError("unsupported model version " + std::to_string(version));
  try {
    m.params.kernel = parse_kernel(detail::expect<std::string>(is, "kernel"));
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what());
  }
  std::string key;
  auto num = [&](const char* name) {
    if (!(is >> key) || key != name) throw ParseError(std::string("model file: expected '") + name + "'");
    return detail::read_double(is);
  };
  m.params.C = num("C");
  m.kernel = {m.params.kernel, num("gamma")};
  m.params.gamma = m.kernel.gamma;
  m.params.tol = num("tol");
  try {
    m.feature_mode = parse_feature_mode(detail::expect<std::string>(is, "feature_mode"));
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what());
  }
  const auto n_aps = detail::expect<std::size_t>(is, "aps");
  for (std::size_t i = 0; i < n_aps; ++i) {
    std::string mac, ssid;
    if (!(is >> mac >> std::quoted(ssid))) throw ParseError("model file: truncated AP list");
    m.ap_set.push_back({ssid, MacAddress::parse(mac)});
  }
  const auto nf = detail::expect<std::size_t>(is, "features");
  for (std::size_t c = 0; c < nf; ++c) {
    m.scaler.lo.push_back(detail::read_double(is));
    m.scaler.hi.push_back(detail::read_double(is));
  }
  const auto nc = detail::expect<std::size_t>(is, "classes");
  for (std::size_t i = 0; i < nc; ++i) {
    int c = 0;
    if (!(is >> c)) throw ParseError("model file: truncated class list");
    m.classes.push_back(c);
  }
  const auto np = detail::expect<std::size_t>(is, "pool");
  m.pool.cols = nf;
  m.pool.values.reserve(np * nf);
  for (std::size_t i = 0; i < np * nf; ++i) m.pool.values.push_back(detail::read_double(is));
  const auto nm = detail::expect<std::size_t>(is, "machines");
  for (std::size_t i = 0; i < nm; ++i) {
    PairMachine pm;
    std::size_t nsv = 0;
    if (!(is >> pm.first >> pm.second)) throw ParseError("model file: truncated machine");
    pm.rho = detail::read_double(is);
    if (!(is >> nsv)) throw ParseError("model file: truncated machine");
    for (std::size_t t = 0; t < nsv; ++t) {
      std::size_t idx = 0;
      if (!(is >> idx) || idx >= np) throw ParseError("model file: support index out of range");
      pm.sv.push_back(idx);
      pm.coef.push_back(detail::read_double(is));
    }
    if (pm.first >= nc || pm.second >= nc) throw ParseError("model file: class index out of range");
    m.machines.push_back(std::move(pm));
  }
  std::string end;
  if (!(is >> end) || end != "end") throw ParseError("model file: missing end marker");
  return m;
}

inline void save_model(const MulticlassModel& m, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write model " + path.string());
  save_model(m, os);
  if (!os) throw IoError("failed writing model " + path.string());
}

inline MulticlassModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open model " + path.string());
  return load_model(is);
}

}  // namespace svm
}  // namespace wlanfp
