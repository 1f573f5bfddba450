#pragma once

// Reference implementations used only by the tests. Each one takes a
// different route from the library code it checks.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

using Complex = std::complex<double>;

/// Scrambler as a literal delay line: taps at delays 4 and 7, fed with the
/// output. `delays[k]` is the register content at delay k+1.
inline std::vector<std::uint8_t> lfsr_scramble(const std::vector<std::uint8_t>& in, std::deque<int> delays) {
  std::vector<std::uint8_t> out;
  for (auto b : in) {
    const int y = b ^ delays[3] ^ delays[6];
    out.push_back(static_cast<std::uint8_t>(y));
    delays.push_front(y);
    delays.pop_back();
  }
  return out;
}

/// Remainder of a bit polynomial (MSB first) divided by `poly` of `degree`.
inline std::vector<int> gf2_remainder(std::vector<int> dividend, const std::vector<int>& poly) {
  const std::size_t deg = poly.size() - 1;
  for (std::size_t i = 0; i + deg < dividend.size(); ++i)
    if (dividend[i])
      for (std::size_t k = 0; k < poly.size(); ++k) dividend[i + k] ^= poly[k];
  return {dividend.end() - static_cast<std::ptrdiff_t>(deg), dividend.end()};
}

/// Header CRC by long division: message times x^16 plus the all-ones preset
/// term, remainder complemented. Returned MSB (x^15) first.
inline std::uint16_t crc16_division(const std::vector<std::uint8_t>& bits) {
  std::vector<int> d(bits.begin(), bits.end());
  d.resize(bits.size() + 16, 0);
  for (std::size_t i = 0; i < 16; ++i) d[i] ^= 1;
  std::vector<int> poly(17, 0);
  poly[0] = 1;  // x^16
  for (int e : {12, 5, 0}) poly[16 - e] = 1;
  const auto rem = gf2_remainder(d, poly);
  std::uint16_t v = 0;
  for (int b : rem) v = static_cast<std::uint16_t>(v << 1 | (b ^ 1));
  return v;
}

/// Frame CRC by long division over the bits in transmit order.
inline std::uint32_t crc32_division(const std::vector<std::uint8_t>& octets) {
  std::vector<int> d;
  for (auto o : octets)
    for (int k = 0; k < 8; ++k) d.push_back((o >> k) & 1);
  d.resize(d.size() + 32, 0);
  for (std::size_t i = 0; i < 32 && i < octets.size() * 8; ++i) d[i] ^= 1;
  std::vector<int> poly(33, 0);
  poly[0] = 1;
  for (int e : {26, 23, 22, 16, 12, 11, 10, 8, 7, 5, 4, 2, 1, 0}) poly[32 - e] = 1;
  const auto rem = gf2_remainder(d, poly);
  std::uint32_t v = 0;  // x^31 is sent first and lands in bit 0
  for (std::size_t i = 0; i < 32; ++i) v |= static_cast<std::uint32_t>(rem[i] ^ 1) << i;
  return v;
}

/// Aperiodic autocorrelation at every lag 0..n-1.
template <class Seq>
std::vector<int> aperiodic_autocorrelation(const Seq& s) {
  std::vector<int> out;
  for (std::size_t lag = 0; lag < s.size(); ++lag) {
    int acc = 0;
    for (std::size_t i = 0; i + lag < s.size(); ++i) acc += s[i] * s[i + lag];
    out.push_back(acc);
  }
  return out;
}

/// Frequency of the strongest tone by DTFT search: coarse grid over
/// [lo, hi] then golden-section refinement of the magnitude peak.
inline double dtft_peak_hz(const std::vector<Complex>& x, double fs, double lo, double hi, std::size_t grid = 2001) {
  auto mag = [&](double f) {
    Complex acc{};
    const double w = -2.0 * std::numbers::pi * f / fs;
    for (std::size_t n = 0; n < x.size(); ++n) acc += x[n] * std::polar(1.0, w * static_cast<double>(n));
    return std::abs(acc);
  };
  double best_f = lo, best = -1;
  const double step = (hi - lo) / static_cast<double>(grid - 1);
  for (std::size_t i = 0; i < grid; ++i) {
    const double f = lo + step * static_cast<double>(i);
    const double m = mag(f);
    if (m > best) best = m, best_f = f;
  }
  double a = best_f - step, b = best_f + step;
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 80; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (mag(c) > mag(d)) b = d; else a = c;
  }
  return (a + b) / 2;
}

/// Dense complex linear solve, Gaussian elimination with partial pivoting.
inline std::vector<Complex> solve_linear(std::vector<std::vector<Complex>> A, std::vector<Complex> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const Complex f = A[r][c] / A[c][c];
      for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<Complex> x(n);
  for (std::size_t r = n; r-- > 0;) {
    Complex acc = b[r];
    for (std::size_t k = r + 1; k < n; ++k) acc -= A[r][k] * x[k];
    x[r] = acc / A[r][r];
  }
  return x;
}

/// Real variant for the QP oracle.
inline std::optional<std::vector<double>> solve_real(std::vector<std::vector<double>> A, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    if (std::abs(A[piv][c]) < 1e-12) return std::nullopt;
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double acc = b[r];
    for (std::size_t k = r + 1; k < n; ++k) acc -= A[r][k] * x[k];
    x[r] = acc / A[r][r];
  }
  return x;
}

struct DualSolution {
  std::vector<double> alpha;
  double objective = std::numeric_limits<double>::infinity();
  double rho = 0.0;  // only meaningful when some alpha is free
  bool has_free = false;
};

/// Exact minimizer of 0.5 a'Qa - e'a, 0 <= a <= C, y'a = 0 for tiny n.
/// Enumerates every assignment of each alpha to {0, C, free}; for the free
/// set the KKT system [Q_FF y_F; y_F' 0][a_F; b] = [1 - Q_FB a_B; -y_B' a_B]
/// is solved, and feasible candidates keep the lowest objective.
inline DualSolution exact_dual(const std::vector<double>& K, const std::vector<double>& y, double C) {
  const std::size_t n = y.size();
  auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K[i * n + j]; };
  DualSolution best;
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n; ++i) combos *= 3;
  for (std::size_t code = 0; code < combos; ++code) {
    std::vector<int> state(n);
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i) state[i] = static_cast<int>(c % 3), c /= 3;
    std::vector<double> a(n, 0.0);
    std::vector<std::size_t> F;
    for (std::size_t i = 0; i < n; ++i) {
      if (state[i] == 1) a[i] = C;
      if (state[i] == 2) F.push_back(i);
    }
    double rho = 0;
    if (!F.empty()) {
      const std::size_t m = F.size();
      std::vector<std::vector<double>> A(m + 1, std::vector<double>(m + 1, 0.0));
      std::vector<double> b(m + 1, 0.0);
      double ya_bound = 0;
      for (std::size_t i = 0; i < n; ++i) ya_bound += y[i] * a[i];
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t k = 0; k < m; ++k) A[r][k] = Q(F[r], F[k]);
        A[r][m] = y[F[r]];
        A[m][r] = y[F[r]];
        double rhs = 1.0;
        for (std::size_t i = 0; i < n; ++i)
          if (state[i] == 1) rhs -= Q(F[r], i) * C;
        b[r] = rhs;
      }
      b[m] = -ya_bound;
      const auto sol = solve_real(A, b);
      if (!sol) continue;
      bool inside = true;
      for (std::size_t r = 0; r < m; ++r) {
        if ((*sol)[r] <= 1e-12 || (*sol)[r] >= C - 1e-12) inside = false;
        a[F[r]] = (*sol)[r];
      }
      if (!inside) continue;
      rho = -(*sol)[m];  // the equality multiplier is -rho
    } else {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += y[i] * a[i];
      if (std::abs(s) > 1e-12) continue;
    }
    double obj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      obj -= a[i];
      for (std::size_t j = 0; j < n; ++j) obj += 0.5 * a[i] * a[j] * Q(i, j);
    }
    if (obj < best.objective - 1e-12) {
      best.alpha = a;
      best.objective = obj;
      best.rho = rho;
      best.has_free = !F.empty();
    }
  }
  return best;
}

/// Differentially coherent DBPSK bit error probability at a given Eb/N0.
inline double dbpsk_ber(double ebn0) { return 0.5 * std::exp(-ebn0); }

}  // namespace oracle
