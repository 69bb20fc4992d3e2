#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <queue>
#include <stdexcept>
#include <vector>

#include "cavityio/quadrature.hpp"

namespace cavityio {

// Adaptive Filon quadrature for integrals of the form
//   int_a^b g(w) e^{i c w} dw
// with a smooth envelope g and an arbitrarily large frequency c.  Panels are
// refined on the envelope alone: on each panel the envelope is interpolated
// by a degree-7 polynomial at Gauss-Legendre nodes and the polynomial times
// the phase factor is integrated exactly, so panels may span many thousands
// of oscillation periods.  Mildly oscillatory panels fall back to plain
// Gauss-Kronrod on the full product.

namespace filon {

inline constexpr double kNodes8[8] = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
    -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
    0.7966664774136267,  0.9602898564975363};

// Moments M_k = int_{-1}^{1} s^k e^{i theta s} ds by forward recursion
// (stable for |theta| > k, which the caller guarantees).
inline void moments(double theta, int n, std::complex<double>* M) {
  const std::complex<double> itheta(0.0, theta);
  const std::complex<double> ep = std::exp(itheta);
  const std::complex<double> em = std::conj(ep);
  M[0] = (ep - em) / itheta;
  for (int k = 1; k < n; ++k) {
    const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
    M[k] = (ep - sgn * em) / itheta - double(k) / itheta * M[k - 1];
  }
}

// Monomial coefficients of the interpolating polynomial through
// (nodes[i], vals[i]) via the Newton form.
inline void monomial_fit(const double* nodes, const std::complex<double>* vals,
                         int n, std::complex<double>* coef) {
  std::vector<std::complex<double>> dd(vals, vals + n);
  for (int j = 1; j < n; ++j)
    for (int i = n - 1; i >= j; --i)
      dd[i] = (dd[i] - dd[i - 1]) / (nodes[i] - nodes[i - j]);
  for (int k = 0; k < n; ++k) coef[k] = 0.0;
  // Horner-style expansion of sum_j dd[j] prod_{m<j} (s - nodes[m])
  for (int j = n - 1; j >= 0; --j) {
    for (int k = n - 1; k >= 1; --k)
      coef[k] = coef[k - 1] - nodes[j] * coef[k];
    coef[0] = dd[j] - nodes[j] * coef[0];
  }
}

}  // namespace filon

// Integrate g(w) e^{i c w} over one panel by degree-(n-1) Filon fit; also
// returns a degree-5 estimate from the six interior nodes for error control.
template <typename F>
inline void filon_panel(F&& g, double c, double a, double b,
                        std::complex<double>& value, double& err,
                        std::size_t& evals) {
  using cd = std::complex<double>;
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double theta = c * half;

  cd vals[8];
  for (int i = 0; i < 8; ++i) vals[i] = g(mid + half * filon::kNodes8[i]);
  evals += 8;

  cd M[8];
  filon::moments(theta, 8, M);

  cd coef[8];
  filon::monomial_fit(filon::kNodes8, vals, 8, coef);
  cd s8 = 0.0;
  for (int k = 0; k < 8; ++k) s8 += coef[k] * M[k];

  filon::monomial_fit(filon::kNodes8 + 1, vals + 1, 6, coef);
  cd s6 = 0.0;
  for (int k = 0; k < 6; ++k) s6 += coef[k] * M[k];

  const cd phase = std::exp(cd(0.0, c * mid));
  value = half * phase * s8;
  err = half * std::abs(s8 - s6);
}

template <typename F>
inline QuadResult<std::complex<double>> integrate_oscillatory(
    F&& g, double c, double a, double b, double abs_tol = 1e-14,
    double rel_tol = 1e-9, std::vector<double> breakpoints = {},
    std::size_t max_panels = 20000) {
  using cd = std::complex<double>;
  if (!(b > a)) {
    if (a == b) return {cd{}, 0.0, true, 0};
    throw std::invalid_argument("integrate_oscillatory: requires b >= a");
  }

  struct Panel {
    double a, b, err;
    cd val;
    bool operator<(const Panel& o) const { return err < o.err; }
  };

  QuadResult<cd> out;
  auto do_panel = [&](double lo, double hi, cd& val, double& err) {
    // fewer than ~2.5 periods: plain Gauss-Kronrod on the product resolves it
    if (std::abs(c) * (hi - lo) < 16.0) {
      auto prod = [&](double w) { return g(w) * std::exp(cd(0.0, c * w)); };
      gk15_panel(prod, lo, hi, val, err, out.evals);
    } else {
      filon_panel(g, c, lo, hi, val, err, out.evals);
    }
  };

  breakpoints.push_back(a);
  breakpoints.push_back(b);
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()),
                    breakpoints.end());

  std::priority_queue<Panel> heap;
  cd total{};
  double total_err = 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    const double lo = breakpoints[i];
    const double hi = breakpoints[i + 1];
    if (hi <= a || lo >= b || hi <= lo) continue;
    Panel p{std::max(lo, a), std::min(hi, b), 0.0, cd{}};
    do_panel(p.a, p.b, p.val, p.err);
    total += p.val;
    total_err += p.err;
    heap.push(p);
  }

  std::size_t panels = heap.size();
  while (panels < max_panels) {
    const double target = std::max(abs_tol, rel_tol * std::abs(total));
    if (total_err <= target) break;
    Panel worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {
      heap.push(worst);
      break;
    }
    Panel left{worst.a, mid, 0.0, cd{}};
    Panel right{mid, worst.b, 0.0, cd{}};
    do_panel(left.a, left.b, left.val, left.err);
    do_panel(right.a, right.b, right.val, right.err);
    total += left.val + right.val - worst.val;
    total_err += left.err + right.err - worst.err;
    heap.push(left);
    heap.push(right);
    ++panels;
  }

  out.value = total;
  out.error = total_err;
  out.converged = total_err <= std::max(abs_tol, rel_tol * std::abs(total));
  return out;
}

}  // namespace cavityio
