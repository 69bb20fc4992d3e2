#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <queue>
#include <stdexcept>
#include <vector>

namespace cavityio {

// Adaptive Gauss-Kronrod 7-15 quadrature over a finite interval.  Works for
// real- or complex-valued integrands (error measured in the absolute value of
// the scalar type).  Caller may seed breakpoints where the integrand has
// kinks or sharp features so the refinement starts in the right place.

namespace gk {

// 15-point Kronrod abscissae on [-1, 1] (symmetric; nonnegative half listed)
// and the matching Kronrod / embedded 7-point Gauss weights.
inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};

inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};

inline constexpr double kWg[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

}  // namespace gk

template <typename T>
struct QuadResult {
  T value{};
  double error = 0.0;
  bool converged = false;
  std::size_t evals = 0;
};

template <typename F, typename T>
inline void gk15_panel(F&& f, double a, double b, T& kronrod, double& err,
                       std::size_t& evals) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  T resg{};
  T resk{};
  {
    const T fc = f(center);
    resk = gk::kWgk[7] * fc;
    resg = gk::kWg[3] * fc;
    evals += 1;
  }
  for (int i = 0; i < 7; ++i) {
    const double dx = half * gk::kXgk[i];
    const T f1 = f(center - dx);
    const T f2 = f(center + dx);
    evals += 2;
    resk += gk::kWgk[i] * (f1 + f2);
    if (i % 2 == 1) resg += gk::kWg[i / 2] * (f1 + f2);
  }
  kronrod = resk * half;
  err = std::abs(resk - resg) * half;
}

// Integrate f over [a, b] to the requested tolerance.  `breakpoints` inside
// (a, b) seed the initial segmentation; values outside are ignored.
template <typename T, typename F>
inline QuadResult<T> integrate(F&& f, double a, double b, double abs_tol = 1e-12,
                               double rel_tol = 1e-10,
                               std::vector<double> breakpoints = {},
                               std::size_t max_panels = 20000) {
  if (!(b > a)) {
    if (a == b) return {T{}, 0.0, true, 0};
    throw std::invalid_argument("integrate: requires b >= a");
  }

  struct Panel {
    double a, b, err;
    T val;
    bool operator<(const Panel& o) const { return err < o.err; }
  };

  breakpoints.push_back(a);
  breakpoints.push_back(b);
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()),
                    breakpoints.end());

  QuadResult<T> out;
  std::priority_queue<Panel> heap;
  T total{};
  double total_err = 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    const double lo = breakpoints[i];
    const double hi = breakpoints[i + 1];
    if (hi <= a || lo >= b || hi <= lo) continue;
    Panel p{std::max(lo, a), std::min(hi, b), 0.0, T{}};
    gk15_panel(f, p.a, p.b, p.val, p.err, out.evals);
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
    if (mid <= worst.a || mid >= worst.b) {  // interval at machine resolution
      heap.push(worst);
      break;
    }
    Panel left{worst.a, mid, 0.0, T{}};
    Panel right{mid, worst.b, 0.0, T{}};
    gk15_panel(f, left.a, left.b, left.val, left.err, out.evals);
    gk15_panel(f, right.a, right.b, right.val, right.err, out.evals);
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
