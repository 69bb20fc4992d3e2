#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cavityio/stack.hpp"

namespace cavityio {

// One cavity mode: Omega_k = omega_k - i gamma_k / 2 with gamma_k the full
// linewidth, plus solver diagnostics.
struct Resonance {
  int k = 0;
  double omega = 0.0;
  double gamma = 0.0;
  int iterations = 0;
  bool converged = false;
  bool branch_jump = false;
  double d1_abs = 0.0;  // |D1(Omega_k)| at the returned root

  complexd Omega() const { return complexd(omega, -0.5 * gamma); }
};

// Linewidth split by decay channel, all in rad/time.
struct LossBudget {
  double gamma_rad = 0.0;
  double gamma_cav = 0.0;
  double gamma_plus = 0.0;
  double gamma_minus = 0.0;
  double identity_residual = 0.0;  // |Gamma - sum| / Gamma

  double gamma_abs() const { return gamma_cav + gamma_plus + gamma_minus; }
  double total() const { return gamma_rad + gamma_abs(); }
};

// The c-number coupling coefficients of one frequency: cavity-side set
// (T, A_cav, A_pm with the mode normalizations alpha) and output-side set
// (T_o, R_o, A_o_pm).  The output-side set assumes a unit outer index.
struct IoCoefficients {
  double omega = 0.0;
  complexd n1;
  complexd T, A_cav, A_plus, A_minus;
  double alpha_cav = 0.0, alpha_plus = 0.0, alpha_minus = 0.0;
  complexd T_o, R_o, A_o_plus, A_o_minus;
  bool output_side_valid = false;  // eps3 == 1 at this frequency
  bool narrowband_model = false;   // any constant-permittivity layer involved
};

// Hook for cavities whose coupling mirror is known only through measured or
// tabulated reflection/transmission of the span between the cavity medium
// and the outside (rather than a single homogeneous plate).  Only the
// radiative quantities are computable in that case.
struct MirrorTables {
  std::function<complexd(complexd)> r13;  // reflection seen from the cavity
  std::function<complexd(complexd)> t13;  // transmission into the outside
};

// Resonance frequency of the matching lossless closed cavity,
// beta_1'(w) l = k pi, solved as a fixed point over the (weak) dispersion.
inline double lossless_guess(const PermittivityModel& eps1, double l, double c, int k) {
  if (k < 1) throw std::invalid_argument("lossless_guess: k must be >= 1");
  double w = k * kPi * c / l;  // vacuum start
  for (int it = 0; it < 200; ++it) {
    const double n1p = refractive_index(eps1, w).real();
    const double next = k * kPi * c / (n1p * l);
    if (std::abs(next - w) < 1e-14 * next) return next;
    w = next;
  }
  return w;
}

inline double lossless_guess(const LayerStack& stack, int k) {
  return lossless_guess(stack.eps1, stack.l, stack.c, k);
}

namespace detail {

// Solve D1(Omega) = 1 + r13(Omega) e^{2 i beta_1 l} = 0 for branch k: the
// explicit fixed-point maps for (omega, gamma) first, then a short damped
// Newton polish for quadratic convergence.
template <typename R13Fn>
Resonance find_resonance_core(const PermittivityModel& eps1, double l, double c,
                              R13Fn&& r13_at, int k, double tol = 1e-12,
                              int max_iter = 200) {
  const double w0 = lossless_guess(eps1, l, c, k);
  const complexd i1(0.0, 1.0);

  auto d1_at = [&](complexd Om) {
    const complexd b1 = refractive_index(eps1, Om) * Om / c;
    return 1.0 + r13_at(Om) * std::exp(2.0 * i1 * b1 * l);
  };

  Resonance res;
  res.k = k;
  complexd Om(w0, 0.0);
  double theta_prev = 0.0;
  {
    double th = std::arg(r13_at(Om));
    if (th <= 0.0) th += 2.0 * kPi;  // seed the branch giving omega near w0
    theta_prev = th;
  }

  int iter = 0;
  for (; iter < max_iter; ++iter) {
    const complexd n1 = refractive_index(eps1, Om);
    const complexd r = r13_at(Om);
    const double L = std::log(std::abs(r));
    double theta = std::arg(r);
    theta += 2.0 * kPi * std::round((theta_prev - theta) / (2.0 * kPi));
    theta_prev = theta;
    const double phi = (2 * k + 1) * kPi - theta;
    const double mod2 = std::norm(n1);
    const double w = (c / (2.0 * mod2 * l)) * (n1.real() * phi + n1.imag() * L);
    const double g = (c / (mod2 * l)) * (n1.imag() * phi - n1.real() * L);
    const complexd next(w, -0.5 * g);
    const bool done = std::abs(next - Om) < tol * std::abs(next);
    Om = next;
    if (done) break;
  }
  res.iterations = iter + 1;

  // Newton polish on D1 itself (D1 is analytic in Omega, so a real-direction
  // central difference gives the complex derivative).
  complexd f = d1_at(Om);
  for (int step = 0; step < 5 && std::abs(f) > 1e-15; ++step) {
    const double h = 1e-7 * std::abs(Om);
    const complexd df = (d1_at(Om + h) - d1_at(Om - h)) / (2.0 * h);
    if (std::abs(df) == 0.0) break;
    complexd delta = -f / df;
    for (int damp = 0; damp < 12; ++damp) {
      const complexd trial = Om + delta;
      const complexd ft = d1_at(trial);
      if (std::abs(ft) < std::abs(f)) {
        Om = trial;
        f = ft;
        break;
      }
      delta *= 0.5;
    }
  }

  res.omega = Om.real();
  res.gamma = -2.0 * Om.imag();
  res.d1_abs = std::abs(f);
  const double fsr = kPi * c / (refractive_index(eps1, res.omega).real() * l);
  res.branch_jump = std::abs(res.omega - w0) > 0.6 * fsr;
  res.converged = !res.branch_jump && res.d1_abs < 1e-10;
  return res;
}

}  // namespace detail

inline Resonance find_resonance(const LayerStack& stack, int k, double tol = 1e-12,
                                int max_iter = 200) {
  auto r13 = [&stack](complexd Om) {
    return StackResponse(stack, Om).composite(1, 3).r_ik;
  };
  return detail::find_resonance_core(stack.eps1, stack.l, stack.c, r13, k, tol,
                                     max_iter);
}

inline Resonance find_resonance(const PermittivityModel& eps1, double l, double c,
                                const MirrorTables& mirror, int k, double tol = 1e-12,
                                int max_iter = 200) {
  if (!mirror.r13) throw std::invalid_argument("find_resonance: mirror.r13 required");
  return detail::find_resonance_core(eps1, l, c, mirror.r13, k, tol, max_iter);
}

inline IoCoefficients io_coefficients(const LayerStack& stack, double omega) {
  if (omega <= 0.0) throw std::invalid_argument("io_coefficients: omega must be > 0");
  const StackResponse s(stack, omega);
  const complexd i1(0.0, 1.0);
  const complexd n1 = s.n(1), n2 = s.n(2), n3 = s.n(3);
  const complexd b1 = s.beta(1), b2 = s.beta(2);
  const complexd p1 = std::exp(i1 * b1 * stack.l);
  const complexd p2 = std::exp(i1 * b2 * stack.d);
  const complexd sqrt_n1 = std::sqrt(n1);

  IoCoefficients io;
  io.omega = omega;
  io.n1 = n1;
  io.narrowband_model = stack.eps1.narrowband_approximation() ||
                        stack.eps2.narrowband_approximation() ||
                        stack.eps3.narrowband_approximation();

  const FresnelSet f12 = s.interface(1, 2);
  const FresnelSet f23 = s.interface(2, 3);
  const FresnelSet f13 = s.composite(1, 3);
  const complexd D2p = s.D2p();

  // Mode normalizations: the brackets vanish linearly in the absorption, so
  // every A coefficient carries sqrt(bracket) in the numerator instead of
  // dividing by the (possibly infinite) alpha.
  const double br_cav = std::max(
      0.0, n1.real() * std::sinh(2.0 * b1.imag() * stack.l) -
               n1.imag() * std::sin(2.0 * b1.real() * stack.l));
  const double br_plus = std::max(
      0.0, n2.real() * std::sinh(b2.imag() * stack.d) +
               n2.imag() * std::sin(b2.real() * stack.d));
  const double br_minus = std::max(
      0.0, n2.real() * std::sinh(b2.imag() * stack.d) -
               n2.imag() * std::sin(b2.real() * stack.d));
  const double inf = std::numeric_limits<double>::infinity();
  io.alpha_cav = br_cav > 0.0 ? 2.0 * std::sqrt(2.0) * std::abs(n1) / std::sqrt(br_cav) : inf;
  const double mirror_att = std::exp(-0.5 * b2.imag() * stack.d);
  const double inv_alpha_plus = mirror_att * std::sqrt(br_plus) / std::abs(n2);
  const double inv_alpha_minus = mirror_att * std::sqrt(br_minus) / std::abs(n2);
  io.alpha_plus = inv_alpha_plus > 0.0 ? 1.0 / inv_alpha_plus : inf;
  io.alpha_minus = inv_alpha_minus > 0.0 ? 1.0 / inv_alpha_minus : inf;

  io.A_cav = -i1 * std::sqrt(2.0) * sqrt_n1 * std::sqrt(br_cav) / std::abs(n1);
  const complexd a_pm_common = -f12.t_ki * sqrt_n1 * p1 / D2p;  // t21 enters both signs
  io.A_plus = a_pm_common * (f23.r_ik * p2 + 1.0) * inv_alpha_plus;
  io.A_minus = a_pm_common * (f23.r_ik * p2 - 1.0) * inv_alpha_minus;
  io.T = -f13.t_ki * std::sqrt(n1 * n3.real()) * p1 / std::abs(n3);

  io.T_o = f13.t_ik * p1 / sqrt_n1;
  io.R_o = f13.r_ki;
  io.A_o_plus = (f23.t_ik / D2p) * (1.0 + f12.r_ki * p2) * inv_alpha_plus;
  io.A_o_minus = (f23.t_ik / D2p) * (1.0 - f12.r_ki * p2) * inv_alpha_minus;
  io.output_side_valid = std::abs(stack.eps3.eval(omega) - 1.0) < 1e-9;
  return io;
}

inline LossBudget loss_budget(const LayerStack& stack, const Resonance& res) {
  const IoCoefficients io = io_coefficients(stack, res.omega);
  const double pref = stack.c / (2.0 * std::abs(io.n1) * stack.l);
  LossBudget lb;
  lb.gamma_rad = pref * std::norm(io.T);
  lb.gamma_cav = pref * std::norm(io.A_cav);
  lb.gamma_plus = pref * std::norm(io.A_plus);
  lb.gamma_minus = pref * std::norm(io.A_minus);
  lb.identity_residual = std::abs(res.gamma - lb.total()) / res.gamma;
  return lb;
}

struct HighQReport {
  std::vector<double> ratios;  // Gamma_k / local mode spacing
  bool pass = false;
};

inline HighQReport validate_high_q(const std::vector<Resonance>& modes,
                                   double threshold = 0.01) {
  if (modes.size() < 2)
    throw std::invalid_argument("validate_high_q: need at least two resonances");
  HighQReport rep;
  const std::size_t n = modes.size();
  for (std::size_t i = 0; i < n; ++i) {
    double spacing;
    if (i == 0)
      spacing = modes[1].omega - modes[0].omega;
    else if (i + 1 == n)
      spacing = modes[n - 1].omega - modes[n - 2].omega;
    else
      spacing = 0.5 * (modes[i + 1].omega - modes[i - 1].omega);
    rep.ratios.push_back(modes[i].gamma / spacing);
  }
  rep.pass = true;
  for (double r : rep.ratios)
    if (!(r <= threshold)) rep.pass = false;
  return rep;
}

}  // namespace cavityio
