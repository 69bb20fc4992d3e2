#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <utility>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cavityio/expint.hpp"
#include "cavityio/oscillatory.hpp"
#include "cavityio/quadrature.hpp"
#include "cavityio/resonances.hpp"

namespace cavityio {

// Spectral window of one nonmonochromatic mode, plus the timing of the
// preparation/observation protocol.  tau() is the effective window length
// entering every kernel.
struct ModeBand {
  int k = 0;
  double omega_lo = 0.0;
  double omega_hi = 0.0;
  complexd Omega;      // complex resonance omega_k - i Gamma_k / 2
  double dt = 0.0;     // coarse-grain horizon (Delta t)
  double t0 = 0.0;     // preparation instant
  double t = 0.0;      // observation instant (may be infinity)

  double omega_k() const { return Omega.real(); }
  double gamma() const { return -2.0 * Omega.imag(); }
  double tau() const { return t + dt - t0; }

  void validate() const {
    if (!(omega_lo < Omega.real() && Omega.real() < omega_hi))
      throw std::invalid_argument("ModeBand: resonance must lie inside the interval");
    if (t < t0) throw std::invalid_argument("ModeBand: t must be >= t0");
    if (dt < 0.0) throw std::invalid_argument("ModeBand: dt must be >= 0");
  }
};

// Band construction: interval midway to the neighboring resonances, and the
// default coarse-grain horizon dt = coarse_factor / bandwidth.
inline ModeBand make_band(const LayerStack& stack, int k, double t = 0.0,
                          double t0 = 0.0, double coarse_factor = 50.0) {
  if (k < 2) throw std::invalid_argument("make_band: need k >= 2 for a two-sided band");
  const Resonance below = find_resonance(stack, k - 1);
  const Resonance at = find_resonance(stack, k);
  const Resonance above = find_resonance(stack, k + 1);
  if (!at.converged) throw std::runtime_error("make_band: resonance search failed");
  ModeBand band;
  band.k = k;
  band.omega_lo = 0.5 * (below.omega + at.omega);
  band.omega_hi = 0.5 * (at.omega + above.omega);
  band.Omega = at.Omega();
  band.dt = coarse_factor / (band.omega_hi - band.omega_lo);
  band.t0 = t0;
  band.t = t;
  return band;
}

namespace detail {

// e^z - 1 without cancellation near z = 0 (callers keep Re z <= 0).
inline complexd expm1_c(complexd z) {
  if (std::abs(z) < 1e-4) return z * (1.0 + z * (0.5 + z / 6.0));
  return std::exp(z) - 1.0;
}

inline complexd sinc_c(complexd z) {
  if (std::abs(z) < 1e-4) {
    const complexd z2 = z * z;
    return 1.0 - z2 / 6.0 + z2 * z2 / 120.0;
  }
  return std::sin(z) / z;
}

// First divided difference of x -> e^{i x tau}, exact for any node spacing:
// (e^{ia tau} - e^{ib tau})/(a - b) = i tau e^{i(a+b)tau/2} sinc((a-b)tau/2).
inline complexd dd1_exp(complexd a, complexd b, double tau) {
  const complexd i1(0.0, 1.0);
  return i1 * tau * std::exp(i1 * 0.5 * (a + b) * tau) * sinc_c(0.5 * (a - b) * tau);
}

// Second divided difference of x -> e^{i x tau}.  Symmetric in the nodes;
// falls back to a Taylor expansion about the centroid when all nodes cluster
// within the window's inverse length (where the direct form cancels badly).
inline complexd dd2_exp(complexd x0, complexd x1, complexd x2, double tau) {
  const complexd i1(0.0, 1.0);
  const double s01 = std::abs(x0 - x1), s12 = std::abs(x1 - x2), s02 = std::abs(x0 - x2);
  // pivot so the outer division uses the widest separation
  if (s01 > s02 && s01 > s12) std::swap(x1, x2);
  else if (s12 > s02 && s12 > s01) std::swap(x0, x1);
  const double wide = std::abs(x2 - x0);

  if (wide * tau < 0.5) {
    // dd2 of x^n over three nodes is the complete homogeneous symmetric
    // polynomial h_{n-2}, so expanding about the centroid:
    //   dd2 = e^{i m tau} sum_{n>=2} (i tau)^n / n! * h_{n-2}(d0, d1, d2)
    const complexd m = (x0 + x1 + x2) / 3.0;
    const complexd d0 = x0 - m, d1 = x1 - m, d2 = x2 - m;
    complexd sum = 0.0;
    complexd coeff = (i1 * tau) * (i1 * tau) / 2.0;  // (i tau)^n / n! at n = 2
    int small_streak = 0;
    for (int n = 2; n <= 40; ++n) {
      complexd h = 0.0;  // h_{n-2}(d0, d1, d2)
      const int deg = n - 2;
      complexd p0 = 1.0;
      for (int a = 0; a <= deg; ++a) {
        complexd p1 = 1.0;
        for (int b = 0; b + a <= deg; ++b) {
          h += p0 * p1 * std::pow(d2, deg - a - b);
          p1 *= d1;
        }
        p0 *= d0;
      }
      const complexd term = coeff * h;
      sum += term;
      // h_1 vanishes identically about the centroid, so require two
      // consecutive negligible terms before stopping
      if (std::abs(term) < 1e-18 * std::abs(sum)) {
        if (++small_streak == 2) break;
      } else {
        small_streak = 0;
      }
      coeff *= i1 * tau / double(n + 1);
    }
    return std::exp(i1 * m * tau) * sum;
  }

  return (dd1_exp(x1, x2, tau) - dd1_exp(x0, x1, tau)) / (x2 - x0);
}

inline void require_output_side(const IoCoefficients& io) {
  if (!io.output_side_valid)
    throw std::invalid_argument("io_weights: output-side coefficients require eps3 = 1");
}

}  // namespace detail

// Spectral filter selecting what the outgoing wave packet inherits from the
// intracavity field: F(w, t), with the removable point w = conj(Omega)
// handled by the exact product form (no cancellation).
inline complexd filter_F(const ModeBand& band, const IoCoefficients& coeffs,
                         double omega, double c_over_l = 1.0) {
  band.validate();
  detail::require_output_side(coeffs);
  if (!std::isfinite(band.t))
    throw std::invalid_argument("filter_F: t must be finite (phase undefined at infinity)");
  const complexd i1(0.0, 1.0);
  const double tau = band.tau();
  const complexd u = omega - std::conj(band.Omega);
  // (e^{-i u tau} - 1)/u, exact for any u including the removable zero
  const complexd window = -i1 * tau * std::exp(-0.5 * i1 * u * tau) *
                          detail::sinc_c(0.5 * u * tau);
  const complexd pref = i1 / std::sqrt(2.0 * kPi) *
                        std::sqrt(c_over_l / (2.0 * std::conj(coeffs.n1))) *
                        std::conj(coeffs.T_o) * std::exp(i1 * omega * (band.t - band.t0));
  return pref * window;
}

// |F(w, t)|^2, also defined for t = infinity (the transient factor drops).
inline double filter_F_abs2(const ModeBand& band, const IoCoefficients& coeffs,
                            double omega, double c_over_l) {
  detail::require_output_side(coeffs);
  const double scale =
      c_over_l / (2.0 * std::abs(coeffs.n1)) * std::norm(coeffs.T_o) / (2.0 * kPi);
  const complexd u = omega - std::conj(band.Omega);
  if (!std::isfinite(band.t)) return scale / std::norm(u);
  const double tau = band.tau();
  const complexd i1(0.0, 1.0);
  const complexd window = -i1 * tau * std::exp(-0.5 * i1 * u * tau) *
                          detail::sinc_c(0.5 * u * tau);
  return scale * std::norm(window);
}

// Extraction efficiency eta(t) = integral of |F|^2 over the band.  The
// integrand separates exactly into a Lorentzian and a damped beat at the
// window frequency tau, so the beat is integrated with the oscillation-aware
// panels and the quadrature cost stays flat no matter how large tau gets:
//   |F|^2 = scale [ (1 + e^{-Gamma tau}) - 2 Re( e^{-i Omega tau} e^{i w tau} ) ]
//           / |w - conj(Omega)|^2.
inline double eta_of_t(const ModeBand& band, const IoCoefficients& coeffs,
                       double c_over_l = 1.0) {
  band.validate();
  detail::require_output_side(coeffs);
  const double scale =
      c_over_l / (2.0 * std::abs(coeffs.n1)) * std::norm(coeffs.T_o) / (2.0 * kPi);
  auto lorentz = [&](double w) {
    return 1.0 / std::norm(w - std::conj(band.Omega));
  };
  const double wk = band.omega_k();
  const double lo = band.omega_lo, hi = band.omega_hi;
  if (!std::isfinite(band.t)) {
    const auto ql = integrate<double>(lorentz, lo, hi, 1e-300, 1e-11, {wk});
    if (!ql.converged)
      throw std::runtime_error("eta_of_t: quadrature failed to converge");
    return scale * ql.value;
  }

  const double tau = band.tau();
  if (tau == 0.0) return 0.0;
  const complexd i1(0.0, 1.0);
  const complexd Oms = std::conj(band.Omega);

  // Near the pole the beat and the Lorentzian cancel to O(tau); integrate the
  // combined window function there and keep the smooth/beat split outside,
  // where both pieces stay the same size as their sum.
  const double delta = std::min(0.45 * std::min(wk - lo, hi - wk),
                                std::max(20.0 * band.gamma(), 60.0 / std::abs(tau)));
  const double wlo = wk - delta, whi = wk + delta;
  auto window = [&](double w) {
    return std::norm(detail::expm1_c(-i1 * (w - Oms) * tau)) / std::norm(w - Oms);
  };
  const auto qw = integrate<double>(window, wlo, whi, 1e-300, 1e-10, {wk});
  if (!qw.converged) throw std::runtime_error("eta_of_t: quadrature failed to converge");

  const double gt = band.gamma() * tau;
  const double decay2 = (gt < 1400.0) ? std::exp(-gt) : 0.0;  // e^{-Gamma tau}
  const double decay1 = std::sqrt(decay2);                    // e^{-Gamma tau / 2}
  double side = 0.0, beat = 0.0;
  for (auto [sa, sb] : {std::pair{lo, wlo}, std::pair{whi, hi}}) {
    const auto qs = integrate<double>(lorentz, sa, sb, 1e-300, 1e-11, {});
    if (!qs.converged)
      throw std::runtime_error("eta_of_t: quadrature failed to converge");
    side += qs.value;
    if (decay1 > 0.0) {
      const complexd b1 = std::exp(-i1 * band.Omega * tau);  // modulus decay1
      const double abs_tol = 1e-12 * (qw.value + qs.value) / decay1 + 1e-300;
      const auto qo = integrate_oscillatory(
          [&](double w) { return complexd(lorentz(w)); }, tau, sa, sb, abs_tol,
          1e-10, {});
      if (!qo.converged)
        throw std::runtime_error("eta_of_t: oscillatory quadrature failed to converge");
      beat += 2.0 * (b1 * qo.value).real();
    }
  }
  return scale * (qw.value + (1.0 + decay2) * side - beat);
}

// Two-frequency kernel v(w, w', t) tying the windowed output to the source
// spectra; both removable singularities are handled by the divided-difference
// form.
inline complexd kernel_upsilon(const ModeBand& band, double omega, double omega_p,
                               double c_over_l, complexd n1) {
  band.validate();
  const complexd i1(0.0, 1.0);
  const complexd pref = -(1.0 / (2.0 * kPi)) * c_over_l / (2.0 * std::conj(n1)) *
                        std::exp(-i1 * omega * band.dt);
  return pref *
         detail::dd2_exp(std::conj(band.Omega), complexd(omega_p), complexd(omega),
                         band.tau());
}

enum class Channel { in, cav, plus, minus };

// One channel kernel G_sigma(w, w', t), split into its smooth part and the
// coefficient of delta(w - w') (kept symbolic; integrated exactly upstream).
struct ChannelKernel {
  complexd smooth;
  complexd delta_coeff;
};

inline ChannelKernel channel_kernel_G(const ModeBand& band, const IoCoefficients& coeffs,
                                      Channel sigma, double omega, double omega_p,
                                      double c_over_l = 1.0) {
  detail::require_output_side(coeffs);
  const complexd i1(0.0, 1.0);
  const complexd ups = kernel_upsilon(band, omega, omega_p, c_over_l, coeffs.n1);
  const complexd to_c = std::conj(coeffs.T_o);
  const complexd ph = std::exp(i1 * omega_p * (band.t - band.t0));
  ChannelKernel g;
  switch (sigma) {
    case Channel::in:
      g.smooth = to_c * std::conj(coeffs.T) * ups;
      g.delta_coeff = std::conj(coeffs.R_o) * ph;
      break;
    case Channel::cav:
      g.smooth = to_c * std::conj(coeffs.A_cav) * ups;
      g.delta_coeff = 0.0;
      break;
    case Channel::plus:
      g.smooth = to_c * std::conj(coeffs.A_plus) * ups;
      g.delta_coeff = std::conj(coeffs.A_o_plus) * ph;
      break;
    case Channel::minus:
      g.smooth = to_c * std::conj(coeffs.A_minus) * ups;
      g.delta_coeff = std::conj(coeffs.A_o_minus) * ph;
      break;
  }
  return g;
}

namespace detail {

// The shared overlap I(w) = Int phi1(w') conj(v(w', w)) dw' evaluated in
// closed form.  The integrand is a rational function of w' times at most one
// factor e^{+-i w' tau}, so the band integral reduces to logarithms plus
// exponential integrals; every exponentially growing factor cancels an
// exponentially decaying partner analytically before anything is evaluated.
// The result is returned split as I(w) = smooth(w) + e^{-i w tau} osc(w)
// with both envelopes free of oscillation at the window scale, which is what
// lets the outer quadratures use oscillation-aware panels.
struct spectral_overlap {
  complexd smooth;
  complexd osc;
};

class overlap_closed_form {
 public:
  overlap_closed_form(const ModeBand& band, const IoCoefficients& coeffs,
                      double c_over_l, double eta)
      : a_(band.omega_lo),
        b_(band.omega_hi),
        tau_(band.tau()),
        Om_(band.Omega),
        Oms_(std::conj(band.Omega)) {
    const complexd i1(0.0, 1.0);
    fcoef_ = i1 / std::sqrt(2.0 * kPi) *
             std::sqrt(c_over_l / (2.0 * std::conj(coeffs.n1))) *
             std::conj(coeffs.T_o) / std::sqrt(eta);
    qbar_ = std::conj(c_over_l / (2.0 * std::conj(coeffs.n1))) / (2.0 * kPi);
    dOm_ = Oms_ - Om_;  // i Gamma
    const double gt = band.gamma() * tau_;
    A_ = (gt < 1400.0) ? std::exp(i1 * Oms_ * tau_) : complexd(0.0);
    AB_ = (gt < 1400.0) ? std::exp(-gt) : 0.0;
    W0s_ = std::log(b_ - Oms_) - std::log(a_ - Oms_);
    W0o_ = std::log(b_ - Om_) - std::log(a_ - Om_);
    brp_s_ = bracket(tau_, Oms_);
    brp_o_ = bracket(tau_, Om_);
    brm_s_ = bracket(-tau_, Oms_);
    brm_o_ = bracket(-tau_, Om_);
  }

  spectral_overlap eval(double w) const {
    if (tau_ == 0.0) return {complexd(0.0), complexd(0.0)};
    const complexd r1 = 1.0 / (dOm_ * (Oms_ - w));
    const complexd r2 = -1.0 / (dOm_ * (Om_ - w));
    const complexd r3 = 1.0 / ((w - Oms_) * (w - Om_));
    const complexd pw = 1.0 / ((w - Om_) * (Oms_ - w));

    complexd t0 = -(AB_ / (Om_ - w)) * (W0s_ - W0o_) / dOm_   // const-phase pair
                  + r1 * brm_s_ + AB_ * r2 * brm_o_           // e^{-i w' tau} pair
                  + (AB_ * brp_s_ - brp_o_) / ((Om_ - w) * dOm_)  // e^{+i w' tau}
                  - r1 * W0s_ - r2 * W0o_                     // const-phase pair
                  - log_pair(tau_, w) * pw                    // on-axis, beat part
                  + A_ * r3 * tail_pair(-tau_, w);            // on-axis, tail part

    complexd t1 = A_ * (brp_s_ - W0s_) * pw                   // off-axis carriers
                  - tail_pair(tau_, w) * pw                   // on-axis, tail part
                  + A_ * r3 * log_pair(-tau_, w);             // on-axis, beat part

    const complexd pref = -fcoef_ * qbar_;
    return {pref * t0, pref * t1};
  }

 private:
  // Int_a^b e^{i c u'} / (u' - p) du' = e^{i c p} * bracket(c, p) for a pole
  // strictly off the integration path.  The principal-log combination is an
  // exact multiple of 2 pi i, recovered by rounding, so the large-|z| branch
  // never subtracts two big logarithms.
  complexd bracket(double c, complexd p) const {
    const complexd u1 = a_ - p, u2 = b_ - p;
    const complexd z1 = complexd(0.0, -c) * u1;
    const complexd z2 = complexd(0.0, -c) * u2;
    if (std::abs(z1) > 3.0 && std::abs(z2) > 3.0) {
      const complexd d =
          (std::log(z1) - std::log(u1)) - (std::log(z2) - std::log(u2));
      const double m = std::round(d.imag() / (2.0 * kPi));
      return complexd(0.0, 2.0 * kPi * m) + expint_e1(z1) - expint_e1(z2);
    }
    return (std::log(u2) - std::log(u1)) + ein(z1) - ein(z2);
  }

  // Pieces of the regularized on-axis integral
  //   V(c, w) = Int_a^b (e^{i c w'} - e^{i c w})/(w' - w) dw'
  //           = e^{i c w} log_pair(c, w) + tail_pair(c, w).
  complexd log_pair(double c, double w) const {
    const complexd za = complexd(0.0, -c) * (a_ - w);
    const complexd zb = complexd(0.0, -c) * (b_ - w);
    return std::log(za) - std::log(zb);
  }
  complexd tail_pair(double c, double w) const {
    const complexd i1(0.0, 1.0);
    const complexd za = complexd(0.0, -c) * (a_ - w);
    const complexd zb = complexd(0.0, -c) * (b_ - w);
    return std::exp(i1 * c * a_) * expint_e1_scaled(za) -
           std::exp(i1 * c * b_) * expint_e1_scaled(zb);
  }

  double a_, b_, tau_;
  complexd Om_, Oms_, dOm_;
  complexd fcoef_, qbar_;
  complexd A_;   // e^{i conj(Omega) tau}, modulus e^{-Gamma tau / 2}
  double AB_;    // e^{-Gamma tau}
  complexd W0s_, W0o_;             // phase-free pole integrals
  complexd brp_s_, brp_o_;         // brackets at +tau for conj(Omega), Omega
  complexd brm_s_, brm_o_;         // brackets at -tau
};

}  // namespace detail

// Time-dependent channel weights and their sum rule.
struct ModeWeights {
  double eta = 0.0;
  double zeta_in = 0.0;
  double zeta_cav = 0.0;
  double zeta_plus = 0.0;
  double zeta_minus = 0.0;
  double at = 0.0;  // observation time (infinity for asymptotic)

  double sum() const { return eta + zeta_in + zeta_cav + zeta_plus + zeta_minus; }
};

// All four channel weights (plus eta) at the band's observation time.
// With I(w) = Int phi1(w') conj(v(w', w)) dw' every channel has the shape
// chi_sigma = Cs I(w) + Ds phi1(w) e^{-iw(t-t0)}, so
// zeta_sigma = |Cs|^2 J + |Ds|^2 + 2 Re[Cs conj(Ds) K] and the expensive
// quadratures J = Int |I|^2 and K = Int I conj(phi1) e^{iw(t-t0)} are shared.
inline ModeWeights weights_of_t(const ModeBand& band, const IoCoefficients& coeffs,
                                double c_over_l = 1.0) {
  band.validate();
  detail::require_output_side(coeffs);
  if (!std::isfinite(band.t))
    throw std::invalid_argument("weights_of_t: use asymptotic_weights for t = infinity");

  const double eta = eta_of_t(band, coeffs, c_over_l);
  if (!(eta > 0.0)) throw std::runtime_error("weights_of_t: eta(t) = 0, filter empty");
  const complexd i1(0.0, 1.0);
  const double tau = band.tau();
  const double lo = band.omega_lo, hi = band.omega_hi;
  const double wk = band.omega_k();

  const detail::overlap_closed_form overlap(band, coeffs, c_over_l, eta);
  auto overlap_sum = [&](double w) {
    const auto v = overlap.eval(w);
    return v.smooth + std::exp(-i1 * w * tau) * v.osc;
  };

  // The split I = s + e^{-i w tau} o is exact but its two parts only stay the
  // same size as their sum away from the pole.  Inside a window around omega_k
  // (a few linewidths, or a few oscillation periods if wider) integrate the
  // combined overlap directly; outside, the split plus the Filon rule handles
  // arbitrarily many oscillation periods.
  const double delta = std::min(0.45 * std::min(wk - lo, hi - wk),
                                std::max(20.0 * band.gamma(), 60.0 / std::abs(tau)));
  const double wlo = wk - delta, whi = wk + delta;
  const std::array<std::pair<double, double>, 2> sides{
      std::pair{lo, wlo}, std::pair{whi, hi}};

  // J = Int |I|^2: inside the window |I|^2 directly; outside, the smooth part
  // |s|^2 + |o|^2 plus one beat term at the window frequency.
  const auto qj_w = integrate<double>(
      [&](double w) { return std::norm(overlap_sum(w)); }, wlo, whi, 1e-300, 1e-9,
      {wk});
  if (!qj_w.converged)
    throw std::runtime_error("weights_of_t: quadrature failed to converge");
  double J = qj_w.value;
  for (auto [sa, sb] : sides) {
    const auto qj_s = integrate<double>(
        [&](double w) {
          const auto v = overlap.eval(w);
          return std::norm(v.smooth) + std::norm(v.osc);
        },
        sa, sb, 1e-300, 1e-9, {});
    const auto qj_x = integrate_oscillatory(
        [&](double w) {
          const auto v = overlap.eval(w);
          return std::conj(v.smooth) * v.osc;
        },
        -tau, sa, sb, 1e-11 * (qj_w.value + qj_s.value) + 1e-300, 1e-9, {});
    if (!qj_s.converged || !qj_x.converged)
      throw std::runtime_error("weights_of_t: quadrature failed to converge");
    J += qj_s.value + 2.0 * qj_x.value.real();
  }

  // K = Int I conj(phi1) e^{i w (t - t0)}: the filter factor separates the
  // same way, conj(phi1) e^{i w (t-t0)} = conj(Phi) (B1 e^{i w tau} - 1)/(w - Omega).
  const complexd phi_coef = i1 / std::sqrt(2.0 * kPi) *
                            std::sqrt(c_over_l / (2.0 * std::conj(coeffs.n1))) *
                            std::conj(coeffs.T_o) / std::sqrt(eta);
  const double gt = band.gamma() * tau;
  const complexd b1 =
      (gt < 1400.0) ? std::exp(-i1 * band.Omega * tau) : complexd(0.0);
  const auto qk_w = integrate<complexd>(
      [&](double w) {
        return overlap_sum(w) *
               detail::expm1_c(i1 * (w - band.Omega) * tau) / (w - band.Omega);
      },
      wlo, whi, 1e-300, 1e-9, {wk});
  if (!qk_w.converged)
    throw std::runtime_error("weights_of_t: quadrature failed to converge");
  complexd K = qk_w.value;
  for (auto [sa, sb] : sides) {
    const auto qk_s = integrate<complexd>(
        [&](double w) { return overlap.eval(w).smooth / (w - band.Omega); }, sa, sb,
        1e-300, 1e-9, {});
    const auto qk_o = integrate<complexd>(
        [&](double w) { return overlap.eval(w).osc / (w - band.Omega); }, sa, sb,
        1e-300, 1e-9, {});
    if (!qk_s.converged || !qk_o.converged)
      throw std::runtime_error("weights_of_t: quadrature failed to converge");
    const double k_abs_tol =
        1e-11 * (std::abs(qk_w.value) + std::abs(qk_s.value) + std::abs(qk_o.value)) +
        1e-300;
    complexd k_beat_s{};
    if (std::abs(b1) > 0.0) {
      const auto q = integrate_oscillatory(
          [&](double w) { return overlap.eval(w).smooth / (w - band.Omega); }, tau,
          sa, sb, k_abs_tol / std::max(std::abs(b1), 1e-30), 1e-9, {});
      if (!q.converged)
        throw std::runtime_error("weights_of_t: quadrature failed to converge");
      k_beat_s = q.value;
    }
    const auto qk_x = integrate_oscillatory(
        [&](double w) { return overlap.eval(w).osc / (w - band.Omega); }, -tau, sa,
        sb, k_abs_tol, 1e-9, {});
    if (!qk_x.converged)
      throw std::runtime_error("weights_of_t: quadrature failed to converge");
    K += b1 * k_beat_s - qk_s.value + b1 * qk_o.value - qk_x.value;
  }
  K *= std::conj(phi_coef);

  const complexd to = coeffs.T_o;
  auto zeta = [&](complexd Cs, complexd Ds) {
    return std::norm(Cs) * J + std::norm(Ds) + 2.0 * (Cs * std::conj(Ds) * K).real();
  };

  ModeWeights w;
  w.at = band.t;
  w.eta = eta;
  w.zeta_in = zeta(to * coeffs.T, coeffs.R_o);
  w.zeta_cav = zeta(to * coeffs.A_cav, 0.0);
  w.zeta_plus = zeta(to * coeffs.A_plus, coeffs.A_o_plus);
  w.zeta_minus = zeta(to * coeffs.A_minus, coeffs.A_o_minus);
  return w;
}

namespace detail {

// Reference implementation of the channel weights by direct nested quadrature
// of the kernels.  Exponentially slower than weights_of_t once the window
// holds many oscillation periods; kept as an independent cross-check of the
// closed-form overlap.
inline ModeWeights weights_of_t_nested(const ModeBand& band,
                                       const IoCoefficients& coeffs,
                                       double c_over_l = 1.0) {
  band.validate();
  require_output_side(coeffs);
  if (!std::isfinite(band.t))
    throw std::invalid_argument("weights_of_t_nested: t must be finite");

  const double eta = eta_of_t(band, coeffs, c_over_l);
  if (!(eta > 0.0))
    throw std::runtime_error("weights_of_t_nested: eta(t) = 0, filter empty");
  const double sqrt_eta = std::sqrt(eta);
  const complexd i1(0.0, 1.0);

  auto phi1 = [&](double w) { return filter_F(band, coeffs, w, c_over_l) / sqrt_eta; };
  auto I_of = [&](double w) {
    auto f = [&](double wp) {
      return phi1(wp) * std::conj(kernel_upsilon(band, wp, w, c_over_l, coeffs.n1));
    };
    const auto q = integrate<complexd>(f, band.omega_lo, band.omega_hi, 1e-16, 1e-10,
                                       {band.omega_k(), w});
    return q.value;
  };

  auto j_f = [&](double w) { return std::norm(I_of(w)); };
  const auto qj = integrate<double>(j_f, band.omega_lo, band.omega_hi, 1e-16, 1e-8,
                                    {band.omega_k()});
  auto k_f = [&](double w) {
    return I_of(w) * std::conj(phi1(w)) * std::exp(i1 * w * (band.t - band.t0));
  };
  const auto qk = integrate<complexd>(k_f, band.omega_lo, band.omega_hi, 1e-16, 1e-8,
                                      {band.omega_k()});
  if (!qj.converged || !qk.converged)
    throw std::runtime_error("weights_of_t_nested: quadrature failed to converge");
  const double J = qj.value;
  const complexd K = qk.value;

  auto zeta = [&](complexd Cs, complexd Ds) {
    return std::norm(Cs) * J + std::norm(Ds) + 2.0 * (Cs * std::conj(Ds) * K).real();
  };

  const complexd to = coeffs.T_o;
  ModeWeights w;
  w.at = band.t;
  w.eta = eta;
  w.zeta_in = zeta(to * coeffs.T, coeffs.R_o);
  w.zeta_cav = zeta(to * coeffs.A_cav, 0.0);
  w.zeta_plus = zeta(to * coeffs.A_plus, coeffs.A_o_plus);
  w.zeta_minus = zeta(to * coeffs.A_minus, coeffs.A_o_minus);
  return w;
}

}  // namespace detail

inline double zeta_of_t(const ModeBand& band, const IoCoefficients& coeffs,
                        Channel sigma, double c_over_l = 1.0) {
  const ModeWeights w = weights_of_t(band, coeffs, c_over_l);
  switch (sigma) {
    case Channel::in: return w.zeta_in;
    case Channel::cav: return w.zeta_cav;
    case Channel::plus: return w.zeta_plus;
    case Channel::minus: return w.zeta_minus;
  }
  return 0.0;
}

// Long-time limits in closed form, every coefficient taken at omega_k.
inline ModeWeights asymptotic_weights(const IoCoefficients& coeffs,
                                      const LossBudget& budget, double c_over_l = 1.0) {
  detail::require_output_side(coeffs);
  const double gamma = budget.total();
  const double gamma_rad_o =
      c_over_l / (2.0 * std::abs(coeffs.n1)) * std::norm(coeffs.T_o);
  const complexd half_n1c = c_over_l / (2.0 * std::conj(coeffs.n1));

  auto zeta = [&](double budget_rate, complexd Ao, complexd A) {
    const double direct = gamma_rad_o * budget_rate / (gamma * gamma);
    const complexd interference =
        half_n1c * Ao * std::conj(A) * std::conj(coeffs.T_o) / gamma;
    return direct + std::norm(Ao) + 2.0 * interference.real();
  };

  ModeWeights w;
  w.at = std::numeric_limits<double>::infinity();
  w.eta = gamma_rad_o / gamma;
  w.zeta_in = zeta(budget.gamma_rad, coeffs.R_o, coeffs.T);
  w.zeta_cav = gamma_rad_o * budget.gamma_cav / (gamma * gamma);
  w.zeta_plus = zeta(budget.gamma_plus, coeffs.A_o_plus, coeffs.A_plus);
  w.zeta_minus = zeta(budget.gamma_minus, coeffs.A_o_minus, coeffs.A_minus);
  return w;
}

}  // namespace cavityio
