#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "cavityio/permittivity.hpp"

namespace cavityio {

// Thrown when a composite-coefficient denominator collapses, i.e. the
// requested frequency sits (numerically) on a pole of the stack response.
struct PoleProximityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Planar four-region geometry, coordinates normal to the interfaces:
//   region 0: perfect mirror backing (z < 0)
//   region 1: cavity medium, thickness l          (0 < z < l)
//   region 2: coupling mirror medium, thickness d (l < z < l + d)
//   region 3: outer half-space                    (z > l + d)
// `backed_by_mirror = false` removes the perfect mirror (interface 0/1 turns
// transparent); that variant only exists so tests can recover the open
// half-space / homogeneous limits in closed form.
struct LayerStack {
  double l = 1.0;
  double d = 0.1;
  PermittivityModel eps1 = PermittivityModel::constant(1.0);
  PermittivityModel eps2 = PermittivityModel::constant(1.0);
  PermittivityModel eps3 = PermittivityModel::constant(1.0);
  double c = 1.0;
  bool backed_by_mirror = true;

  const PermittivityModel& eps(int j) const {
    switch (j) {
      case 1: return eps1;
      case 2: return eps2;
      case 3: return eps3;
      default: throw std::invalid_argument("LayerStack::eps: region must be 1..3");
    }
  }

  // Thickness of region j; the half-spaces have none.
  double thickness(int j) const {
    if (j == 1) return l;
    if (j == 2) return d;
    return 0.0;
  }

  // Left edge of region j (mirror face at z = 0).
  double left_edge(int j) const {
    if (j <= 1) return 0.0;
    if (j == 2) return l;
    return l + d;
  }

  void validate() const {
    if (l <= 0.0) throw std::invalid_argument("LayerStack: l must be > 0");
    if (d < 0.0) throw std::invalid_argument("LayerStack: d must be >= 0");
    if (c <= 0.0) throw std::invalid_argument("LayerStack: c must be > 0");
  }
};

// Reflection/transmission amplitudes between two (possibly composite) spans,
// in both directions:  r_ik = reflection for a wave arriving from side i,
// t_ik = transmission from side i into side k.
struct FresnelSet {
  complexd r_ik, r_ki, t_ik, t_ki;
};

// All frequency-dependent stack data at a single (possibly complex) frequency.
class StackResponse {
 public:
  StackResponse(const LayerStack& stack, complexd omega)
      : stack_(stack), omega_(omega) {
    stack.validate();
    for (int j = 1; j <= 3; ++j) {
      n_[j] = refractive_index(stack.eps(j), omega);
      beta_[j] = n_[j] * omega / stack.c;
    }
  }

  complexd omega() const { return omega_; }
  complexd n(int j) const { return n_.at(check_region(j)); }
  complexd beta(int j) const { return beta_.at(check_region(j)); }
  const LayerStack& stack() const { return stack_; }

  // One-pass phase across region j: exp(i beta_j d_j).
  complexd phase(int j) const {
    check_region(j);
    return std::exp(complexd(0.0, 1.0) * beta_[j] * stack_.thickness(j));
  }

  // Amplitudes for the bare interface between adjacent regions i and k.
  // The perfect mirror is the limit beta_0 -> infinity: r into the mirror is
  // -1, r off the mirror is +1, nothing is transmitted into it, and the
  // formal t off the mirror is 2 (it always cancels in observable ratios).
  FresnelSet interface(int i, int k) const {
    if (std::abs(i - k) != 1 || i < 0 || k < 0 || i > 3 || k > 3)
      throw std::invalid_argument("StackResponse::interface: regions must be adjacent");
    if (i == 0 || k == 0) {
      if (!stack_.backed_by_mirror) return {0.0, 0.0, 1.0, 1.0};
      if (i == 0) return {complexd(1.0), complexd(-1.0), complexd(2.0), complexd(0.0)};
      return {complexd(-1.0), complexd(1.0), complexd(0.0), complexd(2.0)};
    }
    const complexd bi = beta_[i], bk = beta_[k];
    const complexd r = (bi - bk) / (bi + bk);
    return {r, -r, 1.0 + r, 1.0 - r};
  }

  // Amplitudes for the compound span between regions i and k (any order,
  // |i-k| >= 1), folding in every intermediate layer.  `pivot` selects the
  // intermediate region the recursion splits on; any strictly-between choice
  // gives the same result, which tests exploit.
  FresnelSet composite(int i, int k, int pivot = -1) const {
    if (i == k || i < 0 || k < 0 || i > 3 || k > 3)
      throw std::invalid_argument("StackResponse::composite: bad region pair");
    if (std::abs(i - k) == 1) return interface(i, k);

    const int lo = std::min(i, k), hi = std::max(i, k);
    int j = pivot;
    if (j < 0) j = (lo + hi) / 2;
    if (j <= lo || j >= hi)
      throw std::invalid_argument("StackResponse::composite: pivot must lie strictly between");

    const FresnelSet a = composite(i, j);  // span i..j, as seen from i
    const FresnelSet b = composite(j, k);  // span j..k, as seen from j
    const complexd p = phase(j);
    const complexd p2 = p * p;

    const complexd den = 1.0 - a.r_ki * b.r_ik * p2;
    const double scale = 1.0 + std::abs(a.r_ki * b.r_ik * p2);
    if (std::abs(den) < 1e-14 * scale)
      throw PoleProximityError("composite Fresnel denominator vanished (on-pole frequency)");

    FresnelSet out;
    out.r_ik = (a.r_ik + (a.t_ik * a.t_ki - a.r_ik * a.r_ki) * b.r_ik * p2) / den;
    out.t_ik = a.t_ik * b.t_ik * p / den;
    out.r_ki = (b.r_ki + (b.t_ik * b.t_ki - b.r_ik * b.r_ki) * a.r_ki * p2) / den;
    out.t_ki = b.t_ki * a.t_ki * p / den;
    return out;
  }

  // Resonance denominator of the cavity region: D1 = 1 - r_{1/0} r_{1/3} e^{2 i beta_1 l}.
  complexd D1() const {
    const complexd p2 = phase(1) * phase(1);
    return 1.0 - interface(1, 0).r_ik * composite(1, 3).r_ik * p2;
  }

  // Round-trip denominators of the coupling-mirror region, grounded on the
  // mirror (D2) and on the cavity side (D2p).
  complexd D2() const {
    const complexd p2 = phase(2) * phase(2);
    return 1.0 - composite(2, 0).r_ik * interface(2, 3).r_ik * p2;
  }
  complexd D2p() const {
    const complexd p2 = phase(2) * phase(2);
    return 1.0 - interface(2, 1).r_ik * interface(2, 3).r_ik * p2;
  }

 private:
  static int check_region(int j) {
    if (j < 1 || j > 3) throw std::invalid_argument("region index must be 1..3");
    return j;
  }

  LayerStack stack_;
  complexd omega_;
  std::array<complexd, 4> n_{};
  std::array<complexd, 4> beta_{};
};

// Bare-interface amplitudes between media with propagation constants bi, bk,
// seen from the bi side.
inline FresnelSet fresnel_interface(complexd bi, complexd bk) {
  const complexd sum = bi + bk;
  if (std::abs(sum) < 1e-300 ||
      std::abs(sum) < 1e-14 * (std::abs(bi) + std::abs(bk)))
    throw std::invalid_argument("fresnel_interface: singular interface (beta_i = -beta_k)");
  const complexd r = (bi - bk) / sum;
  return {r, -r, 1.0 + r, 1.0 - r};
}

struct CavityDenominators {
  complexd D1, D2, D2p;
};

inline CavityDenominators cavity_denominators(const LayerStack& stack, complexd omega) {
  const StackResponse s(stack, omega);
  return {s.D1(), s.D2(), s.D2p()};
}

// Maximum relative residual of the stack's internal partial-fraction
// identities at a given real frequency.  These tie the mirror-grounded and
// cavity-grounded round-trip expansions together and must hold to machine
// precision for any parameters; they are the consistency check the rest of
// the library leans on.
inline double verify_layer_identities(const LayerStack& stack, double omega) {
  const StackResponse s(stack, omega);
  const complexd p1 = s.phase(1), p2 = s.phase(2);
  const complexd D1 = s.D1(), D2 = s.D2(), D2p = s.D2p();

  const complexd r20 = s.composite(2, 0).r_ik;
  const FresnelSet f21 = s.interface(2, 1);
  const FresnelSet f23 = s.interface(2, 3);
  const FresnelSet f13 = s.composite(1, 3);
  const FresnelSet f03 = s.composite(0, 3);

  double worst = 0.0;
  auto residual = [&worst](complexd lhs, complexd rhs) {
    const double denom = std::max({1.0, std::abs(lhs), std::abs(rhs)});
    worst = std::max(worst, std::abs(lhs - rhs) / denom);
  };

  for (const double sign : {+1.0, -1.0}) {
    const complexd lhs = (1.0 + sign * r20 * p2) / D2 - (1.0 + sign * f21.r_ik * p2) / D2p;
    const complexd rhs =
        -sign * (f13.t_ik / (D1 * D2p)) * (f21.t_ik / f23.t_ik) * (1.0 + sign * f23.r_ik * p2) * p1 * p1;
    residual(lhs, rhs);
  }

  // Difference between outside reflections off the full stack and off the
  // mirrorless tail equals the cavity pole term.
  residual(f03.r_ki - f13.r_ki, -f13.t_ik * f13.t_ki * p1 * p1 / D1);

  // Stokes relations for each bare interface.
  for (int i = 1; i <= 2; ++i) {
    const FresnelSet f = s.interface(i, i + 1);
    residual(f.t_ik * f.t_ki - f.r_ik * f.r_ki, 1.0);
  }
  return worst;
}

}  // namespace cavityio
