#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include "cavityio/quadrature.hpp"
#include "cavityio/stack.hpp"

namespace cavityio {

// Unit-strength rightward / leftward waves in a layer, each already carrying
// its reflection off the respective end of the stack.  Positions are
// layer-local: z in [0, thickness] for the finite layers, z >= 0 in layer 3.
struct WaveAmplitudes {
  complexd rightward;  // reflected at the open (right) end
  complexd leftward;   // reflected at the mirror (left) end
};

namespace detail {

inline void check_local_position(const LayerStack& stack, int j, double z) {
  if (j < 1 || j > 3) throw std::invalid_argument("layer index must be 1..3");
  if (z < 0.0) throw std::invalid_argument("position below layer");
  if (j < 3 && z > stack.thickness(j)) throw std::invalid_argument("position beyond layer");
}

inline complexd r_toward_open(const StackResponse& s, int j) {
  return j == 3 ? complexd(0.0) : s.composite(j, 3).r_ik;
}

inline complexd r_toward_mirror(const StackResponse& s, int j) {
  return s.composite(j, 0).r_ik;
}

// Round-trip denominator of layer j, grounded on both ends of the stack.
inline complexd layer_denominator(const StackResponse& s, int j) {
  if (j == 3) return complexd(1.0);
  const complexd p = s.phase(j);
  return 1.0 - r_toward_mirror(s, j) * r_toward_open(s, j) * p * p;
}

}  // namespace detail

inline WaveAmplitudes wave_amplitudes(const StackResponse& s, int j, double z) {
  detail::check_local_position(s.stack(), j, z);
  const complexd i1(0.0, 1.0);
  const complexd b = s.beta(j);
  const double dj = s.stack().thickness(j);
  WaveAmplitudes w;
  w.rightward = std::exp(i1 * b * (z - dj)) +
                detail::r_toward_open(s, j) * std::exp(-i1 * b * (z - dj));
  w.leftward = std::exp(-i1 * b * z) +
               detail::r_toward_mirror(s, j) * std::exp(i1 * b * z);
  return w;
}

inline WaveAmplitudes wave_amplitudes(const LayerStack& stack, int j, double z,
                                      complexd omega) {
  return wave_amplitudes(StackResponse(stack, omega), j, z);
}

// Coupling weight between the rightward wave of layer j and the leftward wave
// of layer j'.  The formal mirror transmission enters both numerator and
// denominator and cancels, so the expression stays finite.
inline complexd green_weight(const StackResponse& s, int j, int jp) {
  const complexd i1(0.0, 1.0);
  auto t_from_mirror = [&s](int k) {
    return k == 3 ? s.composite(0, 3).t_ik : s.composite(0, k).t_ik;
  };
  auto t_from_open = [&s](int k) {
    return k == 3 ? complexd(1.0) : s.composite(3, k).t_ik;
  };
  const complexd t03 = s.composite(0, 3).t_ik;
  const complexd fj = t_from_mirror(j) * std::exp(i1 * s.beta(j) * s.stack().thickness(j)) /
                      detail::layer_denominator(s, j);
  const complexd fjp = t_from_open(jp) *
                       std::exp(i1 * s.beta(jp) * s.stack().thickness(jp)) /
                       detail::layer_denominator(s, jp);
  return fj * fjp / (s.beta(3) * t03);
}

// Scalar 1D Green function of the layered Helmholtz problem,
// (d^2/dz^2 + (w/c)^2 eps) G = -delta, with a node on the mirror and outgoing
// behavior in layer 3.  Reciprocal in (j, z) <-> (j', z') by construction.
inline complexd green(const StackResponse& s, int j, double z, int jp, double zp) {
  detail::check_local_position(s.stack(), j, z);
  detail::check_local_position(s.stack(), jp, zp);
  const complexd half_i(0.0, 0.5);
  const bool source_left = (j > jp) || (j == jp && z >= zp);
  if (source_left) {
    return half_i * wave_amplitudes(s, j, z).rightward * green_weight(s, j, jp) *
           wave_amplitudes(s, jp, zp).leftward;
  }
  return half_i * wave_amplitudes(s, j, z).leftward * green_weight(s, jp, j) *
         wave_amplitudes(s, jp, zp).rightward;
}

inline complexd green(const LayerStack& stack, int j, double z, int jp, double zp,
                      complexd omega) {
  return green(StackResponse(stack, omega), j, z, jp, zp);
}

// |d^2_z G + (w/c)^2 eps_j G| via a central 3-point stencil of step h.
// Second-order accurate away from the source point and layer boundaries.
inline double helmholtz_residual(const LayerStack& stack, int j, double z, int jp,
                                 double zp, double omega, double h) {
  if (h <= 0.0) throw std::invalid_argument("helmholtz_residual: h must be > 0");
  const double width = (j == 3) ? std::numeric_limits<double>::infinity()
                                : stack.thickness(j);
  if (z - h < 0.0 || z + h > width)
    throw std::invalid_argument("helmholtz_residual: stencil crosses a layer boundary");
  if (j == jp && std::abs(z - zp) <= h)
    throw std::invalid_argument("helmholtz_residual: stencil crosses the source point");
  const StackResponse s(stack, omega);
  const complexd gm = green(s, j, z - h, jp, zp);
  const complexd g0 = green(s, j, z, jp, zp);
  const complexd gp = green(s, j, z + h, jp, zp);
  const complexd d2 = (gp - 2.0 * g0 + gm) / (h * h);
  const complexd eps = stack.eps(j).eval(omega);
  return std::abs(d2 + (omega / stack.c) * (omega / stack.c) * eps * g0);
}

// Relative residual of the dissipation identity
//   Im G(z1, z2) = (w/c)^2 Int dx eps''(x) G(z1, x) G*(z2, x),
// the integral running over the whole stack.  The semi-infinite layer-3 tail
// is an exponential integral done in closed form; when layer 3 is lossless
// its lossy limit eps''/(2 beta'') -> n' c / w is substituted, which is the
// radiated (rather than absorbed) part of the same flux balance.
inline double absorption_identity_residual(const LayerStack& stack, double z1,
                                           double z2, double omega) {
  if (!stack.backed_by_mirror)
    throw std::invalid_argument("absorption_identity_residual: requires the mirror-backed stack");
  const StackResponse s(stack, omega);
  detail::check_local_position(stack, 1, z1);
  detail::check_local_position(stack, 1, z2);

  const complexd lhs = std::complex<double>(green(s, 1, z1, 1, z2).imag(), 0.0);
  const double w2c2 = (omega / stack.c) * (omega / stack.c);

  complexd rhs = 0.0;
  for (int layer = 1; layer <= 2; ++layer) {
    const double eps_im = stack.eps(layer).eval(omega).imag();
    if (eps_im == 0.0 || stack.thickness(layer) == 0.0) continue;
    auto integrand = [&](double x) {
      return green(s, 1, z1, layer, x) * std::conj(green(s, 1, z2, layer, x));
    };
    std::vector<double> bp;
    if (layer == 1) bp = {std::min(z1, z2), std::max(z1, z2)};
    const auto q = integrate<complexd>(integrand, 0.0, stack.thickness(layer),
                                       1e-16, 1e-11, bp);
    rhs += w2c2 * eps_im * q.value;
  }

  // Layer-3 tail: G(z, x) = C(z) e^{i beta3 x} for x in layer 3.
  const complexd xi31 = green_weight(s, 3, 1);
  const complexd c1 = complexd(0.0, 0.5) * xi31 * wave_amplitudes(s, 1, z1).leftward;
  const complexd c2 = complexd(0.0, 0.5) * xi31 * wave_amplitudes(s, 1, z2).leftward;
  const complexd b3 = s.beta(3);
  const double eps3_im = stack.eps(3).eval(omega).imag();
  double tail_factor;  // closed form of eps3'' * Int_0^inf |e^{i beta3 x}|^2 dx
  if (b3.imag() > 1e-12 * std::abs(b3)) {
    tail_factor = eps3_im / (2.0 * b3.imag());
  } else {
    tail_factor = s.n(3).real() * stack.c / omega;  // lossless (radiating) limit
  }
  rhs += w2c2 * tail_factor * c1 * std::conj(c2);

  const double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
  return std::abs(lhs - rhs) / scale;
}

}  // namespace cavityio
