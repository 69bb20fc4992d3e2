#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace cavityio {

using complexd = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Dispersive complex permittivity of a single layer.  Two models:
//  - constant: eps(w) = eps_re + i*eps_im, eps_im >= 0 (passive medium);
//    a narrowband stand-in, flagged as such in reports
//  - lorentz:  eps(w) = 1 + strength*w0^2 / (w0^2 - w^2 - i*gamma*w)
// eval() accepts complex frequency so the same model can be continued into
// the lower half plane when hunting for resonances.
struct PermittivityModel {
  enum class Kind { Constant, Lorentz };

  Kind kind = Kind::Constant;
  complexd eps_const{1.0, 0.0};
  double strength = 0.0;
  double omega0 = 0.0;
  double damping = 0.0;

  static PermittivityModel constant(double re, double im = 0.0) {
    if (im < 0.0) throw std::invalid_argument("permittivity: Im(eps) must be >= 0");
    if (re == 0.0 && im == 0.0) throw std::invalid_argument("permittivity: eps must be nonzero");
    PermittivityModel m;
    m.kind = Kind::Constant;
    m.eps_const = complexd(re, im);
    return m;
  }

  static PermittivityModel lorentz(double strength, double omega0, double damping) {
    if (strength < 0.0) throw std::invalid_argument("permittivity: strength must be >= 0");
    if (omega0 <= 0.0) throw std::invalid_argument("permittivity: omega0 must be > 0");
    if (damping < 0.0) throw std::invalid_argument("permittivity: damping must be >= 0");
    PermittivityModel m;
    m.kind = Kind::Lorentz;
    m.strength = strength;
    m.omega0 = omega0;
    m.damping = damping;
    return m;
  }

  complexd eval(complexd omega) const {
    if (kind == Kind::Constant) return eps_const;
    const complexd w02 = omega0 * omega0;
    const complexd den = w02 - omega * omega - complexd(0.0, 1.0) * damping * omega;
    return 1.0 + strength * w02 / den;
  }

  // Constant models ignore Kramers-Kronig; callers surface this in reports.
  bool narrowband_approximation() const { return kind == Kind::Constant; }

  bool is_lossless() const {
    if (kind == Kind::Constant) return eps_const.imag() == 0.0;
    return damping == 0.0;
  }
};

// Refractive index n = sqrt(eps) on the passive branch: for real frequency a
// passive eps lies in the closed upper half plane, and the principal square
// root then lands in the first quadrant (n' >= 0, n'' >= 0).  For complex
// frequency we keep the branch continuous by flipping sign if Re(n) < 0.
inline complexd refractive_index(const PermittivityModel& m, complexd omega) {
  if (omega.real() <= 0.0)
    throw std::invalid_argument("refractive_index: requires Re(omega) > 0");
  const complexd eps = m.eval(omega);
  if (omega.imag() == 0.0 && eps.imag() < 0.0)
    throw std::invalid_argument("refractive_index: passivity violated (Im eps < 0)");
  complexd n = std::sqrt(eps);
  if (n.real() < 0.0) n = -n;
  return n;
}

// Propagation constant beta_j = n_j * omega / c for propagation normal to the
// layer interfaces.
inline complexd propagation_beta(const PermittivityModel& m, complexd omega, double c) {
  return refractive_index(m, omega) * omega / c;
}

}  // namespace cavityio
