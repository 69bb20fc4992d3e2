#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>

#include "cavityio/permittivity.hpp"

namespace cavityio {
namespace detail {

inline constexpr double kEulerGamma = 0.57721566490153286060651209008240;

// Continued-fraction denominator f with e^z E1(z) = 1/f, by modified Lentz:
// E1(z) = e^{-z} / (z + 1/(1 + 1/(z + 2/(1 + 2/(z + ...))))).  Reliable away
// from the origin and the negative real axis (used here for |z| > 3 near the
// imaginary axis).
inline complexd e1_cf_denominator(complexd z) {
  const double tiny = 1e-290;
  complexd f = z, C = z, D = 0.0;
  for (int n = 1; n <= 400; ++n) {
    const complexd a(double((n + 1) / 2), 0.0);  // 1,1,2,2,3,3,...
    const complexd b = (n % 2 == 1) ? complexd(1.0, 0.0) : z;
    D = b + a * D;
    if (std::abs(D) < tiny) D = tiny;
    C = b + a / C;
    if (std::abs(C) < tiny) C = tiny;
    D = 1.0 / D;
    const complexd delta = C * D;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) return f;
  }
  throw std::runtime_error("e1_cf_denominator: continued fraction stalled");
}

// Series for E1(z) + gamma + log z (entire part), |z| small.
inline complexd e1_entire_series(complexd z) {
  complexd sum = 0.0;
  complexd term = 1.0;  // (-1)^{n-1} z^n / n! accumulates below
  for (int n = 1; n <= 60; ++n) {
    term *= -z / double(n);
    const complexd add = -term / double(n);
    sum += add;
    if (std::abs(add) < 1e-18 * (1.0 + std::abs(sum))) break;
  }
  return sum;
}

// Exponential integral E1(z), principal branch (cut along the negative real
// axis). Power series near the origin, continued fraction elsewhere.
inline complexd expint_e1(complexd z) {
  const double az = std::abs(z);
  if (az == 0.0) throw std::invalid_argument("expint_e1: z = 0");
  if (az <= 3.0)
    return -kEulerGamma - std::log(z) + e1_entire_series(z);
  return std::exp(-z) / e1_cf_denominator(z);
}

// Scaled exponential integral e^z E1(z); decays like 1/z for large |z|, so
// it stays representable where e^z alone would overflow.
inline complexd expint_e1_scaled(complexd z) {
  const double az = std::abs(z);
  if (az == 0.0) throw std::invalid_argument("expint_e1_scaled: z = 0");
  if (az <= 3.0)
    return std::exp(z) * (-kEulerGamma - std::log(z) + e1_entire_series(z));
  return 1.0 / e1_cf_denominator(z);
}

// Entire function Ein(z) = int_0^z (1 - e^{-u})/u du
//                        = gamma + log z + E1(z) away from the origin.
inline complexd ein(complexd z) {
  if (std::abs(z) <= 3.0) return e1_entire_series(z);
  return kEulerGamma + std::log(z) + expint_e1(z);
}

}  // namespace detail
}  // namespace cavityio
