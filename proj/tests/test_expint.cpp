#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "cavityio/expint.hpp"
#include "cavityio/quadrature.hpp"

using cavityio::complexd;

namespace {

// E1(z) by direct quadrature of Int_1^inf e^{-z s} / s ds, valid for Re z > 0.
// Substituting s = 1 + u / Re z keeps the decay scale of order one.
complexd e1_quadrature(complexd z) {
  const double x = z.real();
  auto f = [&](double u) {
    const double s = 1.0 + u / x;
    return std::exp(-z * s) / s * (1.0 / x);
  };
  double hi = 60.0;  // e^{-60} below double noise relative to e^{-z}
  const auto q = cavityio::integrate<complexd>(f, 0.0, hi, 1e-300, 1e-13, {}, 200000);
  REQUIRE(q.converged);
  return q.value;
}

}  // namespace

TEST_CASE("exponential integral") {
  SUBCASE("real axis against known values") {
    // Abramowitz & Stegun 5.1.20 table entries.
    CHECK(cavityio::detail::expint_e1(complexd(1.0, 0.0)).real() ==
          doctest::Approx(0.2193839344).epsilon(1e-9));
    CHECK(cavityio::detail::expint_e1(complexd(2.0, 0.0)).real() ==
          doctest::Approx(0.0489005107).epsilon(1e-9));
    CHECK(cavityio::detail::expint_e1(complexd(10.0, 0.0)).real() ==
          doctest::Approx(4.15696893e-6).epsilon(1e-7));
    CHECK(cavityio::detail::expint_e1(complexd(0.5, 0.0)).real() ==
          doctest::Approx(0.5597735948).epsilon(1e-9));
  }

  SUBCASE("complex plane against quadrature") {
    const std::vector<complexd> zs{
        {0.3, 0.2}, {2.5, -1.0}, {0.1, 4.0},   {5.0, 40.0}, {0.5, -30.0},
        {8.0, 8.0}, {0.9, 2.9},  {12.0, -0.5}, {3.0, 60.0}, {30.0, 1.0},
    };
    for (const complexd z : zs) {
      const complexd ref = e1_quadrature(z);
      const complexd got = cavityio::detail::expint_e1(z);
      CHECK(std::abs(got - ref) <= 1e-12 * std::abs(ref) + 1e-280);
    }
  }

  SUBCASE("scaled form avoids underflow") {
    // e^z E1(z) ~ 1/z for large |z|; the plain value underflows long before.
    const complexd z(800.0, 1e5);
    const complexd s = cavityio::detail::expint_e1_scaled(z);
    CHECK(std::abs(s * z - 1.0) < 0.01);  // leading asymptotic term
    // one asymptotic order deeper: e^z E1(z) = 1/z - 1/z^2 + 2/z^3 - ...
    const complexd asym = 1.0 / z - 1.0 / (z * z) + 2.0 / (z * z * z);
    CHECK(std::abs(s - asym) <= 1e-10 * std::abs(asym));
  }

  SUBCASE("Ein is entire and matches the series near zero") {
    // Ein(z) = z - z^2/4 + z^3/18 - ... = sum (-1)^{n-1} z^n / (n n!)
    for (const complexd z : {complexd(1e-3, 2e-3), complexd(-0.2, 0.1)}) {
      complexd ref{};
      complexd term(1.0, 0.0);
      for (int n = 1; n <= 30; ++n) {
        term *= -z / double(n);
        ref += -term / double(n);
      }
      CHECK(std::abs(cavityio::detail::ein(z) - ref) < 1e-14);
    }
    // continuity across the negative real axis (E1 has the cut, Ein must not)
    const complexd above = cavityio::detail::ein(complexd(-2.0, 1e-12));
    const complexd below = cavityio::detail::ein(complexd(-2.0, -1e-12));
    CHECK(std::abs(above - below) < 1e-10);
  }

  SUBCASE("identity Ein(z) = gamma + log z + E1(z)") {
    for (const complexd z : {complexd(0.5, 1.5), complexd(4.0, -2.0)}) {
      const complexd lhs = cavityio::detail::ein(z);
      const complexd rhs = cavityio::detail::kEulerGamma + std::log(z) +
                           cavityio::detail::expint_e1(z);
      CHECK(std::abs(lhs - rhs) < 1e-13 * (1.0 + std::abs(lhs)));
    }
  }
}
