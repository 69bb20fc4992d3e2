#include <doctest.h>

#include <cmath>
#include <complex>

#include "cavityio/permittivity.hpp"
#include "cavityio/quadrature.hpp"

using cavityio::complexd;
using cavityio::integrate;
using cavityio::kPi;

TEST_CASE("polynomials up to degree 10 are integrated near machine precision") {
  auto f = [](double x) { return ((x - 2.0) * x + 1.0) * std::pow(x, 8); };
  // antiderivative: x^11/11 - 2 x^10/10 + x^9/9 on [0, 2]
  const double exact = std::pow(2.0, 11) / 11.0 - std::pow(2.0, 10) / 5.0 + std::pow(2.0, 9) / 9.0;
  const auto q = integrate<double>(f, 0.0, 2.0);
  CHECK(q.converged);
  CHECK(std::abs(q.value - exact) < 1e-12 * std::abs(exact));
}

TEST_CASE("oscillatory complex integrand against closed form") {
  const complexd a(1.5, 40.0);  // integral of e^{a x} over [0, 1]
  auto f = [a](double x) { return std::exp(a * x); };
  const complexd exact = (std::exp(a) - 1.0) / a;
  const auto q = integrate<complexd>(f, 0.0, 1.0, 1e-14, 1e-13);
  CHECK(q.converged);
  CHECK(std::abs(q.value - exact) < 1e-12 * std::abs(exact));
}

TEST_CASE("kinked integrand converges once the kink is a breakpoint") {
  auto f = [](double x) { return std::abs(x - 0.3123456); };
  const double exact = 0.5 * (0.3123456 * 0.3123456 + (1.0 - 0.3123456) * (1.0 - 0.3123456));
  const auto with_bp = integrate<double>(f, 0.0, 1.0, 1e-14, 1e-13, {0.3123456});
  CHECK(with_bp.converged);
  CHECK(std::abs(with_bp.value - exact) < 1e-13);
}

TEST_CASE("narrow lorentzian peak is resolved adaptively") {
  const double w = 1e-6;
  auto f = [w](double x) { return w / (w * w + (x - 0.5) * (x - 0.5)); };
  const double exact = std::atan(0.5 / w) - std::atan(-0.5 / w);
  const auto q = integrate<double>(f, 0.0, 1.0, 1e-14, 1e-11, {0.5});
  CHECK(q.converged);
  CHECK(std::abs(q.value - exact) < 1e-9 * exact);
}

TEST_CASE("degenerate and reversed intervals") {
  auto f = [](double x) { return x; };
  const auto q = integrate<double>(f, 1.0, 1.0);
  CHECK(q.value == 0.0);
  CHECK_THROWS(integrate<double>(f, 1.0, 0.0));
}
