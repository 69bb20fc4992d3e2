#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include "cavityio/phase_space.hpp"

using cavityio::ChannelEnsemble;
using cavityio::complexd;
using cavityio::kPi;
using cavityio::ModeWeights;
using cavityio::PhaseSpaceState;

namespace {

ModeWeights split_weights(double eta, double zin, double zc, double zp, double zm) {
  ModeWeights w;
  w.eta = eta;
  w.zeta_in = zin;
  w.zeta_cav = zc;
  w.zeta_plus = zp;
  w.zeta_minus = zm;
  return w;
}

double sup_diff_vs_gaussian(const PhaseSpaceState& grid,
                            const cavityio::GaussianState& ref) {
  PhaseSpaceState gs;
  gs.gaussian = ref;
  const auto f = cavityio::detail::scaled_sampler(gs, 1.0);
  double sup = 0.0;
  for (int ip = 0; ip < grid.grid.n; ++ip)
    for (int ix = 0; ix < grid.grid.n; ++ix) {
      const complexd a(grid.grid.coord(ix), grid.grid.coord(ip));
      sup = std::max(sup, std::abs(grid.grid.at(ix, ip) - f(a)));
    }
  return sup;
}

}  // namespace

TEST_CASE("thermal and Fock Wigner functions") {
  SUBCASE("values") {
    CHECK(cavityio::thermal_wigner(0.0, 0.0) == doctest::Approx(2.0 / kPi));
    CHECK(cavityio::thermal_wigner(1.0, 0.0) == doctest::Approx(2.0 / (3.0 * kPi)));
    CHECK(cavityio::fock_wigner(0, 0.0) == doctest::Approx(2.0 / kPi));
    CHECK(cavityio::fock_wigner(1, 0.0) == doctest::Approx(-2.0 / kPi));
    // n = 1: W = (2/pi)(4|a|^2 - 1) e^{-2|a|^2}, zero at |a| = 1/2
    CHECK(std::abs(cavityio::fock_wigner(1, complexd(0.5, 0.0))) < 1e-15);
  }

  SUBCASE("normalization by lattice sum") {
    for (double nb : {0.0, 1.0, 4.0}) {
      const auto g = cavityio::sample_grid(
          cavityio::default_half_width(0.0, nb), 256,
          [&](complexd a) { return cavityio::thermal_wigner(nb, a); });
      CHECK(g.mass() == doctest::Approx(1.0).epsilon(1e-6));
    }
    for (int n : {1, 3, 10}) {
      const auto g = cavityio::sample_grid(8.0, 256, [&](complexd a) {
        return cavityio::fock_wigner(n, a);
      });
      CHECK(g.mass() == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("xi bookkeeping") {
  const ModeWeights w = split_weights(0.8, 0.2, 0.0, 0.0, 0.0);
  SUBCASE("all Wigner orders give the delta shortcut") {
    const auto r = cavityio::xi_s(w, 0.0, 0.0, {0.0, 0.0, 0.0, 0.0});
    CHECK(r.xi == 0.0);
    CHECK(r.delta_case);
  }
  SUBCASE("Q-function output from Wigner inputs") {
    const auto r = cavityio::xi_s(w, -1.0, 0.0, {0.0, 0.0, 0.0, 0.0});
    CHECK(r.xi == doctest::Approx(1.0));
  }
  SUBCASE("P-ordered sources") {
    const auto r = cavityio::xi_s(w, 0.0, 1.0, {1.0, 0.0, 0.0, 0.0});
    CHECK(r.xi == doctest::Approx(1.0));
  }
  SUBCASE("undefined transform names the offending orders") {
    CHECK_THROWS_WITH_AS(cavityio::xi_s(w, 1.0, 0.0, {0.0, 0.0, 0.0, 0.0}),
                         doctest::Contains("xi_s: transform undefined"),
                         std::invalid_argument);
  }
}

TEST_CASE("output characteristic function") {
  const ModeWeights w = split_weights(0.7, 0.2, 0.06, 0.03, 0.01);
  const ChannelEnsemble vacuum_channels{};
  const PhaseSpaceState vac = cavityio::vacuum_state();

  SUBCASE("unit normalization at beta = 0") {
    const complexd c =
        cavityio::characteristic_out(0.0, vac, vac, vacuum_channels, w, 0.0);
    CHECK(std::abs(c - 1.0) < 1e-15);
  }

  SUBCASE("all-vacuum output is vacuum (sum rule)") {
    for (complexd beta : {complexd(0.3, -0.8), complexd(1.5, 0.2)}) {
      const complexd c =
          cavityio::characteristic_out(beta, vac, vac, vacuum_channels, w, 0.0);
      CHECK(std::abs(c - std::exp(-0.5 * std::norm(beta))) < 1e-12);
    }
  }

  SUBCASE("coherent cavity state keeps amplitude sqrt(eta) alpha0") {
    const complexd a0(1.2, -0.4);
    const PhaseSpaceState cav = cavityio::coherent_state(a0);
    for (complexd beta : {complexd(0.5, 0.1), complexd(-0.2, 0.9)}) {
      const complexd got =
          cavityio::characteristic_out(beta, cav, vac, vacuum_channels, w, 0.0);
      const complexd mean = std::sqrt(w.eta) * a0;
      const complexd ref = std::exp(beta * std::conj(mean) - std::conj(beta) * mean -
                                    0.5 * std::norm(beta));
      CHECK(std::abs(got - ref) < 1e-12);
    }
  }

  SUBCASE("grid state agrees with its Gaussian closed form") {
    PhaseSpaceState grid_vac;
    grid_vac.kind = PhaseSpaceState::Kind::grid;
    grid_vac.grid = cavityio::sample_grid(5.0, 128, [](complexd a) {
      return cavityio::thermal_wigner(0.0, a);
    });
    const complexd beta(0.7, -0.3);
    const complexd a = cavityio::detail::state_characteristic(grid_vac, beta);
    const complexd b = cavityio::detail::state_characteristic(vac, beta);
    CHECK(std::abs(a - b) < 1e-6);
  }
}

TEST_CASE("gaussian propagation oracle") {
  const ChannelEnsemble vacuum_channels{};
  SUBCASE("eta = 1 is the identity map") {
    const ModeWeights w = split_weights(1.0, 0.0, 0.0, 0.0, 0.0);
    cavityio::GaussianState cav;
    cav.mean = complexd(0.7, -1.1);
    cav.cov = {0.4, 0.05, 0.3};
    const auto out = cavityio::gaussian_propagate(cav, {}, vacuum_channels, w);
    CHECK(std::abs(out.mean - cav.mean) < 1e-15);
    CHECK(out.cov.xx == doctest::Approx(cav.cov.xx));
    CHECK(out.cov.xy == doctest::Approx(cav.cov.xy));
    CHECK(out.cov.pp == doctest::Approx(cav.cov.pp));
  }

  SUBCASE("vacuum fixed point uses the sum rule") {
    const ModeWeights w = split_weights(0.55, 0.3, 0.08, 0.05, 0.02);
    const auto out = cavityio::gaussian_propagate({}, {}, vacuum_channels, w);
    CHECK(std::abs(out.mean) < 1e-15);
    CHECK(out.cov.xx == doctest::Approx(0.25));
    CHECK(out.cov.pp == doctest::Approx(0.25));
    CHECK(out.cov.xy == doctest::Approx(0.0));
  }

  SUBCASE("physicality of the output covariance") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      double parts[5];
      double sum = 0.0;
      for (double& p : parts) sum += (p = u(rng));
      const ModeWeights w = split_weights(parts[0] / sum, parts[1] / sum,
                                          parts[2] / sum, parts[3] / sum,
                                          parts[4] / sum);
      const double r = u(rng);
      cavityio::GaussianState cav = cavityio::squeezed_state(r, kPi * u(rng)).gaussian;
      cavityio::GaussianState in = cavityio::thermal_state(3.0 * u(rng)).gaussian;
      ChannelEnsemble ch{u(rng), u(rng), u(rng)};
      const auto out = cavityio::gaussian_propagate(cav, in, ch, w);
      CHECK(out.cov.min_eigenvalue() >= 0.25 - 1e-9);
    }
  }
}

TEST_CASE("grid output transform") {
  const ChannelEnsemble vacuum_channels{};

  SUBCASE("matches the Gaussian oracle for Gaussian inputs") {
    const ModeWeights w = split_weights(0.6, 0.25, 0.09, 0.04, 0.02);
    const PhaseSpaceState cav = cavityio::coherent_state(complexd(1.0, 0.5));
    const PhaseSpaceState in = cavityio::squeezed_state(0.6, 0.3);
    ChannelEnsemble ch{1.5, 0.2, 0.0};
    const auto out = cavityio::p_out_transform(cav, in, ch, w, 0.0);
    CHECK(std::abs(out.grid.mass() - 1.0) < 1e-3);
    const auto ref = cavityio::gaussian_propagate(cav.gaussian, in.gaussian, ch, w);
    CHECK(sup_diff_vs_gaussian(out, ref) < 1e-4);
  }

  SUBCASE("single-photon extraction against the two-level loss oracle") {
    for (double eta : {0.25, 0.5, 0.9}) {
      const ModeWeights w = split_weights(eta, 1.0 - eta, 0.0, 0.0, 0.0);
      const PhaseSpaceState cav = cavityio::fock_state_grid(1, 10.0, 512);
      const auto out = cavityio::p_out_transform(cav, cavityio::vacuum_state(),
                                                 vacuum_channels, w, 0.0, 10.0, 512);
      // loss-channel output density operator: eta |1><1| + (1-eta)|0><0|
      double sup = 0.0;
      for (int ip = 0; ip < out.grid.n; ip += 3)
        for (int ix = 0; ix < out.grid.n; ix += 3) {
          const complexd a(out.grid.coord(ix), out.grid.coord(ip));
          const double oracle = eta * cavityio::fock_wigner(1, a) +
                                (1.0 - eta) * cavityio::fock_wigner(0, a);
          sup = std::max(sup, std::abs(out.grid.at(ix, ip) - oracle));
        }
      CHECK(sup < 1e-4);
      const int c = out.grid.n / 2;  // node exactly at the origin
      const double w0_oracle = (2.0 / kPi) * (1.0 - 2.0 * eta);
      CHECK(std::abs(out.grid.at(c, c) - w0_oracle) < 1e-4);
    }
  }

  SUBCASE("negativity threshold sits at eta = 1/2") {
    auto w_origin = [&](double eta) {
      const ModeWeights w = split_weights(eta, 1.0 - eta, 0.0, 0.0, 0.0);
      const PhaseSpaceState cav = cavityio::fock_state_grid(1, 8.0, 128);
      const auto out = cavityio::p_out_transform(cav, cavityio::vacuum_state(),
                                                 vacuum_channels, w, 0.0, 8.0, 128);
      return out.grid.at(out.grid.n / 2, out.grid.n / 2);
    };
    double lo = 0.3, hi = 0.7;
    REQUIRE(w_origin(lo) > 0.0);
    REQUIRE(w_origin(hi) < 0.0);
    while (hi - lo > 5e-4) {
      const double mid = 0.5 * (lo + hi);
      (w_origin(mid) > 0.0 ? lo : hi) = mid;
    }
    CHECK(std::abs(0.5 * (lo + hi) - 0.5) < 1e-3);
  }

  SUBCASE("window too small raises a leakage error") {
    const ModeWeights w = split_weights(0.9, 0.1, 0.0, 0.0, 0.0);
    const PhaseSpaceState cav = cavityio::coherent_state(complexd(3.5, 0.0));
    CHECK_THROWS_AS(cavityio::p_out_transform(cav, cavityio::vacuum_state(),
                                              vacuum_channels, w, 0.0, 2.0, 64),
                    std::runtime_error);
  }
}

TEST_CASE("thermal Wigner output") {
  SUBCASE("kernel width formula") {
    const ModeWeights w = split_weights(0.6, 0.3, 0.1, 0.0, 0.0);
    ChannelEnsemble ch{2.0, 0.0, 0.0};
    CHECK(cavityio::xi_wigner_thermal(w, ch) == doctest::Approx(0.5));
  }

  SUBCASE("all-vacuum output is the vacuum Wigner function") {
    const ModeWeights w = split_weights(0.7, 0.18, 0.07, 0.04, 0.01);
    const auto out = cavityio::wigner_out_thermal(
        cavityio::vacuum_state(), cavityio::vacuum_state(), {}, w);
    CHECK(sup_diff_vs_gaussian(out, cavityio::GaussianState{}) < 1e-4);
  }

  SUBCASE("matches the general transform and the covariance oracle") {
    const ModeWeights w = split_weights(0.5, 0.2, 0.15, 0.1, 0.05);
    ChannelEnsemble ch{3.0, 1.0, 0.5};
    const PhaseSpaceState cav = cavityio::coherent_state(complexd(0.8, -0.6));
    const PhaseSpaceState in = cavityio::thermal_state(0.7);
    const auto a = cavityio::wigner_out_thermal(cav, in, ch, w, 12.0, 256);
    const auto b = cavityio::p_out_transform(cav, in, ch, w, 0.0, 12.0, 256);
    double sup = 0.0;
    for (std::size_t i = 0; i < a.grid.values.size(); ++i)
      sup = std::max(sup, std::abs(a.grid.values[i] - b.grid.values[i]));
    CHECK(sup < 1e-4);
    const auto ref = cavityio::gaussian_propagate(cav.gaussian, in.gaussian, ch, w);
    CHECK(sup_diff_vs_gaussian(a, ref) < 1e-4);
    // thermal broadening: variance grows beyond vacuum
    CHECK(ref.cov.xx > 0.25);
  }
}

TEST_CASE("extraction report") {
  SUBCASE("lossless limit") {
    const ModeWeights w = split_weights(1.0, 0.0, 0.0, 0.0, 0.0);
    const auto r = cavityio::extraction_report(w, {});
    CHECK(std::isinf(r.merit_lossless));
    CHECK(std::isinf(r.merit_thermal));
    CHECK(r.suppression_ratio == doctest::Approx(1.0));
  }
  SUBCASE("substitution") {
    const ModeWeights w = split_weights(0.8, 0.04, 0.1, 0.04, 0.02);
    ChannelEnsemble ch{1.0, 10.0, 0.0};
    const auto r = cavityio::extraction_report(w, ch);
    CHECK(r.merit_lossless == doctest::Approx(4.0));
    const double th = 2.0 * (1.0 * 0.1 + 10.0 * 0.04);
    CHECK(r.merit_thermal == doctest::Approx(0.8 / (0.2 + th)));
    CHECK(r.weight_input == doctest::Approx(0.04 / (0.16 + th)));
    CHECK(r.weight_cavity == doctest::Approx(0.8 / (0.16 + th)));
    CHECK(r.suppression_ratio == doctest::Approx(0.04 / 0.04));
    // thermal occupation strictly lowers the merit
    CHECK(r.merit_thermal < r.merit_lossless);
  }
}

TEST_CASE("fidelity") {
  SUBCASE("Gaussian closed forms") {
    const PhaseSpaceState vac = cavityio::vacuum_state();
    CHECK(cavityio::fidelity(vac, vac) == doctest::Approx(1.0));
    const PhaseSpaceState coh = cavityio::coherent_state(complexd(1.0, 0.0));
    CHECK(cavityio::fidelity(vac, coh) == doctest::Approx(std::exp(-1.0)));
    CHECK(cavityio::fidelity(coh, coh) == doctest::Approx(1.0));
  }
  SUBCASE("grid against Gaussian") {
    PhaseSpaceState gvac;
    gvac.kind = PhaseSpaceState::Kind::grid;
    gvac.grid = cavityio::sample_grid(6.0, 256, [](complexd a) {
      return cavityio::thermal_wigner(0.0, a);
    });
    CHECK(cavityio::fidelity(gvac, cavityio::vacuum_state()) ==
          doctest::Approx(1.0).epsilon(1e-6));
    const PhaseSpaceState one = cavityio::fock_state_grid(1, 6.0, 256);
    CHECK(std::abs(cavityio::fidelity(one, cavityio::vacuum_state())) < 1e-6);
  }
}

TEST_CASE("grid serialization") {
  const PhaseSpaceState st = cavityio::fock_state_grid(2, 6.0, 64);
  SUBCASE("binary round trip") {
    std::stringstream ss;
    cavityio::write_grid_binary(st, ss);
    const PhaseSpaceState back = cavityio::read_grid_binary(ss);
    REQUIRE(back.grid.n == st.grid.n);
    CHECK(back.grid.half_width == st.grid.half_width);
    CHECK(back.s_order == st.s_order);
    CHECK(back.grid.values == st.grid.values);
  }
  SUBCASE("csv carries the geometry header") {
    std::stringstream ss;
    cavityio::write_grid_csv(st, ss);
    const std::string text = ss.str();
    CHECK(text.find("# half_width,6") != std::string::npos);
    CHECK(text.find("# resolution,64") != std::string::npos);
  }
  SUBCASE("bad magic rejected") {
    std::stringstream ss("garbage-not-a-grid");
    CHECK_THROWS_AS(cavityio::read_grid_binary(ss), std::runtime_error);
  }
}
