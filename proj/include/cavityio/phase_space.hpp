#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>

#include "cavityio/io_weights.hpp"

namespace cavityio {

// Phase-space convention used throughout: alpha = x + i p, quadrature vector
// v = (x, p), and the vacuum Wigner covariance is diag(1/4, 1/4).  With that
// choice the thermal Wigner function W = (2/pi)(1+2n)^{-1} e^{-2|a|^2/(1+2n)}
// integrates to one under d^2 alpha = dx dp.

// 2x2 real symmetric covariance in quadrature variables.
struct Covariance2 {
  double xx = 0.25, xy = 0.0, pp = 0.25;

  double det() const { return xx * pp - xy * xy; }
  bool positive_definite() const { return xx > 0.0 && det() > 0.0; }
  double min_eigenvalue() const {
    const double tr = xx + pp;
    const double disc = std::sqrt(0.25 * (xx - pp) * (xx - pp) + xy * xy);
    return 0.5 * tr - disc;
  }
};

struct GaussianState {
  complexd mean{0.0, 0.0};
  Covariance2 cov{};
};

// Square window [-A, A)^2 sampled on the node lattice x_j = -A + j step
// (even n puts the origin exactly on the node j = n/2), values row-major with
// the p index as the slow (row) axis: values[ip * n + ix] = P(x_ix + i p_ip).
struct GridState {
  double half_width = 5.0;
  int n = 256;
  std::vector<double> values;

  double step() const { return 2.0 * half_width / n; }
  double coord(int i) const { return -half_width + i * step(); }
  double& at(int ix, int ip) { return values[std::size_t(ip) * n + ix]; }
  double at(int ix, int ip) const { return values[std::size_t(ip) * n + ix]; }
  double mass() const {
    double m = 0.0;
    for (double v : values) m += v;
    return m * step() * step();
  }
};

struct PhaseSpaceState {
  enum class Kind { gaussian, grid };
  Kind kind = Kind::gaussian;
  double s_order = 0.0;
  GaussianState gaussian{};
  GridState grid{};

  bool is_gaussian() const { return kind == Kind::gaussian; }

  void validate() const {
    if (s_order > 1.0)
      throw std::invalid_argument("PhaseSpaceState: s order must be <= 1");
    if (kind == Kind::gaussian) {
      if (!gaussian.cov.positive_definite())
        throw std::invalid_argument("PhaseSpaceState: covariance not positive definite");
    } else {
      if (grid.n < 2 || grid.half_width <= 0.0)
        throw std::invalid_argument("PhaseSpaceState: bad grid geometry");
      if (grid.values.size() != std::size_t(grid.n) * grid.n)
        throw std::invalid_argument("PhaseSpaceState: grid size mismatch");
      if (std::abs(grid.mass() - 1.0) > 1e-3)
        throw std::invalid_argument("PhaseSpaceState: grid not normalized");
    }
  }
};

// Thermal occupation of the three absorption channels; the input mode can be
// an arbitrary state, the other environment modes are assumed vacuum.
struct ChannelEnsemble {
  double n_bar_cav = 0.0;
  double n_bar_plus = 0.0;
  double n_bar_minus = 0.0;

  void validate() const {
    if (n_bar_cav < 0.0 || n_bar_plus < 0.0 || n_bar_minus < 0.0)
      throw std::invalid_argument("ChannelEnsemble: mean occupation must be >= 0");
  }
};

inline double thermal_wigner(double n_bar, complexd alpha) {
  if (n_bar < 0.0) throw std::invalid_argument("thermal_wigner: n_bar must be >= 0");
  const double width = 1.0 + 2.0 * n_bar;
  return 2.0 / (kPi * width) * std::exp(-2.0 * std::norm(alpha) / width);
}

// Fock-state Wigner function W_n = (2/pi)(-1)^n L_n(4|a|^2) e^{-2|a|^2}.
inline double fock_wigner(int n, complexd alpha) {
  if (n < 0 || n > 10)
    throw std::invalid_argument("fock_wigner: only n in [0, 10] is tabulated");
  const double x = 4.0 * std::norm(alpha);
  double lm = 1.0, l = 1.0 - x;  // L_0, L_1
  if (n == 0) l = lm;
  for (int k = 1; k < n; ++k) {
    const double lp = ((2.0 * k + 1.0 - x) * l - k * lm) / (k + 1.0);
    lm = l;
    l = lp;
  }
  const double sign = (n % 2 == 0) ? 1.0 : -1.0;
  return 2.0 / kPi * sign * l * std::exp(-2.0 * std::norm(alpha));
}

// State constructors (all Wigner order s = 0).
inline PhaseSpaceState vacuum_state() { return {}; }

inline PhaseSpaceState coherent_state(complexd alpha0) {
  PhaseSpaceState st;
  st.gaussian.mean = alpha0;
  return st;
}

inline PhaseSpaceState thermal_state(double n_bar) {
  if (n_bar < 0.0) throw std::invalid_argument("thermal_state: n_bar must be >= 0");
  PhaseSpaceState st;
  const double v = (1.0 + 2.0 * n_bar) / 4.0;
  st.gaussian.cov = {v, 0.0, v};
  return st;
}

// Squeezing r along the axis rotated by phi/2: variances e^{-2r}/4, e^{+2r}/4.
inline PhaseSpaceState squeezed_state(double r, double phi) {
  PhaseSpaceState st;
  const double vm = std::exp(-2.0 * r) / 4.0, vp = std::exp(2.0 * r) / 4.0;
  const double ch = std::cos(phi), sh = std::sin(phi);
  st.gaussian.cov.xx = vm * ch * ch + vp * sh * sh;
  st.gaussian.cov.pp = vm * sh * sh + vp * ch * ch;
  st.gaussian.cov.xy = (vm - vp) * ch * sh;
  return st;
}

inline GridState sample_grid(double half_width, int n,
                             const std::function<double(complexd)>& f) {
  GridState g;
  g.half_width = half_width;
  g.n = n;
  g.values.resize(std::size_t(n) * n);
  for (int ip = 0; ip < n; ++ip)
    for (int ix = 0; ix < n; ++ix)
      g.at(ix, ip) = f(complexd(g.coord(ix), g.coord(ip)));
  return g;
}

inline PhaseSpaceState fock_state_grid(int n_photons, double half_width, int n) {
  PhaseSpaceState st;
  st.kind = PhaseSpaceState::Kind::grid;
  st.grid = sample_grid(half_width, n,
                        [&](complexd a) { return fock_wigner(n_photons, a); });
  return st;
}

// Default window: generous for every shipped scenario (< 0.1% mass outside).
inline double default_half_width(double max_amplitude, double max_n_bar) {
  return 5.0 * (1.0 + max_amplitude + std::sqrt(std::max(max_n_bar, 0.0)));
}
inline constexpr int kDefaultGridN = 256;

// Order bookkeeping of the output transform: xi = eta s' + sum zeta_s s_s - s.
struct XiResult {
  double xi = 0.0;
  bool delta_case = false;  // xi == 0: pure convolution, no smoothing kernel
};

inline XiResult xi_s(const ModeWeights& w, double s_out, double s_cav,
                     const std::array<double, 4>& s_channels /* in, cav, +, - */) {
  const double xi = w.eta * s_cav + w.zeta_in * s_channels[0] +
                    w.zeta_cav * s_channels[1] + w.zeta_plus * s_channels[2] +
                    w.zeta_minus * s_channels[3] - s_out;
  if (xi < 0.0) {
    std::string msg = "xi_s: transform undefined (xi = " + std::to_string(xi) +
                      " < 0) for output order s = " + std::to_string(s_out) +
                      ", cavity order s' = " + std::to_string(s_cav) +
                      ", channel orders (in, cav, +, -) = (" +
                      std::to_string(s_channels[0]) + ", " +
                      std::to_string(s_channels[1]) + ", " +
                      std::to_string(s_channels[2]) + ", " +
                      std::to_string(s_channels[3]) + ")";
    throw std::invalid_argument(msg);
  }
  return {xi, xi == 0.0};
}

namespace detail {

// C_s(beta) of a Gaussian state: with beta a dagger - beta* a =
// 2i(Im(beta) x - Re(beta) p) the expectation is a 2D Gaussian moment.
inline complexd gaussian_characteristic(const GaussianState& g, double s,
                                        complexd beta) {
  const double u = beta.imag(), v = -beta.real();
  const double quad = g.cov.xx * u * u + 2.0 * g.cov.xy * u * v + g.cov.pp * v * v;
  const complexd phase(0.0, 2.0 * (u * g.mean.real() + v * g.mean.imag()));
  return std::exp(phase - 2.0 * quad + 0.5 * s * std::norm(beta));
}

// C_s(beta) of a grid state by direct Fourier sum (small-beta use only).
inline complexd grid_characteristic(const GridState& g, complexd beta) {
  complexd acc{};
  const double cell = g.step() * g.step();
  for (int ip = 0; ip < g.n; ++ip)
    for (int ix = 0; ix < g.n; ++ix) {
      const complexd a(g.coord(ix), g.coord(ip));
      acc += g.at(ix, ip) * std::exp(beta * std::conj(a) - std::conj(beta) * a);
    }
  return acc * cell;
}

inline complexd state_characteristic(const PhaseSpaceState& st, complexd beta) {
  if (st.is_gaussian())
    return gaussian_characteristic(st.gaussian, st.s_order, beta);
  return grid_characteristic(st.grid, beta);
}

}  // namespace detail

// Output characteristic function: the product form
//   C_out(beta; s) = e^{-xi |beta|^2 / 2} C_cav(sqrt(eta) beta; s')
//                    Prod_sigma C_sigma(sqrt(zeta_sigma) beta; s_sigma)
// with the absorption channels thermal (order 0) and the input mode explicit.
inline complexd characteristic_out(complexd beta, const PhaseSpaceState& cavity,
                                   const PhaseSpaceState& input,
                                   const ChannelEnsemble& channels,
                                   const ModeWeights& w, double s_out) {
  cavity.validate();
  input.validate();
  channels.validate();
  const XiResult xi = xi_s(w, s_out, cavity.s_order,
                           {input.s_order, 0.0, 0.0, 0.0});
  complexd c = std::exp(complexd(-0.5 * xi.xi * std::norm(beta), 0.0));
  c *= detail::state_characteristic(cavity, std::sqrt(w.eta) * beta);
  c *= detail::state_characteristic(input, std::sqrt(w.zeta_in) * beta);
  auto thermal_c = [&](double zeta, double n_bar) {
    // thermal C_0(b) = e^{-(1 + 2 n_bar)|b|^2 / 2}
    return std::exp(-0.5 * (1.0 + 2.0 * n_bar) * zeta * std::norm(beta));
  };
  c *= thermal_c(w.zeta_cav, channels.n_bar_cav);
  c *= thermal_c(w.zeta_plus, channels.n_bar_plus);
  c *= thermal_c(w.zeta_minus, channels.n_bar_minus);
  return c;
}

// Closed-form propagation of Gaussian states (the oracle for the grid path):
// mean scales with the root weights, covariances add with the weights, and
// each thermal channel contributes zeta (2 n_bar + 1)/4 per quadrature.
inline GaussianState gaussian_propagate(const GaussianState& cavity,
                                        const GaussianState& input,
                                        const ChannelEnsemble& channels,
                                        const ModeWeights& w) {
  channels.validate();
  GaussianState out;
  out.mean = std::sqrt(w.eta) * cavity.mean + std::sqrt(w.zeta_in) * input.mean;
  const double th = w.zeta_cav * (2.0 * channels.n_bar_cav + 1.0) / 4.0 +
                    w.zeta_plus * (2.0 * channels.n_bar_plus + 1.0) / 4.0 +
                    w.zeta_minus * (2.0 * channels.n_bar_minus + 1.0) / 4.0;
  out.cov.xx = w.eta * cavity.cov.xx + w.zeta_in * input.cov.xx + th;
  out.cov.pp = w.eta * cavity.cov.pp + w.zeta_in * input.cov.pp + th;
  out.cov.xy = w.eta * cavity.cov.xy + w.zeta_in * input.cov.xy;
  return out;
}

namespace detail {

// In-place 2D FFT convolution machinery on an m x m double grid whose index
// j encodes the wrapped coordinate ((j + m/2) mod m - m/2 + 1/2) dx, i.e. the
// function is centered at index 0 so circular convolution acts like linear
// convolution while the mass stays inside the padded window.
class fft_convolver {
 public:
  fft_convolver(int n, double step) : n_(n), m_(2 * n), step_(step) {
    const std::size_t sz = std::size_t(m_) * m_;
    real_.resize(sz);
    freq_.resize(std::size_t(m_) * (m_ / 2 + 1));
    acc_.resize(freq_.size());
    plan_fwd_ = fftw_plan_dft_r2c_2d(
        m_, m_, real_.data(), reinterpret_cast<fftw_complex*>(freq_.data()),
        FFTW_ESTIMATE);
    plan_bwd_ = fftw_plan_dft_c2r_2d(
        m_, m_, reinterpret_cast<fftw_complex*>(acc_.data()), real_.data(),
        FFTW_ESTIMATE);
    if (!plan_fwd_ || !plan_bwd_)
      throw std::runtime_error("fft_convolver: fftw plan creation failed");
  }
  fft_convolver(const fft_convolver&) = delete;
  fft_convolver& operator=(const fft_convolver&) = delete;
  ~fft_convolver() {
    fftw_destroy_plan(plan_fwd_);
    fftw_destroy_plan(plan_bwd_);
  }

  // wrapped coordinate of padded index j
  double coord(int j) const {
    const int c = (j + m_ / 2) % m_ - m_ / 2;
    return c * step_;
  }

  // accumulate one factor given as a function of alpha
  void push(const std::function<double(complexd)>& f) {
    for (int ip = 0; ip < m_; ++ip)
      for (int ix = 0; ix < m_; ++ix)
        real_[std::size_t(ip) * m_ + ix] = f(complexd(coord(ix), coord(ip)));
    fftw_execute(plan_fwd_);
    if (first_) {
      acc_ = freq_;
      first_ = false;
    } else {
      const double cell = step_ * step_;
      for (std::size_t i = 0; i < acc_.size(); ++i) acc_[i] *= freq_[i] * cell;
    }
  }

  // inverse transform; result read back on the centered n x n window
  GridState finish(double half_width) {
    if (first_) throw std::logic_error("fft_convolver: no factors pushed");
    fftw_execute(plan_bwd_);
    const double norm = 1.0 / (double(m_) * m_);
    GridState g;
    g.half_width = half_width;
    g.n = n_;
    g.values.resize(std::size_t(n_) * n_);
    for (int ip = 0; ip < n_; ++ip)
      for (int ix = 0; ix < n_; ++ix) {
        // target coordinate index in wrapped layout
        const int jx = (ix - n_ / 2 + m_) % m_;
        const int jp = (ip - n_ / 2 + m_) % m_;
        g.at(ix, ip) = real_[std::size_t(jp) * m_ + jx] * norm;
      }
    return g;
  }

 private:
  int n_, m_;
  double step_;
  bool first_ = true;
  std::vector<double> real_;
  std::vector<complexd> freq_, acc_;
  fftw_plan plan_fwd_{}, plan_bwd_{};
};

// weight-scaled sampling: P_w(alpha) = P(alpha / sqrt(w)) / w
inline std::function<double(complexd)> scaled_sampler(const PhaseSpaceState& st,
                                                      double weight) {
  const double root = std::sqrt(weight);
  if (st.is_gaussian()) {
    const GaussianState g = st.gaussian;
    const double s = st.s_order;
    return [g, s, weight, root](complexd a) {
      // s-ordered Gaussian quasi-probability: covariance shifted by -s/4 I
      Covariance2 c{g.cov.xx - 0.25 * s, g.cov.xy, g.cov.pp - 0.25 * s};
      const double det = weight * weight * c.det();
      const double dx = a.real() - root * g.mean.real();
      const double dp = a.imag() - root * g.mean.imag();
      const double q = (c.pp * dx * dx - 2.0 * c.xy * dx * dp + c.xx * dp * dp) /
                       (weight * c.det());
      return std::exp(-0.5 * q) / (2.0 * kPi * std::sqrt(det));
    };
  }
  const GridState grid = st.grid;  // copy: states are immutable values
  return [grid, weight, root](complexd a) {
    // bicubic (Catmull-Rom) interpolation of P(alpha / sqrt(w)) / w, zero
    // outside; cubic order keeps resampling error below the lattice mass
    // tolerance
    const double x = a.real() / root, p = a.imag() / root;
    const double fx = (x + grid.half_width) / grid.step();
    const double fp = (p + grid.half_width) / grid.step();
    const int ix = int(std::floor(fx)), ip = int(std::floor(fp));
    if (ix < 0 || ip < 0 || ix + 1 >= grid.n || ip + 1 >= grid.n) return 0.0;
    const double tx = fx - ix, tp = fp - ip;
    auto pick = [&grid](int jx, int jp) {
      if (jx < 0 || jp < 0 || jx >= grid.n || jp >= grid.n) return 0.0;
      return grid.at(jx, jp);
    };
    auto cubic = [](double p0, double p1, double p2, double p3, double t) {
      return p1 + 0.5 * t * (p2 - p0 +
             t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 +
             t * (3.0 * (p1 - p2) + p3 - p0)));
    };
    double rows[4];
    for (int r = 0; r < 4; ++r) {
      const int jp = ip - 1 + r;
      rows[r] = cubic(pick(ix - 1, jp), pick(ix, jp), pick(ix + 1, jp),
                      pick(ix + 2, jp), tx);
    }
    return cubic(rows[0], rows[1], rows[2], rows[3], tp) / weight;
  };
}

// One multiplicand of the output convolution: a state entering with weight w
// as P(alpha / sqrt(w)) / w.
struct weighted_factor {
  const PhaseSpaceState* state;
  double weight;
};

// Shared convolution pipeline.  Gaussian factors convolve in closed form, so
// all of them - together with the zero-mean smoothing kernel of variance
// kernel_var per quadrature - are merged into a single exact Gaussian factor;
// only grid factors go through the FFT.  With no grid factor present the
// merged Gaussian is sampled directly, making all-Gaussian maps exact up to
// lattice sampling.
inline GridState convolve_factors(const std::vector<weighted_factor>& factors,
                                  double kernel_var, double half_width, int n) {
  const double step = 2.0 * half_width / n;
  Covariance2 merged{kernel_var, 0.0, kernel_var};
  complexd merged_mean{};
  bool merged_any = kernel_var > 0.0;
  std::vector<const weighted_factor*> grid_factors;
  for (const weighted_factor& f : factors) {
    if (f.weight <= 1e-12) continue;
    if (f.state->is_gaussian()) {
      const GaussianState& g = f.state->gaussian;
      const double s = f.state->s_order;
      merged.xx += f.weight * (g.cov.xx - 0.25 * s);
      merged.xy += f.weight * g.cov.xy;
      merged.pp += f.weight * (g.cov.pp - 0.25 * s);
      merged_mean += std::sqrt(f.weight) * g.mean;
      merged_any = true;
    } else {
      grid_factors.push_back(&f);
    }
  }

  PhaseSpaceState m;
  m.gaussian.mean = merged_mean;
  m.gaussian.cov = merged;
  if (grid_factors.empty()) {
    // exact Gaussian output: sample it on the lattice, no FFT involved; a
    // degenerate covariance (delta-like P-ordered sources) is floored at the
    // lattice resolution
    const double floor_var = 0.49 * step * step;
    if (merged.min_eigenvalue() < 1e-12) {
      const double lift = floor_var - merged.min_eigenvalue();
      merged.xx += lift;
      merged.pp += lift;
      m.gaussian.cov = merged;
    }
    const auto density = scaled_sampler(m, 1.0);
    GridState out;
    out.half_width = half_width;
    out.n = n;
    out.values.resize(std::size_t(n) * n);
    for (int ip = 0; ip < n; ++ip)
      for (int ix = 0; ix < n; ++ix)
        out.values[std::size_t(ip) * n + ix] =
            density(complexd(out.coord(ix), out.coord(ip)));
    return out;
  }

  fft_convolver conv(n, step);
  for (const weighted_factor* f : grid_factors)
    conv.push(scaled_sampler(*f->state, f->weight));
  if (merged_any) {
    // floor the merged factor at a samplable width; anything narrower acts as
    // a delta below the lattice resolution anyway
    const double floor_var = 0.49 * step * step;
    const double lift = std::max(0.0, floor_var - merged.min_eigenvalue());
    merged.xx += lift;
    merged.pp += lift;
    m.gaussian.cov = merged;
    conv.push(scaled_sampler(m, 1.0));
  }
  return conv.finish(half_width);
}

inline void check_leakage(const GridState& g, double half_width) {
  const double mass = g.mass();
  if (std::abs(mass - 1.0) > 5e-3) {
    throw std::runtime_error(
        "p_out_transform: grid window too small (mass " + std::to_string(mass) +
        "); suggested half width A >= " + std::to_string(1.6 * half_width));
  }
}

}  // namespace detail

// Grid realization of the output map: scale every participating function by
// its root weight, convolve, and smooth with the Gaussian kernel of width xi.
// Channels in thermal states enter as Gaussians; weights below threshold drop
// out (their functions approach delta distributions).
inline PhaseSpaceState p_out_transform(const PhaseSpaceState& cavity,
                                       const PhaseSpaceState& input,
                                       const ChannelEnsemble& channels,
                                       const ModeWeights& w, double s_out,
                                       double half_width = 0.0, int n = kDefaultGridN) {
  cavity.validate();
  input.validate();
  channels.validate();
  const XiResult xi =
      xi_s(w, s_out, cavity.s_order, {input.s_order, 0.0, 0.0, 0.0});

  if (half_width <= 0.0) {
    double amp = std::abs(cavity.is_gaussian() ? cavity.gaussian.mean : 0.0) +
                 std::abs(input.is_gaussian() ? input.gaussian.mean : 0.0);
    if (!cavity.is_gaussian()) half_width = cavity.grid.half_width;
    if (!input.is_gaussian())
      half_width = std::max(half_width, input.grid.half_width);
    const double nb = std::max({channels.n_bar_cav, channels.n_bar_plus,
                                channels.n_bar_minus});
    half_width = std::max(half_width, default_half_width(amp, nb));
  }

  const PhaseSpaceState th_cav = thermal_state(channels.n_bar_cav);
  const PhaseSpaceState th_plus = thermal_state(channels.n_bar_plus);
  const PhaseSpaceState th_minus = thermal_state(channels.n_bar_minus);
  const std::vector<detail::weighted_factor> factors{
      {&cavity, w.eta},         {&input, w.zeta_in},
      {&th_cav, w.zeta_cav},    {&th_plus, w.zeta_plus},
      {&th_minus, w.zeta_minus}};

  PhaseSpaceState out;
  out.kind = PhaseSpaceState::Kind::grid;
  out.s_order = s_out;
  out.grid = detail::convolve_factors(factors, xi.xi / 4.0, half_width, n);
  detail::check_leakage(out.grid, half_width);
  return out;
}

// Wigner width of the thermal-channel map (output-variance identity):
// xi_W = 1 - eta - zeta_in + 2 sum_lambda n_bar_lambda zeta_lambda.
inline double xi_wigner_thermal(const ModeWeights& w, const ChannelEnsemble& ch) {
  return 1.0 - w.eta - w.zeta_in + 2.0 * (ch.n_bar_cav * w.zeta_cav +
                                          ch.n_bar_plus * w.zeta_plus +
                                          ch.n_bar_minus * w.zeta_minus);
}

// Wigner output with thermal channels: double convolution of the scaled
// cavity and input Wigner functions against a Gaussian of width xi_W.  This
// is the same map as p_out_transform at all-Wigner orders with the thermal
// Gaussians absorbed analytically into the kernel.
inline PhaseSpaceState wigner_out_thermal(const PhaseSpaceState& cavity,
                                          const PhaseSpaceState& input,
                                          const ChannelEnsemble& channels,
                                          const ModeWeights& w,
                                          double half_width = 0.0,
                                          int n = kDefaultGridN) {
  cavity.validate();
  input.validate();
  channels.validate();
  if (cavity.s_order != 0.0 || input.s_order != 0.0)
    throw std::invalid_argument("wigner_out_thermal: requires Wigner orders (s = 0)");
  const double xw = xi_wigner_thermal(w, channels);
  if (xw < -1e-12)
    throw std::runtime_error("wigner_out_thermal: negative kernel width (bad weights)");

  if (half_width <= 0.0) {
    double amp = std::abs(cavity.is_gaussian() ? cavity.gaussian.mean : 0.0) +
                 std::abs(input.is_gaussian() ? input.gaussian.mean : 0.0);
    if (!cavity.is_gaussian()) half_width = cavity.grid.half_width;
    if (!input.is_gaussian())
      half_width = std::max(half_width, input.grid.half_width);
    const double nb = std::max({channels.n_bar_cav, channels.n_bar_plus,
                                channels.n_bar_minus});
    half_width = std::max(half_width, default_half_width(amp, nb));
  }

  const std::vector<detail::weighted_factor> factors{{&cavity, w.eta},
                                                     {&input, w.zeta_in}};
  PhaseSpaceState out;
  out.kind = PhaseSpaceState::Kind::grid;
  out.grid =
      detail::convolve_factors(factors, std::max(xw, 0.0) / 4.0, half_width, n);
  detail::check_leakage(out.grid, half_width);
  return out;
}

// Figures of merit of the extraction (ratios of the mode weights).
struct ExtractionReport {
  double merit_lossless = 0.0;     // eta / (1 - eta)
  double merit_thermal = 0.0;      // eta / (1 - eta + 2 sum n_bar zeta)
  double weight_input = 0.0;       // zeta_in / (1 - eta - zeta_in + 2 sum n zeta)
  double weight_cavity = 0.0;      // eta / the same denominator
  double suppression_ratio = 0.0;  // zeta_in / (1 - eta)^2
};

inline ExtractionReport extraction_report(const ModeWeights& w,
                                          const ChannelEnsemble& ch) {
  ch.validate();
  const double inf = std::numeric_limits<double>::infinity();
  const double thermal = 2.0 * (ch.n_bar_cav * w.zeta_cav +
                                ch.n_bar_plus * w.zeta_plus +
                                ch.n_bar_minus * w.zeta_minus);
  ExtractionReport r;
  r.merit_lossless = (w.eta < 1.0) ? w.eta / (1.0 - w.eta) : inf;
  const double dt = 1.0 - w.eta + thermal;
  r.merit_thermal = (dt > 0.0) ? w.eta / dt : inf;
  const double denom = 1.0 - w.eta - w.zeta_in + thermal;
  r.weight_input = (denom > 0.0) ? w.zeta_in / denom : inf;
  r.weight_cavity = (denom > 0.0) ? w.eta / denom : inf;
  const double c2 = (1.0 - w.eta) * (1.0 - w.eta);
  r.suppression_ratio = (c2 > 0.0) ? w.zeta_in / c2 : 1.0;
  return r;
}

// Overlap fidelity F = pi Int W_a W_b (exact when one of the states is pure).
inline double fidelity(const PhaseSpaceState& a, const PhaseSpaceState& b) {
  if (a.s_order != 0.0 || b.s_order != 0.0)
    throw std::invalid_argument("fidelity: requires Wigner representations (s = 0)");
  if (a.is_gaussian() && b.is_gaussian()) {
    const Covariance2 s{a.gaussian.cov.xx + b.gaussian.cov.xx,
                        a.gaussian.cov.xy + b.gaussian.cov.xy,
                        a.gaussian.cov.pp + b.gaussian.cov.pp};
    const double dx = a.gaussian.mean.real() - b.gaussian.mean.real();
    const double dp = a.gaussian.mean.imag() - b.gaussian.mean.imag();
    const double q = (s.pp * dx * dx - 2.0 * s.xy * dx * dp + s.xx * dp * dp) / s.det();
    return 0.5 / std::sqrt(s.det()) * std::exp(-0.5 * q);
  }
  // at least one grid: evaluate the other pointwise on the same lattice
  const PhaseSpaceState& g = a.is_gaussian() ? b : a;
  const PhaseSpaceState& o = a.is_gaussian() ? a : b;
  const GridState& grid = g.grid;
  const auto other = detail::scaled_sampler(o, 1.0);
  double acc = 0.0;
  for (int ip = 0; ip < grid.n; ++ip)
    for (int ix = 0; ix < grid.n; ++ix)
      acc += grid.at(ix, ip) * other(complexd(grid.coord(ix), grid.coord(ip)));
  return kPi * acc * grid.step() * grid.step();
}

// Serialization: CSV (window, resolution, s order header comments; one row of
// the lattice per line) and a compact binary layout.
inline void write_grid_csv(const PhaseSpaceState& st, std::ostream& os) {
  if (st.is_gaussian())
    throw std::invalid_argument("write_grid_csv: state has no grid representation");
  const GridState& g = st.grid;
  os << "# phase-space grid, alpha = x + i p, row-major in p\n";
  os << "# half_width," << g.half_width << "\n";
  os << "# resolution," << g.n << "\n";
  os << "# s_order," << st.s_order << "\n";
  os.precision(17);
  for (int ip = 0; ip < g.n; ++ip) {
    for (int ix = 0; ix < g.n; ++ix) {
      if (ix) os << ',';
      os << g.at(ix, ip);
    }
    os << '\n';
  }
}

inline constexpr std::uint32_t kGridMagic = 0x50534731;  // "PSG1"

inline void write_grid_binary(const PhaseSpaceState& st, std::ostream& os) {
  if (st.is_gaussian())
    throw std::invalid_argument("write_grid_binary: state has no grid representation");
  const GridState& g = st.grid;
  auto put = [&](const void* p, std::size_t sz) {
    os.write(static_cast<const char*>(p), std::streamsize(sz));
  };
  const std::uint32_t magic = kGridMagic;
  const std::uint32_t n = std::uint32_t(g.n);
  put(&magic, 4);
  put(&n, 4);
  put(&g.half_width, 8);
  put(&st.s_order, 8);
  put(g.values.data(), g.values.size() * 8);  // float64 row-major little-endian
}

inline PhaseSpaceState read_grid_binary(std::istream& is) {
  auto get = [&](void* p, std::size_t sz) {
    is.read(static_cast<char*>(p), std::streamsize(sz));
    if (!is) throw std::runtime_error("read_grid_binary: truncated stream");
  };
  std::uint32_t magic = 0, n = 0;
  get(&magic, 4);
  if (magic != kGridMagic)
    throw std::runtime_error("read_grid_binary: bad magic");
  get(&n, 4);
  PhaseSpaceState st;
  st.kind = PhaseSpaceState::Kind::grid;
  get(&st.grid.half_width, 8);
  get(&st.s_order, 8);
  st.grid.n = int(n);
  st.grid.values.resize(std::size_t(n) * n);
  get(st.grid.values.data(), st.grid.values.size() * 8);
  return st;
}

}  // namespace cavityio
