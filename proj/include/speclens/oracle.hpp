#pragma once

// Brute-force and closed-form checks of the spectral identities. All
// oracles are 1-D and per pixel, with the Fourier origin at the sample x:
// the response around x is g(t) = f(x + t) and t is the kernel offset.

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "speclens/core.hpp"
#include "speclens/estimator.hpp"
#include "speclens/kernels.hpp"
#include "speclens/model.hpp"
#include "speclens/numeric.hpp"
#include "speclens/spectral.hpp"

namespace speclens {

struct VerificationReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  double tolerance = 0.0;
  bool relative = true;  // which error the tolerance applies to
  bool pass = false;
  std::string note;
};

inline VerificationReport make_report(std::string name, double lhs, double rhs,
                                      double tolerance, bool relative,
                                      std::string note = {}) {
  VerificationReport r;
  r.name = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs;
  r.abs_error = std::abs(lhs - rhs);
  r.rel_error = rhs != 0.0 ? r.abs_error / std::abs(rhs)
                           : (r.abs_error == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  r.tolerance = tolerance;
  r.relative = relative;
  r.pass = (relative ? r.rel_error : r.abs_error) <= tolerance;
  r.note = std::move(note);
  return r;
}

// Neumaier-compensated sum; the oracles integrate strongly cancelling
// oscillations.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) comp_ += (sum_ - t) + v;
    else comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// ---------------------------------------------------------------------------
// Numerical Fourier transform

struct FtGrid {
  std::vector<double> omega;
  std::vector<cdouble> values;  // even + i * odd
  std::vector<double> even;     // int f_E(t) cos(2 pi w t) dt
  std::vector<double> odd;      // -int f_O(t) sin(2 pi w t) dt
};

// Trapezoid FT, f^(w) = int f(t) e^{-i 2 pi w t} dt, over samples on a
// uniform grid symmetric about 0. No window.
inline FtGrid numeric_ft(std::span<const double> t, std::span<const double> f,
                         std::span<const double> omega) {
  const std::size_t n = t.size();
  if (n < 3 || f.size() != n) throw DimensionError("numeric_ft needs matching samples (>= 3)");
  const double h = t[1] - t[0];
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(t[i] + t[n - 1 - i]) > 1e-9 * std::max(1.0, std::abs(t[i])))
      throw ConfigError("numeric_ft needs a grid symmetric about 0");
  }
  FtGrid ft;
  ft.omega.assign(omega.begin(), omega.end());
  for (double w : omega) {
    CompensatedSum ce, co;
    for (std::size_t i = 0; i < n; ++i) {
      const double fe = 0.5 * (f[i] + f[n - 1 - i]);
      const double fo = 0.5 * (f[i] - f[n - 1 - i]);
      const double wt = (i == 0 || i == n - 1) ? 0.5 * h : h;
      ce.add(wt * fe * std::cos(2.0 * kPi * w * t[i]));
      co.add(-wt * fo * std::sin(2.0 * kPi * w * t[i]));
    }
    ft.even.push_back(ce.value());
    ft.odd.push_back(co.value());
    ft.values.emplace_back(ce.value(), co.value());
  }
  return ft;
}

inline FtGrid numeric_ft(const std::function<double(double)>& f, double half_width,
                         std::size_t n, std::span<const double> omega) {
  if (n % 2 == 0) ++n;
  const auto t = linspace(-half_width, half_width, n);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = f(t[i]);
  return numeric_ft(t, v, omega);
}

// ---------------------------------------------------------------------------
// Tone responses around a sample

// Lines of g(t) = sum a cos(2 pi w (x + t) + phi): coefficients d_m carry
// the phase e^{i 2 pi w_m x}.
inline std::vector<SpectralLine> centered_lines(std::span<const Tone> tones, double x) {
  auto lines = spectral_lines(tones);
  for (auto& l : lines) l.coef *= std::polar(1.0, 2.0 * kPi * l.omega * x);
  return lines;
}

inline double tone_derivative(std::span<const Tone> tones, double y) {
  double s = 0.0;
  for (const auto& t : tones)
    s -= 2.0 * kPi * t.frequency * t.amplitude * std::sin(2.0 * kPi * t.frequency * y + t.phase);
  return s;
}

// E over the kernel of h(t), by quadrature in t.
inline double kernel_expectation(const ScalarKernel& k, const std::function<double(double)>& h,
                                 std::size_t n = 40001) {
  using K = ScalarKernel::Kind;
  switch (k.kind) {
    case K::dirac: return h(k.a);
    case K::two_point: return (1.0 - k.h) * h(0.0) + k.h * h(k.b);
    case K::uniform: {
      const double lo = std::min(k.a, k.a + k.b), hi = std::max(k.a, k.a + k.b);
      if (hi == lo) return h(lo);
      return simpson(h, lo, hi, n) / (hi - lo);
    }
    case K::gaussian: {
      // Trapezoid is spectrally accurate for smooth integrands that vanish
      // at both ends; 12 std puts the truncation far below 1e-30.
      const auto t = linspace(k.a - 12.0 * k.b, k.a + 12.0 * k.b, n);
      const double dt = t[1] - t[0];
      CompensatedSum s;
      for (double v : t) s.add(h(v) * *k.density(v) * dt);
      return s.value();
    }
  }
  return 0.0;
}

// E[g'] = sum_m i 2 pi w_m d_m q(w_m), q the characteristic function.
inline cdouble spectral_gradient_mean(std::span<const SpectralLine> lines, const ScalarKernel& k) {
  cdouble s = 0.0;
  const cdouble I(0.0, 1.0);
  for (const auto& l : lines) s += I * (2.0 * kPi * l.omega) * l.coef * characteristic(k, l.omega);
  return s;
}

// Even/odd split of the same sum: for each pair +-w only f_E x p_O and
// f_O x p_E products survive.
inline double even_odd_gradient_mean(std::span<const SpectralLine> lines, const ScalarKernel& k) {
  double s = 0.0;
  for (const auto& l : lines) {
    if (l.omega <= 0.0) continue;
    const cdouble q = characteristic(k, l.omega);
    s += -4.0 * kPi * l.omega * (l.coef.real() * q.imag() + l.coef.imag() * q.real());
  }
  return s;
}

// E[(g')^2] = sum_{m,n} 4 pi^2 w_m w_n d_m conj(d_n) q(w_m - w_n).
inline cdouble spectral_squared_gradient_mean(std::span<const SpectralLine> lines,
                                              const ScalarKernel& k) {
  cdouble s = 0.0;
  for (const auto& m : lines)
    for (const auto& n : lines)
      s += 4.0 * kPi * kPi * m.omega * n.omega * m.coef * std::conj(n.coef) *
           characteristic(k, m.omega - n.omega);
  return s;
}

// Stationary spectral integral 4 pi^2 int w^2 S_f(w) S_sqrt(p)(w) dw over
// the line spectrum.
inline double spectral_integral(std::span<const SpectralLine> lines, const ScalarKernel& k) {
  double s = 0.0;
  for (const auto& l : lines) s += l.omega * l.omega * std::norm(l.coef) * psd_sqrt_at(k, l.omega);
  return 4.0 * kPi * kPi * s;
}

// Closed forms for a lone cos(2 pi w0 x~) under Gaussian noise of std sigma.
inline double sg2_closed_form(double w0, double x, double sigma,
                              CombinationRule rule = CombinationRule::additive) {
  const double xc = rule == CombinationRule::convex ? (1.0 - sigma) * x : x;
  return 2.0 * kPi * kPi * w0 * w0 *
         (1.0 - std::cos(4.0 * kPi * w0 * xc) * std::exp(-8.0 * kPi * kPi * sigma * sigma * w0 * w0));
}

inline double sg_odd_closed_form(double w0, double sigma) {
  return 2.0 * kPi * w0 * std::exp(-2.0 * kPi * kPi * sigma * sigma * w0 * w0);
}

// ---------------------------------------------------------------------------

struct MomentCheck {
  double mc = 0.0;
  double mc_stderr = 0.0;
  std::size_t samples = 0;
  double quadrature = 0.0;
  double spectral = 0.0;
  double spectral_imag = 0.0;
  double even_odd = 0.0;            // first moment only
  double stationary_integral = 0.0; // second moment only
  std::vector<VerificationReport> reports;
};

namespace detail {
inline std::pair<double, double> mc_moment(const ScalarKernel& k, std::span<const Tone> tones,
                                           double x, bool squared, std::size_t n,
                                           std::uint64_t seed) {
  if (n == 0) return {0.0, 0.0};
  RandomStream rng(seed, 0);
  CompensatedSum s, s2;
  for (std::size_t i = 0; i < n; ++i) {
    double v = tone_derivative(tones, x + k.sample(rng));
    if (squared) v *= v;
    s.add(v);
    s2.add(v * v);
  }
  const double mean = s.value() / double(n);
  const double var = n > 1 ? std::max(0.0, (s2.value() - double(n) * mean * mean) / double(n - 1)) : 0.0;
  return {mean, std::sqrt(var / double(n))};
}

inline double scale_of(std::span<const SpectralLine> lines) {
  double s = 0.0;
  for (const auto& l : lines) s += 2.0 * kPi * std::abs(l.omega) * std::abs(l.coef);
  return s;
}
}  // namespace detail

// First moment E[g'(t)]. MC (when samples > 0) is checked against the
// spectral sum at 5 standard errors; x-space quadrature, the even/odd form
// and the vanishing imaginary part are checked at near machine tolerance.
inline MomentCheck verify_eq1(std::span<const Tone> tones, double x, const ScalarKernel& k,
                              std::size_t samples, std::uint64_t seed,
                              const std::string& name = "eq1") {
  MomentCheck r;
  const auto lines = centered_lines(tones, x);
  const double scale = detail::scale_of(lines);
  const cdouble spec = spectral_gradient_mean(lines, k);
  r.spectral = spec.real();
  r.spectral_imag = spec.imag();
  r.even_odd = even_odd_gradient_mean(lines, k);
  r.quadrature = kernel_expectation(k, [&](double t) { return tone_derivative(tones, x + t); });
  const double qtol = 1e-9 * std::max(scale, 1e-300);
  r.reports.push_back(make_report(name + "/quadrature", r.quadrature, r.spectral, qtol, false));
  r.reports.push_back(make_report(name + "/even-odd", r.even_odd, r.spectral, 1e-10 * scale, false));
  r.reports.push_back(make_report(name + "/imaginary", r.spectral_imag, 0.0, 1e-8, false));
  if (samples > 0) {
    std::tie(r.mc, r.mc_stderr) = detail::mc_moment(k, tones, x, false, samples, seed);
    r.samples = samples;
    r.reports.push_back(make_report(name + "/mc", r.mc, r.spectral,
                                    5.0 * r.mc_stderr + 1e-12 * scale, false));
  }
  return r;
}

// Second moment E[g'(t)^2] against the bilinear spectral form.
inline MomentCheck verify_eq3(std::span<const Tone> tones, double x, const ScalarKernel& k,
                              std::size_t samples, std::uint64_t seed,
                              double mc_rel_tol = 0.01, const std::string& name = "eq3") {
  MomentCheck r;
  const auto lines = centered_lines(tones, x);
  const cdouble spec = spectral_squared_gradient_mean(lines, k);
  r.spectral = spec.real();
  r.spectral_imag = spec.imag();
  r.stationary_integral = spectral_integral(lines, k);
  r.quadrature = kernel_expectation(k, [&](double t) {
    const double d = tone_derivative(tones, x + t);
    return d * d;
  });
  r.reports.push_back(make_report(name + "/quadrature", r.quadrature, r.spectral, 1e-8, true));
  const double sc = detail::scale_of(lines);
  r.reports.push_back(make_report(name + "/imaginary", r.spectral_imag, 0.0, 1e-10 * sc * sc, false));
  if (samples > 0) {
    std::tie(r.mc, r.mc_stderr) = detail::mc_moment(k, tones, x, true, samples, seed);
    r.samples = samples;
    r.reports.push_back(make_report(name + "/mc", r.mc, r.spectral, mc_rel_tol, true));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Low-pass / high-pass

struct LowpassResult {
  std::optional<double> omega_star;
  VerificationReport report;
};

// Smallest grid w* such that |p^(w)| < M at every grid point beyond it.
inline LowpassResult verify_lowpass(const ScalarKernel& k, double M, std::span<const double> omega) {
  if (!(M > 0.0 && M < 1.0)) throw ConfigError("low-pass threshold must lie in (0,1)");
  LowpassResult r;
  std::optional<std::size_t> idx;
  for (std::size_t i = omega.size(); i-- > 0;) {
    if (std::abs(kernel_ft_at(k, omega[i])) < M) idx = i;
    else break;
  }
  if (idx && *idx + 1 < omega.size()) {
    r.omega_star = omega[*idx];
    double worst = 0.0;
    for (std::size_t i = *idx; i < omega.size(); ++i)
      worst = std::max(worst, std::abs(kernel_ft_at(k, omega[i])));
    r.report = make_report("lowpass", worst, M, 0.0, false);
    r.report.pass = worst < M;
  } else {
    r.report = make_report("lowpass", 1.0, M, 0.0, false, "low-pass violation: no crossing on grid");
    r.report.pass = false;
  }
  return r;
}

// ||w||^2 < M for every grid |w| < sqrt(M).
inline VerificationReport verify_highpass(double M, std::span<const double> omega) {
  if (!(M > 0.0)) throw ConfigError("high-pass threshold must be > 0");
  const double ws = std::sqrt(M);
  double worst = 0.0;
  bool ok = true;
  for (double w : omega) {
    if (std::abs(w) < ws) {
      worst = std::max(worst, w * w);
      ok = ok && (w * w < M);
    }
  }
  auto r = make_report("highpass", worst, M, 0.0, false, "omega* = " + std::to_string(ws));
  r.pass = ok;
  return r;
}

// ---------------------------------------------------------------------------
// Sign flips of the rect-kernel gradient

struct IgSignResult {
  std::vector<double> sigma;
  std::vector<double> mc;
  std::vector<double> analytic;
  std::vector<double> analytic_zeros;
  std::vector<double> detected_flips;  // interpolated MC zero crossings
  VerificationReport report;
};

// E over t ~ U[0, L] of d/dy cos(2 pi w0 y) at y = x + t, L = sigma (s - x):
// -(2/L) sin(pi w0 L) sin(pi w0 L r), r = 1 + 2x/L.
inline double ig_sign_closed_form(double w0, double x, double s, double sigma) {
  const double L = sigma * (s - x);
  if (L == 0.0) return -2.0 * kPi * w0 * std::sin(2.0 * kPi * w0 * x);
  const double r = 1.0 + 2.0 * x / L;
  return -(2.0 / L) * std::sin(kPi * w0 * L) * std::sin(kPi * w0 * L * r);
}

// Analytic zeros in (lo, hi): w0 sigma (s-x) in Z or w0 (2x + sigma (s-x)) in Z.
inline std::vector<double> ig_sign_zeros(double w0, double x, double s, double lo, double hi) {
  std::vector<double> z;
  const double d = s - x;
  if (d == 0.0 || w0 == 0.0) return z;
  auto collect = [&](double offset) {
    // sigma = (n - offset) / (w0 d)
    const double a = lo * w0 * d + offset, b = hi * w0 * d + offset;
    for (long n = long(std::ceil(std::min(a, b))); n <= long(std::floor(std::max(a, b))); ++n) {
      const double sg = (double(n) - offset) / (w0 * d);
      if (sg > lo && sg < hi && sg != 0.0) z.push_back(sg);
    }
  };
  collect(0.0);
  collect(2.0 * w0 * x);
  std::sort(z.begin(), z.end());
  z.erase(std::unique(z.begin(), z.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
          z.end());
  return z;
}

inline std::vector<double> sign_crossings(std::span<const double> sigma, std::span<const double> v) {
  std::vector<double> out;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if ((v[k - 1] < 0.0) != (v[k] < 0.0)) {
      const double t = v[k - 1] / (v[k - 1] - v[k]);
      out.push_back(sigma[k - 1] + t * (sigma[k] - sigma[k - 1]));
    }
  }
  return out;
}

// Common random numbers across sigma: the same uniform draws set every
// path position.
inline IgSignResult verify_ig_sign(double w0, double x, double s, std::span<const double> sigma,
                                   std::size_t samples, std::uint64_t seed) {
  if (sigma.size() < 2 || !strictly_increasing(sigma)) throw ConfigError("sigma grid must be increasing");
  IgSignResult r;
  r.sigma.assign(sigma.begin(), sigma.end());
  std::vector<double> u(samples);
  RandomStream rng(seed, 0);
  for (auto& v : u) v = rng.uniform();
  const std::vector<Tone> tone{Tone{1.0, w0, 0.0}};
  for (double sg : sigma) {
    CompensatedSum acc;
    for (double ui : u) acc.add(tone_derivative(tone, x + sg * ui * (s - x)));
    r.mc.push_back(acc.value() / double(samples));
    r.analytic.push_back(ig_sign_closed_form(w0, x, s, sg));
  }
  r.analytic_zeros = ig_sign_zeros(w0, x, s, sigma.front(), sigma.back());
  r.detected_flips = sign_crossings(r.sigma, r.mc);
  double step = 0.0;
  for (std::size_t k = 1; k < sigma.size(); ++k) step = std::max(step, sigma[k] - sigma[k - 1]);
  double worst = 0.0;
  bool ok = r.detected_flips.size() == r.analytic_zeros.size();
  for (double z : r.analytic_zeros) {
    double best = std::numeric_limits<double>::infinity();
    for (double f : r.detected_flips) best = std::min(best, std::abs(f - z));
    worst = std::max(worst, best);
  }
  ok = ok && worst <= step;
  r.report = make_report("ig_sign", worst, 0.0, step, false,
                         std::to_string(r.detected_flips.size()) + " flips, " +
                             std::to_string(r.analytic_zeros.size()) + " analytic zeros");
  r.report.pass = ok;
  return r;
}

// ---------------------------------------------------------------------------
// Prediction explainer vs scaled finite difference

struct FdIdentityResult {
  Grid prediction;      // E[alpha f(x~)]
  Grid mask_mean;       // M = E[alpha], empirical
  Grid finite_diff;     // E[alpha (x~ - x) Delta f]
  double max_abs_diff = 0.0;
  VerificationReport report;
};

// E[alpha f(x~)] - M f(x) = E[alpha (x~ - x) Delta f(x~)] on shared draws.
inline FdIdentityResult verify_finite_difference_identity(const Model& model, const InputGrid& x,
                                                          const MaskSpec& mask, std::size_t samples,
                                                          std::uint64_t seed,
                                                          std::optional<std::size_t> class_index = {},
                                                          Target target = Target::log_prob) {
  check_shape(model, x);
  const KernelSpec kern = DiracCombKernel{mask};
  check_kernel(kern, x.shape);
  const std::size_t c = class_index ? *class_index : most_probable_class(forward(model, x));
  const double f0 = target_value(model, x.values, c, target);
  const std::size_t n = x.size();
  std::vector<CompensatedSum> A(n), B(n), C(n);
  std::vector<double> xt(n), alpha(n);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto cells = sample_perturbation(kern, x, CombinationRule::convex, SampleKey{seed, i}, xt);
    detail::expand_mask(mask, x.shape, cells, alpha);
    const double f = target_value(model, xt, c, target);
    const double df = f - f0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = xt[j] - x[j];
      A[j].add(alpha[j] * f);
      B[j].add(alpha[j]);
      C[j].add(dx != 0.0 ? alpha[j] * dx * (df / dx) : alpha[j] * df);
    }
  }
  FdIdentityResult r;
  r.prediction = Grid(x.shape);
  r.mask_mean = Grid(x.shape);
  r.finite_diff = Grid(x.shape);
  const double N = double(samples);
  for (std::size_t j = 0; j < n; ++j) {
    r.prediction[j] = A[j].value() / N;
    r.mask_mean[j] = B[j].value() / N;
    r.finite_diff[j] = C[j].value() / N;
    const double lhs = r.prediction[j] - r.mask_mean[j] * f0;
    r.max_abs_diff = std::max(r.max_abs_diff, std::abs(lhs - r.finite_diff[j]));
  }
  r.report = make_report("finite_difference_identity", r.max_abs_diff, 0.0, 1e-10, false);
  return r;
}

// ---------------------------------------------------------------------------
// Battery

struct BatteryOptions {
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  std::optional<double> tolerance_override;
  std::string filter;  // substring match on check names
  std::size_t workers = 1;
};

inline std::vector<VerificationReport> run_battery(const BatteryOptions& opt = {}) {
  struct Case {
    std::string name;
    std::function<std::vector<VerificationReport>()> run;
  };
  std::vector<Case> cases;
  const double x0 = 0.3;
  const std::vector<double> tones_w{0.5, 1.0, 2.0, 4.0};
  const std::vector<double> sigmas{0.05, 0.1, 0.3};

  for (double w : tones_w)
    for (double sg : sigmas)
      for (const std::string kname : {"gaussian", "rect"}) {
        const std::string tag = kname + "/w=" + std::to_string(w).substr(0, 4) +
                                "/s=" + std::to_string(sg).substr(0, 4);
        const ScalarKernel k = kname == "gaussian" ? ScalarKernel::gaussian(sg)
                                                   : ScalarKernel::rect(sg, x0, 0.0);
        const std::uint64_t seed = opt.seed + cases.size();
        cases.push_back({"eq1/" + tag, [=] {
                           const std::vector<Tone> t{Tone{1.0, w, 0.0}};
                           return verify_eq1(t, x0, k, opt.samples, seed, "eq1/" + tag).reports;
                         }});
        cases.push_back({"eq3/" + tag, [=] {
                           const std::vector<Tone> t{Tone{1.0, w, 0.0}};
                           return verify_eq3(t, x0, k, opt.samples, seed + 7919, 0.01, "eq3/" + tag)
                               .reports;
                         }});
      }

  cases.push_back({"lowpass", [] {
                     std::vector<VerificationReport> out;
                     const auto grid = linspace(0.0, 20.0, 20001);
                     const double step = grid[1] - grid[0];
                     for (double sg : {0.05, 0.1, 0.3}) {
                       const auto r = verify_lowpass(ScalarKernel::gaussian(sg), std::exp(-1.0), grid);
                       const double expect = 1.0 / (std::sqrt(2.0) * kPi * sg);
                       out.push_back(make_report("lowpass/gaussian/s=" + std::to_string(sg).substr(0, 4),
                                                 r.omega_star.value_or(-1.0), expect, step, false));
                     }
                     auto rect = verify_lowpass(ScalarKernel::rect(0.5, 0.3, 1.0), 0.5, grid);
                     rect.report.name = "lowpass/rect";
                     out.push_back(rect.report);
                     return out;
                   }});
  cases.push_back({"highpass", [] {
                     std::vector<VerificationReport> out;
                     const auto grid = linspace(0.0, 5.0, 5001);
                     for (double M : {1.0, 4.0}) {
                       auto r = verify_highpass(M, grid);
                       r.name = "highpass/M=" + std::to_string(M).substr(0, 3);
                       out.push_back(r);
                     }
                     return out;
                   }});
  cases.push_back({"ig_sign", [seed = opt.seed] {
                     const auto grid = linspace(0.01, 1.0, 100);
                     return std::vector<VerificationReport>{
                         verify_ig_sign(2.0, 0.2, 1.0, grid, 200000, seed).report};
                   }});
  cases.push_back({"rashomon", [] {
                     std::vector<VerificationReport> out;
                     for (auto [wi, wj] : {std::pair{1.0, 1.5}, std::pair{1.0, 2.0}, std::pair{1.0, 4.0}}) {
                       const auto bar = *rashomon_crossover(wi, wj);
                       const auto grid = SigmaGrid::linear(400, 0.0005, 0.2);
                       const auto d = rashomon_demo(wi, wj, grid);
                       const double step = grid.relative[1] - grid.relative[0];
                       const double at = d.flip_index ? d.sigma[*d.flip_index] : -1.0;
                       out.push_back(make_report("rashomon/" + std::to_string(wi).substr(0, 3) + "-" +
                                                     std::to_string(wj).substr(0, 3),
                                                 at, bar, step, false));
                     }
                     return out;
                   }});
  cases.push_back({"filter_norm", [] {
                     const double sg = 0.1;
                     const double a = bandpass_norm(ScalarKernel::gaussian(2 * sg), 60.0 / sg, 200000);
                     const double b = bandpass_norm(ScalarKernel::gaussian(sg), 60.0 / sg, 200000);
                     return std::vector<VerificationReport>{
                         make_report("filter_norm/ratio", a / b, std::pow(2.0, -2.5), 1e-4, false)};
                   }});
  cases.push_back({"ft_gaussian", [] {
                     const double sg = 0.1;
                     const auto k = ScalarKernel::gaussian(sg);
                     const auto w = linspace(0.0, 10.0, 41);
                     const auto ft = numeric_ft([&](double t) { return *k.density(t); }, 12 * sg, 4001, w);
                     double worst = 0.0;
                     for (std::size_t i = 0; i < w.size(); ++i)
                       worst = std::max(worst, std::abs(ft.values[i] - kernel_ft_at(k, w[i])));
                     return std::vector<VerificationReport>{make_report("ft/gaussian", worst, 0.0, 1e-6, false)};
                   }});
  cases.push_back({"finite_difference", [seed = opt.seed] {
                     std::vector<VerificationReport> out;
                     const Shape s{4, 4, 1};
                     Grid x(s), w(s), base(s);
                     RandomStream rng(seed, 99);
                     for (std::size_t i = 0; i < s.size(); ++i) {
                       x[i] = rng.uniform();
                       w[i] = rng.normal();
                     }
                     const auto lin = LinearModel::binary(w, 0.1);
                     const TinyMlp mlp(s, {8}, 2, seed + 1);
                     const MaskSpec bern = MaskSpec::bernoulli(2, 2, 0.5, base);
                     const MaskSpec one = MaskSpec::occlusion(2, 2, base);
                     for (const auto& [mname, m] : {std::pair<std::string, const Model*>{"linear", &lin},
                                                    std::pair<std::string, const Model*>{"mlp", &mlp}})
                       for (const auto& [kname, mask] :
                            {std::pair<std::string, MaskSpec>{"bernoulli", bern},
                             std::pair<std::string, MaskSpec>{"onehot", one}}) {
                         auto r = verify_finite_difference_identity(*m, x, mask, 256, seed).report;
                         r.name = "finite_difference/" + mname + "/" + kname;
                         out.push_back(r);
                       }
                     return out;
                   }});

  std::vector<std::vector<VerificationReport>> results(cases.size());
  parallel_for(0, cases.size(), opt.workers, [&](std::size_t i) {
    if (!opt.filter.empty() && cases[i].name.find(opt.filter) == std::string::npos) return;
    results[i] = cases[i].run();
  });
  std::vector<VerificationReport> out;
  for (auto& rs : results)
    for (auto& r : rs) {
      if (opt.tolerance_override) {
        r.tolerance = *opt.tolerance_override;
        r.pass = (r.relative ? r.rel_error : r.abs_error) <= r.tolerance;
      }
      out.push_back(std::move(r));
    }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

}  // namespace speclens
