#pragma once

// Perturbation kernels p(x~ | x, sigma): sampling on whole images, and the
// per-pixel 1-D Fourier forms used by the spectral analysis.
//
// Fourier convention (used everywhere in this library):
//   p^(w) = integral p(t) exp(-i 2 pi w t) dt,  t = x~ - x
// i.e. the origin sits on the sample being explained unless an absolute
// origin is requested. PSDs are two-sided.

#include <algorithm>
#include <complex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "speclens/core.hpp"

namespace speclens {

using cdouble = std::complex<double>;

enum class CombinationRule { additive, convex, damping };

inline const char* to_string(CombinationRule r) {
  switch (r) {
    case CombinationRule::additive: return "additive";
    case CombinationRule::convex: return "convex";
    case CombinationRule::damping: return "damping";
  }
  return "?";
}

inline CombinationRule parse_rule(const std::string& s) {
  if (s == "additive") return CombinationRule::additive;
  if (s == "convex") return CombinationRule::convex;
  if (s == "damping") return CombinationRule::damping;
  throw ConfigError("unknown combination rule '" + s + "'");
}

enum class NoiseKind { normal, uniform };

struct DiracKernel {};

// sigma is absolute here; relative units are resolved before a kernel is
// built.
struct GaussianKernel {
  double sigma = 0.1;
  NoiseKind noise = NoiseKind::normal;
  bool clamp_unit = false;  // opt-in; clamping changes the effective kernel
};

// Uniform segment from the image toward the baseline, covering a fraction
// sigma of the way. One path position per draw, shared by all pixels, so
// every pixel's marginal is the 1-D rect pulse.
struct RectKernel {
  double sigma = 1.0;
  Grid baseline;
};

// Low-resolution boolean mask; alpha = 1 replaces the cell by the baseline.
struct MaskSpec {
  std::size_t rows = 4;
  std::size_t cols = 4;
  std::vector<double> probs;  // Bernoulli success probability per cell
  bool one_hot = false;       // occlusion: exactly one cell per draw
  Grid baseline;

  std::size_t cells() const { return rows * cols; }

  static MaskSpec bernoulli(std::size_t rows, std::size_t cols, double p,
                            Grid baseline) {
    return MaskSpec{rows, cols, std::vector<double>(rows * cols, p), false,
                    std::move(baseline)};
  }
  static MaskSpec occlusion(std::size_t rows, std::size_t cols,
                            Grid baseline) {
    return MaskSpec{rows, cols, {}, true, std::move(baseline)};
  }

  // Expected mask value per cell.
  std::vector<double> expected() const {
    if (one_hot) return std::vector<double>(cells(), 1.0 / double(cells()));
    return probs;
  }
};

struct DiracCombKernel {
  MaskSpec mask;
};

using KernelSpec =
    std::variant<DiracKernel, GaussianKernel, RectKernel, DiracCombKernel>;

inline std::string kernel_name(const KernelSpec& k) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DiracKernel>) return "dirac";
        else if constexpr (std::is_same_v<T, GaussianKernel>) return "gaussian";
        else if constexpr (std::is_same_v<T, RectKernel>) return "rect";
        else return "dirac_comb";
      },
      k);
}

inline void check_compatible(const KernelSpec& k, CombinationRule rule) {
  const bool ok = std::visit(
      [rule](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DiracKernel>) return true;
        else if constexpr (std::is_same_v<T, GaussianKernel>)
          return rule != CombinationRule::damping;
        else if constexpr (std::is_same_v<T, RectKernel>)
          return rule == CombinationRule::damping;
        else return rule == CombinationRule::convex;
      },
      k);
  if (!ok) {
    throw ConfigError("combination rule '" + std::string(to_string(rule)) +
                      "' is incompatible with kernel '" + kernel_name(k) + "'");
  }
}

inline void check_kernel(const KernelSpec& k, Shape shape) {
  std::visit(
      [shape](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GaussianKernel>) {
          if (!(v.sigma > 0.0)) throw ConfigError("gaussian sigma must be > 0");
        } else if constexpr (std::is_same_v<T, RectKernel>) {
          if (!(v.sigma > 0.0 && v.sigma <= 1.0))
            throw ConfigError("rect sigma must lie in (0,1]");
          if (v.baseline.shape != shape)
            throw DimensionError("rect baseline shape mismatch");
        } else if constexpr (std::is_same_v<T, DiracCombKernel>) {
          const auto& m = v.mask;
          if (m.rows == 0 || m.cols == 0 || m.rows > shape.height ||
              m.cols > shape.width)
            throw ConfigError("mask resolution must be within input resolution");
          if (!m.one_hot) {
            if (m.probs.size() != m.cells())
              throw ConfigError("mask needs one success probability per cell");
            for (double p : m.probs)
              if (!(p >= 0.0 && p <= 1.0))
                throw ConfigError("mask success probabilities must lie in [0,1]");
          }
          if (m.baseline.shape != shape)
            throw DimensionError("mask baseline shape mismatch");
        }
      },
      k);
}

// Identifies one Monte Carlo draw. The draw depends on nothing else.
struct SampleKey {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

// Cell index covering spatial pixel (h, w) under nearest-block upsampling.
inline std::size_t mask_cell(const MaskSpec& m, Shape s, std::size_t h,
                             std::size_t w) {
  return (h * m.rows / s.height) * m.cols + (w * m.cols / s.width);
}

// Draws the cell mask for one sample. One-hot masks sweep all cells exactly
// once per epoch of `cells()` consecutive indices.
inline std::vector<double> sample_mask(const MaskSpec& m, SampleKey key) {
  std::vector<double> alpha(m.cells(), 0.0);
  if (m.one_hot) {
    const std::size_t n = m.cells();
    const std::uint64_t epoch = key.index / n;
    const std::size_t pos = key.index % n;
    RandomStream rng(key.seed ^ 0x5bd1e995ULL, epoch);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    alpha[perm[pos]] = 1.0;
    return alpha;
  }
  RandomStream rng(key.seed, key.index);
  for (std::size_t j = 0; j < alpha.size(); ++j)
    alpha[j] = rng.bernoulli(m.probs[j]) ? 1.0 : 0.0;
  return alpha;
}

// Draws x~ ~ p(x~ | x, sigma) into `out`. For comb kernels the sampled cell
// mask is returned as well.
inline std::vector<double> sample_perturbation(const KernelSpec& kernel,
                                               const InputGrid& x,
                                               CombinationRule rule,
                                               SampleKey key,
                                               std::span<double> out) {
  const std::size_t n = x.size();
  std::vector<double> alpha;
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, DiracKernel>) {
          std::copy(x.values.begin(), x.values.end(), out.begin());
        } else if constexpr (std::is_same_v<T, GaussianKernel>) {
          RandomStream rng(key.seed, key.index);
          const double s = k.sigma;
          for (std::size_t i = 0; i < n; ++i) {
            const double eps =
                k.noise == NoiseKind::normal ? rng.normal() : rng.uniform();
            out[i] = rule == CombinationRule::additive
                         ? x[i] + s * eps
                         : (1.0 - s) * x[i] + s * eps;
            if (k.clamp_unit) out[i] = std::clamp(out[i], 0.0, 1.0);
          }
        } else if constexpr (std::is_same_v<T, RectKernel>) {
          RandomStream rng(key.seed, key.index);
          const double tau = k.sigma * rng.uniform();
          for (std::size_t i = 0; i < n; ++i)
            out[i] = (1.0 - tau) * x[i] + tau * k.baseline[i];
        } else {
          const auto& m = k.mask;
          alpha = sample_mask(m, key);
          const Shape s = x.shape;
          for (std::size_t h = 0; h < s.height; ++h)
            for (std::size_t w = 0; w < s.width; ++w) {
              const double a = alpha[mask_cell(m, s, h, w)];
              for (std::size_t c = 0; c < s.channels; ++c) {
                const std::size_t i = (h * s.width + w) * s.channels + c;
                out[i] = (1.0 - a) * x[i] + a * m.baseline[i];
              }
            }
        }
      },
      kernel);
  return alpha;
}

inline InputGrid sample_perturbation(const KernelSpec& kernel,
                                     const InputGrid& x, CombinationRule rule,
                                     SampleKey key) {
  check_compatible(kernel, rule);
  check_kernel(kernel, x.shape);
  InputGrid out(x.shape);
  sample_perturbation(kernel, x, rule, key, out.values);
  return out;
}

// ---------------------------------------------------------------------------
// Per-pixel 1-D kernels

// Distribution of the offset t = x~_i - x_i at one pixel.
struct ScalarKernel {
  enum class Kind { dirac, gaussian, uniform, two_point };
  Kind kind = Kind::dirac;
  double a = 0.0;  // dirac/gaussian: location; uniform: start
  double b = 0.0;  // gaussian: std; uniform: signed width; two_point: jump
  double h = 0.0;  // two_point: probability of the jump

  static ScalarKernel dirac() { return {}; }
  static ScalarKernel gaussian(double std, double mean = 0.0) {
    return {Kind::gaussian, mean, std, 0.0};
  }
  static ScalarKernel uniform(double start, double width) {
    return {Kind::uniform, start, width, 0.0};
  }
  static ScalarKernel two_point(double jump, double prob) {
    return {Kind::two_point, 0.0, jump, prob};
  }

  // Rect (integrated-gradient) pulse from x toward baseline s over a
  // fraction sigma of the way: uniform on [0, sigma (s - x)].
  static ScalarKernel rect(double sigma, double x, double s) {
    return uniform(0.0, sigma * (s - x));
  }

  bool symmetric_about_sample() const {
    switch (kind) {
      case Kind::dirac: return a == 0.0;
      case Kind::gaussian: return a == 0.0;
      case Kind::uniform: return a + 0.5 * b == 0.0;
      case Kind::two_point: return h == 0.0 || b == 0.0;
    }
    return false;
  }

  double mean() const {
    switch (kind) {
      case Kind::dirac: return a;
      case Kind::gaussian: return a;
      case Kind::uniform: return a + 0.5 * b;
      case Kind::two_point: return h * b;
    }
    return 0.0;
  }

  double variance() const {
    switch (kind) {
      case Kind::dirac: return 0.0;
      case Kind::gaussian: return b * b;
      case Kind::uniform: return b * b / 12.0;
      case Kind::two_point: return h * (1.0 - h) * b * b;
    }
    return 0.0;
  }

  double sample(RandomStream& rng) const {
    switch (kind) {
      case Kind::dirac: return a;
      case Kind::gaussian: return a + b * rng.normal();
      case Kind::uniform: return a + b * rng.uniform();
      case Kind::two_point: return rng.bernoulli(h) ? b : 0.0;
    }
    return 0.0;
  }

  // Density on the real line; Dirac and two-point kernels have none.
  std::optional<double> density(double t) const {
    switch (kind) {
      case Kind::gaussian: {
        const double z = (t - a) / b;
        return std::exp(-0.5 * z * z) / (b * std::sqrt(2.0 * kPi));
      }
      case Kind::uniform: {
        const double lo = std::min(a, a + b), hi = std::max(a, a + b);
        return (t >= lo && t <= hi) ? 1.0 / std::abs(b) : 0.0;
      }
      default: return std::nullopt;
    }
  }

  // Support window outside which the density is negligible (8 std for the
  // Gaussian).
  std::pair<double, double> support() const {
    switch (kind) {
      case Kind::gaussian: return {a - 8.0 * b, a + 8.0 * b};
      case Kind::uniform: return {std::min(a, a + b), std::max(a, a + b)};
      case Kind::two_point: return {std::min(0.0, b), std::max(0.0, b)};
      default: return {a, a};
    }
  }
};

// Per-pixel kernel induced by an image kernel and combination rule at a
// pixel with value x and baseline value s.
inline ScalarKernel pixel_kernel(const KernelSpec& k, CombinationRule rule,
                                 double x, double s = 0.0,
                                 double mask_prob = 0.0) {
  return std::visit(
      [&](const auto& v) -> ScalarKernel {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DiracKernel>) {
          return ScalarKernel::dirac();
        } else if constexpr (std::is_same_v<T, GaussianKernel>) {
          const bool additive = rule == CombinationRule::additive;
          if (v.noise == NoiseKind::normal) {
            return ScalarKernel::gaussian(v.sigma, additive ? 0.0 : -v.sigma * x);
          }
          return ScalarKernel::uniform(additive ? 0.0 : -v.sigma * x, v.sigma);
        } else if constexpr (std::is_same_v<T, RectKernel>) {
          return ScalarKernel::rect(v.sigma, x, s);
        } else {
          return ScalarKernel::two_point(s - x, mask_prob);
        }
      },
      k);
}

inline cdouble sinc_pi(double u) {
  return std::abs(u) < 1e-12 ? 1.0 : std::sin(kPi * u) / (kPi * u);
}

// Fourier transform p^(w) with origin at the sample.
inline cdouble kernel_ft_at(const ScalarKernel& k, double w) {
  using K = ScalarKernel::Kind;
  const cdouble I(0.0, 1.0);
  switch (k.kind) {
    case K::dirac: return std::exp(-I * (2.0 * kPi * w * k.a));
    case K::gaussian:
      return std::exp(-I * (2.0 * kPi * w * k.a)) *
             std::exp(-2.0 * kPi * kPi * k.b * k.b * w * w);
    case K::uniform:
      return std::exp(-I * (2.0 * kPi * w * (k.a + 0.5 * k.b))) *
             sinc_pi(w * k.b);
    case K::two_point:
      return (1.0 - k.h) + k.h * std::exp(-I * (2.0 * kPi * w * k.b));
  }
  return 0.0;
}

// Characteristic function E[exp(i 2 pi w t)] = conj(p^(w)).
inline cdouble characteristic(const ScalarKernel& k, double w) {
  return std::conj(kernel_ft_at(k, w));
}

enum class FtOrigin { sample, absolute };

enum class PsdNormalization {
  peak,      // S(0) = 1
  raw_sqrt,  // |FT(sqrt(density))|^2 of the unnormalized square root
};

struct KernelFt {
  std::vector<double> omega;
  std::vector<cdouble> values;
  std::vector<double> psd_sqrt;
};

// |FT(sqrt p)|^2. Dirac has S = 1 by convention; for the two-point kernel
// sqrt p is taken as the weighted comb sqrt(1-h) d(0) + sqrt(h) d(b).
inline double psd_sqrt_at(const ScalarKernel& k, double w,
                          PsdNormalization norm = PsdNormalization::peak) {
  using K = ScalarKernel::Kind;
  switch (k.kind) {
    case K::dirac: return 1.0;
    case K::gaussian: {
      const double e = std::exp(-8.0 * kPi * kPi * k.b * k.b * w * w);
      return norm == PsdNormalization::peak
                 ? e
                 : 2.0 * std::sqrt(2.0 * kPi) * std::abs(k.b) * e;
    }
    case K::uniform: {
      const double s = std::real(sinc_pi(w * k.b));
      return norm == PsdNormalization::peak ? s * s : std::abs(k.b) * s * s;
    }
    case K::two_point:
      return (1.0 - k.h) + k.h +
             2.0 * std::sqrt(k.h * (1.0 - k.h)) * std::cos(2.0 * kPi * w * k.b);
  }
  return 0.0;
}

// Phase factor r = 1 + 2x/(sigma (s - x)) of the rect pulse when the
// transform is taken with an absolute origin: p^ = exp(-i pi w L r) sinc,
// with pulse width L = sigma (s - x).
inline double rect_phase_factor(double sigma, double x, double s) {
  return 1.0 + 2.0 * x / (sigma * (s - x));
}

inline KernelFt kernel_ft(const ScalarKernel& k, std::span<const double> omega,
                          FtOrigin origin = FtOrigin::sample,
                          double sample_value = 0.0) {
  KernelFt ft;
  ft.omega.assign(omega.begin(), omega.end());
  ft.values.reserve(omega.size());
  ft.psd_sqrt.reserve(omega.size());
  const cdouble I(0.0, 1.0);
  for (double w : omega) {
    cdouble v = kernel_ft_at(k, w);
    if (origin == FtOrigin::absolute)
      v *= std::exp(-I * (2.0 * kPi * w * sample_value));
    ft.values.push_back(v);
    ft.psd_sqrt.push_back(psd_sqrt_at(k, w));
  }
  return ft;
}

inline std::vector<double> psd_sqrt(const ScalarKernel& k,
                                    std::span<const double> omega,
                                    PsdNormalization norm = PsdNormalization::peak) {
  std::vector<double> out;
  out.reserve(omega.size());
  for (double w : omega) out.push_back(psd_sqrt_at(k, w, norm));
  return out;
}

// Combined gradient/perturbation filter w^2 S_sqrt(p)(w).
inline double bandpass_at(const ScalarKernel& k, double w) {
  return w * w * psd_sqrt_at(k, w);
}

inline std::vector<double> bandpass(const ScalarKernel& k,
                                    std::span<const double> omega) {
  std::vector<double> out;
  out.reserve(omega.size());
  for (double w : omega) out.push_back(bandpass_at(k, w));
  return out;
}

// Peak of w^2 exp(-8 pi^2 sigma^2 w^2).
inline double gaussian_bandpass_peak(double sigma) {
  return 1.0 / (2.0 * std::sqrt(2.0) * kPi * sigma);
}

// ---------------------------------------------------------------------------

// Shifted, bilinearly upsampled random mask of the original RISE sampler.
// Values in [0,1] with 1 = keep. Provided as an evaluation baseline only;
// the spectral analysis uses the unshifted comb kernel above.
inline Grid rise_shifted_mask(std::size_t rows, std::size_t cols, double keep_prob,
                              Shape shape, SampleKey key) {
  RandomStream rng(key.seed ^ 0x27d4eb2fULL, key.index);
  std::vector<double> cells(rows * cols);
  for (auto& c : cells) c = rng.bernoulli(keep_prob) ? 1.0 : 0.0;
  const double ch = double(shape.height) / double(rows);
  const double cw = double(shape.width) / double(cols);
  const double sh = rng.uniform() * ch;
  const double sw = rng.uniform() * cw;
  Grid m(Shape{shape.height, shape.width, 1});
  auto cell = [&](long r, long c) {
    r = std::clamp<long>(r, 0, long(rows) - 1);
    c = std::clamp<long>(c, 0, long(cols) - 1);
    return cells[std::size_t(r) * cols + std::size_t(c)];
  };
  for (std::size_t h = 0; h < shape.height; ++h) {
    for (std::size_t w = 0; w < shape.width; ++w) {
      // Position in cell coordinates on the (rows+1) x (cols+1) upsampled
      // canvas, shifted by a random sub-cell offset.
      const double u = (double(h) + sh) / ch - 0.5;
      const double v = (double(w) + sw) / cw - 0.5;
      const long r0 = long(std::floor(u)), c0 = long(std::floor(v));
      const double fu = u - double(r0), fv = v - double(c0);
      m.at(h, w) = (1 - fu) * (1 - fv) * cell(r0, c0) + (1 - fu) * fv * cell(r0, c0 + 1) +
                   fu * (1 - fv) * cell(r0 + 1, c0) + fu * fv * cell(r0 + 1, c0 + 1);
    }
  }
  return m;
}

}  // namespace speclens
