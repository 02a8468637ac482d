#pragma once

// Spectral-side tools over stacks of SG^2 maps: cosine-similarity scale
// selection, SpectralLens / ArgLens aggregation, inconsistency, the entropy
// cutoff scan and the two-tone ranking-flip demo.
//
// Similarity note: the PSD of the classifier is treated as fixed across
// sigma, so only sigma^{5/2} * L1(SG^2(sigma)) is ever computed.

#include <optional>
#include <string>
#include <vector>

#include "speclens/core.hpp"
#include "speclens/estimator.hpp"
#include "speclens/kernels.hpp"
#include "speclens/model.hpp"
#include "speclens/numeric.hpp"

namespace speclens {

// Relative sigma values in (0,1]; absolute scale = relative * sigma_max.
struct SigmaGrid {
  std::vector<double> relative;
  double sigma_max = 1.0;

  std::size_t size() const { return relative.size(); }
  double absolute(std::size_t i) const { return relative[i] * sigma_max; }
  std::vector<double> absolute_values() const {
    std::vector<double> v(relative);
    for (auto& s : v) s *= sigma_max;
    return v;
  }
  void validate() const {
    if (relative.empty()) throw ConfigError("sigma grid is empty");
    if (!strictly_increasing(relative)) throw ConfigError("sigma grid must be strictly increasing");
    if (!(relative.front() > 0.0) || relative.back() > 1.0 + 1e-12)
      throw ConfigError("relative sigma values must lie in (0,1]");
    if (!(sigma_max > 0.0)) throw ConfigError("sigma_max must be > 0");
  }

  static SigmaGrid log_spaced(std::size_t n = 16, double lo = 0.01, double hi = 1.0,
                              double sigma_max = 1.0) {
    return {logspace(lo, hi, n), sigma_max};
  }
  static SigmaGrid linear(std::size_t n, double lo, double hi, double sigma_max = 1.0) {
    return {linspace(lo, hi, n), sigma_max};
  }
};

struct LensStack {
  std::vector<double> sigma_rel;
  std::vector<double> sigma_abs;
  std::vector<AttributionMap> maps;

  std::size_t size() const { return maps.size(); }
  void validate() const {
    if (maps.empty()) throw ConfigError("lens stack is empty");
    if (sigma_rel.size() != maps.size() || sigma_abs.size() != maps.size())
      throw DimensionError("lens stack sigma/map count mismatch");
    for (const auto& m : maps) {
      if (m.values.shape != maps[0].values.shape)
        throw DimensionError("lens stack maps differ in shape");
      if (m.meta.class_index != maps[0].meta.class_index)
        throw ConfigError("lens stack maps explain different classes");
    }
  }
};

// SG^2 at every grid point. The same seed is reused per sigma so the
// noise draws are shared across the stack.
inline LensStack build_sg2_stack(const Model& model, const InputGrid& x,
                                 const SigmaGrid& grid, const EstimatorConfig& cfg,
                                 CombinationRule rule = CombinationRule::convex,
                                 NoiseKind noise = NoiseKind::normal) {
  grid.validate();
  LensStack st;
  EstimatorConfig c = cfg;
  if (!c.class_index) c.class_index = resolve_class(model, x, cfg);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double s = grid.absolute(i);
    MethodPreset p{"SG2", GaussianKernel{s, noise}, ExplainerKind::squared_gradient, rule, s};
    st.sigma_rel.push_back(grid.relative[i]);
    st.sigma_abs.push_back(s);
    st.maps.push_back(estimate(model, x, p, c));
  }
  return st;
}

// Per-pixel spectral SG^2 of an analytic field's components:
// 4 pi^2 sum_m w_m^2 S_f(w_m) S_sqrt(p)(w_m), Gaussian kernel, peak
// normalization. Mixing into logits is not applied.
inline double spectral_sg2(const SpectralProfile& psd, double sigma) {
  const ScalarKernel k = ScalarKernel::gaussian(sigma);
  double s = 0.0;
  for (const auto& m : psd.masses) s += m.omega * m.omega * m.weight * psd_sqrt_at(k, m.omega);
  for (std::size_t i = 1; i < psd.omega.size(); ++i) {
    auto g = [&](std::size_t j) {
      const double w = psd.omega[j];
      return 2.0 * w * w * psd.density[j] * psd_sqrt_at(k, w);
    };
    s += 0.5 * (g(i) + g(i - 1)) * (psd.omega[i] - psd.omega[i - 1]);
  }
  return 4.0 * kPi * kPi * s;
}

inline LensStack spectral_sg2_stack(const AnalyticField& field, const SigmaGrid& grid) {
  grid.validate();
  const Shape shape = field.input_shape();
  std::vector<SpectralProfile> psd;
  for (std::size_t i = 0; i < shape.size(); ++i) psd.push_back(analytic_psd(field, i));
  LensStack st;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double s = grid.absolute(k);
    Grid g(shape);
    for (std::size_t i = 0; i < shape.size(); ++i) g[i] = spectral_sg2(psd[i], s);
    AttributionMap m;
    m.values = channel_sum(g);
    m.variance = Grid(m.values.shape);
    m.meta.method = "SG2-spectral";
    m.meta.kernel = "gaussian";
    m.meta.sigma = s;
    m.meta.converged = true;
    m.meta.signed_values = false;
    st.sigma_rel.push_back(grid.relative[k]);
    st.sigma_abs.push_back(s);
    st.maps.push_back(std::move(m));
  }
  return st;
}

// ---------------------------------------------------------------------------
// Cosine-similarity scale selection

enum class Granularity { dataset, image, pixel };

inline Granularity parse_granularity(const std::string& s) {
  if (s == "dataset") return Granularity::dataset;
  if (s == "image") return Granularity::image;
  if (s == "pixel") return Granularity::pixel;
  throw ConfigError("unknown granularity '" + s + "'");
}

struct SimilarityCurve {
  std::vector<double> sigma_rel;
  std::vector<double> sigma_abs;
  std::vector<double> score;
  std::size_t argmax = 0;
  double sigma_star_rel = 0.0;
  double sigma_star_abs = 0.0;
  std::vector<std::size_t> zero_maps;  // sigma indices whose SG^2 was all zero
};

inline double l1_norm(const Grid& g) {
  double s = 0.0;
  for (double v : g.values) s += std::abs(v);
  return s;
}

// First maximum wins.
inline std::size_t argmax_first(std::span<const double> v) {
  std::size_t k = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[k]) k = i;
  return k;
}

// True when the sequence rises (weakly) to a single peak and then falls.
inline bool is_unimodal(std::span<const double> v) {
  bool falling = false;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[i - 1]) falling = true;
    else if (v[i] > v[i - 1] && falling) return false;
  }
  return true;
}

namespace detail {
inline SimilarityCurve finish_curve(const LensStack& st, std::vector<double> l1) {
  SimilarityCurve c;
  c.sigma_rel = st.sigma_rel;
  c.sigma_abs = st.sigma_abs;
  for (std::size_t k = 0; k < l1.size(); ++k) {
    if (l1[k] == 0.0) c.zero_maps.push_back(k);
    c.score.push_back(std::pow(st.sigma_abs[k], 2.5) * l1[k]);
  }
  c.argmax = argmax_first(c.score);
  c.sigma_star_rel = c.sigma_rel[c.argmax];
  c.sigma_star_abs = c.sigma_abs[c.argmax];
  return c;
}
}  // namespace detail

// Image-level curve.
inline SimilarityCurve similarity_curve(const LensStack& st) {
  st.validate();
  std::vector<double> l1;
  for (const auto& m : st.maps) l1.push_back(l1_norm(m.values));
  return detail::finish_curve(st, std::move(l1));
}

// Dataset-level curve: L1 norms summed over images on a shared grid.
inline SimilarityCurve similarity_curve(std::span<const LensStack> stacks) {
  if (stacks.empty()) throw ConfigError("no stacks for dataset-level similarity");
  std::vector<double> l1(stacks[0].size(), 0.0);
  for (const auto& st : stacks) {
    st.validate();
    if (st.sigma_abs != stacks[0].sigma_abs)
      throw ConfigError("dataset-level similarity needs a shared sigma grid");
    for (std::size_t k = 0; k < st.size(); ++k) l1[k] += l1_norm(st.maps[k].values);
  }
  return detail::finish_curve(stacks[0], std::move(l1));
}

// Pixel-level: relative sigma* per pixel.
inline Grid similarity_pixelwise(const LensStack& st) {
  st.validate();
  Grid out(st.maps[0].values.shape);
  std::vector<double> col(st.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < st.size(); ++k)
      col[k] = std::pow(st.sigma_abs[k], 2.5) * std::abs(st.maps[k].values[i]);
    out[i] = st.sigma_rel[argmax_first(col)];
  }
  return out;
}

inline SimilarityCurve similarity_scan(const Model& model, const InputGrid& x,
                                       const SigmaGrid& grid, const EstimatorConfig& cfg,
                                       NoiseKind noise = NoiseKind::normal) {
  return similarity_curve(build_sg2_stack(model, x, grid, cfg, CombinationRule::convex, noise));
}

// Maximizer of s^{5/2} w^2 exp(-8 pi^2 s^2 w^2) for a lone tone.
inline double single_tone_similarity_peak(double omega0) {
  return std::sqrt(5.0) / (4.0 * std::sqrt(2.0) * kPi * omega0);
}

// ---------------------------------------------------------------------------
// SpectralLens / ArgLens

struct Prior {
  enum class Kind { dirac, uniform, weights };
  Kind kind = Kind::uniform;
  double sigma0 = 0.0;           // dirac location, relative units
  std::vector<double> weights;   // user weights per grid point

  static Prior dirac(double s) { return {Kind::dirac, s, {}}; }
  static Prior uniform() { return {Kind::uniform, 0.0, {}}; }
  static Prior grid_weights(std::vector<double> w) { return {Kind::weights, 0.0, std::move(w)}; }
};

inline std::vector<double> prior_weights(const Prior& p, std::span<const double> sigma_rel) {
  std::vector<double> w(sigma_rel.size(), 0.0);
  switch (p.kind) {
    case Prior::Kind::dirac: {
      for (std::size_t i = 0; i < sigma_rel.size(); ++i) {
        if (std::abs(sigma_rel[i] - p.sigma0) <= 1e-12 * std::max(1.0, std::abs(p.sigma0))) {
          w[i] = 1.0;
          return w;
        }
      }
      throw ConfigError("dirac prior location is not on the sigma grid");
    }
    case Prior::Kind::uniform: w = trapezoid_weights(sigma_rel); break;
    case Prior::Kind::weights:
      if (p.weights.size() != sigma_rel.size())
        throw ConfigError("prior weights must match the sigma grid length");
      w = p.weights;
      break;
  }
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("prior weights must be finite and >= 0");
    total += v;
  }
  if (!(total > 0.0)) throw ConfigError("prior weights are not normalizable");
  for (auto& v : w) v /= total;
  return w;
}

struct LensResult {
  Grid sl2;
  Grid al;        // relative sigma of the per-pixel SG^2 maximum
  Grid omega_al;  // 1 / (1 + AL)
  std::vector<double> weights;
};

inline Grid arg_lens(const LensStack& st) {
  st.validate();
  Grid out(st.maps[0].values.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < st.size(); ++k)
      if (st.maps[k].values[i] > st.maps[best].values[i]) best = k;
    out[i] = st.sigma_rel[best];
  }
  return out;
}

inline LensResult spectral_lens(const LensStack& st, const Prior& prior) {
  st.validate();
  LensResult r;
  r.weights = prior_weights(prior, st.sigma_rel);
  r.sl2 = Grid(st.maps[0].values.shape);
  for (std::size_t k = 0; k < st.size(); ++k) {
    if (r.weights[k] == 0.0) continue;
    const auto& v = st.maps[k].values.values;
    for (std::size_t i = 0; i < v.size(); ++i) r.sl2[i] += r.weights[k] * v[i];
  }
  r.al = arg_lens(st);
  r.omega_al = r.al;
  for (auto& v : r.omega_al.values) v = 1.0 / (1.0 + v);
  return r;
}

inline LensResult spectral_lens(const Model& model, const InputGrid& x, const Prior& prior,
                                const SigmaGrid& grid, const EstimatorConfig& cfg,
                                CombinationRule rule = CombinationRule::convex) {
  return spectral_lens(build_sg2_stack(model, x, grid, cfg, rule), prior);
}

// ---------------------------------------------------------------------------
// Inconsistency

struct InconsistencyResult {
  double value = 0.0;
  std::size_t terms = 0;
  std::size_t skipped = 0;  // zero-norm maps left out of the mean
};

// Average-pools a single-channel grid down to at most `limit` per side.
inline std::vector<double> pool_down(const Grid& g, std::size_t limit = 32) {
  const Grid s = channel_sum(g);
  const std::size_t H = s.shape.height, W = s.shape.width;
  const std::size_t fh = (H + limit - 1) / limit, fw = (W + limit - 1) / limit;
  const std::size_t oh = (H + fh - 1) / fh, ow = (W + fw - 1) / fw;
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      std::size_t n = 0;
      for (std::size_t h = r * fh; h < std::min(H, (r + 1) * fh); ++h)
        for (std::size_t w = c * fw; w < std::min(W, (c + 1) * fw); ++w, ++n) acc += s.at(h, w);
      out[r * ow + c] = acc / static_cast<double>(n);
    }
  return out;
}

namespace detail {
// Max-abs normalized, pooled; empty when the map is all zero.
inline std::vector<double> prepared(const Grid& g) {
  double m = 0.0;
  for (double v : g.values) m = std::max(m, std::abs(v));
  if (m == 0.0) return {};
  Grid n = g;
  for (auto& v : n.values) v /= m;
  return pool_down(n);
}
}  // namespace detail

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// 1 - mean_sigma cos(e0, e_sigma). e0 defaults to the smallest-sigma map
// (which is then not compared with itself); pass `reference` to use e.g. an
// exact VG^2 map instead, in which case every stack entry is compared.
inline InconsistencyResult inconsistency(const LensStack& st,
                                         const Grid* reference = nullptr) {
  st.validate();
  const auto e0 = detail::prepared(reference ? *reference : st.maps[0].values);
  if (e0.empty()) throw NumericError("inconsistency reference map is all zero");
  InconsistencyResult r;
  double sum = 0.0;
  for (std::size_t k = reference ? 0 : 1; k < st.size(); ++k) {
    const auto e = detail::prepared(st.maps[k].values);
    if (e.empty()) {
      ++r.skipped;
      continue;
    }
    sum += std::clamp(cosine_similarity(e0, e), -1.0, 1.0);
    ++r.terms;
  }
  r.value = r.terms ? 1.0 - sum / static_cast<double>(r.terms) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Entropy cutoff

struct EntropyScan {
  std::vector<double> sigma;
  std::vector<double> entropy;
  std::vector<double> smoothed;
  std::size_t cutoff_index = 0;
  double sigma_max = 0.0;
  bool anomaly_detected = false;
};

// Centered moving average; edges average the neighbours that exist.
inline std::vector<double> moving_average(std::span<const double> v, std::size_t window = 3) {
  const std::size_t half = window / 2;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(v.size() - 1, i + half);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += v[j];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

// sigma_max is the last grid value before the smoothed curve first stops
// increasing; a curve that keeps rising yields the grid end, unflagged.
inline EntropyScan cutoff_from_curve(std::vector<double> sigma, std::vector<double> entropy) {
  if (sigma.empty() || sigma.size() != entropy.size())
    throw ConfigError("entropy curve needs matching, non-empty sigma and entropy");
  EntropyScan s;
  s.sigma = std::move(sigma);
  s.entropy = std::move(entropy);
  s.smoothed = moving_average(s.entropy, 3);
  s.cutoff_index = s.sigma.size() - 1;
  for (std::size_t k = 1; k < s.smoothed.size(); ++k) {
    if (s.smoothed[k] <= s.smoothed[k - 1]) {
      s.cutoff_index = k - 1;
      s.anomaly_detected = true;
      break;
    }
  }
  s.sigma_max = s.sigma[s.cutoff_index];
  return s;
}

// Mean predictive entropy under the perturbation at each absolute sigma.
// Default perturbation: convex mixing toward uniform noise.
inline EntropyScan entropy_cutoff_scan(const Model& model, std::span<const InputGrid> images,
                                       std::vector<double> sigma_abs,
                                       std::size_t samples_per_image = 16,
                                       std::uint64_t seed = 0, std::size_t workers = 1,
                                       CombinationRule rule = CombinationRule::convex,
                                       NoiseKind noise = NoiseKind::uniform) {
  if (images.empty()) throw ConfigError("entropy scan needs at least one image");
  if (sigma_abs.empty()) throw ConfigError("entropy scan needs a non-empty sigma grid");
  if (!strictly_increasing(sigma_abs)) throw ConfigError("sigma grid must be strictly increasing");
  std::vector<double> curve(sigma_abs.size());
  const std::size_t per_sigma = images.size() * samples_per_image;
  for (std::size_t k = 0; k < sigma_abs.size(); ++k) {
    const GaussianKernel kern{sigma_abs[k], noise};
    std::vector<double> h(per_sigma);
    parallel_for(0, per_sigma, workers, [&](std::size_t j) {
      const auto& x = images[j / samples_per_image];
      InputGrid xt(x.shape);
      sample_perturbation(kern, x, rule, SampleKey{seed, j}, xt.values);
      h[j] = predictive_entropy(model, xt);
    });
    curve[k] = mean_of(h);
  }
  return cutoff_from_curve(std::move(sigma_abs), std::move(curve));
}

// ---------------------------------------------------------------------------
// Two-tone ranking flip

// Crossover where w_i^2 e^{-8 pi^2 s^2 w_i^2} = w_j^2 e^{-8 pi^2 s^2 w_j^2}.
inline std::optional<double> rashomon_crossover(double wi, double wj) {
  wi = std::abs(wi);
  wj = std::abs(wj);
  if (wi == wj || wi == 0.0 || wj == 0.0) return std::nullopt;
  return std::sqrt(std::log(wj * wj / (wi * wi)) / (8.0 * kPi * kPi * (wj * wj - wi * wi)));
}

struct RashomonDemo {
  std::vector<double> sigma;
  std::vector<double> attribution_i;
  std::vector<double> attribution_j;
  std::vector<bool> higher_freq_first;
  std::optional<std::size_t> flip_index;  // first index where the order differs from index 0
  std::optional<double> sigma_bar;
};

// Two pixels carrying lone tones w_i and w_j; attributions are the
// spectral SG^2 values of each pixel across the grid.
inline RashomonDemo rashomon_demo(double wi, double wj, const SigmaGrid& grid) {
  const AnalyticField field(Shape{1, 2, 1}, {{Tone{1.0, wi, 0.0}}, {Tone{1.0, wj, 0.0}}});
  const LensStack st = spectral_sg2_stack(field, grid);
  RashomonDemo d;
  d.sigma = st.sigma_abs;
  d.sigma_bar = rashomon_crossover(wi, wj);
  const bool j_higher = std::abs(wj) > std::abs(wi);
  for (std::size_t k = 0; k < st.size(); ++k) {
    const double ai = st.maps[k].values[0], aj = st.maps[k].values[1];
    d.attribution_i.push_back(ai);
    d.attribution_j.push_back(aj);
    // Stable ranking: on ties the first pixel (i) ranks first.
    const bool j_first = aj > ai;
    d.higher_freq_first.push_back(j_first == j_higher);
    if (!d.flip_index && k > 0 && d.higher_freq_first[k] != d.higher_freq_first[0])
      d.flip_index = k;
  }
  return d;
}

// ---------------------------------------------------------------------------

// L2 norm of the band-pass w^2 S_sqrt(p)(w) over [0, omega_max].
inline double bandpass_norm(const ScalarKernel& k, double omega_max, std::size_t intervals = 20000) {
  const double sq = simpson([&](double w) {
    const double b = bandpass_at(k, w);
    return b * b;
  }, 0.0, omega_max, intervals);
  return std::sqrt(sq);
}

}  // namespace speclens
