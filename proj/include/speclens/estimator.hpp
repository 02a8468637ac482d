#pragma once

// Monte Carlo estimation of E_{p(x~)}[explainer] with adaptive stopping,
// plus the method presets (VG, SG, IG, XIG, their squared forms, RISE and
// occlusion).

#include <optional>
#include <string>
#include <vector>

#include "speclens/core.hpp"
#include "speclens/kernels.hpp"
#include "speclens/model.hpp"

namespace speclens {

enum class ExplainerKind {
  gradient,
  squared_gradient,
  input_times_gradient,
  input_times_gradient_squared,
  baseline_scaled_gradient,
  baseline_scaled_gradient_squared,
  finite_difference,
  prediction,
};

inline bool is_squared(ExplainerKind k) {
  return k == ExplainerKind::squared_gradient ||
         k == ExplainerKind::input_times_gradient_squared ||
         k == ExplainerKind::baseline_scaled_gradient_squared;
}

struct EstimatorConfig {
  double tolerance = 5e-3;
  std::size_t check_interval = 32;
  std::size_t min_samples = 64;
  std::size_t max_samples = 8192;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool keep_channels = false;
  Target target = Target::log_prob;
  std::optional<std::size_t> class_index;  // default: most probable class

  void validate() const {
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be > 0");
    if (check_interval == 0) throw ConfigError("check_interval must be > 0");
    if (batch_size == 0) throw ConfigError("batch_size must be > 0");
    if (max_samples == 0) throw ConfigError("max_samples must be > 0");
    if (min_samples > max_samples)
      throw ConfigError("min_samples must not exceed max_samples");
  }
};

struct MethodPreset {
  std::string name;
  KernelSpec kernel;
  ExplainerKind explainer = ExplainerKind::gradient;
  CombinationRule rule = CombinationRule::additive;
  double sigma = 0.0;  // absolute kernel scale, 0 for Dirac/mask kernels
};

// Signed methods are ranked by their negated values under the default
// convention.
inline bool is_signed(const MethodPreset& p) { return !is_squared(p.explainer); }

struct AttributionMeta {
  std::string method;
  std::string kernel;
  std::string target = "log_prob";
  double sigma = 0.0;
  std::size_t class_index = 0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  double final_change = 0.0;
  bool signed_values = true;
  std::vector<std::size_t> unattributed_cells;
};

struct AttributionMap {
  Grid values;
  Grid variance;  // per-sample variance of the explainer, same shape
  AttributionMeta meta;
};

inline std::string canonical_preset_name(std::string n) {
  for (const std::string sq : {"²", "^2"}) {
    if (auto pos = n.find(sq); pos != std::string::npos) n.replace(pos, sq.size(), "2");
  }
  for (auto& ch : n) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return n;
}

// Builds a preset. sigma is absolute; baseline is used by IG-family,
// RISE and OS; mask gives the comb resolution for RISE/OS.
inline MethodPreset make_preset(const std::string& raw_name, double sigma,
                                const Grid& baseline,
                                std::size_t mask_rows = 4,
                                std::size_t mask_cols = 4,
                                double mask_prob = 0.5) {
  const std::string name = canonical_preset_name(raw_name);
  using E = ExplainerKind;
  using R = CombinationRule;
  if (name == "VG") return {"VG", DiracKernel{}, E::gradient, R::additive, 0.0};
  if (name == "VG2") return {"VG2", DiracKernel{}, E::squared_gradient, R::additive, 0.0};
  if (name == "SG") return {"SG", GaussianKernel{sigma}, E::gradient, R::additive, sigma};
  if (name == "SG2")
    return {"SG2", GaussianKernel{sigma}, E::squared_gradient, R::additive, sigma};
  if (name == "IG")
    return {"IG", RectKernel{sigma, baseline}, E::gradient, R::damping, sigma};
  if (name == "IG2")
    return {"IG2", RectKernel{sigma, baseline}, E::squared_gradient, R::damping, sigma};
  if (name == "XIG")
    return {"XIG", RectKernel{sigma, baseline}, E::baseline_scaled_gradient, R::damping, sigma};
  if (name == "XIG2")
    return {"XIG2", RectKernel{sigma, baseline}, E::baseline_scaled_gradient_squared,
            R::damping, sigma};
  if (name == "RISE")
    return {"RISE",
            DiracCombKernel{MaskSpec::bernoulli(mask_rows, mask_cols, mask_prob, baseline)},
            E::prediction, R::convex, 0.0};
  if (name == "OS")
    return {"OS", DiracCombKernel{MaskSpec::occlusion(mask_rows, mask_cols, baseline)},
            E::prediction, R::convex, 0.0};
  throw ConfigError("unknown method preset '" + raw_name + "'");
}

// sigma = 0.1 (max(x) - min(x)); a constant image is degenerate.
struct SigmaHeuristic {
  double sigma = 0.0;
  bool degenerate = false;
};

inline SigmaHeuristic sg_sigma_heuristic(const InputGrid& x) {
  const auto [lo, hi] = std::minmax_element(x.values.begin(), x.values.end());
  const double s = 0.1 * (*hi - *lo);
  return {s, s == 0.0};
}

// Relative L-infinity change between consecutive running means, normalized
// by the current map's max-abs value.
inline double relative_change(std::span<const double> cur,
                              std::span<const double> prev) {
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    scale = std::max(scale, std::abs(cur[i]));
    diff = std::max(diff, std::abs(cur[i] - prev[i]));
  }
  if (scale == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / scale;
}

namespace detail {

// Per-pixel upsampled mask values (all channels) from the cell mask.
inline void expand_mask(const MaskSpec& m, Shape s, std::span<const double> cells,
                        std::span<double> out) {
  for (std::size_t h = 0; h < s.height; ++h)
    for (std::size_t w = 0; w < s.width; ++w) {
      const double a = cells[mask_cell(m, s, h, w)];
      for (std::size_t c = 0; c < s.channels; ++c)
        out[(h * s.width + w) * s.channels + c] = a;
    }
}

inline const MaskSpec* mask_of(const KernelSpec& k) {
  if (const auto* comb = std::get_if<DiracCombKernel>(&k)) return &comb->mask;
  return nullptr;
}

}  // namespace detail

// Evaluates the per-sample explainer for draw `key` into `out`.
struct SampleEvaluator {
  const Model& model;
  const InputGrid& x;
  const MethodPreset& preset;
  std::size_t class_index;
  Target target;
  double f_at_x;

  void operator()(SampleKey key, std::span<double> out) const {
    const std::size_t n = x.size();
    std::vector<double> xt(n);
    const auto cells = sample_perturbation(preset.kernel, x, preset.rule, key, xt);
    using E = ExplainerKind;
    switch (preset.explainer) {
      case E::gradient:
      case E::input_times_gradient:
      case E::baseline_scaled_gradient:
        grad_into(model, xt, class_index, target, out);
        break;
      case E::squared_gradient:
      case E::input_times_gradient_squared:
      case E::baseline_scaled_gradient_squared:
        grad_into(model, xt, class_index, target, out);
        for (auto& v : out) v *= v;
        break;
      case E::prediction:
      case E::finite_difference: {
        std::vector<double> alpha(n, 1.0);
        if (const auto* m = detail::mask_of(preset.kernel))
          detail::expand_mask(*m, x.shape, cells, alpha);
        const double f = target_value(model, xt, class_index, target);
        if (preset.explainer == E::prediction) {
          for (std::size_t i = 0; i < n; ++i) out[i] = alpha[i] * f;
        } else {
          // alpha (x~ - x) * Delta f, Delta f = (f(x~) - f(x)) / (x~ - x);
          // the product is taken in its limit where x~ = x.
          const double df = f - f_at_x;
          for (std::size_t i = 0; i < n; ++i) {
            const double dx = xt[i] - x[i];
            out[i] = dx != 0.0 ? alpha[i] * dx * (df / dx) : alpha[i] * df;
          }
        }
        break;
      }
    }
  }
};

// Multiplier applied to the expectation: input or baseline scaling happens
// after averaging.
inline std::vector<double> post_multiplier(const MethodPreset& p, const InputGrid& x) {
  using E = ExplainerKind;
  std::vector<double> m(x.size(), 1.0);
  const Grid* baseline = nullptr;
  if (const auto* r = std::get_if<RectKernel>(&p.kernel)) baseline = &r->baseline;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = baseline ? (*baseline)[i] : 0.0;
    switch (p.explainer) {
      case E::input_times_gradient: m[i] = x[i]; break;
      case E::input_times_gradient_squared: m[i] = x[i] * x[i]; break;
      case E::baseline_scaled_gradient: m[i] = x[i] - s; break;
      case E::baseline_scaled_gradient_squared: m[i] = (x[i] - s) * (x[i] - s); break;
      default: break;
    }
  }
  return m;
}

inline std::size_t resolve_class(const Model& model, const InputGrid& x,
                                 const EstimatorConfig& cfg) {
  if (cfg.class_index) {
    if (*cfg.class_index >= model.num_classes())
      throw DimensionError("class index out of range");
    return *cfg.class_index;
  }
  return most_probable_class(forward(model, x));
}

// Running-mean estimate of E[explainer]. Stops once the relative change of
// the running mean between consecutive checks drops below cfg.tolerance
// (after min_samples), or at max_samples with converged = false. Draw i
// depends only on (cfg.seed, i) and draws are folded in index order, so the
// result is bit-identical for any worker count.
inline AttributionMap estimate(const Model& model, const InputGrid& x,
                               const MethodPreset& preset,
                               const EstimatorConfig& cfg) {
  cfg.validate();
  check_shape(model, x);
  if (!all_finite(x.values)) throw NumericError("input contains non-finite values");
  check_compatible(preset.kernel, preset.rule);
  check_kernel(preset.kernel, x.shape);

  const std::size_t c = resolve_class(model, x, cfg);
  const std::size_t n = x.size();
  const bool needs_f0 = preset.explainer == ExplainerKind::finite_difference;
  const SampleEvaluator eval{model, x, preset, c, cfg.target,
                             needs_f0 ? target_value(model, x.values, c, cfg.target) : 0.0};

  WelfordGrid acc(n);
  std::vector<double> prev;
  bool converged = false;
  double change = std::numeric_limits<double>::infinity();

  if (std::holds_alternative<DiracKernel>(preset.kernel)) {
    std::vector<double> v(n);
    try {
      eval(SampleKey{cfg.seed, 0}, v);
    } catch (const NumericError& e) {
      throw NumericError(std::string("sample 0: ") + e.what());
    }
    if (!all_finite(v)) throw NumericError("non-finite explainer output at sample 0");
    acc.add(v);
    converged = true;
    change = 0.0;
  } else {
    const std::size_t rows = std::min(cfg.check_interval, cfg.batch_size);
    std::vector<double> buffer(rows * n);
    std::size_t done = 0;
    while (done < cfg.max_samples) {
      const std::size_t next_check =
          std::min(cfg.max_samples, (done / cfg.check_interval + 1) * cfg.check_interval);
      while (done < next_check) {
        const std::size_t count = std::min(rows, next_check - done);
        parallel_for(0, count, cfg.workers, [&](std::size_t r) {
          std::span<double> row(buffer.data() + r * n, n);
          try {
            eval(SampleKey{cfg.seed, done + r}, row);
          } catch (const NumericError& e) {
            throw NumericError("sample " + std::to_string(done + r) + ": " + e.what());
          }
        });
        for (std::size_t r = 0; r < count; ++r) {
          std::span<const double> row(buffer.data() + r * n, n);
          if (!all_finite(row))
            throw NumericError("non-finite explainer output at sample " +
                               std::to_string(done + r));
          acc.add(row);
        }
        done += count;
      }
      if (!prev.empty()) {
        change = relative_change(acc.mean(), prev);
        if (done >= cfg.min_samples && change < cfg.tolerance) {
          converged = true;
          break;
        }
      }
      prev = acc.mean();
    }
  }

  const auto mult = post_multiplier(preset, x);
  Grid mean(x.shape), var(x.shape);
  const auto sample_var = acc.variance();
  for (std::size_t i = 0; i < n; ++i) {
    mean[i] = mult[i] * acc.mean()[i];
    var[i] = mult[i] * mult[i] * sample_var[i];
  }

  AttributionMap out;
  out.values = cfg.keep_channels ? mean : channel_sum(mean);
  out.variance = cfg.keep_channels ? var : channel_sum(var);
  auto& m = out.meta;
  m.method = preset.name;
  m.kernel = kernel_name(preset.kernel);
  m.target = to_string(cfg.target);
  m.sigma = preset.sigma;
  m.class_index = c;
  m.samples = acc.count();
  m.seed = cfg.seed;
  m.converged = converged;
  m.final_change = change;
  m.signed_values = is_signed(preset);
  if (const auto* mask = detail::mask_of(preset.kernel); mask && !mask->one_hot) {
    for (std::size_t j = 0; j < mask->cells(); ++j)
      if (mask->probs[j] == 0.0) m.unattributed_cells.push_back(j);
  }
  return out;
}

// RISE-style prediction explainer E[alpha f(x~)] over a comb mask.
inline AttributionMap prediction_explain(const Model& model, const InputGrid& x,
                                         const MaskSpec& mask,
                                         const EstimatorConfig& cfg) {
  MethodPreset p{mask.one_hot ? "OS" : "RISE", DiracCombKernel{mask},
                 ExplainerKind::prediction, CombinationRule::convex, 0.0};
  return estimate(model, x, p, cfg);
}

// Original RISE estimator with shifted, bilinearly upsampled keep-masks:
// sum_i f(x * m_i) m_i / (N p). Fixed sample count; outside the spectral
// analysis and used only as an evaluation baseline.
inline AttributionMap rise_baseline(const Model& model, const InputGrid& x,
                                    std::size_t rows, std::size_t cols, double keep_prob,
                                    std::size_t samples, const EstimatorConfig& cfg) {
  check_shape(model, x);
  const std::size_t c = resolve_class(model, x, cfg);
  const Shape s = x.shape;
  std::vector<std::vector<double>> per(samples);
  parallel_for(0, samples, cfg.workers, [&](std::size_t i) {
    const Grid m = rise_shifted_mask(rows, cols, keep_prob, s, SampleKey{cfg.seed, i});
    std::vector<double> xt(x.size());
    for (std::size_t p = 0; p < s.pixels(); ++p)
      for (std::size_t ch = 0; ch < s.channels; ++ch)
        xt[p * s.channels + ch] = x[p * s.channels + ch] * m[p];
    const double f = target_value(model, xt, c, Target::prob);
    per[i].resize(s.pixels());
    for (std::size_t p = 0; p < s.pixels(); ++p) per[i][p] = f * m[p];
  });
  WelfordGrid acc(s.pixels());
  for (const auto& v : per) acc.add(v);
  AttributionMap out;
  out.values = Grid(Shape{s.height, s.width, 1}, acc.mean());
  for (auto& v : out.values.values) v /= keep_prob;
  out.variance = Grid(Shape{s.height, s.width, 1}, acc.variance());
  out.meta.method = "RISE-shifted";
  out.meta.kernel = "rise_shifted";
  out.meta.target = "prob";
  out.meta.class_index = c;
  out.meta.samples = samples;
  out.meta.seed = cfg.seed;
  out.meta.converged = true;
  out.meta.signed_values = false;
  return out;
}

// ---------------------------------------------------------------------------

enum class RankConvention { negate_for_gradient_methods, raw, absolute };

inline RankConvention parse_rank_convention(const std::string& s) {
  if (s == "negate_for_gradient_methods" || s == "default")
    return RankConvention::negate_for_gradient_methods;
  if (s == "raw") return RankConvention::raw;
  if (s == "absolute") return RankConvention::absolute;
  throw ConfigError("unknown ranking convention '" + s + "'");
}

// Spatial pixel indices, most important first. The map is channel-summed
// first; ties keep row-major order.
inline std::vector<std::size_t> ranking(const AttributionMap& map,
                                        RankConvention conv =
                                            RankConvention::negate_for_gradient_methods) {
  const Grid g = channel_sum(map.values);
  std::vector<double> key(g.values);
  for (auto& v : key) {
    switch (conv) {
      case RankConvention::negate_for_gradient_methods:
        if (map.meta.signed_values) v = -v;
        break;
      case RankConvention::raw: break;
      case RankConvention::absolute: v = std::abs(v); break;
    }
  }
  std::vector<std::size_t> order(key.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  return order;
}

}  // namespace speclens
