#pragma once

// MoRF insertion/deletion with dilated removal masks, accounting on the
// area actually changed, AUC and Welch t-tests.

#include <boost/math/distributions/students_t.hpp>

#include <optional>
#include <string>
#include <vector>

#include "speclens/core.hpp"
#include "speclens/estimator.hpp"
#include "speclens/model.hpp"
#include "speclens/numeric.hpp"

namespace speclens {

enum class Direction { deletion, insertion };

inline const char* to_string(Direction d) {
  return d == Direction::deletion ? "deletion" : "insertion";
}

// Square structuring element of side k applied to the removal mask.
struct ErosionSpec {
  std::size_t k = 1;
  void validate() const {
    if (k == 0 || k % 2 == 0) throw ConfigError("erosion kernel size must be odd and >= 1");
  }
};

struct Fill {
  enum class Kind { constant, channel_mean, image };
  Kind kind = Kind::constant;
  double value = 0.0;
  Grid image;

  static Fill zero() { return {}; }
  static Fill constant(double v) { return {Kind::constant, v, {}}; }
  static Fill channel_mean() { return {Kind::channel_mean, 0.0, {}}; }
  static Fill baseline(Grid g) { return {Kind::image, 0.0, std::move(g)}; }

  std::string describe() const {
    switch (kind) {
      case Kind::constant: return "constant:" + std::to_string(value);
      case Kind::channel_mean: return "channel_mean";
      case Kind::image: return "image";
    }
    return "";
  }

  Grid materialize(const InputGrid& x) const {
    switch (kind) {
      case Kind::constant: return Grid(x.shape, value);
      case Kind::channel_mean: {
        Grid g(x.shape);
        const std::size_t C = x.shape.channels, P = x.shape.pixels();
        for (std::size_t c = 0; c < C; ++c) {
          double s = 0.0;
          for (std::size_t p = 0; p < P; ++p) s += x[p * C + c];
          for (std::size_t p = 0; p < P; ++p) g[p * C + c] = s / double(P);
        }
        return g;
      }
      case Kind::image:
        if (image.shape != x.shape) throw DimensionError("fill image shape mismatch");
        return image;
    }
    return Grid(x.shape);
  }
};

struct MorfPoint {
  double budget = 0.0;  // dedicated fraction
  double area = 0.0;    // fraction actually changed
  double score = 0.0;   // softmax probability of the original class
  double logit = 0.0;   // pre-softmax score of that class
};

struct MorfCurve {
  Direction direction = Direction::deletion;
  std::string fill;
  std::size_t erosion_k = 1;
  std::size_t class_index = 0;
  std::vector<MorfPoint> points;

  std::vector<double> areas() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.area);
    return v;
  }
  std::vector<double> scores() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.score);
    return v;
  }
};

// i / n for i = 1..n.
inline std::vector<double> default_budgets(std::size_t n = 100) {
  std::vector<double> b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = double(i + 1) / double(n);
  return b;
}

inline void check_budgets(std::span<const double> budgets) {
  if (budgets.empty()) throw ConfigError("budget grid is empty");
  if (!strictly_increasing(budgets)) throw ConfigError("budget grid must be strictly increasing");
  if (!(budgets.front() >= 0.0) || budgets.back() > 1.0)
    throw ConfigError("budgets must lie in [0,1]");
}

inline void check_ranking(std::span<const std::size_t> ranking, std::size_t pixels) {
  if (ranking.size() != pixels) throw DimensionError("ranking must cover every pixel");
  std::vector<bool> seen(pixels, false);
  for (auto r : ranking) {
    if (r >= pixels || seen[r]) throw DimensionError("ranking is not a permutation");
    seen[r] = true;
  }
}

inline std::size_t budget_count(double b, std::size_t pixels) {
  return std::min<std::size_t>(pixels, static_cast<std::size_t>(std::lround(b * double(pixels))));
}

// Dilation by a k x k square, clipped at the border.
inline std::vector<bool> grow_mask(const std::vector<bool>& m, std::size_t H, std::size_t W,
                                   std::size_t k) {
  if (k <= 1) return m;
  const long r = long(k / 2);
  std::vector<bool> out(m.size(), false);
  for (long h = 0; h < long(H); ++h)
    for (long w = 0; w < long(W); ++w) {
      if (!m[std::size_t(h) * W + std::size_t(w)]) continue;
      for (long dh = -r; dh <= r; ++dh)
        for (long dw = -r; dw <= r; ++dw) {
          const long hh = h + dh, ww = w + dw;
          if (hh >= 0 && hh < long(H) && ww >= 0 && ww < long(W))
            out[std::size_t(hh) * W + std::size_t(ww)] = true;
        }
    }
  return out;
}

struct GrowthPoint {
  double budget = 0.0;
  double area = 0.0;
};

inline std::vector<GrowthPoint> mask_growth_profile(std::span<const std::size_t> ranking, Shape shape,
                                                    std::span<const double> budgets,
                                                    ErosionSpec erosion) {
  erosion.validate();
  check_budgets(budgets);
  const std::size_t P = shape.pixels();
  check_ranking(ranking, P);
  std::vector<GrowthPoint> out;
  std::vector<bool> raw(P, false);
  std::size_t filled = 0;
  for (double b : budgets) {
    const std::size_t n = budget_count(b, P);
    for (; filled < n; ++filled) raw[ranking[filled]] = true;
    const auto g = grow_mask(raw, shape.height, shape.width, erosion.k);
    const auto cnt = std::count(g.begin(), g.end(), true);
    out.push_back({double(n) / double(P), double(cnt) / double(P)});
  }
  return out;
}

// Keeps one point per distinct area: the one with the largest budget.
inline std::vector<MorfPoint> merge_duplicate_areas(std::vector<MorfPoint> pts) {
  std::vector<MorfPoint> out;
  for (const auto& p : pts) {
    if (!out.empty() && out.back().area == p.area) {
      if (p.budget >= out.back().budget) out.back() = p;
    } else {
      out.push_back(p);
    }
  }
  return out;
}

inline MorfCurve morf_curve(const Model& model, const InputGrid& x,
                            std::span<const std::size_t> ranking, const Fill& fill,
                            std::span<const double> budgets, ErosionSpec erosion,
                            Direction dir, std::optional<std::size_t> class_index = {}) {
  erosion.validate();
  check_budgets(budgets);
  check_shape(model, x);
  const Shape s = x.shape;
  const std::size_t P = s.pixels(), C = s.channels;
  check_ranking(ranking, P);
  const Grid fg = fill.materialize(x);

  MorfCurve curve;
  curve.direction = dir;
  curve.fill = fill.describe();
  curve.erosion_k = erosion.k;
  curve.class_index = class_index ? *class_index : most_probable_class(forward(model, x));
  const std::size_t c = curve.class_index;

  auto score = [&](const Grid& img, double budget, double area) {
    const auto z = logits_of(model, img.values);
    const auto lp = log_softmax(z);
    return MorfPoint{budget, area, std::exp(lp[c]), z[c]};
  };

  const Grid& start = dir == Direction::deletion ? x : fg;
  const Grid& source = dir == Direction::deletion ? fg : x;
  std::vector<MorfPoint> pts{score(start, 0.0, 0.0)};
  std::vector<bool> raw(P, false);
  std::size_t filled = 0;
  for (double b : budgets) {
    const std::size_t n = budget_count(b, P);
    for (; filled < n; ++filled) raw[ranking[filled]] = true;
    const auto g = grow_mask(raw, s.height, s.width, erosion.k);
    Grid img = start;
    std::size_t cnt = 0;
    for (std::size_t p = 0; p < P; ++p) {
      if (!g[p]) continue;
      ++cnt;
      for (std::size_t ch = 0; ch < C; ++ch) img[p * C + ch] = source[p * C + ch];
    }
    pts.push_back(score(img, double(n) / double(P), double(cnt) / double(P)));
  }
  curve.points = merge_duplicate_areas(std::move(pts));
  return curve;
}

inline MorfCurve morf_deletion(const Model& model, const InputGrid& x,
                               std::span<const std::size_t> ranking, const Fill& fill,
                               std::span<const double> budgets, ErosionSpec erosion = {}) {
  return morf_curve(model, x, ranking, fill, budgets, erosion, Direction::deletion);
}

inline MorfCurve morf_insertion(const Model& model, const InputGrid& x,
                                std::span<const std::size_t> ranking, const Fill& fill,
                                std::span<const double> budgets, ErosionSpec erosion = {}) {
  return morf_curve(model, x, ranking, fill, budgets, erosion, Direction::insertion);
}

// Trapezoid over the area axis divided by the area span; a curve with a
// single distinct area scores its (last) value.
inline double auc_of(std::span<const double> area, std::span<const double> score) {
  if (area.empty()) throw ConfigError("empty curve");
  const double span = area.back() - area.front();
  if (span <= 0.0) return score.back();
  return trapezoid(area, score) / span;
}

inline double auc(const MorfCurve& curve) {
  const auto a = curve.areas();
  const auto s = curve.scores();
  return auc_of(a, s);
}

// ---------------------------------------------------------------------------

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double mean_a = 0.0, mean_b = 0.0;
  double se_a = 0.0, se_b = 0.0;
  std::size_t n_a = 0, n_b = 0;
};

inline std::pair<double, double> mean_and_var(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? s / double(v.size() - 1) : 0.0};
}

// Two-sided Welch test of equal means.
inline TTestResult welch_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw ConfigError("welch t-test needs at least 2 values per population (insufficient data)");
  TTestResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  const auto [ma, va] = mean_and_var(a);
  const auto [mb, vb] = mean_and_var(b);
  r.mean_a = ma;
  r.mean_b = mb;
  const double qa = va / double(a.size()), qb = vb / double(b.size());
  r.se_a = std::sqrt(qa);
  r.se_b = std::sqrt(qb);
  const double se = std::sqrt(qa + qb);
  if (se == 0.0) {
    r.df = double(a.size() + b.size() - 2);
    r.t = ma == mb ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), ma - mb);
    r.p = ma == mb ? 1.0 : 0.0;
    return r;
  }
  r.t = (ma - mb) / se;
  r.df = (qa + qb) * (qa + qb) /
         (qa * qa / double(a.size() - 1) + qb * qb / double(b.size() - 1));
  const boost::math::students_t dist(r.df);
  r.p = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))), 0.0, 1.0);
  return r;
}

inline double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt(mean_and_var(v).second / double(v.size()));
}

// ---------------------------------------------------------------------------
// Study harness

struct MethodScores {
  std::string method;
  std::vector<double> insertion;
  std::vector<double> deletion;
};

struct StudyConfig {
  std::vector<std::string> methods{"VG", "VG2", "SG", "SG2", "IG", "IG2", "XIG", "XIG2"};
  std::vector<double> budgets = default_budgets();
  ErosionSpec erosion{};
  Fill fill = Fill::zero();
  RankConvention convention = RankConvention::negate_for_gradient_methods;
  EstimatorConfig estimator{};
  double ig_sigma = 1.0;
  std::size_t mask_rows = 4, mask_cols = 4;
  double mask_prob = 0.5;
  std::size_t workers = 1;  // across images; estimator runs single-threaded inside
};

// SG sigma follows the per-image (max - min) * 0.1 heuristic; a degenerate
// (constant) image falls back to 0.1.
inline MethodPreset study_preset(const std::string& name, const InputGrid& x, const StudyConfig& sc) {
  const Grid baseline(x.shape, 0.0);
  const std::string n = canonical_preset_name(name);
  double sigma = 0.0;
  if (n == "SG" || n == "SG2") {
    const auto h = sg_sigma_heuristic(x);
    sigma = h.degenerate ? 0.1 : h.sigma;
  } else if (n.starts_with("IG") || n.starts_with("XIG")) {
    sigma = sc.ig_sigma;
  }
  return make_preset(n, sigma, baseline, sc.mask_rows, sc.mask_cols, sc.mask_prob);
}

inline std::vector<MethodScores> run_study(const Model& model, std::span<const InputGrid> images,
                                           const StudyConfig& sc) {
  if (images.empty()) throw ConfigError("study needs at least one image");
  sc.erosion.validate();
  std::vector<MethodScores> out(sc.methods.size());
  for (std::size_t m = 0; m < sc.methods.size(); ++m) {
    out[m].method = canonical_preset_name(sc.methods[m]);
    out[m].insertion.assign(images.size(), 0.0);
    out[m].deletion.assign(images.size(), 0.0);
  }
  parallel_for(0, images.size(), sc.workers, [&](std::size_t i) {
    const auto& x = images[i];
    EstimatorConfig cfg = sc.estimator;
    cfg.workers = 1;
    cfg.seed = sc.estimator.seed + 1000003ULL * i;
    for (std::size_t m = 0; m < sc.methods.size(); ++m) {
      const auto map = estimate(model, x, study_preset(sc.methods[m], x, sc), cfg);
      const auto rank = ranking(map, sc.convention);
      out[m].insertion[i] = auc(morf_curve(model, x, rank, sc.fill, sc.budgets, sc.erosion,
                                           Direction::insertion, map.meta.class_index));
      out[m].deletion[i] = auc(morf_curve(model, x, rank, sc.fill, sc.budgets, sc.erosion,
                                          Direction::deletion, map.meta.class_index));
    }
  });
  return out;
}

struct TableRow {
  std::string method;
  std::string dataset;
  double insertion_mean = 0.0, insertion_se = 0.0;
  double deletion_mean = 0.0, deletion_se = 0.0;
  std::size_t n = 0;
  std::size_t erosion_k = 1;
};

inline TableRow summarize(const MethodScores& s, const std::string& dataset, std::size_t k) {
  return {s.method,
          dataset,
          mean_of(s.insertion),
          standard_error(s.insertion),
          mean_of(s.deletion),
          standard_error(s.deletion),
          s.insertion.size(),
          k};
}

// Pairs each gradient method with its squared counterpart (X vs X2).
struct PairedTest {
  std::string gradient_method;
  std::string squared_method;
  TTestResult insertion;
  TTestResult deletion;
};

inline std::vector<PairedTest> squared_vs_gradient_tests(std::span<const MethodScores> scores) {
  std::vector<PairedTest> out;
  for (const auto& g : scores) {
    for (const auto& q : scores) {
      if (q.method != g.method + "2") continue;
      out.push_back({g.method, q.method, welch_ttest(q.insertion, g.insertion),
                     welch_ttest(q.deletion, g.deletion)});
    }
  }
  return out;
}

}  // namespace speclens
