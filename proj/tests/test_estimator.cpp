#include <gtest/gtest.h>

#include <cmath>

#include "speclens/estimator.hpp"
#include "speclens/spectral.hpp"

using namespace speclens;

namespace {

Grid random_grid(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  RandomStream rng(seed, 5);
  Grid g(s);
  for (auto& v : g.values) v = lo + (hi - lo) * rng.uniform();
  return g;
}

EstimatorConfig fixed_count(std::size_t n, std::uint64_t seed = 0) {
  EstimatorConfig c;
  c.min_samples = c.max_samples = n;
  c.tolerance = 1e-300;
  c.seed = seed;
  return c;
}

// Scalar oracle for the comb kernel: f evaluated with whole cells swapped
// to the baseline according to `cells`.
double f_with_cells(const Model& m, const Grid& x, const MaskSpec& mask, const std::vector<double>& cells,
                    std::size_t c, Target t) {
  Grid xt = x;
  for (std::size_t h = 0; h < x.shape.height; ++h)
    for (std::size_t w = 0; w < x.shape.width; ++w) {
      const double a = cells[mask_cell(mask, x.shape, h, w)];
      const std::size_t i = h * x.shape.width + w;
      xt[i] = (1 - a) * x[i] + a * mask.baseline[i];
    }
  return target_value(m, xt.values, c, t);
}

// Gradient is NaN wherever the first input exceeds 0.9.
class PoisonModel final : public Model {
 public:
  Shape input_shape() const override { return {2, 2, 1}; }
  std::size_t num_classes() const override { return 2; }
  void logits(std::span<const double> x, std::span<double> out) const override {
    out[0] = x[0];
    out[1] = 0.0;
  }
  void backward(std::span<const double> x, const SeedFn& seed_fn, std::span<double> grad) const override {
    std::vector<double> z{x[0], 0.0}, s(2);
    seed_fn(z, s);
    std::fill(grad.begin(), grad.end(), 0.0);
    grad[0] = x[0] > 0.9 ? std::numeric_limits<double>::quiet_NaN() : s[0];
  }
};

}  // namespace

TEST(Presets, TriplesMatchCatalog) {
  const Grid b(Shape{4, 4, 1});
  struct Row {
    const char* name;
    const char* kernel;
    ExplainerKind e;
    CombinationRule r;
  };
  using E = ExplainerKind;
  using R = CombinationRule;
  const Row rows[] = {{"VG", "dirac", E::gradient, R::additive},
                      {"VG2", "dirac", E::squared_gradient, R::additive},
                      {"SG", "gaussian", E::gradient, R::additive},
                      {"SG²", "gaussian", E::squared_gradient, R::additive},
                      {"IG", "rect", E::gradient, R::damping},
                      {"IG^2", "rect", E::squared_gradient, R::damping},
                      {"XIG", "rect", E::baseline_scaled_gradient, R::damping},
                      {"xig2", "rect", E::baseline_scaled_gradient_squared, R::damping},
                      {"RISE", "dirac_comb", E::prediction, R::convex},
                      {"OS", "dirac_comb", E::prediction, R::convex}};
  for (const auto& row : rows) {
    const auto p = make_preset(row.name, 0.3, b);
    EXPECT_EQ(kernel_name(p.kernel), row.kernel) << row.name;
    EXPECT_EQ(p.explainer, row.e) << row.name;
    EXPECT_EQ(p.rule, row.r) << row.name;
  }
  EXPECT_EQ(make_preset("SG²", 0.3, b).name, "SG2");
  EXPECT_THROW(make_preset("GradCAM", 0.1, b), ConfigError);
}

TEST(Config, Validation) {
  EstimatorConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tolerance = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.min_samples = 100;
  c.max_samples = 50;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Estimate, VanillaGradientOnLinearIsWeight) {
  const auto w = random_grid(Shape{4, 4, 1}, 1, -1, 1);
  const auto m = LinearModel::binary(w, 0.0);
  EstimatorConfig cfg;
  cfg.target = Target::logit;
  cfg.class_index = 0;
  const auto map = estimate(m, random_grid(w.shape, 2), make_preset("VG", 0, Grid(w.shape)), cfg);
  EXPECT_EQ(map.values.values, w.values);
  EXPECT_EQ(map.meta.samples, 1u);
  EXPECT_TRUE(map.meta.converged);
}

TEST(Estimate, SmoothGradOnLinearIsWeightForEverySigma) {
  const auto w = random_grid(Shape{4, 4, 1}, 3, -1, 1);
  const auto m = LinearModel::binary(w, 0.2);
  EstimatorConfig cfg;
  cfg.target = Target::logit;
  cfg.class_index = 0;
  for (double sg : {0.01, 0.1, 0.5, 2.0}) {
    const auto map = estimate(m, random_grid(w.shape, 4), make_preset("SG", sg, Grid(w.shape)), cfg);
    EXPECT_EQ(map.values.values, w.values) << sg;
    EXPECT_TRUE(map.meta.converged);
    EXPECT_EQ(map.meta.samples, cfg.min_samples);
    for (double v : map.variance.values) EXPECT_EQ(v, 0.0);
  }
}

TEST(Estimate, SquaredSmoothGradClosedForm) {
  const double w0 = 1.5;
  const Shape s{1, 4, 1};
  const auto f = AnalyticField::uniform(s, {Tone{1.0, w0, 0.0}});
  const Grid x(s, std::vector<double>{0.05, 0.2, 0.45, 0.7});
  const std::size_t n = 100000;
  EstimatorConfig cfg = fixed_count(n, 9);
  cfg.target = Target::logit;
  cfg.class_index = 0;
  for (double sg : {0.05, 0.1, 0.3}) {
    const auto map = estimate(f, x, make_preset("SG2", sg, Grid(s)), cfg);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double expect = 2 * kPi * kPi * w0 * w0 *
                            (1 - std::cos(4 * kPi * w0 * x[i]) * std::exp(-8 * kPi * kPi * sg * sg * w0 * w0));
      const double se = std::sqrt(map.variance[i] / double(n));
      EXPECT_NEAR(map.values[i], expect, 5 * se + 1e-12) << "sigma=" << sg << " pixel " << i;
    }
  }
}

TEST(Estimate, XigIsBaselineScaledIg) {
  const Shape s{3, 3, 1};
  const TinyMlp m(s, {6}, 2, 3);
  const auto x = random_grid(s, 6);
  const auto b = random_grid(s, 7, 0, 0.2);
  const EstimatorConfig cfg = fixed_count(96, 1);
  const auto ig = estimate(m, x, make_preset("IG", 1.0, b), cfg);
  const auto xig = estimate(m, x, make_preset("XIG", 1.0, b), cfg);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(xig.values[i], (x[i] - b[i]) * ig.values[i]);
}

TEST(Estimate, SquaredMapsNonNegative) {
  const Shape s{4, 4, 1};
  const TinyMlp m(s, {8}, 2, 11);
  const auto x = random_grid(s, 12);
  for (const char* name : {"VG2", "SG2", "IG2", "XIG2"}) {
    const auto map = estimate(m, x, make_preset(name, 0.3, Grid(s, 0.5)), EstimatorConfig{});
    for (double v : map.values.values) EXPECT_GE(v, 0.0) << name;
    EXPECT_FALSE(map.meta.signed_values);
  }
}

TEST(Estimate, KeepChannelsSumsToDefault) {
  const Shape s{3, 3, 3};
  const TinyMlp m(s, {6}, 2, 2);
  const auto x = random_grid(s, 1);
  EstimatorConfig cfg = fixed_count(64);
  const auto summed = estimate(m, x, make_preset("SG", 0.1, Grid(s)), cfg);
  cfg.keep_channels = true;
  const auto kept = estimate(m, x, make_preset("SG", 0.1, Grid(s)), cfg);
  EXPECT_EQ(kept.values.shape, s);
  EXPECT_EQ(summed.values.shape, (Shape{3, 3, 1}));
  EXPECT_EQ(channel_sum(kept.values).values, summed.values.values);
}

TEST(Estimate, DefaultClassIsMostProbable) {
  const Shape s{3, 3, 1};
  const TinyMlp m(s, {6}, 4, 8);
  const auto x = random_grid(s, 2);
  const auto map = estimate(m, x, make_preset("VG", 0, Grid(s)), EstimatorConfig{});
  EXPECT_EQ(map.meta.class_index, most_probable_class(forward(m, x)));
}

TEST(Estimate, BitIdenticalAcrossWorkerCounts) {
  const Shape s{5, 5, 1};
  const TinyMlp m(s, {10}, 2, 4);
  const auto x = random_grid(s, 3);
  for (const char* name : {"SG2", "IG", "RISE"}) {
    EstimatorConfig cfg;
    cfg.seed = 77;
    cfg.workers = 1;
    const auto ref = estimate(m, x, make_preset(name, 0.2, Grid(s)), cfg);
    for (std::size_t w : {2u, 3u, 8u}) {
      cfg.workers = w;
      const auto got = estimate(m, x, make_preset(name, 0.2, Grid(s)), cfg);
      EXPECT_EQ(got.values.values, ref.values.values) << name << " workers=" << w;
      EXPECT_EQ(got.variance.values, ref.variance.values);
      EXPECT_EQ(got.meta.samples, ref.meta.samples);
    }
  }
}

TEST(Estimate, NonConvergenceFlagged) {
  const Shape s{4, 4, 1};
  const TinyMlp m(s, {8}, 2, 5);
  EstimatorConfig cfg;
  cfg.tolerance = 1e-12;
  cfg.max_samples = 128;
  const auto map = estimate(m, random_grid(s, 1), make_preset("SG", 0.3, Grid(s)), cfg);
  EXPECT_FALSE(map.meta.converged);
  EXPECT_EQ(map.meta.samples, 128u);
  EXPECT_GT(map.meta.final_change, cfg.tolerance);
}

TEST(Estimate, SampleCountNeverExceedsMax) {
  const Shape s{4, 4, 1};
  const TinyMlp m(s, {8}, 2, 5);
  EstimatorConfig cfg;
  cfg.max_samples = 100;  // not a multiple of the check interval
  cfg.min_samples = 10;
  cfg.tolerance = 1e-9;
  const auto map = estimate(m, random_grid(s, 1), make_preset("SG2", 0.3, Grid(s)), cfg);
  EXPECT_EQ(map.meta.samples, 100u);
}

TEST(Estimate, NonFiniteAbortsWithSampleIndex) {
  const PoisonModel m;
  const Grid x(Shape{2, 2, 1}, 0.5);
  EstimatorConfig cfg;
  cfg.target = Target::logit;
  cfg.class_index = 0;
  try {
    estimate(m, x, make_preset("SG", 0.5, Grid(x.shape)), cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("sample "), std::string::npos) << e.what();
  }
}

// Mean final change over a seed family: doubling the budget must not
// increase it.
TEST(Estimate, StoppingStatisticShrinksWithBudget) {
  const Shape s{4, 4, 1};
  const TinyMlp m(s, {8}, 2, 5);
  const auto x = random_grid(s, 2);
  double at_n = 0.0, at_2n = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EstimatorConfig cfg = fixed_count(256, seed);
    at_n += estimate(m, x, make_preset("SG2", 0.3, Grid(s)), cfg).meta.final_change;
    cfg = fixed_count(512, seed);
    at_2n += estimate(m, x, make_preset("SG2", 0.3, Grid(s)), cfg).meta.final_change;
  }
  EXPECT_LE(at_2n, at_n);
}

TEST(Estimate, AverageSampleCountRecorded) {
  const Shape s{8, 8, 1};
  const TinyMlp m(s, {16}, 2, 3);
  double total = 0.0;
  std::size_t runs = 0;
  for (std::uint64_t i = 0; i < 5; ++i)
    for (const char* name : {"SG", "SG2", "IG", "XIG2"}) {
      EstimatorConfig cfg;
      cfg.seed = i;
      const auto map = estimate(m, random_grid(s, 100 + i), make_preset(name, 0.2, Grid(s)), cfg);
      EXPECT_LE(map.meta.samples, cfg.max_samples);
      total += double(map.meta.samples);
      ++runs;
    }
  RecordProperty("average_samples", std::to_string(total / double(runs)));
  std::printf("average sample count at 5e-3: %.1f\n", total / double(runs));
}

// SG^2 preset vs the lens built from the same seed and rule with a Dirac
// prior on that sigma.
TEST(Estimate, SpectralLensDiracReduction) {
  const Shape s{4, 4, 1};
  const TinyMlp m(s, {8}, 2, 6);
  const auto x = random_grid(s, 3);
  EstimatorConfig cfg;
  cfg.seed = 4;
  const SigmaGrid grid{{0.1, 0.2, 0.4}, 0.5};
  const auto lens = spectral_lens(m, x, Prior::dirac(0.2), grid, cfg, CombinationRule::additive);
  const auto sg2 = estimate(m, x, make_preset("SG2", 0.2 * 0.5, Grid(s)), cfg);
  EXPECT_EQ(lens.sl2.values, sg2.values.values);
}

TEST(Prediction, AllOnesMaskWithBaselineAtInput) {
  const Shape s{4, 4, 1};
  const TinyMlp m(s, {8}, 2, 2);
  const auto x = random_grid(s, 1);
  const auto mask = MaskSpec::bernoulli(2, 2, 1.0, x);
  const auto map = prediction_explain(m, x, mask, fixed_count(64));
  const double f = target_value(m, x.values, map.meta.class_index, Target::log_prob);
  for (double v : map.values.values) EXPECT_DOUBLE_EQ(v, f);
}

TEST(Prediction, AllOnesMaskReplacesByBaseline) {
  const Shape s{4, 4, 1};
  const TinyMlp m(s, {8}, 2, 2);
  const auto x = random_grid(s, 1);
  const Grid base(s, 0.25);
  const auto map = prediction_explain(m, x, MaskSpec::bernoulli(2, 2, 1.0, base), fixed_count(64));
  const double f = target_value(m, base.values, map.meta.class_index, Target::log_prob);
  for (double v : map.values.values) EXPECT_DOUBLE_EQ(v, f);
}

TEST(Prediction, OcclusionEpochIsExhaustive) {
  const Shape s{4, 4, 1};
  const TinyMlp m(s, {8}, 2, 2);
  const auto x = random_grid(s, 1);
  const auto mask = MaskSpec::occlusion(2, 2, Grid(s));
  EstimatorConfig cfg = fixed_count(4);
  cfg.check_interval = 4;
  const auto map = prediction_explain(m, x, mask, cfg);
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<double> cells(4, 0.0);
    cells[j] = 1.0;
    const double expect = f_with_cells(m, x, mask, cells, map.meta.class_index, Target::log_prob) / 4.0;
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 4; ++w)
        if (mask_cell(mask, s, h, w) == j) {
          EXPECT_NEAR(map.values.at(h, w), expect, 1e-15);
        }
  }
}

TEST(Prediction, ZeroProbabilityCellsUnattributed) {
  const Shape s{4, 4, 1};
  const TinyMlp m(s, {8}, 2, 2);
  const MaskSpec mask{2, 2, {0.0, 0.5, 0.5, 0.0}, false, Grid(s)};
  const auto map = prediction_explain(m, random_grid(s, 1), mask, fixed_count(64));
  EXPECT_EQ(map.meta.unattributed_cells, (std::vector<std::size_t>{0, 3}));
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t w = 0; w < 4; ++w) {
      const auto c = mask_cell(mask, s, h, w);
      if (c == 0 || c == 3) {
        EXPECT_EQ(map.values.at(h, w), 0.0);
      }
    }
}

// E[alpha f] - M f(x) = E[alpha (x~ - x) Df] on the same draws.
TEST(Prediction, FiniteDifferenceIdentity) {
  const Shape s{4, 4, 1};
  const TinyMlp mlp(s, {8}, 2, 12);
  const auto lin = LinearModel::binary(random_grid(s, 9, -1, 1), 0.1);
  const auto x = random_grid(s, 3);
  const std::vector<MaskSpec> masks{MaskSpec::bernoulli(1, 1, 0.5, Grid(s)),
                                    MaskSpec::bernoulli(2, 2, 0.3, random_grid(s, 4)),
                                    MaskSpec::occlusion(2, 2, Grid(s, 0.5))};
  const std::size_t n = 200;
  for (const Model* m : {static_cast<const Model*>(&mlp), static_cast<const Model*>(&lin)})
    for (const auto& mask : masks) {
      EstimatorConfig cfg = fixed_count(n, 21);
      const MethodPreset pred{"RISE", DiracCombKernel{mask}, ExplainerKind::prediction,
                              CombinationRule::convex, 0.0};
      const MethodPreset fd{"FD", DiracCombKernel{mask}, ExplainerKind::finite_difference,
                            CombinationRule::convex, 0.0};
      const auto a = estimate(*m, x, pred, cfg);
      const auto b = estimate(*m, x, fd, cfg);
      std::vector<double> M(mask.cells(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto cells = sample_mask(mask, SampleKey{cfg.seed, i});
        for (std::size_t j = 0; j < M.size(); ++j) M[j] += cells[j] / double(n);
      }
      const double f0 = target_value(*m, x.values, a.meta.class_index, Target::log_prob);
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 4; ++w) {
          const double lhs = a.values.at(h, w) - M[mask_cell(mask, s, h, w)] * f0;
          EXPECT_NEAR(lhs, b.values.at(h, w), 1e-10);
        }
    }
}

TEST(Ranking, Conventions) {
  AttributionMap m;
  m.values = Grid(Shape{1, 4, 1}, std::vector<double>{0.5, -2.0, 3.0, 0.0});
  m.meta.signed_values = false;
  EXPECT_EQ(ranking(m), (std::vector<std::size_t>{2, 0, 3, 1}));
  m.meta.signed_values = true;
  EXPECT_EQ(ranking(m), (std::vector<std::size_t>{1, 3, 0, 2}));
  EXPECT_EQ(ranking(m, RankConvention::raw), (std::vector<std::size_t>{2, 0, 3, 1}));
  EXPECT_EQ(ranking(m, RankConvention::absolute), (std::vector<std::size_t>{2, 1, 0, 3}));
  m.values = Grid(Shape{2, 3, 1}, 1.5);
  EXPECT_EQ(ranking(m), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_THROW(parse_rank_convention("sideways"), ConfigError);
}

TEST(Heuristic, SigmaFromRange) {
  Grid full(Shape{1, 3, 1}, std::vector<double>{0.0, 0.4, 1.0});
  EXPECT_DOUBLE_EQ(sg_sigma_heuristic(full).sigma, 0.1);
  EXPECT_FALSE(sg_sigma_heuristic(full).degenerate);
  const auto flat = sg_sigma_heuristic(Grid(Shape{2, 2, 1}, 0.3));
  EXPECT_EQ(flat.sigma, 0.0);
  EXPECT_TRUE(flat.degenerate);
  Grid mid(Shape{1, 2, 1}, std::vector<double>{0.2, 0.7});
  EXPECT_NEAR(sg_sigma_heuristic(mid).sigma, 0.05, 1e-15);
}
