#pragma once

// Differentiable desk-scale classifiers: analytic sinusoid fields with known
// spectra, linear models and a tanh MLP with exact reverse-mode input
// gradients. All models are immutable after construction and safe to
// evaluate from many threads at once.

#include <bit>
#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "speclens/core.hpp"

namespace speclens {

struct ModelOutput {
  std::vector<double> log_probs;
  std::size_t num_classes() const { return log_probs.size(); }
};

// Quantity whose input-gradient is explained.
enum class Target { log_prob, logit, prob };

inline const char* to_string(Target t) {
  switch (t) {
    case Target::log_prob: return "log_prob";
    case Target::logit: return "logit";
    case Target::prob: return "prob";
  }
  return "?";
}

inline Target parse_target(const std::string& s) {
  if (s == "log_prob") return Target::log_prob;
  if (s == "logit") return Target::logit;
  if (s == "prob") return Target::prob;
  throw ConfigError("unknown explanation target '" + s + "'");
}

// Maps the logit vector to the output-space seed of a vector-Jacobian
// product.
using SeedFn =
    std::function<void(std::span<const double> logits, std::span<double> seed)>;

class Model {
 public:
  virtual ~Model() = default;
  virtual Shape input_shape() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual void logits(std::span<const double> x,
                      std::span<double> out) const = 0;
  // grad = (d logits / dx)^T * seed_fn(logits(x)).
  virtual void backward(std::span<const double> x, const SeedFn& seed_fn,
                        std::span<double> grad) const = 0;
};

inline std::vector<double> log_softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

inline void check_shape(const Model& model, const InputGrid& x) {
  if (x.shape != model.input_shape() || x.values.size() != x.shape.size()) {
    throw DimensionError("input shape " + to_string(x.shape) +
                         " does not match model input " +
                         to_string(model.input_shape()));
  }
}

inline std::vector<double> logits_of(const Model& model,
                                     std::span<const double> x) {
  std::vector<double> z(model.num_classes());
  model.logits(x, z);
  return z;
}

inline ModelOutput forward(const Model& model, const InputGrid& x) {
  check_shape(model, x);
  return ModelOutput{log_softmax(logits_of(model, x.values))};
}

// Scalar value of `target` for class c, evaluated on raw values (no shape
// check; hot path for samplers).
inline double target_value(const Model& model, std::span<const double> x,
                           std::size_t c, Target target) {
  const auto z = logits_of(model, x);
  if (target == Target::logit) return z[c];
  const auto lp = log_softmax(z);
  return target == Target::log_prob ? lp[c] : std::exp(lp[c]);
}

inline SeedFn seed_for(std::size_t c, Target target) {
  return [c, target](std::span<const double> z, std::span<double> seed) {
    std::fill(seed.begin(), seed.end(), 0.0);
    if (target == Target::logit) {
      seed[c] = 1.0;
      return;
    }
    const auto lp = log_softmax(z);
    if (target == Target::log_prob) {
      for (std::size_t k = 0; k < seed.size(); ++k) seed[k] = -std::exp(lp[k]);
      seed[c] += 1.0;
    } else {
      const double pc = std::exp(lp[c]);
      for (std::size_t k = 0; k < seed.size(); ++k)
        seed[k] = -pc * std::exp(lp[k]);
      seed[c] += pc;
    }
  };
}

// Raw gradient into a caller-owned buffer; throws NumericError naming the
// first non-finite entry.
inline void grad_into(const Model& model, std::span<const double> x,
                      std::size_t c, Target target, std::span<double> grad) {
  model.backward(x, seed_for(c, target), grad);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("non-finite gradient at input index " +
                         std::to_string(i));
    }
  }
}

inline Grid grad_input(const Model& model, const InputGrid& x,
                       std::size_t class_index,
                       Target target = Target::log_prob) {
  check_shape(model, x);
  if (class_index >= model.num_classes()) {
    throw DimensionError("class index " + std::to_string(class_index) +
                         " out of range for " +
                         std::to_string(model.num_classes()) + " classes");
  }
  Grid g(x.shape);
  grad_into(model, x.values, class_index, target, g.values);
  return g;
}

// Lowest index wins ties.
inline std::size_t most_probable_class(const ModelOutput& out) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < out.log_probs.size(); ++k) {
    if (out.log_probs[k] > out.log_probs[best]) best = k;
  }
  return best;
}

inline double predictive_entropy(const ModelOutput& out) {
  double h = 0.0;
  for (double lp : out.log_probs) {
    const double p = std::exp(lp);
    if (p > 0.0) h -= p * lp;
  }
  return std::clamp(h, 0.0, std::log(static_cast<double>(out.num_classes())));
}

inline double predictive_entropy(const Model& model, const InputGrid& x) {
  return predictive_entropy(forward(model, x));
}

// ---------------------------------------------------------------------------
// Spectra

struct PointMass {
  double omega = 0.0;
  double weight = 0.0;
};

// Two-sided power spectral density. A continuous part lives on a uniform
// non-negative grid (folded: density[i] covers both +omega and -omega
// halves equally); point masses are listed at signed frequencies.
struct SpectralProfile {
  std::vector<double> omega;
  std::vector<double> density;
  std::vector<PointMass> masses;
  std::string convention = "two-sided";

  double total_mass() const {
    double s = 0.0;
    for (const auto& m : masses) s += m.weight;
    for (std::size_t i = 1; i < omega.size(); ++i)
      s += 2.0 * 0.5 * (density[i] + density[i - 1]) * (omega[i] - omega[i - 1]);
    return s;
  }
};

// One component a*cos(2*pi*frequency*x + phase) of a pixel's response.
struct Tone {
  double amplitude = 1.0;
  double frequency = 1.0;
  double phase = 0.0;
};

struct SpectralLine {
  double omega = 0.0;
  std::complex<double> coef;
};

// Complex exponential expansion f(x) = sum_m coef_m exp(i 2 pi omega_m x).
// Lines at equal frequency are merged coherently.
inline std::vector<SpectralLine> spectral_lines(std::span<const Tone> tones) {
  std::map<double, std::complex<double>> acc;
  for (const auto& t : tones) {
    if (t.frequency == 0.0) {
      acc[0.0] += t.amplitude * std::cos(t.phase);
      continue;
    }
    const double w = std::abs(t.frequency);
    const double ph = t.frequency > 0 ? t.phase : -t.phase;
    acc[w] += 0.5 * t.amplitude * std::polar(1.0, ph);
    acc[-w] += 0.5 * t.amplitude * std::polar(1.0, -ph);
  }
  std::vector<SpectralLine> out;
  out.reserve(acc.size());
  for (const auto& [w, c] : acc) out.push_back({w, c});
  return out;
}

// Sum of per-pixel tone responses mixed linearly into class logits:
// logit_c = mixing[c] * g(x) + bias[c], with g(x) = sum_i sum_t
// a_t cos(2 pi w_t x_i + phi_t). Each pixel's contribution depends only on
// that pixel, so per-pixel spectra are exact.
class AnalyticField final : public Model {
 public:
  AnalyticField(Shape shape, std::vector<std::vector<Tone>> pixel_tones,
                std::size_t classes = 2, std::vector<double> mixing = {},
                std::vector<double> bias = {})
      : shape_(shape),
        tones_(std::move(pixel_tones)),
        classes_(classes),
        mixing_(std::move(mixing)),
        bias_(std::move(bias)) {
    if (classes_ < 2) throw ConfigError("analytic field needs >= 2 classes");
    if (tones_.size() != shape_.size()) {
      throw DimensionError("analytic field needs one tone list per value (" +
                           std::to_string(shape_.size()) + "), got " +
                           std::to_string(tones_.size()));
    }
    if (mixing_.empty()) {
      mixing_.assign(classes_, 0.0);
      mixing_[0] = 1.0;
    }
    if (bias_.empty()) bias_.assign(classes_, 0.0);
    if (mixing_.size() != classes_ || bias_.size() != classes_) {
      throw DimensionError("mixing/bias length must equal class count");
    }
  }

  // Same tone list at every pixel.
  static AnalyticField uniform(Shape shape, std::vector<Tone> tones,
                               std::size_t classes = 2) {
    return AnalyticField(shape,
                         std::vector<std::vector<Tone>>(shape.size(), tones),
                         classes);
  }

  Shape input_shape() const override { return shape_; }
  std::size_t num_classes() const override { return classes_; }
  const std::vector<Tone>& tones(std::size_t i) const { return tones_[i]; }
  const std::vector<double>& mixing() const { return mixing_; }

  // Per-pixel response a*cos(2 pi w v + phi) summed over that pixel's tones.
  double component(std::size_t i, double v) const {
    double s = 0.0;
    for (const auto& t : tones_[i])
      s += t.amplitude * std::cos(2.0 * kPi * t.frequency * v + t.phase);
    return s;
  }

  double component_derivative(std::size_t i, double v) const {
    double s = 0.0;
    for (const auto& t : tones_[i]) {
      s -= 2.0 * kPi * t.frequency * t.amplitude *
           std::sin(2.0 * kPi * t.frequency * v + t.phase);
    }
    return s;
  }

  double field_value(std::span<const double> x) const {
    double g = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) g += component(i, x[i]);
    return g;
  }

  void logits(std::span<const double> x,
              std::span<double> out) const override {
    const double g = field_value(x);
    for (std::size_t c = 0; c < classes_; ++c) out[c] = mixing_[c] * g + bias_[c];
  }

  void backward(std::span<const double> x, const SeedFn& seed_fn,
                std::span<double> grad) const override {
    std::vector<double> z(classes_), seed(classes_);
    logits(x, z);
    seed_fn(z, seed);
    double scale = 0.0;
    for (std::size_t c = 0; c < classes_; ++c) scale += seed[c] * mixing_[c];
    for (std::size_t i = 0; i < x.size(); ++i)
      grad[i] = scale * component_derivative(i, x[i]);
  }

 private:
  Shape shape_;
  std::vector<std::vector<Tone>> tones_;
  std::size_t classes_;
  std::vector<double> mixing_;
  std::vector<double> bias_;
};

// Two-sided PSD of one pixel's response: mass |coef|^2 at each signed line
// frequency, i.e. a^2/4 at +-w for a lone cosine of amplitude a.
inline SpectralProfile analytic_psd(const AnalyticField& field,
                                    std::size_t value_index,
                                    std::vector<double> omega_grid = {}) {
  SpectralProfile p;
  p.omega = std::move(omega_grid);
  p.density.assign(p.omega.size(), 0.0);
  for (const auto& line : spectral_lines(field.tones(value_index)))
    p.masses.push_back({line.omega, std::norm(line.coef)});
  return p;
}

// ---------------------------------------------------------------------------

// Per-class affine scores: logit_c = <w_c, x> + b_c.
class LinearModel final : public Model {
 public:
  LinearModel(std::vector<Grid> weights, std::vector<double> bias)
      : weights_(std::move(weights)), bias_(std::move(bias)) {
    if (weights_.size() < 2 || weights_.size() != bias_.size())
      throw ConfigError("linear model needs >= 2 classes and matching bias");
    for (const auto& w : weights_) {
      if (w.shape != weights_[0].shape)
        throw DimensionError("linear model weight shapes differ");
    }
  }

  // Class 0 scores <w,x> + b, class 1 is the zero reference.
  static LinearModel binary(Grid w, double bias) {
    Grid zero(w.shape);
    return LinearModel({std::move(w), std::move(zero)}, {bias, 0.0});
  }

  Shape input_shape() const override { return weights_[0].shape; }
  std::size_t num_classes() const override { return weights_.size(); }
  const Grid& weight(std::size_t c) const { return weights_[c]; }
  double bias(std::size_t c) const { return bias_[c]; }

  void logits(std::span<const double> x,
              std::span<double> out) const override {
    for (std::size_t c = 0; c < weights_.size(); ++c) {
      double s = bias_[c];
      const auto& w = weights_[c].values;
      for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
      out[c] = s;
    }
  }

  void backward(std::span<const double> x, const SeedFn& seed_fn,
                std::span<double> grad) const override {
    std::vector<double> z(num_classes()), seed(num_classes());
    logits(x, z);
    seed_fn(z, seed);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t c = 0; c < weights_.size(); ++c) {
      if (seed[c] == 0.0) continue;
      const auto& w = weights_[c].values;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += seed[c] * w[i];
    }
  }

 private:
  std::vector<Grid> weights_;
  std::vector<double> bias_;
};

// ---------------------------------------------------------------------------
// Tiny MLP

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;
};

struct Dataset {
  std::vector<InputGrid> images;
  std::vector<std::size_t> labels;
  std::size_t size() const { return images.size(); }
};

struct TrainHyper {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

struct TrainReport {
  double train_accuracy = 0.0;
  double final_loss = 0.0;
  std::size_t epochs_run = 0;
  bool diverged = false;
};

// Fully connected network with tanh hidden activations and linear logits.
class TinyMlp final : public Model {
 public:
  static constexpr const char* kActivation = "tanh";

  TinyMlp(Shape input, std::vector<std::size_t> hidden, std::size_t classes,
          std::uint64_t seed)
      : input_(input), seed_(seed) {
    std::vector<std::size_t> widths{input.size()};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(classes);
    init(widths);
  }

  TinyMlp(Shape input, std::vector<DenseLayer> layers, std::uint64_t seed)
      : input_(input), layers_(std::move(layers)), seed_(seed) {
    validate();
  }

  Shape input_shape() const override { return input_; }
  std::size_t num_classes() const override { return layers_.back().out; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{layers_.front().in};
    for (const auto& l : layers_) w.push_back(l.out);
    return w;
  }

  void logits(std::span<const double> x,
              std::span<double> out) const override {
    std::vector<std::vector<double>> acts;
    run(x, acts);
    std::copy(acts.back().begin(), acts.back().end(), out.begin());
  }

  void backward(std::span<const double> x, const SeedFn& seed_fn,
                std::span<double> grad) const override {
    std::vector<std::vector<double>> acts;
    run(x, acts);
    std::vector<double> delta(num_classes());
    seed_fn(acts.back(), delta);
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& L = layers_[l];
      std::vector<double> prev(L.in, 0.0);
      for (std::size_t o = 0; o < L.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = &L.weight[o * L.in];
        for (std::size_t i = 0; i < L.in; ++i) prev[i] += row[i] * d;
      }
      if (l > 0) {
        const auto& a = acts[l];  // output of layer l-1 after tanh
        for (std::size_t i = 0; i < L.in; ++i) prev[i] *= 1.0 - a[i] * a[i];
      }
      delta = std::move(prev);
    }
    std::copy(delta.begin(), delta.end(), grad.begin());
  }

  // acts[0] = x, acts[l+1] = output of layer l (tanh applied except last).
  void run(std::span<const double> x,
           std::vector<std::vector<double>>& acts) const {
    acts.resize(layers_.size() + 1);
    acts[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      auto& y = acts[l + 1];
      y.assign(L.out, 0.0);
      const auto& a = acts[l];
      for (std::size_t o = 0; o < L.out; ++o) {
        double s = L.bias[o];
        const double* row = &L.weight[o * L.in];
        for (std::size_t i = 0; i < L.in; ++i) s += row[i] * a[i];
        y[o] = (l + 1 < layers_.size()) ? std::tanh(s) : s;
      }
    }
  }

 private:
  void init(const std::vector<std::size_t>& widths) {
    layers_.clear();
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      DenseLayer L;
      L.in = widths[l];
      L.out = widths[l + 1];
      L.weight.resize(L.in * L.out);
      L.bias.assign(L.out, 0.0);
      RandomStream rng(seed_, l);
      const double limit = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
      for (auto& w : L.weight) w = (2.0 * rng.uniform() - 1.0) * limit;
      layers_.push_back(std::move(L));
    }
    validate();
  }

  void validate() const {
    if (layers_.empty()) throw ConfigError("MLP needs at least one layer");
    if (layers_.front().in != input_.size())
      throw DimensionError("MLP input width does not match input shape");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      if (L.weight.size() != L.in * L.out || L.bias.size() != L.out)
        throw DimensionError("MLP layer " + std::to_string(l) +
                             " has inconsistent parameter sizes");
      if (l > 0 && L.in != layers_[l - 1].out)
        throw DimensionError("MLP layer widths do not chain");
    }
    if (layers_.back().out < 2) throw ConfigError("MLP needs >= 2 classes");
  }

  Shape input_;
  std::vector<DenseLayer> layers_;
  std::uint64_t seed_ = 0;
};

// Mini-batch SGD with momentum on mean cross-entropy. Single-threaded and
// deterministic given hyper.seed.
inline TrainReport train_tiny(TinyMlp& model, const Dataset& data,
                              const TrainHyper& hyper) {
  TrainReport report;
  if (data.images.size() != data.labels.size())
    throw DimensionError("dataset images/labels length mismatch");
  auto& layers = model.mutable_layers();
  std::vector<std::vector<double>> vel_w(layers.size()), vel_b(layers.size());
  std::vector<std::vector<double>> gw(layers.size()), gb(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    vel_w[l].assign(layers[l].weight.size(), 0.0);
    vel_b[l].assign(layers[l].bias.size(), 0.0);
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<double>> acts;

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    RandomStream rng(hyper.seed, 1000 + epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += hyper.batch_size) {
      const std::size_t stop = std::min(order.size(), start + hyper.batch_size);
      for (std::size_t l = 0; l < layers.size(); ++l) {
        gw[l].assign(layers[l].weight.size(), 0.0);
        gb[l].assign(layers[l].bias.size(), 0.0);
      }
      for (std::size_t b = start; b < stop; ++b) {
        const auto& x = data.images[order[b]];
        const std::size_t y = data.labels[order[b]];
        model.run(x.values, acts);
        const auto lp = log_softmax(acts.back());
        epoch_loss -= lp[y];
        std::vector<double> delta(lp.size());
        for (std::size_t k = 0; k < lp.size(); ++k) delta[k] = std::exp(lp[k]);
        delta[y] -= 1.0;
        for (std::size_t l = layers.size(); l-- > 0;) {
          const auto& L = layers[l];
          const auto& a = acts[l];
          std::vector<double> prev(L.in, 0.0);
          for (std::size_t o = 0; o < L.out; ++o) {
            const double d = delta[o];
            gb[l][o] += d;
            double* grow = &gw[l][o * L.in];
            const double* row = &L.weight[o * L.in];
            for (std::size_t i = 0; i < L.in; ++i) {
              grow[i] += d * a[i];
              prev[i] += row[i] * d;
            }
          }
          if (l > 0)
            for (std::size_t i = 0; i < L.in; ++i) prev[i] *= 1.0 - a[i] * a[i];
          delta = std::move(prev);
        }
      }
      const double scale = hyper.learning_rate / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& L = layers[l];
        for (std::size_t j = 0; j < L.weight.size(); ++j) {
          vel_w[l][j] = hyper.momentum * vel_w[l][j] - scale * gw[l][j];
          L.weight[j] += vel_w[l][j];
        }
        for (std::size_t j = 0; j < L.bias.size(); ++j) {
          vel_b[l][j] = hyper.momentum * vel_b[l][j] - scale * gb[l][j];
          L.bias[j] += vel_b[l][j];
        }
      }
    }
    report.epochs_run = epoch + 1;
    report.final_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(1, data.size()));
    bool params_ok = true;
    for (const auto& L : layers)
      params_ok = params_ok && all_finite(L.weight) && all_finite(L.bias);
    if (!std::isfinite(report.final_loss) || !params_ok) {
      report.diverged = true;
      break;
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (most_probable_class(forward(model, data.images[i])) == data.labels[i])
      ++correct;
  }
  report.train_accuracy =
      data.size() ? static_cast<double>(correct) / static_cast<double>(data.size())
                  : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: a text header terminated by a "data" line, then
// little-endian float32 parameters, layer by layer (weight row-major, then
// bias).

namespace detail {

inline void put_f32(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  const char b[4] = {static_cast<char>(bits & 0xff),
                     static_cast<char>((bits >> 8) & 0xff),
                     static_cast<char>((bits >> 16) & 0xff),
                     static_cast<char>((bits >> 24) & 0xff)};
  os.write(b, 4);
}

inline double get_f32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ConfigError("truncated float32 payload");
  const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                             (std::uint32_t(b[2]) << 16) |
                             (std::uint32_t(b[3]) << 24);
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace detail

inline void save_checkpoint(const TinyMlp& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write checkpoint " + path);
  const Shape s = model.input_shape();
  os << "speclens-mlp 1\n";
  os << "input " << s.height << ' ' << s.width << ' ' << s.channels << '\n';
  os << "widths";
  for (auto w : model.widths()) os << ' ' << w;
  os << "\nactivation " << TinyMlp::kActivation << "\nseed " << model.seed()
     << "\ndata\n";
  for (const auto& L : model.layers()) {
    for (double w : L.weight) detail::put_f32(os, w);
    for (double b : L.bias) detail::put_f32(os, b);
  }
  if (!os) throw ConfigError("failed writing checkpoint " + path);
}

inline TinyMlp load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(is, line) || line != "speclens-mlp 1")
    throw ConfigError("not a speclens MLP checkpoint: " + path);
  Shape input;
  std::vector<std::size_t> widths;
  std::string activation;
  std::uint64_t seed = 0;
  bool have_data = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "input") {
      ls >> input.height >> input.width >> input.channels;
    } else if (key == "widths") {
      std::size_t w;
      while (ls >> w) widths.push_back(w);
    } else if (key == "activation") {
      ls >> activation;
    } else if (key == "seed") {
      ls >> seed;
    } else if (key == "data") {
      have_data = true;
      break;
    } else {
      throw ConfigError("unknown checkpoint header key '" + key + "'");
    }
  }
  if (!have_data || widths.size() < 2)
    throw ConfigError("checkpoint header incomplete: " + path);
  if (activation != TinyMlp::kActivation)
    throw ConfigError("unsupported activation '" + activation + "'");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer L;
    L.in = widths[l];
    L.out = widths[l + 1];
    L.weight.resize(L.in * L.out);
    L.bias.resize(L.out);
    for (auto& w : L.weight) w = detail::get_f32(is);
    for (auto& b : L.bias) b = detail::get_f32(is);
    layers.push_back(std::move(L));
  }
  return TinyMlp(input, std::move(layers), seed);
}

}  // namespace speclens
