#pragma once

// Shared building blocks: grid shapes, error types, counter-based random
// streams, a deterministic parallel loop and streaming moments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace speclens {

inline constexpr double kPi = std::numbers::pi;

class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t pixels() const { return height * width; }
  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
         std::to_string(s.channels);
}

// Row-major grid, channels interleaved (h, w, c). Used both for model inputs
// and for per-pixel attribution values.
struct Grid {
  Shape shape;
  std::vector<double> values;

  Grid() = default;
  explicit Grid(Shape s, double fill = 0.0)
      : shape(s), values(s.size(), fill) {}
  Grid(Shape s, std::vector<double> v) : shape(s), values(std::move(v)) {
    if (values.size() != shape.size()) {
      throw DimensionError("grid of shape " + to_string(shape) + " given " +
                           std::to_string(values.size()) + " values");
    }
  }

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& at(std::size_t h, std::size_t w, std::size_t c = 0) {
    return values[(h * shape.width + w) * shape.channels + c];
  }
  double at(std::size_t h, std::size_t w, std::size_t c = 0) const {
    return values[(h * shape.width + w) * shape.channels + c];
  }
  std::span<const double> span() const { return values; }
  std::span<double> span() { return values; }
};

using InputGrid = Grid;

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

// Validates a freshly ingested image: finite and inside [0,1]. Perturbed
// copies are never passed through this.
inline void validate_input(const InputGrid& x) {
  if (x.values.size() != x.shape.size() || x.shape.size() == 0) {
    throw DimensionError("input grid has inconsistent shape " +
                         to_string(x.shape));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw NumericError("input value at index " + std::to_string(i) +
                         " is outside [0,1]: " + std::to_string(v));
    }
  }
}

// Sums channels into a single-channel grid.
inline Grid channel_sum(const Grid& g) {
  if (g.shape.channels == 1) return g;
  Grid out(Shape{g.shape.height, g.shape.width, 1});
  const std::size_t c = g.shape.channels;
  for (std::size_t p = 0; p < g.shape.pixels(); ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += g.values[p * c + k];
    out.values[p] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random streams

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based stream keyed by (seed, stream id). Two streams with
// different keys are statistically independent; a stream's output depends
// only on its key and how many values were drawn, never on which thread
// draws it.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream_id)
      : key_(splitmix64(seed ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // Uniform on [0,1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1].
  double uniform_open0() { return 1.0 - uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open0();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  // Stream derived from this one's key; used to split per-sample streams.
  RandomStream split(std::uint64_t id) const { return RandomStream(key_, id); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Parallel loop

inline std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [begin, end) on up to `workers` threads with static
// contiguous partitioning. fn must only write to slots owned by index i.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, std::size_t workers,
                  Fn&& fn) {
  if (end <= begin) return;
  const std::size_t n = end - begin;
  const std::size_t w = std::min(resolve_workers(workers), n);
  if (w <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  {
    std::vector<std::jthread> threads;
    threads.reserve(w);
    for (std::size_t t = 0; t < w; ++t) {
      const std::size_t lo = begin + n * t / w;
      const std::size_t hi = begin + n * (t + 1) / w;
      threads.emplace_back([&, lo, hi, t] {
        try {
          for (std::size_t i = lo; i < hi; ++i) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Streaming moments

// Elementwise Welford accumulator. Folding order is the caller's
// responsibility; the estimator always folds in sample-index order.
class WelfordGrid {
 public:
  explicit WelfordGrid(std::size_t n) : mean_(n, 0.0), m2_(n, 0.0) {}

  void add(std::span<const double> v) {
    ++count_;
    const double inv = 1.0 / static_cast<double>(count_);
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double d = v[i] - mean_[i];
      mean_[i] += d * inv;
      m2_[i] += d * (v[i] - mean_[i]);
    }
  }

  std::size_t count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }

  // Unbiased sample variance of the samples (not of the mean).
  std::vector<double> variance() const {
    std::vector<double> v(m2_.size(), 0.0);
    if (count_ < 2) return v;
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = m2_[i] / static_cast<double>(count_ - 1);
    return v;
  }

 private:
  std::vector<double> mean_;
  std::vector<double> m2_;
  std::size_t count_ = 0;
};

// Pairwise summation; result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.subspan(0, h)) + pairwise_sum(v.subspan(h));
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return pairwise_sum(v) / static_cast<double>(v.size());
}

}  // namespace speclens
