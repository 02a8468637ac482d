#pragma once

// Two-class oriented gratings: class 0 low spatial frequency, class 1 high.

#include "speclens/core.hpp"
#include "speclens/model.hpp"

namespace speclens {

struct TextureSpec {
  std::size_t count = 200;
  std::size_t size = 16;
  double low_min = 1.0, low_max = 2.0;    // cycles per image, class 0
  double high_min = 4.0, high_max = 6.0;  // cycles per image, class 1
  double noise = 0.05;
  std::uint64_t seed = 0;
};

// Image i depends only on (seed, i). Labels alternate 0, 1, 0, ...
inline InputGrid texture_image(const TextureSpec& spec, std::size_t i, std::size_t& label) {
  label = i % 2;
  RandomStream rng(spec.seed ^ 0x7e57u, i);
  const double lo = label ? spec.high_min : spec.low_min;
  const double hi = label ? spec.high_max : spec.low_max;
  const double freq = lo + (hi - lo) * rng.uniform();
  const double theta = kPi * rng.uniform();
  const double phase = 2.0 * kPi * rng.uniform();
  const double amp = 0.3 + 0.15 * rng.uniform();
  const double n = double(spec.size);
  InputGrid x(Shape{spec.size, spec.size, 1});
  for (std::size_t h = 0; h < spec.size; ++h)
    for (std::size_t w = 0; w < spec.size; ++w) {
      const double u = (double(w) * std::cos(theta) + double(h) * std::sin(theta)) / n;
      double v = 0.5 + amp * std::cos(2.0 * kPi * freq * u + phase) + spec.noise * rng.normal();
      x.at(h, w) = std::clamp(v, 0.0, 1.0);
    }
  return x;
}

inline Dataset frequency_textures(const TextureSpec& spec) {
  Dataset d;
  for (std::size_t i = 0; i < spec.count; ++i) {
    std::size_t label = 0;
    d.images.push_back(texture_image(spec, i, label));
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace speclens
