#pragma once

// Float grids, JSON sidecars, CSV and PNG.
//
// Float grid layout (all little-endian):
//   bytes 0-3   "SAFG"
//   bytes 4-7   u32 version (1)
//   bytes 8-15  reserved, zero
//   then u32 height, width, channels, then f32 values row-major (h, w, c).

#include <png.h>

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "speclens/core.hpp"
#include "speclens/estimator.hpp"

namespace speclens {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<unsigned char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}
inline std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw IoError("truncated float grid");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}
inline void put_le_f32(std::ostream& os, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(os, u);
}
inline double get_le_f32(std::istream& is) {
  const std::uint32_t u = get_u32(is);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}
}  // namespace detail

inline constexpr std::uint32_t kFloatGridVersion = 1;

inline void write_float_grid(const std::string& path, const Grid& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os.write("SAFG", 4);
  detail::put_u32(os, kFloatGridVersion);
  detail::put_u32(os, 0);
  detail::put_u32(os, 0);
  detail::put_u32(os, std::uint32_t(g.shape.height));
  detail::put_u32(os, std::uint32_t(g.shape.width));
  detail::put_u32(os, std::uint32_t(g.shape.channels));
  for (double v : g.values) detail::put_le_f32(os, v);
  if (!os) throw IoError("write failed for " + path);
}

inline Grid read_float_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SAFG", 4) != 0)
    throw IoError(path + " is not a float grid");
  const auto version = detail::get_u32(is);
  if (version != kFloatGridVersion)
    throw IoError(path + ": unsupported float grid version " + std::to_string(version));
  detail::get_u32(is);
  detail::get_u32(is);
  Shape s;
  s.height = detail::get_u32(is);
  s.width = detail::get_u32(is);
  s.channels = detail::get_u32(is);
  if (s.size() == 0) throw IoError(path + ": empty float grid");
  Grid g(s);
  for (auto& v : g.values) v = detail::get_le_f32(is);
  return g;
}

// ---------------------------------------------------------------------------

inline nlohmann::ordered_json meta_json(const AttributionMeta& m) {
  nlohmann::ordered_json j;
  j["method"] = m.method;
  j["kernel"] = m.kernel;
  j["target"] = m.target;
  j["sigma"] = m.sigma;
  j["class_index"] = m.class_index;
  j["samples"] = m.samples;
  j["seed"] = m.seed;
  j["converged"] = m.converged;
  j["final_change"] = std::isfinite(m.final_change) ? nlohmann::ordered_json(m.final_change)
                                                    : nlohmann::ordered_json(nullptr);
  j["signed_values"] = m.signed_values;
  j["unattributed_cells"] = m.unattributed_cells;
  return j;
}

inline void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << j.dump(2) << "\n";
}

// Writes <stem>.safg and <stem>.json.
inline void write_attribution(const std::string& stem, const AttributionMap& map,
                              const nlohmann::ordered_json& extra = {}) {
  write_float_grid(stem + ".safg", map.values);
  auto j = meta_json(map.meta);
  j["shape"] = {map.values.shape.height, map.values.shape.width, map.values.shape.channels};
  if (!extra.is_null())
    for (const auto& [k, v] : extra.items()) j[k] = v;
  write_json(stem + ".json", j);
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Shortest round-trip decimal for doubles.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != header_.size()) throw ConfigError("csv row width mismatch");
    rows_.push_back(fields);
  }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& f) {
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (i) out += ',';
        out += csv_field(f[i]);
      }
      out += "\r\n";
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Minimal RFC 4180 reader.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string s = ss.str();
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(field);
        rows.push_back(row);
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// PNG

// Reads 8-bit (or 16-bit, reduced) gray / RGB PNGs into [0,1]; alpha is
// dropped and palettes expanded.
inline InputGrid read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw IoError("libpng init failed");
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  if (setjmp(png_jmpbuf(png))) throw IoError("invalid PNG " + path);
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const auto W = png_get_image_width(png, info), H = png_get_image_height(png, info);
  const auto C = png_get_channels(png, info);
  if (C != 1 && C != 3) throw IoError(path + ": unsupported channel count");
  std::vector<png_byte> buf(std::size_t(H) * W * C);
  std::vector<png_bytep> rows(H);
  for (std::size_t h = 0; h < H; ++h) rows[h] = buf.data() + h * W * C;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  InputGrid x(Shape{H, W, C});
  for (std::size_t i = 0; i < buf.size(); ++i) x[i] = double(buf[i]) / 255.0;
  return x;
}

// 8-bit PNG; channels 1 (gray) or 3 (RGB). No timestamp chunk is written.
inline void write_png(const std::string& path, std::size_t H, std::size_t W, std::size_t C,
                      const std::vector<std::uint8_t>& px) {
  if (C != 1 && C != 3) throw IoError("png writer supports 1 or 3 channels");
  if (px.size() != H * W * C) throw DimensionError("png pixel buffer size mismatch");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw IoError("libpng init failed");
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (setjmp(png_jmpbuf(png))) throw IoError("png write failed for " + path);
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(W), png_uint_32(H), 8,
               C == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t h = 0; h < H; ++h)
    png_write_row(png, const_cast<png_bytep>(px.data() + h * W * C));
  png_write_end(png, nullptr);
}

// ---------------------------------------------------------------------------
// Heatmaps

struct HeatmapRender {
  enum class Norm { percentile_clip, mean_std_window };
  Norm norm = Norm::percentile_clip;
  double clip_percentile = 99.0;
  double window_std = 2.0;
  std::string colormap = "inferno";
  std::size_t scale = 8;  // nearest-neighbour upscaling factor
};

// Linear-interpolated percentile of a copy of v.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * double(v.size() - 1);
  const std::size_t i = std::size_t(pos);
  const double f = pos - double(i);
  return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
}

// Maps values into [0,1]: clip at the percentile then min-max, or a
// mean +- k std window.
inline std::vector<double> normalize_for_display(const Grid& g, const HeatmapRender& r) {
  const Grid s = channel_sum(g);
  std::vector<double> v = s.values;
  double lo, hi;
  if (r.norm == HeatmapRender::Norm::percentile_clip) {
    const double cap = percentile(v, r.clip_percentile);
    for (auto& x : v) x = std::min(x, cap);
    lo = *std::min_element(v.begin(), v.end());
    hi = *std::max_element(v.begin(), v.end());
  } else {
    const double m = mean_of(v);
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    const double sd = std::sqrt(var / double(v.size()));
    lo = m - r.window_std * sd;
    hi = m + r.window_std * sd;
  }
  for (auto& x : v) x = hi > lo ? std::clamp((x - lo) / (hi - lo), 0.0, 1.0) : 0.0;
  return v;
}

inline std::array<std::uint8_t, 3> colormap(const std::string& name, double t) {
  using Stop = std::array<double, 3>;
  static const std::vector<Stop> inferno{{0, 0, 4}, {40, 11, 84}, {101, 21, 110}, {159, 42, 99},
                                         {212, 72, 66}, {245, 125, 21}, {250, 193, 39},
                                         {252, 255, 164}};
  static const std::vector<Stop> coolwarm{{59, 76, 192}, {221, 221, 221}, {180, 4, 38}};
  static const std::vector<Stop> gray{{0, 0, 0}, {255, 255, 255}};
  const std::vector<Stop>* stops = &inferno;
  if (name == "gray") stops = &gray;
  else if (name == "coolwarm") stops = &coolwarm;
  else if (name != "inferno") throw ConfigError("unknown colormap '" + name + "'");
  t = std::clamp(t, 0.0, 1.0) * double(stops->size() - 1);
  const std::size_t i = std::min(stops->size() - 2, std::size_t(t));
  const double f = t - double(i);
  std::array<std::uint8_t, 3> c{};
  for (int k = 0; k < 3; ++k)
    c[k] = std::uint8_t(std::lround((*stops)[i][k] * (1 - f) + (*stops)[i + 1][k] * f));
  return c;
}

inline void write_heatmap(const std::string& path, const Grid& g, const HeatmapRender& r = {}) {
  const auto v = normalize_for_display(g, r);
  const std::size_t H = g.shape.height, W = g.shape.width, S = std::max<std::size_t>(1, r.scale);
  std::vector<std::uint8_t> px(H * S * W * S * 3);
  for (std::size_t h = 0; h < H * S; ++h)
    for (std::size_t w = 0; w < W * S; ++w) {
      const auto c = colormap(r.colormap, v[(h / S) * W + w / S]);
      std::copy(c.begin(), c.end(), px.begin() + (h * W * S + w) * 3);
    }
  write_png(path, H * S, W * S, 3, px);
}

}  // namespace speclens
