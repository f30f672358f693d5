#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanegraph/geometry.hpp"

namespace lanegraph {

/// Row-major single-channel float raster.
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, float fill = 0.0f)
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int r, int c) { return data_[static_cast<std::size_t>(r) * width_ + c]; }
  float at(int r, int c) const { return data_[static_cast<std::size_t>(r) * width_ + c]; }
  bool contains(int r, int c) const { return r >= 0 && c >= 0 && r < height_ && c < width_; }
  float get_or(int r, int c, float fallback) const { return contains(r, c) ? at(r, c) : fallback; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  float max_value() const { return data_.empty() ? 0.0f : *std::max_element(data_.begin(), data_.end()); }
  float min_value() const { return data_.empty() ? 0.0f : *std::min_element(data_.begin(), data_.end()); }
  bool all_equal(float v) const {
    return std::all_of(data_.begin(), data_.end(), [v](float x) { return x == v; });
  }

  bool operator==(const Raster&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

struct BilinearSample {
  float value = 0.0f;
  bool valid = false;
};

/// Bilinear lookup at a continuous (row, col). Valid only when all four
/// neighbours lie inside the raster.
inline BilinearSample sample_bilinear(const Raster& r, double row, double col) {
  const double r0f = std::floor(row), c0f = std::floor(col);
  const int r0 = static_cast<int>(r0f), c0 = static_cast<int>(c0f);
  const double fr = row - r0f, fc = col - c0f;
  // Exact hits on the last row/column are still interior samples.
  const int r1 = fr > 0.0 ? r0 + 1 : r0;
  const int c1 = fc > 0.0 ? c0 + 1 : c0;
  if (r0 < 0 || c0 < 0 || r1 >= r.height() || c1 >= r.width()) return {};
  const double v = (1 - fr) * ((1 - fc) * r.at(r0, c0) + fc * r.at(r0, c1)) +
                   fr * ((1 - fc) * r.at(r1, c0) + fc * r.at(r1, c1));
  return {static_cast<float>(v), true};
}

/// Sets pixels within width/2 of segment (a, b) (pixel coords, x=col, y=row).
inline void draw_segment(Raster& r, Vec2 a, Vec2 b, double width, float value = 1.0f) {
  const double half = std::max(0.5, width / 2.0);
  const int c_lo = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - half)));
  const int c_hi = std::min(r.width() - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + half)));
  const int r_lo = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - half)));
  const int r_hi = std::min(r.height() - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + half)));
  for (int row = r_lo; row <= r_hi; ++row)
    for (int col = c_lo; col <= c_hi; ++col)
      if (segment_distance({static_cast<double>(col), static_cast<double>(row)}, a, b) <= half) r.at(row, col) = value;
}

// ---------------------------------------------------------------------------
// File formats: PFM (float, little-endian) for data, PGM/PPM for previews.

class RasterIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes `content` to `path` via a temporary file and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw RasterIoError("cannot write " + tmp.string());
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw RasterIoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RasterIoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void append_f32_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  char b[4];
  std::memcpy(b, &bits, 4);
  out.append(b, 4);
}

inline float read_f32_le(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

inline std::string encode_pfm(const Raster& r) {
  std::string out = "Pf\n" + std::to_string(r.width()) + " " + std::to_string(r.height()) + "\n-1.0\n";
  out.reserve(out.size() + r.size() * 4);
  // PFM stores rows bottom-to-top.
  for (int row = r.height() - 1; row >= 0; --row)
    for (int col = 0; col < r.width(); ++col) append_f32_le(out, r.at(row, col));
  return out;
}

inline Raster decode_pfm(const std::string& bytes) {
  std::istringstream is(bytes);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  if (!(is >> magic >> w >> h >> scale) || magic != "Pf" || w <= 0 || h <= 0)
    throw RasterIoError("not a single-channel PFM");
  if (scale >= 0.0) throw RasterIoError("big-endian PFM not supported");
  is.get();
  const auto offset = static_cast<std::size_t>(is.tellg());
  if (bytes.size() < offset + static_cast<std::size_t>(w) * h * 4) throw RasterIoError("truncated PFM");
  Raster r(h, w);
  const char* p = bytes.data() + offset;
  for (int row = h - 1; row >= 0; --row)
    for (int col = 0; col < w; ++col, p += 4) r.at(row, col) = read_f32_le(p);
  return r;
}

inline void save_pfm(const std::filesystem::path& path, const Raster& r) { write_file_atomic(path, encode_pfm(r)); }
inline Raster load_pfm(const std::filesystem::path& path) { return decode_pfm(read_file(path)); }

/// 8-bit grayscale preview; values clamped to [0, 1].
inline void save_pgm(const std::filesystem::path& path, const Raster& r) {
  std::string out = "P5\n" + std::to_string(r.width()) + " " + std::to_string(r.height()) + "\n255\n";
  for (float v : r.data()) out.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  write_file_atomic(path, out);
}

}  // namespace lanegraph
