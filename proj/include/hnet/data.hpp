#pragma once

// Rotated-MNIST amat files (plain or gzip), subsampling, and the image
// rotation used as the equivariance oracle.

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnet/tensor.hpp"

namespace hnet {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, long line, const std::string& msg)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + msg), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

enum class Split { Train, Val, Test };

struct Dataset {
  int height = 28;
  int width = 28;
  std::vector<float> images;  // [n][h][w] row-major
  std::vector<int> labels;
  Split split = Split::Train;

  int size() const { return static_cast<int>(labels.size()); }
  const float* image(int i) const { return images.data() + static_cast<std::size_t>(i) * height * width; }
  float* image(int i) { return images.data() + static_cast<std::size_t>(i) * height * width; }

  /// Batch tensor [count, h, w, 1] of the given rows.
  template <class T>
  Tensor<T> batch(const std::vector<int>& rows) const {
    Tensor<T> t({static_cast<int>(rows.size()), height, width, 1});
    const std::size_t px = static_cast<std::size_t>(height) * width;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const float* src = image(rows[r]);
      for (std::size_t p = 0; p < px; ++p) t.data[r * px + p] = static_cast<T>(src[p]);
    }
    return t;
  }

  Dataset select(const std::vector<int>& rows) const {
    Dataset d;
    d.height = height;
    d.width = width;
    d.split = split;
    const std::size_t px = static_cast<std::size_t>(height) * width;
    d.images.reserve(rows.size() * px);
    for (int r : rows) {
      d.images.insert(d.images.end(), image(r), image(r) + px);
      d.labels.push_back(labels[r]);
    }
    return d;
  }
};

inline constexpr double kPixelTolerance = 1e-6;

/// Reads 785 whitespace-separated decimals per line: 784 row-major pixels in
/// [0, 1], then an integer label 0-9. Gzip input is detected automatically.
inline Dataset load_amat(const std::string& path, Split split = Split::Train) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw std::runtime_error("cannot open " + path);
  std::string content;
  {
    std::vector<char> buf(1 << 20);
    int n;
    while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) content.append(buf.data(), n);
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw std::runtime_error("read error in " + path);
  }
  Dataset d;
  d.split = split;
  constexpr int kPixels = 28 * 28;
  std::vector<double> fields;
  fields.reserve(kPixels + 1);
  long line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string::npos) end = content.size();
    ++line_no;
    const char* p = content.data() + pos;
    const char* e = content.data() + end;
    pos = end + 1;
    fields.clear();
    while (true) {
      while (p < e && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p >= e) break;
      double v = 0.0;
      const auto r = std::from_chars(p, e, v);
      if (r.ec != std::errc()) {
        const char* q = p;
        while (q < e && *q != ' ' && *q != '\t') ++q;
        throw ParseError(path, line_no, "not a number: '" + std::string(p, q) + "'");
      }
      fields.push_back(v);
      p = r.ptr;
    }
    if (fields.empty()) continue;
    if (fields.size() != kPixels + 1) {
      throw ParseError(path, line_no,
                       "expected " + std::to_string(kPixels + 1) + " fields, got " + std::to_string(fields.size()));
    }
    const double label = fields.back();
    if (label != std::floor(label) || label < 0 || label > 9) {
      throw ParseError(path, line_no, "label must be an integer in 0-9");
    }
    for (int i = 0; i < kPixels; ++i) {
      if (fields[i] < -kPixelTolerance || fields[i] > 1.0 + kPixelTolerance) {
        throw ParseError(path, line_no, "pixel " + std::to_string(i) + " outside [0, 1]");
      }
      d.images.push_back(static_cast<float>(std::clamp(fields[i], 0.0, 1.0)));
    }
    d.labels.push_back(static_cast<int>(label));
  }
  return d;
}

/// Plain-text writer; floats are printed with enough digits to round-trip.
inline void write_amat(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::size_t px = static_cast<std::size_t>(d.height) * d.width;
  char buf[32];
  for (int i = 0; i < d.size(); ++i) {
    std::string line;
    for (std::size_t p = 0; p < px; ++p) {
      const auto r = std::to_chars(buf, buf + sizeof buf, d.image(i)[p]);
      line.append(buf, r.ptr);
      line.push_back(' ');
    }
    line += std::to_string(d.labels[i]);
    line.push_back('\n');
    out << line;
  }
}

struct TrainValSplit {
  Dataset train;
  Dataset val;
};

/// First n_train rows train, the rest validation (the canonical file holds
/// 12000 rows: 10000 + 2000).
inline TrainValSplit split_train_val(const Dataset& d, int n_train = 10000) {
  if (n_train < 0 || n_train > d.size()) throw std::invalid_argument("split_train_val: n_train out of range");
  std::vector<int> a, b;
  for (int i = 0; i < d.size(); ++i) (i < n_train ? a : b).push_back(i);
  TrainValSplit s{d.select(a), d.select(b)};
  s.train.split = Split::Train;
  s.val.split = Split::Val;
  return s;
}

/// Stratified subset: each class keeps round(fraction * count) rows by the
/// largest-remainder rule, chosen by a seeded shuffle; result sorted by row.
inline std::vector<int> subsample_indices(const Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subsample: fraction must be in (0, 1]");
  std::vector<int> all(d.size());
  for (int i = 0; i < d.size(); ++i) all[i] = i;
  if (fraction == 1.0) return all;
  std::vector<std::vector<int>> by_class(10);
  for (int i = 0; i < d.size(); ++i) by_class.at(d.labels[i]).push_back(i);
  const double target = fraction * d.size();
  const int total = static_cast<int>(std::llround(target));
  std::vector<int> take(10);
  std::vector<std::pair<double, int>> rem;
  int assigned = 0;
  for (int c = 0; c < 10; ++c) {
    const double exact = fraction * by_class[c].size();
    take[c] = static_cast<int>(std::floor(exact));
    assigned += take[c];
    rem.push_back({exact - take[c], c});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; j < rem.size() && assigned < total; ++j, ++assigned) take[rem[j].second]++;
  std::mt19937_64 rng(seed);
  std::vector<int> out;
  for (int c = 0; c < 10; ++c) {
    if (by_class[c].empty()) continue;
    if (take[c] < 1) throw std::invalid_argument("subsample: fraction leaves class " + std::to_string(c) + " empty");
    auto rows = by_class[c];
    for (int i = static_cast<int>(rows.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(rows[i], rows[j]);
    }
    out.insert(out.end(), rows.begin(), rows.begin() + take[c]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline Dataset subsample(const Dataset& d, double fraction, std::uint64_t seed) {
  return d.select(subsample_indices(d, fraction, seed));
}

/// First `count` rows as a stratified subset of the given size.
inline Dataset subsample_count(const Dataset& d, int count, std::uint64_t seed) {
  if (count >= d.size()) return d;
  return subsample(d, static_cast<double>(count) / d.size(), seed);
}

// ---------------------------------------------------------------------------
// Rotation

namespace detail {

inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t < 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

}  // namespace detail

/// Counter-clockwise (as displayed, row 0 at the top) rotation of an n x n
/// image about its center. Out-of-range samples read as 0. Multiples of a
/// quarter turn are exact permutations; other angles use bicubic (Keys,
/// a = -0.5) interpolation.
template <class T>
std::vector<T> rotate_image(const std::vector<T>& img, int n, double theta) {
  if (img.size() != static_cast<std::size_t>(n) * n) throw std::invalid_argument("rotate_image: image is not n x n");
  const double turns = theta / (0.5 * std::numbers::pi);
  const double q = std::round(turns);
  if (std::abs(turns - q) < 1e-12) {
    const int k = static_cast<int>(((static_cast<long long>(q) % 4) + 4) % 4);
    std::vector<T> out(img.size());
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        int sy = y, sx = x;
        for (int r = 0; r < k; ++r) {
          // one CCW quarter turn: out(y, x) = in(x, n - 1 - y)
          const int ty = sx, tx = n - 1 - sy;
          sy = ty;
          sx = tx;
        }
        out[static_cast<std::size_t>(y) * n + x] = img[static_cast<std::size_t>(sy) * n + sx];
      }
    return out;
  }
  const double c = (n - 1) / 2.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  std::vector<T> out(img.size(), T(0));
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      // output (u, v) in math coordinates (v up); source = R(-theta) (u, v)
      const double u = x - c, v = c - y;
      const double su = ct * u + st * v, sv = -st * u + ct * v;
      const double fx = su + c, fy = c - sv;
      const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
      double acc = 0.0;
      for (int j = -1; j <= 2; ++j) {
        const int yy = y0 + j;
        if (yy < 0 || yy >= n) continue;
        const double wy = detail::cubic_weight(fy - yy);
        for (int i = -1; i <= 2; ++i) {
          const int xx = x0 + i;
          if (xx < 0 || xx >= n) continue;
          acc += wy * detail::cubic_weight(fx - xx) * static_cast<double>(img[static_cast<std::size_t>(yy) * n + xx]);
        }
      }
      out[static_cast<std::size_t>(y) * n + x] = static_cast<T>(acc);
    }
  return out;
}

/// Rotates every image (single channel) of a batch tensor.
template <class T>
Tensor<T> rotate_batch(const Tensor<T>& x, double theta) {
  if (x.shape.h != x.shape.w || x.shape.c != 1) throw std::invalid_argument("rotate_batch: need square 1-channel maps");
  Tensor<T> out(x.shape);
  const std::size_t px = static_cast<std::size_t>(x.shape.h) * x.shape.w;
  for (int i = 0; i < x.shape.n; ++i) {
    std::vector<T> img(x.item(i), x.item(i) + px);
    const auto r = rotate_image(img, x.shape.h, theta);
    std::copy(r.begin(), r.end(), out.item(i));
  }
  return out;
}

}  // namespace hnet
