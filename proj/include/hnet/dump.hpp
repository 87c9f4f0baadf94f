#pragma once

// Filter, phase-histogram and feature-map dumps (binary PGM + CSV).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnet/block.hpp"
#include "hnet/model.hpp"
#include "hnet/ops.hpp"

namespace hnet {

/// 8-bit P5 image. Values are mapped linearly from [lo, hi] to [0, 255].
inline void write_pgm(const std::string& path, const std::vector<double>& v, int h, int w, double lo, double hi) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (double x : v) {
    const double t = std::clamp((x - lo) / span, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
  }
}

/// Min/max-scaled variant; a constant image maps to mid-gray.
inline void write_pgm(const std::string& path, const std::vector<double>& v, int h, int w) {
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  if (*mx - *mn < 1e-300) {
    write_pgm(path, v, h, w, *mn - 1.0, *mn + 1.0);
  } else {
    write_pgm(path, v, h, w, *mn, *mx);
  }
}

/// Tiles rows x cols images of size th x tw with a one-pixel gutter holding
/// `gutter`.
inline std::vector<double> tile(const std::vector<std::vector<double>>& tiles, int rows, int cols, int th, int tw,
                                double gutter, int* out_h, int* out_w) {
  const int H = rows * (th + 1) + 1, W = cols * (tw + 1) + 1;
  std::vector<double> img(static_cast<std::size_t>(H) * W, gutter);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
      if (idx >= tiles.size()) continue;
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x) {
          img[static_cast<std::size_t>(r * (th + 1) + 1 + y) * W + c * (tw + 1) + 1 + x] =
              tiles[idx][static_cast<std::size_t>(y) * tw + x];
        }
    }
  *out_h = H;
  *out_w = W;
  return img;
}

inline std::vector<double> upscale(const std::vector<double>& v, int h, int w, int f) {
  std::vector<double> out(static_cast<std::size_t>(h) * f * w * f);
  for (int y = 0; y < h * f; ++y)
    for (int x = 0; x < w * f; ++x) out[static_cast<std::size_t>(y) * w * f + x] = v[(y / f) * w + x / f];
  return out;
}

/// Phase offsets folded into [0, 2 pi) and counted in `bins` equal bins.
inline std::vector<int> phase_histogram(const std::vector<double>& phases, int bins = 36) {
  std::vector<int> h(bins, 0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (double p : phases) {
    double a = std::fmod(p, two_pi);
    if (a < 0) a += two_pi;
    int b = static_cast<int>(a / two_pi * bins);
    h[std::min(b, bins - 1)]++;
  }
  return h;
}

/// Writes filters_L<i>_m<|m|>.pgm (real parts at beta = 0, one tile per
/// input/output channel pair, shared gray scale) for every harmonic layer,
/// and phase_hist.csv. Returns the written file names.
template <class T>
std::vector<std::string> dump_filters(const Model<T>& model, const std::string& dir) {
  std::vector<std::string> files;
  const auto& g = model.graph();
  std::ostringstream hist;
  hist << "layer,order,bin_start,bin_end,count\n";
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& L = g.layers[i];
    if (L.kind != LayerKind::HConv) continue;
    const int cin = model.shapes()[i].channels, cout = L.channels, k = L.kernel;
    for (int a : bank_orders(L.edges)) {
      const auto& basis = model.basis(i, a);
      const auto radial = model.params().value(detail::slot_name(i, "hconv.radial.m" + std::to_string(a)));
      const auto bank = synthesize_bank<T>(basis, cin, cout, radial, {});
      std::vector<std::vector<double>> tiles;
      double amax = 0.0;
      for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co) {
          std::vector<double> t(static_cast<std::size_t>(k) * k);
          for (int tap = 0; tap < k * k; ++tap) {
            t[tap] = bank.re[bank.index(tap, ci, co)];
            amax = std::max(amax, std::abs(t[tap]));
          }
          tiles.push_back(upscale(t, k, k, 8));
        }
      int H = 0, W = 0;
      const auto img = tile(tiles, cin, cout, 8 * k, 8 * k, 0.0, &H, &W);
      const std::string name = "filters_L" + std::to_string(i) + "_m" + std::to_string(a) + ".pgm";
      write_pgm((std::filesystem::path(dir) / name).string(), img, H, W, -amax, amax);
      files.push_back(name);
      if (L.phase) {
        const auto ph = model.params().value(detail::slot_name(i, "hconv.phase.m" + std::to_string(a)));
        const auto h = phase_histogram(std::vector<double>(ph.begin(), ph.end()));
        const double width = 2.0 * std::numbers::pi / h.size();
        for (std::size_t b = 0; b < h.size(); ++b) {
          hist << i << ',' << a << ',' << b * width << ',' << (b + 1) * width << ',' << h[b] << '\n';
        }
      }
    }
  }
  std::ofstream((std::filesystem::path(dir) / "phase_hist.csv").string()) << hist.str();
  files.push_back("phase_hist.csv");
  return files;
}

/// For the activation entering layer `boundary` (complex maps only): one
/// magnitude PGM per stream (channels tiled) and a CSV of per-pixel
/// magnitude and phase.
template <class T>
std::vector<std::string> dump_features(Model<T>& model, const Tensor<T>& image, std::size_t boundary,
                                       const std::string& dir, const std::string& tag = "features") {
  if (image.shape.n != 1) throw std::invalid_argument("dump_features: expects a single image");
  auto tr = model.forward(image, false, false);
  if (boundary >= tr.outputs.size()) throw std::invalid_argument("dump_features: layer index out of range");
  const auto& info = model.shapes()[boundary];
  if (!info.complex) throw std::invalid_argument("dump_features: activation at that layer is real");
  const auto streams = unpack_streams(tr.tape.value(tr.outputs[boundary]), info.orders);
  std::vector<std::string> files;
  std::ostringstream csv;
  csv.precision(9);
  csv << "order,channel,y,x,magnitude,phase\n";
  for (const auto& [order, F] : streams) {
    const auto mag = magnitude(F);
    const auto ph = phase(F);
    std::vector<std::vector<double>> tiles;
    const int h = info.h, w = info.w, C = info.channels;
    for (int c = 0; c < C; ++c) {
      std::vector<double> t(static_cast<std::size_t>(h) * w);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          t[static_cast<std::size_t>(y) * w + x] = mag(0, y, x, c);
          csv << order << ',' << c << ',' << y << ',' << x << ',' << mag(0, y, x, c) << ',' << ph(0, y, x, c) << '\n';
        }
      tiles.push_back(upscale(t, h, w, 4));
    }
    const int cols = std::min(C, 8), rows = (C + cols - 1) / cols;
    int H = 0, W = 0;
    const auto img = tile(tiles, rows, cols, 4 * h, 4 * w, 0.0, &H, &W);
    const std::string name = tag + "_L" + std::to_string(boundary) + "_m" + std::to_string(order) + ".pgm";
    write_pgm((std::filesystem::path(dir) / name).string(), img, H, W);
    files.push_back(name);
  }
  const std::string name = tag + "_L" + std::to_string(boundary) + "_phase.csv";
  std::ofstream((std::filesystem::path(dir) / name).string()) << csv.str();
  files.push_back(name);
  return files;
}

}  // namespace hnet
