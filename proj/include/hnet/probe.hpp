#pragma once

// Rotation probes: rotate a smooth random patch about the filter center and
// compare the complex response against e^{i m theta} resp(0).

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "hnet/data.hpp"
#include "hnet/filters.hpp"
#include "hnet/ops.hpp"

namespace hnet {

struct RotationProbeReport {
  int m = 0;
  std::vector<double> thetas;
  std::vector<double> magnitudes;  // |resp(theta)| of the first patch
  std::vector<double> phases;      // arg resp(theta) of the first patch
  double max_magnitude_deviation = 0.0;  // max | |resp(theta)| / |resp(0)| - 1 |
  double max_phase_residual = 0.0;       // max |wrap(arg resp(theta) - arg resp(0) - m theta)|
  double fitted_slope = 0.0;             // least-squares slope of the unwrapped phase

  bool within(double magnitude_tol, double phase_tol) const {
    return max_magnitude_deviation <= magnitude_tol && max_phase_residual <= phase_tol;
  }
};

inline double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  return a - std::numbers::pi;
}

/// n equally spaced angles in [0, 2 pi).
inline std::vector<double> probe_thetas(int n) {
  if (n < 1) throw std::invalid_argument("probe needs at least one angle");
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = 2.0 * std::numbers::pi * i / n;
  return t;
}

struct ProbePatch {
  int size = 0;
  std::vector<double> pixels;  // size x size, row-major
};

/// (4k+1)-square low-pass noise under a Gaussian window of width k.
inline ProbePatch make_probe_patch(int k, std::uint64_t seed, double lowpass_sigma = 1.5) {
  ProbePatch p;
  p.size = 4 * k + 1;
  const int n = p.size;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Tensor<double> t({1, n, n, 1});
  for (auto& v : t.data) v = noise(rng);
  t = gaussian_blur_forward(t, lowpass_sigma);
  const double c = (n - 1) / 2.0;
  p.pixels.resize(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double r2 = (x - c) * (x - c) + (y - c) * (y - c);
      p.pixels[static_cast<std::size_t>(y) * n + x] = t.data[static_cast<std::size_t>(y) * n + x] *
                                                       std::exp(-r2 / (2.0 * k * k));
    }
  return p;
}

/// Cross-correlation of a k x k complex kernel with a real or complex image
/// at one output pixel (zero outside the image).
inline std::complex<double> correlate_at(const std::vector<std::complex<double>>& img, int n,
                                         const ComplexKernel& w, int cy, int cx) {
  const int k = w.kernel_size, h = k / 2;
  std::complex<double> acc = 0.0;
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx) {
      const int y = cy + ky - h, x = cx + kx - h;
      if (y < 0 || y >= n || x < 0 || x >= n) continue;
      acc += std::complex<double>(w.re[ky * k + kx], w.im[ky * k + kx]) * img[static_cast<std::size_t>(y) * n + x];
    }
  return acc;
}

namespace detail {

inline std::vector<std::complex<double>> to_complex(const std::vector<double>& v) {
  return {v.begin(), v.end()};
}

inline std::vector<std::complex<double>> correlate_full(const std::vector<std::complex<double>>& img, int n,
                                                        const ComplexKernel& w) {
  std::vector<std::complex<double>> out(img.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) out[static_cast<std::size_t>(y) * n + x] = correlate_at(img, n, w, y, x);
  return out;
}

/// Fills the report from responses[patch][theta].
inline void summarize(RotationProbeReport& rep, const std::vector<std::vector<std::complex<double>>>& responses) {
  rep.max_magnitude_deviation = 0.0;
  rep.max_phase_residual = 0.0;
  double slope_num = 0.0, slope_den = 0.0;
  for (std::size_t p = 0; p < responses.size(); ++p) {
    const auto& r = responses[p];
    const double m0 = std::abs(r[0]);
    if (!(m0 > 0.0)) throw std::runtime_error("probe response vanishes at theta = 0");
    double unwrapped = 0.0, prev = 0.0;
    for (std::size_t t = 0; t < r.size(); ++t) {
      const double th = rep.thetas[t];
      const double dphi = std::arg(r[t] / r[0]);
      rep.max_magnitude_deviation = std::max(rep.max_magnitude_deviation, std::abs(std::abs(r[t]) / m0 - 1.0));
      rep.max_phase_residual = std::max(rep.max_phase_residual, std::abs(wrap_angle(dphi - rep.m * th)));
      // unwrap against the expected slope so fast orders are tracked correctly
      if (t > 0) {
        const double step = th - rep.thetas[t - 1];
        unwrapped += rep.m * step + wrap_angle(dphi - prev - rep.m * step);
      }
      prev = dphi;
      slope_num += th * unwrapped;
      slope_den += th * th;
      if (p == 0) {
        rep.magnitudes.push_back(std::abs(r[t]));
        rep.phases.push_back(std::arg(r[t]));
      }
    }
  }
  rep.fitted_slope = slope_den > 0 ? slope_num / slope_den : 0.0;
}

}  // namespace detail

/// Order-m kernel with a seeded random radial profile and phase offset.
inline ComplexKernel random_filter(int m, int k, std::uint64_t seed, const ResamplingPlan& plan) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  std::vector<double> profile(effective_radial_size(m, plan.partition));
  for (auto& v : profile) v = g(rng);
  return synthesize_filter(HarmonicFilterSpec(m, profile, u(rng), k), plan);
}

/// Order-m kernel with the smooth profile R(r) = r^|m| exp(-r^2 / (2 s^2)),
/// the circular-harmonic analogue of a Gaussian derivative.
inline ComplexKernel smooth_filter(int m, int k, double scale, double beta, const ResamplingPlan& plan) {
  std::vector<double> profile;
  for (int r = m == 0 ? 0 : 1; r < plan.partition.n_rings(); ++r) {
    const double rr = plan.partition.rings[r].radius;
    profile.push_back(std::pow(rr, std::abs(m)) * std::exp(-rr * rr / (2.0 * scale * scale)));
  }
  return synthesize_filter(HarmonicFilterSpec(m, profile, beta, k), plan);
}

/// Stimulus and filter settings shared by the probe commands and tests.
struct ProbeSettings {
  int kernel_size = 9;
  double filter_scale = 1.0;
  double lowpass_sigma = 3.0;
  int patches = 8;
  std::uint64_t seed = 1;
};

/// Response of a single kernel at the patch center, for every theta and
/// patch. The fitted slope is the regression through the origin of the
/// unwrapped relative phase on theta.
inline RotationProbeReport probe_filter(const ComplexKernel& w, int m, const std::vector<double>& thetas,
                                        const std::vector<ProbePatch>& patches) {
  RotationProbeReport rep;
  rep.m = m;
  rep.thetas = thetas;
  std::vector<std::vector<std::complex<double>>> resp;
  for (const auto& p : patches) {
    const int c = p.size / 2;
    auto& row = resp.emplace_back();
    for (double th : thetas) {
      row.push_back(correlate_at(detail::to_complex(rotate_image(p.pixels, p.size, th)), p.size, w, c, c));
    }
  }
  detail::summarize(rep, resp);
  return rep;
}

/// Two stacked correlations (no nonlinearity); the composite response at the
/// center should rotate with order m1 + m2.
inline RotationProbeReport probe_chain(const ComplexKernel& w1, int m1, const ComplexKernel& w2, int m2,
                                       const std::vector<double>& thetas, const std::vector<ProbePatch>& patches) {
  RotationProbeReport rep;
  rep.m = m1 + m2;
  rep.thetas = thetas;
  std::vector<std::vector<std::complex<double>>> resp;
  for (const auto& p : patches) {
    const int c = p.size / 2;
    auto& row = resp.emplace_back();
    for (double th : thetas) {
      const auto y1 = detail::correlate_full(detail::to_complex(rotate_image(p.pixels, p.size, th)), p.size, w1);
      row.push_back(correlate_at(y1, p.size, w2, c, c));
    }
  }
  detail::summarize(rep, resp);
  return rep;
}

inline std::vector<ProbePatch> make_probe_patches(int k, int count, std::uint64_t seed, double lowpass_sigma = 1.5) {
  std::vector<ProbePatch> out;
  for (int i = 0; i < count; ++i) out.push_back(make_probe_patch(k, seed + 7919ULL * i, lowpass_sigma));
  return out;
}

}  // namespace hnet
