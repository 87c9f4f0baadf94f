#pragma once

// Circular harmonic filters W_m(r, phi) = R(r) exp(i (m phi + beta)) sampled on
// concentric rings and resampled onto the square pixel grid with normalized
// Gaussian weights.
//
// Grid convention: kernel entry (ky, kx) sits at offset dx = kx - c, dy = ky - c
// (rows grow downwards). Angles are measured counter-clockwise on screen, so
// phi = atan2(-dy, dx).

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hnet {

struct Ring {
  int squared_radius = 0;
  double radius = 0.0;
  std::vector<std::pair<int, int>> grid_offsets;  // (dx, dy)
};

struct RingPartition {
  int kernel_size = 0;
  std::vector<Ring> rings;  // ascending radius

  int n_rings() const { return static_cast<int>(rings.size()); }
};

/// Groups the k x k grid offsets by exact squared distance from the center.
inline RingPartition ring_partition(int k) {
  if (k < 1 || k % 2 == 0) {
    throw std::invalid_argument("ring_partition: kernel size must be odd and positive, got " +
                                std::to_string(k));
  }
  const int c = (k - 1) / 2;
  std::map<int, std::vector<std::pair<int, int>>> by_r2;
  for (int dy = -c; dy <= c; ++dy)
    for (int dx = -c; dx <= c; ++dx) by_r2[dx * dx + dy * dy].emplace_back(dx, dy);

  RingPartition p;
  p.kernel_size = k;
  for (auto& [r2, offsets] : by_r2) {
    p.rings.push_back({r2, std::sqrt(static_cast<double>(r2)), std::move(offsets)});
  }
  return p;
}

/// Number of learnable radial weights for a filter of the given order; the
/// center ring is dropped for m != 0 because the phase is undefined there.
inline int effective_radial_size(int order, const RingPartition& p) {
  return order == 0 ? p.n_rings() : p.n_rings() - 1;
}

inline constexpr double kDefaultResampleSigma = 0.5;

/// max(8, ceil(8 pi r)), rounded up to a multiple of 4 so that every ring is
/// invariant under quarter turns. The lone center sample is its own ring.
inline int default_angular_samples(double radius) {
  if (radius == 0.0) return 1;
  int n = std::max(8, static_cast<int>(std::ceil(2.0 * std::numbers::pi * radius * 4.0 - 1e-9)));
  return (n + 3) / 4 * 4;
}

/// Unnormalized Gaussian resampling weight between a grid point and a polar sample.
inline double resampling_kernel(double distance, double sigma) {
  return std::exp(-distance * distance / (2.0 * sigma * sigma));
}

struct RingSample {
  int ring = 0;
  double radius = 0.0;
  double angle = 0.0;
};

struct ResamplingPlan {
  struct Tap {
    int sample = 0;
    double weight = 0.0;
  };

  RingPartition partition;
  double sigma = kDefaultResampleSigma;
  std::vector<int> n_angular;       // per ring
  std::vector<RingSample> samples;  // all rings, grouped by ring
  std::vector<std::vector<Tap>> weights;  // per grid point ky*k+kx

  int kernel_size() const { return partition.kernel_size; }
  int center_index() const {
    const int k = partition.kernel_size;
    return (k / 2) * k + k / 2;
  }
};

/// n_angular = 0 selects the per-ring default; a positive value is used for
/// every ring of nonzero radius and must be at least 4x the largest ring's
/// circumference in samples.
inline ResamplingPlan build_resampling_plan(const RingPartition& partition,
                                            double sigma = kDefaultResampleSigma,
                                            int n_angular = 0) {
  if (!(sigma > 0.0)) throw std::invalid_argument("build_resampling_plan: sigma must be > 0");
  if (partition.rings.empty()) throw std::invalid_argument("build_resampling_plan: empty partition");
  const double r_max = partition.rings.back().radius;
  if (n_angular < 0 ||
      (n_angular > 0 && n_angular < static_cast<int>(std::ceil(8.0 * std::numbers::pi * r_max - 1e-9)))) {
    throw std::invalid_argument("build_resampling_plan: n_angular below 4x angular Nyquist");
  }

  ResamplingPlan plan;
  plan.partition = partition;
  plan.sigma = sigma;
  for (int r = 0; r < partition.n_rings(); ++r) {
    const double radius = partition.rings[r].radius;
    const int n = radius == 0.0 ? 1 : (n_angular > 0 ? n_angular : default_angular_samples(radius));
    plan.n_angular.push_back(n);
    for (int j = 0; j < n; ++j) {
      plan.samples.push_back({r, radius, 2.0 * std::numbers::pi * j / n});
    }
  }

  const int k = partition.kernel_size;
  const int c = k / 2;
  plan.weights.resize(static_cast<std::size_t>(k) * k);
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      const double gx = kx - c;
      const double gy = -(ky - c);  // y up
      auto& taps = plan.weights[ky * k + kx];
      double total = 0.0;
      for (int s = 0; s < static_cast<int>(plan.samples.size()); ++s) {
        const auto& smp = plan.samples[s];
        const double sx = smp.radius * std::cos(smp.angle);
        const double sy = smp.radius * std::sin(smp.angle);
        const double w = resampling_kernel(std::hypot(gx - sx, gy - sy), sigma);
        if (w < 1e-300) continue;
        taps.push_back({s, w});
        total += w;
      }
      for (auto& t : taps) t.weight /= total;
    }
  }
  return plan;
}

struct HarmonicFilterSpec {
  int order = 0;
  std::vector<double> radial_profile;  // effective_radial_size(order) entries
  double phase_offset = 0.0;           // kept in [0, 2 pi)
  int kernel_size = 0;

  HarmonicFilterSpec() = default;
  HarmonicFilterSpec(int m, std::vector<double> profile, double beta, int k)
      : order(m), radial_profile(std::move(profile)), kernel_size(k) {
    set_phase(beta);
  }

  void set_phase(double beta) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    phase_offset = std::fmod(beta, two_pi);
    if (phase_offset < 0.0) phase_offset += two_pi;
    if (phase_offset >= two_pi) phase_offset = 0.0;
  }
};

/// k x k complex kernel, row-major over (ky, kx).
struct ComplexKernel {
  int kernel_size = 0;
  std::vector<double> re;
  std::vector<double> im;

  explicit ComplexKernel(int k = 0)
      : kernel_size(k), re(static_cast<std::size_t>(k) * k), im(static_cast<std::size_t>(k) * k) {}
};

namespace detail {

inline void check_filter(const HarmonicFilterSpec& spec, const ResamplingPlan& plan) {
  if (spec.kernel_size != plan.kernel_size()) {
    throw std::invalid_argument("filter kernel size does not match resampling plan");
  }
  if (static_cast<int>(spec.radial_profile.size()) != effective_radial_size(spec.order, plan.partition)) {
    throw std::invalid_argument("radial profile length " + std::to_string(spec.radial_profile.size()) +
                                " does not match " +
                                std::to_string(effective_radial_size(spec.order, plan.partition)) +
                                " rings for order " + std::to_string(spec.order));
  }
}

/// Radial weight index of a ring, or -1 for the dropped center ring.
inline int radial_index(int ring, int order) { return order == 0 ? ring : ring - 1; }

}  // namespace detail

/// Resamples R(r_j) exp(i (m phi_j + beta)) onto the grid.
inline ComplexKernel synthesize_filter(const HarmonicFilterSpec& spec, const ResamplingPlan& plan) {
  detail::check_filter(spec, plan);
  const int k = plan.kernel_size();
  ComplexKernel out(k);
  for (int i = 0; i < k * k; ++i) {
    if (spec.order != 0 && i == plan.center_index()) continue;
    double re = 0.0, im = 0.0;
    for (const auto& tap : plan.weights[i]) {
      const auto& smp = plan.samples[tap.sample];
      const int ri = detail::radial_index(smp.ring, spec.order);
      if (ri < 0) continue;
      const double a = spec.order * smp.angle + spec.phase_offset;
      re += tap.weight * spec.radial_profile[ri] * std::cos(a);
      im += tap.weight * spec.radial_profile[ri] * std::sin(a);
    }
    out.re[i] = re;
    out.im[i] = im;
  }
  return out;
}

struct FilterGradient {
  std::vector<double> d_radial;
  double d_beta = 0.0;
};

/// Reverse mode of synthesize_filter. The upstream cotangent carries
/// dL/dRe in `re` and dL/dIm in `im`.
inline FilterGradient filter_gradient(const HarmonicFilterSpec& spec, const ResamplingPlan& plan,
                                      const ComplexKernel& upstream) {
  detail::check_filter(spec, plan);
  const int k = plan.kernel_size();
  if (upstream.kernel_size != k || upstream.re.size() != static_cast<std::size_t>(k) * k ||
      upstream.im.size() != upstream.re.size()) {
    throw std::invalid_argument("filter_gradient: upstream shape does not match kernel");
  }
  FilterGradient g;
  g.d_radial.assign(spec.radial_profile.size(), 0.0);
  for (int i = 0; i < k * k; ++i) {
    if (spec.order != 0 && i == plan.center_index()) continue;
    for (const auto& tap : plan.weights[i]) {
      const auto& smp = plan.samples[tap.sample];
      const int ri = detail::radial_index(smp.ring, spec.order);
      if (ri < 0) continue;
      const double a = spec.order * smp.angle + spec.phase_offset;
      const double c = std::cos(a), s = std::sin(a);
      g.d_radial[ri] += tap.weight * (upstream.re[i] * c + upstream.im[i] * s);
      const double r = spec.radial_profile[ri];
      // d/dbeta of (r c, r s) is (-r s, r c)
      g.d_beta += tap.weight * r * (-upstream.re[i] * s + upstream.im[i] * c);
    }
  }
  return g;
}

/// Factorized form of the resampled harmonics: for a non-negative order m,
/// column j of the basis is the grid image of ring j's angular factor
/// exp(i m phi). A filter is then exp(i beta) * sum_j R_j * basis_j, and the
/// filter of order -m is the complex conjugate.
struct HarmonicBasis {
  int kernel_size = 0;
  int order = 0;
  int n_radial = 0;
  std::vector<double> re;  // [k*k][n_radial]
  std::vector<double> im;
};

inline HarmonicBasis make_harmonic_basis(const ResamplingPlan& plan, int order) {
  if (order < 0) throw std::invalid_argument("make_harmonic_basis: order must be >= 0");
  const int k = plan.kernel_size();
  HarmonicBasis b;
  b.kernel_size = k;
  b.order = order;
  b.n_radial = effective_radial_size(order, plan.partition);
  b.re.assign(static_cast<std::size_t>(k) * k * b.n_radial, 0.0);
  b.im.assign(b.re.size(), 0.0);
  for (int i = 0; i < k * k; ++i) {
    if (order != 0 && i == plan.center_index()) continue;
    for (const auto& tap : plan.weights[i]) {
      const auto& smp = plan.samples[tap.sample];
      const int ri = detail::radial_index(smp.ring, order);
      if (ri < 0) continue;
      b.re[static_cast<std::size_t>(i) * b.n_radial + ri] += tap.weight * std::cos(order * smp.angle);
      b.im[static_cast<std::size_t>(i) * b.n_radial + ri] += tap.weight * std::sin(order * smp.angle);
    }
  }
  return b;
}

/// Bank of complex kernels for all (input channel, output channel) pairs of
/// one rotation order. Layout [ky*k+kx][cin][cout].
template <class T>
struct ComplexKernelBank {
  int kernel_size = 0;
  int in_channels = 0;
  int out_channels = 0;
  int order = 0;
  std::vector<T> re;
  std::vector<T> im;

  ComplexKernelBank() = default;
  ComplexKernelBank(int k, int cin, int cout, int m)
      : kernel_size(k), in_channels(cin), out_channels(cout), order(m),
        re(static_cast<std::size_t>(k) * k * cin * cout), im(re.size()) {}

  std::size_t index(int tap, int ci, int co) const {
    return (static_cast<std::size_t>(tap) * in_channels + ci) * out_channels + co;
  }

  ComplexKernelBank conjugate() const {
    ComplexKernelBank c = *this;
    c.order = -order;
    for (auto& v : c.im) v = -v;
    return c;
  }
};

/// Learnable parameters of one order's filter bank: radial weights laid out
/// [cin][cout][n_radial] and phases [cin][cout] (empty when the bank has no
/// phase offsets).
template <class T>
ComplexKernelBank<T> synthesize_bank(const HarmonicBasis& basis, int cin, int cout,
                                     std::span<const T> radial, std::span<const T> phase) {
  const int kk = basis.kernel_size * basis.kernel_size;
  const int nr = basis.n_radial;
  if (radial.size() != static_cast<std::size_t>(cin) * cout * nr) {
    throw std::invalid_argument("synthesize_bank: radial size mismatch");
  }
  if (!phase.empty() && phase.size() != static_cast<std::size_t>(cin) * cout) {
    throw std::invalid_argument("synthesize_bank: phase size mismatch");
  }
  ComplexKernelBank<T> bank(basis.kernel_size, cin, cout, basis.order);
  for (int ci = 0; ci < cin; ++ci) {
    for (int co = 0; co < cout; ++co) {
      const std::size_t pair = static_cast<std::size_t>(ci) * cout + co;
      const T* r = radial.data() + pair * nr;
      const double beta = phase.empty() ? 0.0 : static_cast<double>(phase[pair]);
      const double cb = std::cos(beta), sb = std::sin(beta);
      for (int t = 0; t < kk; ++t) {
        double are = 0.0, aim = 0.0;
        for (int j = 0; j < nr; ++j) {
          are += static_cast<double>(r[j]) * basis.re[static_cast<std::size_t>(t) * nr + j];
          aim += static_cast<double>(r[j]) * basis.im[static_cast<std::size_t>(t) * nr + j];
        }
        bank.re[bank.index(t, ci, co)] = static_cast<T>(cb * are - sb * aim);
        bank.im[bank.index(t, ci, co)] = static_cast<T>(sb * are + cb * aim);
      }
    }
  }
  return bank;
}

/// Transpose of synthesize_bank; accumulates into d_radial / d_phase.
template <class T>
void bank_gradient(const HarmonicBasis& basis, int cin, int cout, std::span<const T> radial,
                   std::span<const T> phase, const ComplexKernelBank<T>& upstream,
                   std::span<T> d_radial, std::span<T> d_phase) {
  const int kk = basis.kernel_size * basis.kernel_size;
  const int nr = basis.n_radial;
  for (int ci = 0; ci < cin; ++ci) {
    for (int co = 0; co < cout; ++co) {
      const std::size_t pair = static_cast<std::size_t>(ci) * cout + co;
      const T* r = radial.data() + pair * nr;
      const double beta = phase.empty() ? 0.0 : static_cast<double>(phase[pair]);
      const double cb = std::cos(beta), sb = std::sin(beta);
      double dbeta = 0.0;
      for (int t = 0; t < kk; ++t) {
        const double gre = upstream.re[upstream.index(t, ci, co)];
        const double gim = upstream.im[upstream.index(t, ci, co)];
        // cotangent of the un-rotated sum A = sum_j R_j basis_j
        const double dare = cb * gre + sb * gim;
        const double daim = -sb * gre + cb * gim;
        double are = 0.0, aim = 0.0;
        for (int j = 0; j < nr; ++j) {
          const double bre = basis.re[static_cast<std::size_t>(t) * nr + j];
          const double bim = basis.im[static_cast<std::size_t>(t) * nr + j];
          d_radial[pair * nr + j] += static_cast<T>(dare * bre + daim * bim);
          are += static_cast<double>(r[j]) * bre;
          aim += static_cast<double>(r[j]) * bim;
        }
        const double kre = cb * are - sb * aim;
        const double kim = sb * are + cb * aim;
        dbeta += -kim * gre + kre * gim;
      }
      if (!d_phase.empty()) d_phase[pair] += static_cast<T>(dbeta);
    }
  }
}

}  // namespace hnet
