#pragma once

// Per-layer compute on feature maps with forward and reverse-mode kernels.
//
// Multi-stream complex activations are packed into one real NHWC tensor whose
// channel index is (stream * 2 + part) * channels + channel, part 0 = real.
// Nonlinearities act on the magnitude of each (stream, channel) pair and leave
// the phase untouched.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnet/conv.hpp"
#include "hnet/tensor.hpp"

namespace hnet {

struct StreamLayout {
  int streams = 1;
  int channels = 0;

  int total() const { return streams * 2 * channels; }
  int pairs() const { return streams * channels; }
};

/// Guard added under the square root of |z|^2 wherever a magnitude is
/// differentiated, so the derivative stays finite at z = 0. Forward values
/// use the exact magnitude.
inline constexpr double kMagnitudeGuard = 1e-12;
inline constexpr double kBatchNormEpsilon = 1e-5;

namespace detail {

inline void check_layout(const Shape& s, const StreamLayout& L, const char* op) {
  if (s.c != L.total()) {
    throw std::invalid_argument(std::string(op) + ": tensor has " + std::to_string(s.c) +
                                " channels, layout expects " + std::to_string(L.total()));
  }
}

/// Calls f(re_index, im_index, pair) for every complex entry.
template <class F>
void for_each_complex(const Shape& s, const StreamLayout& L, F&& f) {
  const std::size_t pixels = static_cast<std::size_t>(s.n) * s.h * s.w;
  for (std::size_t p = 0; p < pixels; ++p) {
    const std::size_t base = p * s.c;
    for (int st = 0; st < L.streams; ++st) {
      for (int c = 0; c < L.channels; ++c) {
        f(base + packed_channel(st, 0, c, L.channels), base + packed_channel(st, 1, c, L.channels),
          st * L.channels + c);
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// C-ReLU: ReLU(|z| + b) * z / |z|

template <class T>
Tensor<T> c_relu_forward(const Tensor<T>& x, const StreamLayout& L, std::span<const T> bias) {
  detail::check_layout(x.shape, L, "c_relu");
  if (bias.size() != static_cast<std::size_t>(L.pairs())) throw std::invalid_argument("c_relu: bias size mismatch");
  Tensor<T> y(x.shape);
  detail::for_each_complex(x.shape, L, [&](std::size_t ir, std::size_t ii, int pair) {
    const T a = x.data[ir], b = x.data[ii];
    const T mag = std::hypot(a, b);
    const T t = mag + bias[pair];
    const T f = t > T(0) && mag > T(0) ? t / mag : T(0);
    y.data[ir] = a * f;
    y.data[ii] = b * f;
  });
  return y;
}

template <class T>
void c_relu_backward(const Tensor<T>& x, const StreamLayout& L, std::span<const T> bias, const Tensor<T>& dy,
                     Tensor<T>* dx, std::span<T> d_bias) {
  if (dx != nullptr) *dx = Tensor<T>(x.shape);
  detail::for_each_complex(x.shape, L, [&](std::size_t ir, std::size_t ii, int pair) {
    const T a = x.data[ir], b = x.data[ii];
    if (a == T(0) && b == T(0)) return;  // subgradient 0 at the origin
    const T mag = std::sqrt(a * a + b * b + T(kMagnitudeGuard));
    const T t = mag + bias[pair];
    if (!(t > T(0))) return;
    const T f = t / mag;
    const T proj = dy.data[ir] * a + dy.data[ii] * b;
    // df/dmag = -bias / mag^2, dmag/da = a / mag
    const T g = proj * (-bias[pair] / (mag * mag)) / mag;
    if (dx != nullptr) {
      dx->data[ir] = dy.data[ir] * f + g * a;
      dx->data[ii] = dy.data[ii] * f + g * b;
    }
    if (!d_bias.empty()) d_bias[pair] += proj / mag;
  });
}

template <class T>
ComplexFeatureMap<T> c_relu(const ComplexFeatureMap<T>& F, std::span<const T> bias) {
  const StreamLayout L{1, F.real.shape.c};
  return unpack(c_relu_forward<T>(pack(F), L, bias), F.rotation_order);
}

// ---------------------------------------------------------------------------
// Complex batch normalization: |z| -> gamma |z| / sqrt(E[|z|^2] + eps), phase
// preserved, second moment over batch and space per (stream, channel).

template <class T>
std::vector<T> c_batchnorm_moments(const Tensor<T>& x, const StreamLayout& L) {
  detail::check_layout(x.shape, L, "c_batchnorm");
  std::vector<double> acc(L.pairs(), 0.0);
  detail::for_each_complex(x.shape, L, [&](std::size_t ir, std::size_t ii, int pair) {
    acc[pair] += static_cast<double>(x.data[ir]) * x.data[ir] + static_cast<double>(x.data[ii]) * x.data[ii];
  });
  const double count = static_cast<double>(x.shape.n) * x.shape.h * x.shape.w;
  std::vector<T> out(L.pairs());
  for (int p = 0; p < L.pairs(); ++p) out[p] = static_cast<T>(acc[p] / count);
  return out;
}

template <class T>
Tensor<T> c_batchnorm_forward(const Tensor<T>& x, const StreamLayout& L, std::span<const T> gamma,
                              std::span<const T> moments, T eps = T(kBatchNormEpsilon)) {
  detail::check_layout(x.shape, L, "c_batchnorm");
  if (x.shape.n < 1) throw std::invalid_argument("c_batchnorm: empty batch");
  Tensor<T> y(x.shape);
  std::vector<T> scale(L.pairs());
  for (int p = 0; p < L.pairs(); ++p) scale[p] = gamma[p] / std::sqrt(moments[p] + eps);
  detail::for_each_complex(x.shape, L, [&](std::size_t ir, std::size_t ii, int pair) {
    y.data[ir] = x.data[ir] * scale[pair];
    y.data[ii] = x.data[ii] * scale[pair];
  });
  return y;
}

/// batch_stats = true differentiates through the moments (training mode).
template <class T>
void c_batchnorm_backward(const Tensor<T>& x, const StreamLayout& L, std::span<const T> gamma,
                          std::span<const T> moments, bool batch_stats, const Tensor<T>& dy, Tensor<T>* dx,
                          std::span<T> d_gamma, T eps = T(kBatchNormEpsilon)) {
  const int P = L.pairs();
  std::vector<double> d_scale(P, 0.0);
  detail::for_each_complex(x.shape, L, [&](std::size_t ir, std::size_t ii, int pair) {
    d_scale[pair] += static_cast<double>(dy.data[ir]) * x.data[ir] + static_cast<double>(dy.data[ii]) * x.data[ii];
  });
  std::vector<T> scale(P), d_moment(P, T(0));
  const double count = static_cast<double>(x.shape.n) * x.shape.h * x.shape.w;
  for (int p = 0; p < P; ++p) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(moments[p]) + eps);
    scale[p] = static_cast<T>(gamma[p] * inv);
    if (!d_gamma.empty()) d_gamma[p] += static_cast<T>(d_scale[p] * inv);
    if (batch_stats) {
      // ds/dv = -gamma/2 (v+eps)^{-3/2}; dv/da = 2a/N
      d_moment[p] = static_cast<T>(d_scale[p] * (-0.5 * gamma[p] * inv * inv * inv) * 2.0 / count);
    }
  }
  if (dx == nullptr) return;
  *dx = Tensor<T>(x.shape);
  detail::for_each_complex(x.shape, L, [&](std::size_t ir, std::size_t ii, int pair) {
    dx->data[ir] = dy.data[ir] * scale[pair] + d_moment[pair] * x.data[ir];
    dx->data[ii] = dy.data[ii] * scale[pair] + d_moment[pair] * x.data[ii];
  });
}

/// Running second-moment statistics of a complex batch-norm layer.
template <class T>
struct BatchNormState {
  std::vector<T> running;  // E[|z|^2] per channel
  T momentum = T(0.9);
  T eps = T(kBatchNormEpsilon);

  explicit BatchNormState(int channels = 0) : running(channels, T(1)) {}
};

template <class T>
ComplexFeatureMap<T> c_batchnorm(const ComplexFeatureMap<T>& F, BatchNormState<T>& state, std::span<const T> gamma,
                                 bool train_mode) {
  const StreamLayout L{1, F.real.shape.c};
  const Tensor<T> x = pack(F);
  std::vector<T> moments;
  if (train_mode) {
    moments = c_batchnorm_moments(x, L);
    for (int p = 0; p < L.pairs(); ++p) {
      state.running[p] = state.momentum * state.running[p] + (T(1) - state.momentum) * moments[p];
    }
  } else {
    moments = state.running;
  }
  return unpack(c_batchnorm_forward<T>(x, L, gamma, moments, state.eps), F.rotation_order);
}

// ---------------------------------------------------------------------------
// Mean pooling (linear; acts identically on every real channel)

inline int pooled_size(int in, int window, int stride) { return (in - window) / stride + 1; }

template <class T>
Tensor<T> mean_pool_forward(const Tensor<T>& x, int window, int stride) {
  if (window < 1 || stride < 1) throw std::invalid_argument("mean_pool: window and stride must be >= 1");
  const Shape s = x.shape;
  if (window > s.h || window > s.w) {
    throw std::invalid_argument("mean_pool: window " + std::to_string(window) + " larger than map " + to_string(s));
  }
  const int Ho = pooled_size(s.h, window, stride), Wo = pooled_size(s.w, window, stride);
  Tensor<T> y({s.n, Ho, Wo, s.c});
  const T inv = T(1) / T(window * window);
  for (int n = 0; n < s.n; ++n)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        T* dst = &y(n, oy, ox, 0);
        for (int wy = 0; wy < window; ++wy)
          for (int wx = 0; wx < window; ++wx) {
            const T* src = &x(n, oy * stride + wy, ox * stride + wx, 0);
            for (int c = 0; c < s.c; ++c) dst[c] += src[c];
          }
        for (int c = 0; c < s.c; ++c) dst[c] *= inv;
      }
  return y;
}

template <class T>
Tensor<T> mean_pool_backward(const Shape& in_shape, int window, int stride, const Tensor<T>& dy) {
  Tensor<T> dx(in_shape);
  const T inv = T(1) / T(window * window);
  for (int n = 0; n < dy.shape.n; ++n)
    for (int oy = 0; oy < dy.shape.h; ++oy)
      for (int ox = 0; ox < dy.shape.w; ++ox) {
        const T* g = &dy(n, oy, ox, 0);
        for (int wy = 0; wy < window; ++wy)
          for (int wx = 0; wx < window; ++wx) {
            T* dst = &dx(n, oy * stride + wy, ox * stride + wx, 0);
            for (int c = 0; c < in_shape.c; ++c) dst[c] += g[c] * inv;
          }
      }
  return dx;
}

template <class T>
ComplexFeatureMap<T> mean_pool(const ComplexFeatureMap<T>& F, int window, int stride) {
  return {mean_pool_forward(F.real, window, stride), mean_pool_forward(F.imag, window, stride), F.rotation_order};
}

// ---------------------------------------------------------------------------
// Max pooling, real maps only (baseline CNN)

template <class T>
Tensor<T> max_pool_forward(const Tensor<T>& x, int window, int stride, std::vector<std::size_t>* argmax) {
  if (window < 1 || stride < 1) throw std::invalid_argument("max_pool: window and stride must be >= 1");
  const Shape s = x.shape;
  if (window > s.h || window > s.w) throw std::invalid_argument("max_pool: window larger than map");
  const int Ho = pooled_size(s.h, window, stride), Wo = pooled_size(s.w, window, stride);
  Tensor<T> y({s.n, Ho, Wo, s.c});
  if (argmax != nullptr) argmax->assign(y.size(), 0);
  for (int n = 0; n < s.n; ++n)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox)
        for (int c = 0; c < s.c; ++c) {
          std::size_t best = x.index(n, oy * stride, ox * stride, c);
          for (int wy = 0; wy < window; ++wy)
            for (int wx = 0; wx < window; ++wx) {
              const std::size_t i = x.index(n, oy * stride + wy, ox * stride + wx, c);
              if (x.data[i] > x.data[best]) best = i;
            }
          const std::size_t o = y.index(n, oy, ox, c);
          y.data[o] = x.data[best];
          if (argmax != nullptr) (*argmax)[o] = best;
        }
  return y;
}

template <class T>
Tensor<T> max_pool_backward(const Shape& in_shape, const std::vector<std::size_t>& argmax, const Tensor<T>& dy) {
  Tensor<T> dx(in_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx.data[argmax[o]] += dy.data[o];
  return dx;
}

// ---------------------------------------------------------------------------
// Separable Gaussian blur, truncated at +-3 sigma, renormalized, edges clamped.

inline std::vector<double> gaussian_taps(double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    taps[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    total += taps[t + radius];
  }
  for (auto& v : taps) v /= total;
  return taps;
}

namespace detail {

/// One separable pass along rows (axis 0 = height) or columns (axis 1);
/// transpose = true applies the adjoint.
template <class T>
Tensor<T> blur_pass(const Tensor<T>& x, const std::vector<double>& taps, int axis, bool transpose) {
  const Shape s = x.shape;
  const int R = static_cast<int>(taps.size() / 2);
  const int len = axis == 0 ? s.h : s.w;
  Tensor<T> y(s);
  for (int n = 0; n < s.n; ++n)
    for (int yy = 0; yy < s.h; ++yy)
      for (int xx = 0; xx < s.w; ++xx) {
        const int pos = axis == 0 ? yy : xx;
        for (int t = -R; t <= R; ++t) {
          const int q = std::clamp(pos + t, 0, len - 1);
          const int qy = axis == 0 ? q : yy, qx = axis == 0 ? xx : q;
          const T g = static_cast<T>(taps[t + R]);
          if (!transpose) {
            const T* src = &x(n, qy, qx, 0);
            T* dst = &y(n, yy, xx, 0);
            for (int c = 0; c < s.c; ++c) dst[c] += g * src[c];
          } else {
            const T* src = &x(n, yy, xx, 0);
            T* dst = &y(n, qy, qx, 0);
            for (int c = 0; c < s.c; ++c) dst[c] += g * src[c];
          }
        }
      }
  return y;
}

}  // namespace detail

template <class T>
Tensor<T> gaussian_blur_forward(const Tensor<T>& x, double sigma) {
  const auto taps = gaussian_taps(sigma);
  if (taps.size() == 1) return x;
  return detail::blur_pass(detail::blur_pass(x, taps, 1, false), taps, 0, false);
}

template <class T>
Tensor<T> gaussian_blur_backward(const Tensor<T>& dy, double sigma) {
  const auto taps = gaussian_taps(sigma);
  if (taps.size() == 1) return dy;
  return detail::blur_pass(detail::blur_pass(dy, taps, 0, true), taps, 1, true);
}

template <class T>
ComplexFeatureMap<T> gaussian_blur(const ComplexFeatureMap<T>& F, double sigma) {
  return {gaussian_blur_forward(F.real, sigma), gaussian_blur_forward(F.imag, sigma), F.rotation_order};
}

// ---------------------------------------------------------------------------
// Magnitude and phase

template <class T>
Tensor<T> magnitude(const ComplexFeatureMap<T>& F) {
  Tensor<T> out(F.real.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::hypot(F.real.data[i], F.imag.data[i]);
  return out;
}

/// atan2(im, re), defined as 0 where the magnitude is below 1e-12.
template <class T>
Tensor<T> phase(const ComplexFeatureMap<T>& F) {
  Tensor<T> out(F.real.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T re = F.real.data[i], im = F.imag.data[i];
    out.data[i] = std::hypot(re, im) < T(1e-12) ? T(0) : std::atan2(im, re);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Real ReLU with bias and real batch norm (baseline CNN)

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x, std::span<const T> bias) {
  if (bias.size() != static_cast<std::size_t>(x.shape.c)) throw std::invalid_argument("relu: bias size mismatch");
  Tensor<T> y(x.shape);
  const int C = x.shape.c;
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = std::max(T(0), x.data[i] + bias[i % C]);
  return y;
}

template <class T>
void relu_backward(const Tensor<T>& x, std::span<const T> bias, const Tensor<T>& dy, Tensor<T>* dx,
                   std::span<T> d_bias) {
  const int C = x.shape.c;
  if (dx != nullptr) *dx = Tensor<T>(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x.data[i] + bias[i % C] > T(0))) continue;
    if (dx != nullptr) dx->data[i] = dy.data[i];
    if (!d_bias.empty()) d_bias[i % C] += dy.data[i];
  }
}

template <class T>
struct ChannelStats {
  std::vector<T> mean;
  std::vector<T> var;
};

template <class T>
ChannelStats<T> channel_stats(const Tensor<T>& x) {
  const int C = x.shape.c;
  std::vector<double> s(C, 0.0), s2(C, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    s[i % C] += x.data[i];
    s2[i % C] += static_cast<double>(x.data[i]) * x.data[i];
  }
  const double count = static_cast<double>(x.size() / C);
  ChannelStats<T> st{std::vector<T>(C), std::vector<T>(C)};
  for (int c = 0; c < C; ++c) {
    const double m = s[c] / count;
    st.mean[c] = static_cast<T>(m);
    st.var[c] = static_cast<T>(std::max(0.0, s2[c] / count - m * m));
  }
  return st;
}

/// y = gamma (x - mean) / sqrt(var + eps); the shift lives in the following ReLU bias.
template <class T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, std::span<const T> gamma, const ChannelStats<T>& st,
                            T eps = T(kBatchNormEpsilon)) {
  const int C = x.shape.c;
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int c = static_cast<int>(i % C);
    y.data[i] = gamma[c] * (x.data[i] - st.mean[c]) / std::sqrt(st.var[c] + eps);
  }
  return y;
}

template <class T>
void batchnorm_backward(const Tensor<T>& x, std::span<const T> gamma, const ChannelStats<T>& st, bool batch_stats,
                        const Tensor<T>& dy, Tensor<T>* dx, std::span<T> d_gamma, T eps = T(kBatchNormEpsilon)) {
  const int C = x.shape.c;
  const double count = static_cast<double>(x.size() / C);
  std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0), inv(C);
  for (int c = 0; c < C; ++c) inv[c] = 1.0 / std::sqrt(static_cast<double>(st.var[c]) + eps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int c = static_cast<int>(i % C);
    const double xhat = (x.data[i] - st.mean[c]) * inv[c];
    sum_dy[c] += dy.data[i];
    sum_dy_xhat[c] += dy.data[i] * xhat;
  }
  if (!d_gamma.empty())
    for (int c = 0; c < C; ++c) d_gamma[c] += static_cast<T>(sum_dy_xhat[c]);
  if (dx == nullptr) return;
  *dx = Tensor<T>(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int c = static_cast<int>(i % C);
    if (batch_stats) {
      const double xhat = (x.data[i] - st.mean[c]) * inv[c];
      dx->data[i] = static_cast<T>(gamma[c] * inv[c] *
                                   (dy.data[i] - sum_dy[c] / count - xhat * sum_dy_xhat[c] / count));
    } else {
      dx->data[i] = static_cast<T>(gamma[c] * inv[c] * dy.data[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Readout: spatial mean of the stream's guarded magnitudes (complex) or of the
// values (real), plus a per-class bias. Output shape [n, 1, 1, classes].

template <class T>
Tensor<T> readout_forward(const Tensor<T>& x, const StreamLayout* L, int stream, std::span<const T> bias) {
  const Shape s = x.shape;
  const int C = L != nullptr ? L->channels : s.c;
  if (bias.size() != static_cast<std::size_t>(C)) throw std::invalid_argument("readout: bias size mismatch");
  Tensor<T> y({s.n, 1, 1, C});
  const T inv = T(1) / T(s.h * s.w);
  for (int n = 0; n < s.n; ++n) {
    for (int yy = 0; yy < s.h; ++yy)
      for (int xx = 0; xx < s.w; ++xx)
        for (int c = 0; c < C; ++c) {
          T v;
          if (L != nullptr) {
            const T a = x(n, yy, xx, packed_channel(stream, 0, c, C));
            const T b = x(n, yy, xx, packed_channel(stream, 1, c, C));
            v = std::hypot(a, b);
          } else {
            v = x(n, yy, xx, c);
          }
          y(n, 0, 0, c) += v * inv;
        }
    for (int c = 0; c < C; ++c) y(n, 0, 0, c) += bias[c];
  }
  return y;
}

template <class T>
void readout_backward(const Tensor<T>& x, const StreamLayout* L, int stream, const Tensor<T>& dy, Tensor<T>* dx,
                      std::span<T> d_bias) {
  const Shape s = x.shape;
  const int C = L != nullptr ? L->channels : s.c;
  const T inv = T(1) / T(s.h * s.w);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < C; ++c)
      if (!d_bias.empty()) d_bias[c] += dy(n, 0, 0, c);
  if (dx == nullptr) return;
  *dx = Tensor<T>(s);
  for (int n = 0; n < s.n; ++n)
    for (int yy = 0; yy < s.h; ++yy)
      for (int xx = 0; xx < s.w; ++xx)
        for (int c = 0; c < C; ++c) {
          const T g = dy(n, 0, 0, c) * inv;
          if (L != nullptr) {
            const int cr = packed_channel(stream, 0, c, C), ci = packed_channel(stream, 1, c, C);
            const T a = x(n, yy, xx, cr), b = x(n, yy, xx, ci);
            const T mag = std::sqrt(a * a + b * b + T(kMagnitudeGuard));
            (*dx)(n, yy, xx, cr) = g * a / mag;
            (*dx)(n, yy, xx, ci) = g * b / mag;
          } else {
            (*dx)(n, yy, xx, c) = g;
          }
        }
}

}  // namespace hnet
