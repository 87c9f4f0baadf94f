#pragma once

// Real cross-correlation via im2col + GEMM, and the packing of complex kernel
// banks into real kernels so that one real correlation evaluates every
// complex stream-to-stream correlation of a layer.

#include <Eigen/Core>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnet/filters.hpp"
#include "hnet/tensor.hpp"

namespace hnet {

enum class Padding { Same, Valid };

struct ConvGeometry {
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  static ConvGeometry make(int k, Padding p, int stride = 1) {
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    return {k, stride, p == Padding::Same ? (k - 1) / 2 : 0};
  }
  int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// col has one row per output pixel, columns ordered (ky, kx, c).
template <class T>
void im2col(const T* img, int H, int W, int C, const ConvGeometry& g, int Ho, int Wo, T* col) {
  const int k = g.kernel;
  const std::size_t row_len = static_cast<std::size_t>(k) * k * C;
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      T* row = col + (static_cast<std::size_t>(oy) * Wo + ox) * row_len;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * g.stride + ky - g.pad;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * g.stride + kx - g.pad;
          T* dst = row + (static_cast<std::size_t>(ky) * k + kx) * C;
          if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
            std::fill(dst, dst + C, T(0));
          } else {
            const T* src = img + (static_cast<std::size_t>(iy) * W + ix) * C;
            std::copy(src, src + C, dst);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int H, int W, int C, const ConvGeometry& g, int Ho, int Wo, T* img) {
  const int k = g.kernel;
  const std::size_t row_len = static_cast<std::size_t>(k) * k * C;
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      const T* row = col + (static_cast<std::size_t>(oy) * Wo + ox) * row_len;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * g.stride + ky - g.pad;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * g.stride + kx - g.pad;
          if (ix < 0 || ix >= W) continue;
          const T* src = row + (static_cast<std::size_t>(ky) * k + kx) * C;
          T* dst = img + (static_cast<std::size_t>(iy) * W + ix) * C;
          for (int c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace detail

/// y[n, oy, ox, co] = sum_{ky,kx,ci} K[(ky*k+kx)*Cin+ci, co] x[n, oy*s+ky-pad, ox*s+kx-pad, ci]
/// with zero padding. No kernel flip (cross-correlation).
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, std::span<const T> kernel, int cout, const ConvGeometry& g) {
  const Shape s = x.shape;
  const int Ho = g.out_size(s.h), Wo = g.out_size(s.w);
  if (Ho < 1 || Wo < 1) {
    throw std::invalid_argument("conv2d: kernel " + std::to_string(g.kernel) + " larger than padded input " +
                                to_string(s));
  }
  const int rows = g.kernel * g.kernel * s.c;
  if (kernel.size() != static_cast<std::size_t>(rows) * cout) {
    throw std::invalid_argument("conv2d: kernel has " + std::to_string(kernel.size()) + " entries, expected " +
                                std::to_string(static_cast<std::size_t>(rows) * cout) + " (channel mismatch)");
  }
  Tensor<T> y({s.n, Ho, Wo, cout});
  detail::RowMatrix<T> col(static_cast<Eigen::Index>(Ho) * Wo, rows);
  Eigen::Map<const detail::RowMatrix<T>> K(kernel.data(), rows, cout);
  for (int n = 0; n < s.n; ++n) {
    detail::im2col(x.item(n), s.h, s.w, s.c, g, Ho, Wo, col.data());
    Eigen::Map<detail::RowMatrix<T>> out(y.item(n), static_cast<Eigen::Index>(Ho) * Wo, cout);
    out.noalias() = col * K;
  }
  return y;
}

/// Accumulates dL/dK into d_kernel and, when dx is non-null, dL/dx into *dx.
template <class T>
void conv2d_backward(const Tensor<T>& x, std::span<const T> kernel, int cout, const ConvGeometry& g,
                     const Tensor<T>& dy, Tensor<T>* dx, std::span<T> d_kernel) {
  const Shape s = x.shape;
  const int Ho = g.out_size(s.h), Wo = g.out_size(s.w);
  const int rows = g.kernel * g.kernel * s.c;
  if (!(dy.shape == Shape{s.n, Ho, Wo, cout})) throw std::invalid_argument("conv2d_backward: dy shape mismatch");
  detail::RowMatrix<T> col(static_cast<Eigen::Index>(Ho) * Wo, rows);
  detail::RowMatrix<T> dcol;
  Eigen::Map<const detail::RowMatrix<T>> K(kernel.data(), rows, cout);
  const bool want_dk = !d_kernel.empty();
  if (dx != nullptr && !(dx->shape == s)) *dx = Tensor<T>(s);
  for (int n = 0; n < s.n; ++n) {
    Eigen::Map<const detail::RowMatrix<T>> g_out(dy.item(n), static_cast<Eigen::Index>(Ho) * Wo, cout);
    if (want_dk) {
      detail::im2col(x.item(n), s.h, s.w, s.c, g, Ho, Wo, col.data());
      Eigen::Map<detail::RowMatrix<T>> dK(d_kernel.data(), rows, cout);
      dK.noalias() += col.transpose() * g_out;
    }
    if (dx != nullptr) {
      dcol.noalias() = g_out * K.transpose();
      detail::col2im_add(dcol.data(), s.h, s.w, s.c, g, Ho, Wo, dx->item(n));
    }
  }
}

/// Channel of (stream, part, channel) in a packed multi-stream complex tensor;
/// part 0 is the real plane, 1 the imaginary plane.
inline int packed_channel(int stream, int part, int channel, int channels) {
  return (stream * 2 + part) * channels + channel;
}

/// Adds the real 2x2 block form of a complex bank (conjugated if requested)
/// into a real kernel laid out [k*k][in_total][out_total]:
///   re_out += W_re * re_in - W_im * im_in,  im_out += W_im * re_in + W_re * im_in.
template <class T>
void add_complex_bank(const ComplexKernelBank<T>& bank, bool conjugate, int in_stream, int out_stream,
                      int in_total, int out_total, std::span<T> real_kernel) {
  const int kk = bank.kernel_size * bank.kernel_size;
  const int cin = bank.in_channels, cout = bank.out_channels;
  const T sign = conjugate ? T(-1) : T(1);
  for (int t = 0; t < kk; ++t) {
    for (int ci = 0; ci < cin; ++ci) {
      const std::size_t row_re = static_cast<std::size_t>(t) * in_total + packed_channel(in_stream, 0, ci, cin);
      const std::size_t row_im = static_cast<std::size_t>(t) * in_total + packed_channel(in_stream, 1, ci, cin);
      for (int co = 0; co < cout; ++co) {
        const T wr = bank.re[bank.index(t, ci, co)];
        const T wi = sign * bank.im[bank.index(t, ci, co)];
        const int col_re = packed_channel(out_stream, 0, co, cout);
        const int col_im = packed_channel(out_stream, 1, co, cout);
        real_kernel[row_re * out_total + col_re] += wr;
        real_kernel[row_im * out_total + col_re] -= wi;
        real_kernel[row_re * out_total + col_im] += wi;
        real_kernel[row_im * out_total + col_im] += wr;
      }
    }
  }
}

/// Transpose of add_complex_bank: accumulates the bank cotangent.
template <class T>
void accumulate_bank_cotangent(std::span<const T> real_kernel_grad, bool conjugate, int in_stream,
                               int out_stream, int in_total, int out_total, ComplexKernelBank<T>& d_bank) {
  const int kk = d_bank.kernel_size * d_bank.kernel_size;
  const int cin = d_bank.in_channels, cout = d_bank.out_channels;
  const T sign = conjugate ? T(-1) : T(1);
  for (int t = 0; t < kk; ++t) {
    for (int ci = 0; ci < cin; ++ci) {
      const std::size_t row_re = static_cast<std::size_t>(t) * in_total + packed_channel(in_stream, 0, ci, cin);
      const std::size_t row_im = static_cast<std::size_t>(t) * in_total + packed_channel(in_stream, 1, ci, cin);
      for (int co = 0; co < cout; ++co) {
        const int col_re = packed_channel(out_stream, 0, co, cout);
        const int col_im = packed_channel(out_stream, 1, co, cout);
        const T g_rr = real_kernel_grad[row_re * out_total + col_re];
        const T g_ir = real_kernel_grad[row_im * out_total + col_re];
        const T g_ri = real_kernel_grad[row_re * out_total + col_im];
        const T g_ii = real_kernel_grad[row_im * out_total + col_im];
        d_bank.re[d_bank.index(t, ci, co)] += g_rr + g_ii;
        d_bank.im[d_bank.index(t, ci, co)] += sign * (g_ri - g_ir);
      }
    }
  }
}

/// Complex cross-correlation of a single-order map with a bank, evaluated as
/// four real correlations (packed into one). No argument is conjugated. The
/// output carries order F.order + W.order.
template <class T>
ComplexFeatureMap<T> complex_corr2d(const ComplexFeatureMap<T>& F, const ComplexKernelBank<T>& W, int stride = 1,
                                    Padding padding = Padding::Same) {
  if (F.real.shape.c != W.in_channels) {
    throw std::invalid_argument("complex_corr2d: input has " + std::to_string(F.real.shape.c) +
                                " channels, bank expects " + std::to_string(W.in_channels));
  }
  const int k = W.kernel_size;
  std::vector<T> K(static_cast<std::size_t>(k) * k * 2 * W.in_channels * 2 * W.out_channels, T(0));
  add_complex_bank<T>(W, false, 0, 0, 2 * W.in_channels, 2 * W.out_channels, K);
  const auto g = ConvGeometry::make(k, padding, stride);
  return unpack(conv2d_forward<T>(pack(F), K, 2 * W.out_channels, g), F.rotation_order + W.order);
}

template <class T>
struct ComplexCorrGradient {
  ComplexFeatureMap<T> d_input;
  ComplexKernelBank<T> d_bank;
};

template <class T>
ComplexCorrGradient<T> complex_corr2d_backward(const ComplexFeatureMap<T>& F, const ComplexKernelBank<T>& W,
                                               const ComplexFeatureMap<T>& dY, int stride = 1,
                                               Padding padding = Padding::Same) {
  const int k = W.kernel_size;
  const int in_total = 2 * W.in_channels, out_total = 2 * W.out_channels;
  std::vector<T> K(static_cast<std::size_t>(k) * k * in_total * out_total, T(0));
  add_complex_bank<T>(W, false, 0, 0, in_total, out_total, K);
  std::vector<T> dK(K.size(), T(0));
  const auto g = ConvGeometry::make(k, padding, stride);
  const Tensor<T> x = pack(F);
  Tensor<T> dx;
  conv2d_backward<T>(x, K, out_total, g, pack(dY), &dx, dK);
  ComplexCorrGradient<T> out{unpack(dx, F.rotation_order),
                             ComplexKernelBank<T>(k, W.in_channels, W.out_channels, W.order)};
  accumulate_bank_cotangent<T>(dK, false, 0, 0, in_total, out_total, out.d_bank);
  return out;
}

}  // namespace hnet
