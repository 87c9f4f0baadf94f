#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hnet {

/// NHWC extent of a dense tensor.
struct Shape {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * h * w * c;
  }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.n) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + "," + std::to_string(s.c) + "]";
}

/// Dense row-major NHWC tensor. Channels are the fastest-moving index.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(s), data(s.size(), fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  std::size_t index(int n, int y, int x, int c) const {
    return ((static_cast<std::size_t>(n) * shape.h + y) * shape.w + x) * shape.c + c;
  }
  T& operator()(int n, int y, int x, int c) { return data[index(n, y, x, c)]; }
  const T& operator()(int n, int y, int x, int c) const { return data[index(n, y, x, c)]; }

  std::span<T> values() { return data; }
  std::span<const T> values() const { return data; }

  /// Pointer to the h*w*c block of one batch item.
  T* item(int n) { return data.data() + static_cast<std::size_t>(n) * shape.h * shape.w * shape.c; }
  const T* item(int n) const {
    return data.data() + static_cast<std::size_t>(n) * shape.h * shape.w * shape.c;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!(a.shape == b.shape)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + to_string(a.shape) +
                                " vs " + to_string(b.shape));
  }
}

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  require_same_shape(dst, src, "add_into");
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> out(t.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

/// Complex-valued feature maps of a single rotation order, stored as separate
/// real and imaginary planes of identical NHWC shape.
template <class T>
struct ComplexFeatureMap {
  Tensor<T> real;
  Tensor<T> imag;
  int rotation_order = 0;

  ComplexFeatureMap() = default;
  ComplexFeatureMap(Shape s, int order) : real(s), imag(s), rotation_order(order) {}
  ComplexFeatureMap(Tensor<T> re, Tensor<T> im, int order)
      : real(std::move(re)), imag(std::move(im)), rotation_order(order) {
    require_same_shape(real, imag, "ComplexFeatureMap");
  }

  /// Real image as a 0-equivariant complex map with zero imaginary part.
  static ComplexFeatureMap from_real(Tensor<T> re) {
    Tensor<T> im(re.shape);
    return ComplexFeatureMap(std::move(re), std::move(im), 0);
  }

  const Shape& shape() const { return real.shape; }
};

/// Single-stream complex map -> real tensor with 2C channels: real parts in
/// [0, C), imaginary parts in [C, 2C).
template <class T>
Tensor<T> pack(const ComplexFeatureMap<T>& f) {
  require_same_shape(f.real, f.imag, "pack");
  const Shape s = f.real.shape;
  Tensor<T> out({s.n, s.h, s.w, 2 * s.c});
  const std::size_t pixels = static_cast<std::size_t>(s.n) * s.h * s.w;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < s.c; ++c) {
      out.data[p * 2 * s.c + c] = f.real.data[p * s.c + c];
      out.data[p * 2 * s.c + s.c + c] = f.imag.data[p * s.c + c];
    }
  }
  return out;
}

template <class T>
ComplexFeatureMap<T> unpack(const Tensor<T>& packed, int order) {
  if (packed.shape.c % 2 != 0) throw std::invalid_argument("unpack: odd channel count");
  const int C = packed.shape.c / 2;
  ComplexFeatureMap<T> f({packed.shape.n, packed.shape.h, packed.shape.w, C}, order);
  const std::size_t pixels = static_cast<std::size_t>(packed.shape.n) * packed.shape.h * packed.shape.w;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < C; ++c) {
      f.real.data[p * C + c] = packed.data[p * 2 * C + c];
      f.imag.data[p * C + c] = packed.data[p * 2 * C + C + c];
    }
  }
  return f;
}

}  // namespace hnet
