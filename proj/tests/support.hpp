#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <set>
#include <stdexcept>
#include <random>
#include <vector>

#include "hnet/filters.hpp"
#include "hnet/graph.hpp"
#include "hnet/loss.hpp"
#include "hnet/model.hpp"
#include "hnet/train.hpp"
#include "hnet/tensor.hpp"

namespace hnet::test {

template <class T = double>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.data) v = static_cast<T>(u(rng));
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

/// One counter-clockwise quarter turn of every channel of an (h == w) map,
/// written out independently of the library.
template <class T>
Tensor<T> quarter_turn(const Tensor<T>& x) {
  const int n = x.shape.h;
  Tensor<T> out(x.shape);
  for (int b = 0; b < x.shape.n; ++b)
    for (int y = 0; y < n; ++y)
      for (int xx = 0; xx < n; ++xx)
        for (int c = 0; c < x.shape.c; ++c) out(b, y, xx, c) = x(b, xx, n - 1 - y, c);
  return out;
}

/// Central difference of f with respect to v[i].
inline double central_difference(const std::function<double()>& f, double& v, double eps = 1e-5) {
  const double keep = v;
  v = keep + eps;
  const double a = f();
  v = keep - eps;
  const double b = f();
  v = keep;
  return (a - b) / (2.0 * eps);
}

inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Weighted sum of all entries, a scalar probe for gradient checks.
template <class T>
double dot(const Tensor<T>& a, const Tensor<T>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.data[i]) * w.data[i];
  return s;
}

/// Nested-loop complex cross-correlation with zero padding:
/// y[n,oy,ox,co] = sum_{ky,kx,ci} W[ky,kx,ci,co] F[n, oy*s+ky-pad, ox*s+kx-pad, ci].
template <class T>
ComplexFeatureMap<T> brute_corr(const ComplexFeatureMap<T>& F, const ComplexKernelBank<T>& W, int stride, int pad) {
  const Shape s = F.real.shape;
  const int k = W.kernel_size;
  const int Ho = (s.h + 2 * pad - k) / stride + 1, Wo = (s.w + 2 * pad - k) / stride + 1;
  ComplexFeatureMap<T> Y({s.n, Ho, Wo, W.out_channels}, F.rotation_order + W.order);
  for (int n = 0; n < s.n; ++n)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox)
        for (int co = 0; co < W.out_channels; ++co) {
          std::complex<double> acc = 0.0;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int y = oy * stride + ky - pad, x = ox * stride + kx - pad;
              if (y < 0 || y >= s.h || x < 0 || x >= s.w) continue;
              for (int ci = 0; ci < W.in_channels; ++ci) {
                const std::size_t wi = W.index(ky * k + kx, ci, co);
                acc += std::complex<double>(W.re[wi], W.im[wi]) *
                       std::complex<double>(F.real(n, y, x, ci), F.imag(n, y, x, ci));
              }
            }
          Y.real(n, oy, ox, co) = static_cast<T>(acc.real());
          Y.imag(n, oy, ox, co) = static_cast<T>(acc.imag());
        }
  return Y;
}

inline ComplexFeatureMap<double> random_map(Shape s, int order, std::uint64_t seed) {
  return {random_tensor(s, seed), random_tensor(s, seed + 1), order};
}

inline ComplexKernelBank<double> random_bank(int k, int cin, int cout, int order, std::uint64_t seed) {
  ComplexKernelBank<double> b(k, cin, cout, order);
  b.re = test::random_vector(b.re.size(), seed);
  b.im = test::random_vector(b.im.size(), seed + 1);
  return b;
}

inline double max_diff(const ComplexFeatureMap<double>& a, const ComplexFeatureMap<double>& b) {
  if (!(a.real.shape == b.real.shape)) throw std::invalid_argument("max_diff: shape mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.real.size(); ++i) {
    d = std::max(d, std::abs(a.real.data[i] - b.real.data[i]));
    d = std::max(d, std::abs(a.imag.data[i] - b.imag.data[i]));
  }
  return d;
}

inline ComplexFeatureMap<double> rotate_phase(const ComplexFeatureMap<double>& F, double theta) {
  auto out = F;
  const double c = std::cos(theta), s = std::sin(theta);
  for (std::size_t i = 0; i < F.real.size(); ++i) {
    out.real.data[i] = c * F.real.data[i] - s * F.imag.data[i];
    out.imag.data[i] = s * F.real.data[i] + c * F.imag.data[i];
  }
  return out;
}

/// Random chain of harmonic blocks over stream orders in [-2, 2], ending in
/// the target order 0, with correctly labelled edges.
inline NetworkGraph random_stream_graph(std::mt19937_64& rng, int blocks) {
  NetworkGraph g;
  g.height = g.width = 9;
  g.target_order = 0;
  std::vector<int> current{0};
  for (int b = 0; b < blocks; ++b) {
    LayerSpec L;
    L.kind = LayerKind::HConv;
    L.channels = 1;
    L.kernel = 3;
    std::set<int> outs;
    const int n_out = 1 + static_cast<int>(rng() % 3);
    while (static_cast<int>(outs.size()) < n_out) outs.insert(static_cast<int>(rng() % 5) - 2);
    if (b == blocks - 1) outs = {0};
    L.out_orders.assign(outs.begin(), outs.end());
    for (int p : L.out_orders) {
      bool any = false;
      for (int n : current) {
        if (rng() % 2 || (!any && n == current.back())) {
          L.edges.push_back({n, p, p - n});
          any = true;
        }
      }
    }
    current = L.out_orders;
    g.layers.push_back(L);
  }
  LayerSpec R;
  R.kind = LayerKind::Readout;
  g.layers.push_back(R);
  return g;
}

/// Every input-to-readout path whose order sum differs from the target,
/// enumerated without pruning.
inline std::set<OrderPath> exhaustive_violations(const NetworkGraph& g) {
  std::set<OrderPath> out;
  std::vector<int> blocks;
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    if (g.layers[i].kind == LayerKind::HConv) blocks.push_back(static_cast<int>(i));
  OrderPath path;
  std::function<void(std::size_t, int, int)> go = [&](std::size_t bi, int stream, int sum) {
    if (bi == blocks.size()) {
      if (stream == g.target_order && sum != g.target_order) out.insert(path);
      return;
    }
    const auto& L = g.layers[blocks[bi]];
    for (std::size_t e = 0; e < L.edges.size(); ++e) {
      if (L.edges[e].in_order != stream) continue;
      path.push_back({blocks[bi], static_cast<int>(e)});
      go(bi + 1, L.edges[e].out_order, sum + L.edges[e].filter_order);
      path.pop_back();
    }
  };
  go(0, 0, 0);
  return out;
}

/// Worst relative error between backprop and central differences of the
/// training-mode loss, over every parameter scalar.
inline double network_gradient_error(const std::string& config) {
  Model<double> m(parse_config(config), 3);
  const auto& s0 = m.shapes().front();
  const int n = 3;
  const auto x = random_tensor({n, s0.h, s0.w, 1}, 5, 0.0, 1.0);
  std::vector<int> labels;
  for (int i = 0; i < n; ++i) labels.push_back(i % m.graph().n_classes);
  // lift biases off zero so every C-ReLU branch is exercised
  for (auto& s : m.params().slots())
    if (s.name.find("bias") != std::string::npos) s.value = random_vector(s.value.size(), 17, -0.3, 0.1);
  train_batch_gradients(m, x, labels);
  auto loss = [&] {
    auto tr = m.forward(x, true, false);
    return cross_entropy(tr.tape.value(tr.logits()), labels);
  };
  double worst = 0.0;
  for (auto& s : m.params().slots()) {
    const auto grad = s.grad;
    for (std::size_t i = 0; i < s.value.size(); ++i) {
      const double fd = central_difference(loss, s.value[i]);
      worst = std::max(worst, relative_error(fd, grad[i], 1e-6));
    }
  }
  return worst;
}

}  // namespace hnet::test
