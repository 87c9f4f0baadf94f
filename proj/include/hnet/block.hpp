#pragma once

// Harmonic block: cross-correlations between rotation-order streams, summed
// per output order (Y_p = sum over n of W_{p-n} * F_n). Banks are stored per
// |m|; an edge of negative order uses the conjugate of the |m| bank.

#include <algorithm>
#include <cstdlib>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnet/conv.hpp"
#include "hnet/filters.hpp"
#include "hnet/tensor.hpp"

namespace hnet {

struct StreamEdge {
  int in_order = 0;
  int out_order = 0;
  int filter_order = 0;

  bool operator==(const StreamEdge&) const = default;
};

/// Every (input, output) stream pair, labelled with filter order p - n.
inline std::vector<StreamEdge> default_edges(const std::vector<int>& in_orders, const std::vector<int>& out_orders) {
  std::vector<StreamEdge> edges;
  for (int p : out_orders)
    for (int n : in_orders) edges.push_back({n, p, p - n});
  return edges;
}

/// Distinct |m| over the edges, ascending.
inline std::vector<int> bank_orders(const std::vector<StreamEdge>& edges) {
  std::vector<int> out;
  for (const auto& e : edges) out.push_back(std::abs(e.filter_order));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline int stream_index(const std::vector<int>& orders, int order) {
  const auto it = std::find(orders.begin(), orders.end(), order);
  return it == orders.end() ? -1 : static_cast<int>(it - orders.begin());
}

template <class T>
Tensor<T> pack_streams(const std::map<int, ComplexFeatureMap<T>>& maps, const std::vector<int>& orders) {
  if (orders.empty()) throw std::invalid_argument("pack_streams: no streams");
  const auto first = maps.find(orders.front());
  if (first == maps.end()) throw std::invalid_argument("missing input stream of order " + std::to_string(orders.front()));
  const Shape s = first->second.real.shape;
  const int S = static_cast<int>(orders.size());
  Tensor<T> out({s.n, s.h, s.w, S * 2 * s.c});
  const std::size_t pixels = static_cast<std::size_t>(s.n) * s.h * s.w;
  for (int st = 0; st < S; ++st) {
    const auto it = maps.find(orders[st]);
    if (it == maps.end()) throw std::invalid_argument("missing input stream of order " + std::to_string(orders[st]));
    if (!(it->second.real.shape == s)) throw std::invalid_argument("input streams disagree in shape");
    for (std::size_t p = 0; p < pixels; ++p)
      for (int c = 0; c < s.c; ++c) {
        out.data[p * out.shape.c + packed_channel(st, 0, c, s.c)] = it->second.real.data[p * s.c + c];
        out.data[p * out.shape.c + packed_channel(st, 1, c, s.c)] = it->second.imag.data[p * s.c + c];
      }
  }
  return out;
}

template <class T>
std::map<int, ComplexFeatureMap<T>> unpack_streams(const Tensor<T>& packed, const std::vector<int>& orders) {
  const int S = static_cast<int>(orders.size());
  if (S == 0 || packed.shape.c % (2 * S) != 0) throw std::invalid_argument("unpack_streams: channel count mismatch");
  const int C = packed.shape.c / (2 * S);
  const Shape s{packed.shape.n, packed.shape.h, packed.shape.w, C};
  std::map<int, ComplexFeatureMap<T>> out;
  const std::size_t pixels = static_cast<std::size_t>(s.n) * s.h * s.w;
  for (int st = 0; st < S; ++st) {
    ComplexFeatureMap<T> f(s, orders[st]);
    for (std::size_t p = 0; p < pixels; ++p)
      for (int c = 0; c < C; ++c) {
        f.real.data[p * C + c] = packed.data[p * packed.shape.c + packed_channel(st, 0, c, C)];
        f.imag.data[p * C + c] = packed.data[p * packed.shape.c + packed_channel(st, 1, c, C)];
      }
    out.emplace(orders[st], std::move(f));
  }
  return out;
}

/// Real correlation kernel [k*k][S_in*2*cin][S_out*2*cout] for a set of edges.
template <class T>
std::vector<T> assemble_block_kernel(const std::map<int, ComplexKernelBank<T>>& banks,
                                     const std::vector<StreamEdge>& edges, const std::vector<int>& in_orders,
                                     const std::vector<int>& out_orders, int k, int cin, int cout) {
  const int in_total = static_cast<int>(in_orders.size()) * 2 * cin;
  const int out_total = static_cast<int>(out_orders.size()) * 2 * cout;
  std::vector<T> K(static_cast<std::size_t>(k) * k * in_total * out_total, T(0));
  for (const auto& e : edges) {
    const int si = stream_index(in_orders, e.in_order), so = stream_index(out_orders, e.out_order);
    if (si < 0 || so < 0) throw std::invalid_argument("edge references an unknown stream");
    const auto it = banks.find(std::abs(e.filter_order));
    if (it == banks.end()) throw std::invalid_argument("no filter bank of order " + std::to_string(e.filter_order));
    add_complex_bank<T>(it->second, e.filter_order < 0, si, so, in_total, out_total, K);
  }
  return K;
}

template <class T>
void assemble_block_kernel_transpose(std::span<const T> dK, const std::vector<StreamEdge>& edges,
                                     const std::vector<int>& in_orders, const std::vector<int>& out_orders,
                                     int cin, int cout, std::map<int, ComplexKernelBank<T>>& d_banks) {
  const int in_total = static_cast<int>(in_orders.size()) * 2 * cin;
  const int out_total = static_cast<int>(out_orders.size()) * 2 * cout;
  for (const auto& e : edges) {
    const int si = stream_index(in_orders, e.in_order), so = stream_index(out_orders, e.out_order);
    accumulate_bank_cotangent<T>(dK, e.filter_order < 0, si, so, in_total, out_total,
                                 d_banks.at(std::abs(e.filter_order)));
  }
}

/// Learnable parameters of the bank for one |m|.
template <class T>
struct FilterBank {
  std::vector<T> radial;  // [cin][cout][n_radial]
  std::vector<T> phase;   // [cin][cout], empty for phase-free banks
};

template <class T>
struct HarmonicBlockSpec {
  std::vector<int> input_orders{0};
  std::vector<int> output_orders{0, 1};
  std::vector<StreamEdge> edges;  // empty = default_edges(input_orders, output_orders)
  int in_channels = 1;
  int out_channels = 1;
  int kernel_size = 5;
  std::map<int, FilterBank<T>> banks;  // keyed by |m|
  /// Per-output-order magnitude bias; consumed by c_relu after the block.
  std::map<int, std::vector<T>> bias;

  std::vector<StreamEdge> resolved_edges() const {
    return edges.empty() ? default_edges(input_orders, output_orders) : edges;
  }
};

/// Sums W_m * F_n over every edge into its output order. No bias is added
/// here; it enters through c_relu.
template <class T>
std::map<int, ComplexFeatureMap<T>> harmonic_block_forward(const std::map<int, ComplexFeatureMap<T>>& inputs,
                                                           const HarmonicBlockSpec<T>& spec,
                                                           const ResamplingPlan& plan) {
  for (int n : spec.input_orders) {
    if (!inputs.contains(n)) throw std::invalid_argument("missing input stream of order " + std::to_string(n));
  }
  const auto edges = spec.resolved_edges();
  std::map<int, ComplexKernelBank<T>> kernels;
  for (int a : bank_orders(edges)) {
    const auto it = spec.banks.find(a);
    if (it == spec.banks.end()) throw std::invalid_argument("missing filter bank for order " + std::to_string(a));
    const HarmonicBasis basis = make_harmonic_basis(plan, a);
    kernels.emplace(a, synthesize_bank<T>(basis, spec.in_channels, spec.out_channels, it->second.radial,
                                          it->second.phase));
  }
  const Tensor<T> x = pack_streams(inputs, spec.input_orders);
  const auto K = assemble_block_kernel(kernels, edges, spec.input_orders, spec.output_orders, spec.kernel_size,
                                       spec.in_channels, spec.out_channels);
  const int out_total = static_cast<int>(spec.output_orders.size()) * 2 * spec.out_channels;
  const auto y = conv2d_forward<T>(x, K, out_total, ConvGeometry::make(spec.kernel_size, Padding::Same));
  return unpack_streams(y, spec.output_orders);
}

}  // namespace hnet
