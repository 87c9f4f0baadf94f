#pragma once

// A network graph bound to its parameters, with a forward pass recorded on a
// tape. Harmonic layers are decomposed into three nodes: bank synthesis per
// |m|, assembly of the real block kernel, and one real correlation.

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnet/block.hpp"
#include "hnet/conv.hpp"
#include "hnet/filters.hpp"
#include "hnet/graph.hpp"
#include "hnet/ops.hpp"
#include "hnet/params.hpp"
#include "hnet/tape.hpp"
#include "hnet/tensor.hpp"

namespace hnet {

/// Initial C-ReLU bias. Magnitudes enter every C-ReLU at roughly unit scale,
/// so a zero bias would make the rectifier the identity until it is learned.
inline constexpr double kCReluBiasInit = -0.3;

namespace detail {

template <class T>
Tensor<T> flat(std::span<const T> v) {
  Tensor<T> t({1, 1, 1, static_cast<int>(v.size())});
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

/// Bank stored as one flat tensor: real plane then imaginary plane.
template <class T>
Tensor<T> bank_to_tensor(const ComplexKernelBank<T>& b) {
  Tensor<T> t({1, 1, 1, static_cast<int>(2 * b.re.size())});
  std::copy(b.re.begin(), b.re.end(), t.data.begin());
  std::copy(b.im.begin(), b.im.end(), t.data.begin() + b.re.size());
  return t;
}

template <class T>
ComplexKernelBank<T> tensor_to_bank(const Tensor<T>& t, int k, int cin, int cout, int order) {
  ComplexKernelBank<T> b(k, cin, cout, order);
  std::copy(t.data.begin(), t.data.begin() + b.re.size(), b.re.begin());
  std::copy(t.data.begin() + b.re.size(), t.data.end(), b.im.begin());
  return b;
}

inline std::string slot_name(std::size_t layer, const std::string& what) {
  return "L" + std::to_string(layer) + "." + what;
}

}  // namespace detail

template <class T>
class Model {
 public:
  using Id = typename Tape<T>::Id;

  /// Output of one forward pass. outputs[i] is the activation entering
  /// layer i (outputs.back() holds the logits).
  struct Trace {
    Tape<T> tape;
    std::vector<Id> outputs;
    std::vector<Id> param_nodes;  // parallel to the parameter slots
    Id logits() const { return outputs.back(); }
  };

  Model(NetworkGraph graph, std::uint64_t seed) : graph_(std::move(graph)) {
    shapes_ = infer_shapes(graph_);
    build_bases();
    init_parameters(seed);
  }

  const NetworkGraph& graph() const { return graph_; }
  const std::vector<ActivationInfo>& shapes() const { return shapes_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }
  std::map<std::string, std::vector<T>>& buffers() { return buffers_; }
  const std::map<std::string, std::vector<T>>& buffers() const { return buffers_; }

  /// Resampling basis used by layer i for filter order |m|.
  const HarmonicBasis& basis(std::size_t layer, int abs_order) const { return bases_.at(layer).at(abs_order); }

  /// Images are real [n, h, w, in_channels]. train selects batch statistics
  /// and updates the running buffers; grad records backward closures.
  Trace forward(const Tensor<T>& images, bool train, bool grad) {
    const auto& in0 = shapes_.front();
    if (images.shape.h != in0.h || images.shape.w != in0.w || images.shape.c != graph_.in_channels) {
      throw std::invalid_argument("forward: input " + to_string(images.shape) + " does not match the graph input " +
                                  std::to_string(in0.h) + "x" + std::to_string(in0.w) + "x" +
                                  std::to_string(graph_.in_channels));
    }
    Trace tr;
    auto& tape = tr.tape;
    for (auto& s : params_.slots()) tr.param_nodes.push_back(tape.input(detail::flat<T>(s.value), grad));
    Id x = tape.input(graph_.harmonic() ? pack(ComplexFeatureMap<T>::from_real(images)) : images, false);
    tr.outputs.push_back(x);
    for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
      x = layer_forward(tr, i, x, train);
      tr.outputs.push_back(x);
    }
    return tr;
  }

  Tensor<T> logits(const Tensor<T>& images) {
    auto tr = forward(images, false, false);
    return tr.tape.value(tr.logits());
  }

  /// Replaces the running normalization statistics by the plain average of
  /// the training-mode batch statistics over the given batches. The running
  /// averages otherwise lag behind the weights by roughly ten steps.
  void recalibrate_statistics(const std::vector<Tensor<T>>& batches) {
    if (buffers_.empty() || batches.empty()) return;
    for (std::size_t j = 0; j < batches.size(); ++j) {
      stat_blend_ = T(1) / static_cast<T>(j + 1);
      forward(batches[j], true, false);
    }
    stat_blend_ = T(0.1);
  }

  /// Copies the tape cotangents of the parameter leaves into the store's
  /// gradient slots (overwriting).
  void collect_gradients(Trace& tr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& s = params_.slot(i);
      const Id n = tr.param_nodes[i];
      if (tr.tape.has_grad(n)) {
        s.grad = tr.tape.grad(n).data;
      } else {
        std::fill(s.grad.begin(), s.grad.end(), T(0));
      }
    }
  }

 private:
  NetworkGraph graph_;
  std::vector<ActivationInfo> shapes_;
  std::map<std::size_t, std::map<int, HarmonicBasis>> bases_;
  ParameterStore<T> params_;
  std::map<std::string, std::vector<T>> buffers_;
  T stat_blend_ = T(0.1);  // weight of the batch statistics in the running update

  void build_bases() {
    std::map<int, ResamplingPlan> plans;
    for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
      const auto& L = graph_.layers[i];
      if (L.kind != LayerKind::HConv) continue;
      if (!plans.contains(L.kernel)) {
        plans.emplace(L.kernel, build_resampling_plan(ring_partition(L.kernel), graph_.resample_sigma,
                                                      graph_.resample_angular));
      }
      for (int a : bank_orders(L.edges)) bases_[i].emplace(a, make_harmonic_basis(plans.at(L.kernel), a));
    }
  }

  void init_parameters(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto normal = [&](std::size_t n, double stddev) {
      std::normal_distribution<double> d(0.0, stddev);
      std::vector<T> v(n);
      for (auto& x : v) x = static_cast<T>(d(rng));
      return v;
    };
    for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
      const auto& L = graph_.layers[i];
      const auto& in = shapes_[i];
      const int S = static_cast<int>(in.orders.size());
      switch (L.kind) {
        case LayerKind::HConv: {
          const std::size_t pairs = static_cast<std::size_t>(in.channels) * L.channels;
          const double fan_in = static_cast<double>(in.channels) * S;
          for (int a : bank_orders(L.edges)) {
            // scale so that fan_in * E|K|^2 = 1: magnitudes keep their size through depth
            const auto& b = bases_.at(i).at(a);
            double energy = 0.0;
            for (std::size_t j = 0; j < b.re.size(); ++j) energy += b.re[j] * b.re[j] + b.im[j] * b.im[j];
            params_.add(detail::slot_name(i, "hconv.radial.m" + std::to_string(a)),
                        normal(pairs * b.n_radial, 1.0 / std::sqrt(energy * fan_in)));
            if (L.phase) {
              std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
              std::vector<T> ph(pairs);
              for (auto& p : ph) p = static_cast<T>(u(rng));
              params_.add(detail::slot_name(i, "hconv.phase.m" + std::to_string(a)), std::move(ph));
            }
          }
          break;
        }
        case LayerKind::CReLU:
          params_.add(detail::slot_name(i, "crelu.bias"), std::vector<T>(S * in.channels, T(kCReluBiasInit)));
          break;
        case LayerKind::CBatchNorm:
          params_.add(detail::slot_name(i, "cbn.scale"), std::vector<T>(S * in.channels, T(1)));
          buffers_[detail::slot_name(i, "cbn.moment")] = std::vector<T>(S * in.channels, T(1));
          break;
        case LayerKind::Conv: {
          const std::size_t n = static_cast<std::size_t>(L.kernel) * L.kernel * in.channels * L.channels;
          params_.add(detail::slot_name(i, "conv.weight"),
                      normal(n, std::sqrt(2.0 / (static_cast<double>(L.kernel) * L.kernel * in.channels))));
          break;
        }
        case LayerKind::ReLU:
          params_.add(detail::slot_name(i, "relu.bias"), std::vector<T>(in.channels, T(0)));
          break;
        case LayerKind::BatchNorm:
          params_.add(detail::slot_name(i, "bn.scale"), std::vector<T>(in.channels, T(1)));
          buffers_[detail::slot_name(i, "bn.mean")] = std::vector<T>(in.channels, T(0));
          buffers_[detail::slot_name(i, "bn.var")] = std::vector<T>(in.channels, T(1));
          break;
        case LayerKind::Readout:
          params_.add(detail::slot_name(i, "readout.bias"), std::vector<T>(graph_.n_classes, T(0)));
          break;
        default:
          break;
      }
    }
  }

  Id param(Trace& tr, std::size_t layer, const std::string& what) const {
    return tr.param_nodes[params_.index(detail::slot_name(layer, what))];
  }

  Id layer_forward(Trace& tr, std::size_t i, Id x, bool train) {
    auto& tape = tr.tape;
    const auto& L = graph_.layers[i];
    const auto& in = shapes_[i];
    const StreamLayout layout{static_cast<int>(in.orders.size()), in.channels};
    try {
      switch (L.kind) {
        case LayerKind::HConv: return hconv_forward(tr, i, x);
        case LayerKind::CReLU: {
          const Id b = param(tr, i, "crelu.bias");
          return tape.record(c_relu_forward<T>(tape.value(x), layout, tape.value(b).values()), {x, b},
                             [x, b, layout](Tape<T>& t, Id self) {
                               Tensor<T> dx;
                               const bool want_dx = t.requires_grad(x);
                               c_relu_backward<T>(t.value(x), layout, t.value(b).values(), t.grad(self),
                                                  want_dx ? &dx : nullptr, t.grad(b).values());
                               if (want_dx) add_into(t.grad(x), dx);
                             });
        }
        case LayerKind::CBatchNorm: {
          const Id g = param(tr, i, "cbn.scale");
          auto& running = buffers_.at(detail::slot_name(i, "cbn.moment"));
          std::vector<T> moments;
          if (train) {
            moments = c_batchnorm_moments(tape.value(x), layout);
            for (std::size_t p = 0; p < moments.size(); ++p) {
              running[p] = (T(1) - stat_blend_) * running[p] + stat_blend_ * moments[p];
            }
          } else {
            moments = running;
          }
          Tensor<T> y = c_batchnorm_forward<T>(tape.value(x), layout, tape.value(g).values(), moments);
          return tape.record(std::move(y), {x, g}, [x, g, layout, moments, train](Tape<T>& t, Id self) {
            Tensor<T> dx;
            const bool want_dx = t.requires_grad(x);
            c_batchnorm_backward<T>(t.value(x), layout, t.value(g).values(), moments, train, t.grad(self),
                                    want_dx ? &dx : nullptr, t.grad(g).values());
            if (want_dx) add_into(t.grad(x), dx);
          });
        }
        case LayerKind::MeanPool: {
          const int w = L.window, s = L.stride;
          const Shape xs = tape.value(x).shape;
          return tape.record(mean_pool_forward(tape.value(x), w, s), {x}, [x, w, s, xs](Tape<T>& t, Id self) {
            add_into(t.grad(x), mean_pool_backward(xs, w, s, t.grad(self)));
          });
        }
        case LayerKind::MaxPool: {
          std::vector<std::size_t> argmax;
          const Shape xs = tape.value(x).shape;
          Tensor<T> y = max_pool_forward(tape.value(x), L.window, L.stride, &argmax);
          return tape.record(std::move(y), {x}, [x, xs, argmax](Tape<T>& t, Id self) {
            add_into(t.grad(x), max_pool_backward(xs, argmax, t.grad(self)));
          });
        }
        case LayerKind::Blur: {
          const double sigma = L.sigma;
          return tape.record(gaussian_blur_forward(tape.value(x), sigma), {x}, [x, sigma](Tape<T>& t, Id self) {
            add_into(t.grad(x), gaussian_blur_backward(t.grad(self), sigma));
          });
        }
        case LayerKind::Conv: {
          const Id w = param(tr, i, "conv.weight");
          const auto geo = ConvGeometry::make(L.kernel, L.padding);
          const int cout = L.channels;
          return tape.record(conv2d_forward<T>(tape.value(x), tape.value(w).values(), cout, geo), {x, w},
                             [x, w, geo, cout](Tape<T>& t, Id self) {
                               Tensor<T> dx;
                               const bool want_dx = t.requires_grad(x);
                               conv2d_backward<T>(t.value(x), t.value(w).values(), cout, geo, t.grad(self),
                                                  want_dx ? &dx : nullptr,
                                                  t.requires_grad(w) ? t.grad(w).values() : std::span<T>{});
                               if (want_dx) add_into(t.grad(x), dx);
                             });
        }
        case LayerKind::ReLU: {
          const Id b = param(tr, i, "relu.bias");
          return tape.record(relu_forward<T>(tape.value(x), tape.value(b).values()), {x, b},
                             [x, b](Tape<T>& t, Id self) {
                               Tensor<T> dx;
                               const bool want_dx = t.requires_grad(x);
                               relu_backward<T>(t.value(x), t.value(b).values(), t.grad(self),
                                                want_dx ? &dx : nullptr, t.grad(b).values());
                               if (want_dx) add_into(t.grad(x), dx);
                             });
        }
        case LayerKind::BatchNorm: {
          const Id g = param(tr, i, "bn.scale");
          auto& rm = buffers_.at(detail::slot_name(i, "bn.mean"));
          auto& rv = buffers_.at(detail::slot_name(i, "bn.var"));
          ChannelStats<T> st;
          if (train) {
            st = channel_stats(tape.value(x));
            for (std::size_t c = 0; c < rm.size(); ++c) {
              rm[c] = (T(1) - stat_blend_) * rm[c] + stat_blend_ * st.mean[c];
              rv[c] = (T(1) - stat_blend_) * rv[c] + stat_blend_ * st.var[c];
            }
          } else {
            st = {rm, rv};
          }
          Tensor<T> y = batchnorm_forward<T>(tape.value(x), tape.value(g).values(), st);
          return tape.record(std::move(y), {x, g}, [x, g, st, train](Tape<T>& t, Id self) {
            Tensor<T> dx;
            const bool want_dx = t.requires_grad(x);
            batchnorm_backward<T>(t.value(x), t.value(g).values(), st, train, t.grad(self),
                                  want_dx ? &dx : nullptr, t.grad(g).values());
            if (want_dx) add_into(t.grad(x), dx);
          });
        }
        case LayerKind::Readout: {
          const Id b = param(tr, i, "readout.bias");
          const bool cplx = in.complex;
          const int stream = cplx ? stream_index(in.orders, graph_.target_order) : 0;
          const StreamLayout* lp = cplx ? &layout : nullptr;
          Tensor<T> y = readout_forward<T>(tape.value(x), lp, stream, tape.value(b).values());
          return tape.record(std::move(y), {x, b}, [x, b, cplx, layout, stream](Tape<T>& t, Id self) {
            Tensor<T> dx;
            const bool want_dx = t.requires_grad(x);
            readout_backward<T>(t.value(x), cplx ? &layout : nullptr, stream, t.grad(self),
                                want_dx ? &dx : nullptr, t.grad(b).values());
            if (want_dx) add_into(t.grad(x), dx);
          });
        }
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(layer_label(graph_, i) + ": " + e.what());
    }
    throw std::logic_error("unhandled layer kind");
  }

  Id hconv_forward(Trace& tr, std::size_t i, Id x) {
    auto& tape = tr.tape;
    const auto& L = graph_.layers[i];
    const auto& in = shapes_[i];
    const int k = L.kernel, cin = in.channels, cout = L.channels;
    const auto in_orders = in.orders, out_orders = L.out_orders;
    const auto edges = L.edges;

    std::vector<int> orders = bank_orders(edges);
    std::vector<Id> bank_ids;
    for (int a : orders) {
      const HarmonicBasis* basis = &bases_.at(i).at(a);
      const Id r = param(tr, i, "hconv.radial.m" + std::to_string(a));
      const bool has_phase = L.phase;
      const Id p = has_phase ? param(tr, i, "hconv.phase.m" + std::to_string(a)) : r;
      std::span<const T> phase_v = has_phase ? tape.value(p).values() : std::span<const T>{};
      const auto bank = synthesize_bank<T>(*basis, cin, cout, tape.value(r).values(), phase_v);
      std::vector<Id> deps{r};
      if (has_phase) deps.push_back(p);
      bank_ids.push_back(tape.record(
          detail::bank_to_tensor(bank), deps, [basis, r, p, has_phase, k, cin, cout, a](Tape<T>& t, Id self) {
            const auto up = detail::tensor_to_bank(t.grad(self), k, cin, cout, a);
            bank_gradient<T>(*basis, cin, cout, t.value(r).values(),
                             has_phase ? t.value(p).values() : std::span<const T>{}, up, t.grad(r).values(),
                             has_phase ? t.grad(p).values() : std::span<T>{});
          }));
    }

    std::map<int, ComplexKernelBank<T>> banks;
    for (std::size_t j = 0; j < orders.size(); ++j) {
      banks.emplace(orders[j], detail::tensor_to_bank(tape.value(bank_ids[j]), k, cin, cout, orders[j]));
    }
    auto K = assemble_block_kernel(banks, edges, in_orders, out_orders, k, cin, cout);
    const Id kid = tape.record(detail::flat<T>(K), bank_ids,
                               [bank_ids, orders, edges, in_orders, out_orders, k, cin, cout](Tape<T>& t, Id self) {
                                 std::map<int, ComplexKernelBank<T>> d;
                                 for (int a : orders) d.emplace(a, ComplexKernelBank<T>(k, cin, cout, a));
                                 assemble_block_kernel_transpose<T>(t.grad(self).values(), edges, in_orders,
                                                                    out_orders, cin, cout, d);
                                 for (std::size_t j = 0; j < orders.size(); ++j) {
                                   add_into(t.grad(bank_ids[j]), detail::bank_to_tensor(d.at(orders[j])));
                                 }
                               });

    const int out_total = static_cast<int>(out_orders.size()) * 2 * cout;
    const auto geo = ConvGeometry::make(k, Padding::Same);
    return tape.record(conv2d_forward<T>(tape.value(x), tape.value(kid).values(), out_total, geo), {x, kid},
                       [x, kid, out_total, geo](Tape<T>& t, Id self) {
                         Tensor<T> dx;
                         const bool want_dx = t.requires_grad(x);
                         conv2d_backward<T>(t.value(x), t.value(kid).values(), out_total, geo, t.grad(self),
                                            want_dx ? &dx : nullptr, t.grad(kid).values());
                         if (want_dx) add_into(t.grad(x), dx);
                       });
  }
};

}  // namespace hnet
