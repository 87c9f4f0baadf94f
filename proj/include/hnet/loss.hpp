#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnet/tensor.hpp"

namespace hnet {

/// Mean over the batch of -log softmax(logits)[label], max-subtracted.
/// logits has shape [n, 1, 1, classes].
template <class T>
T cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  const int n = logits.shape.n, K = logits.shape.c;
  if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("cross_entropy: label count mismatch");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= K) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[i]) + " out of range");
    }
    const T* z = logits.item(i);
    const double mx = *std::max_element(z, z + K);
    double se = 0.0;
    for (int k = 0; k < K; ++k) se += std::exp(static_cast<double>(z[k]) - mx);
    total += mx + std::log(se) - z[labels[i]];
  }
  return static_cast<T>(total / n);
}

/// d loss / d logits = (softmax - onehot) / n.
template <class T>
Tensor<T> cross_entropy_grad(const Tensor<T>& logits, std::span<const int> labels) {
  const int n = logits.shape.n, K = logits.shape.c;
  Tensor<T> g(logits.shape);
  for (int i = 0; i < n; ++i) {
    const T* z = logits.item(i);
    const double mx = *std::max_element(z, z + K);
    double se = 0.0;
    for (int k = 0; k < K; ++k) se += std::exp(static_cast<double>(z[k]) - mx);
    for (int k = 0; k < K; ++k) {
      const double p = std::exp(static_cast<double>(z[k]) - mx) / se;
      g.item(i)[k] = static_cast<T>((p - (k == labels[i] ? 1.0 : 0.0)) / n);
    }
  }
  return g;
}

template <class T>
int argmax_class(const Tensor<T>& logits, int i) {
  const T* z = logits.item(i);
  return static_cast<int>(std::max_element(z, z + logits.shape.c) - z);
}

}  // namespace hnet
