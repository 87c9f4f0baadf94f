#pragma once

#include <cmath>
#include <cstdint>

#include "hnet/params.hpp"

namespace hnet {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments live in the ParameterStore slots; this holds the scalars.
struct OptimState {
  std::int64_t step = 0;
  double lr = 1e-3;
  int plateau = 0;        // epochs since the last new best
  double best = 0.0;      // best validation accuracy so far
  int patience = 10;
  double decay = 0.1;
  int epoch = 0;          // completed epochs
};

/// One bias-corrected Adam update from the gradients currently in the store.
template <class T>
void adam_step(ParameterStore<T>& params, OptimState& state, const AdamHyper& h = {}) {
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const double lr = state.lr;
  for (auto& s : params.slots()) {
    for (std::size_t i = 0; i < s.value.size(); ++i) {
      const double g = s.grad[i];
      const double m = h.beta1 * s.moment1[i] + (1.0 - h.beta1) * g;
      const double v = h.beta2 * s.moment2[i] + (1.0 - h.beta2) * g * g;
      s.moment1[i] = static_cast<T>(m);
      s.moment2[i] = static_cast<T>(v);
      s.value[i] = static_cast<T>(s.value[i] - lr * (m / c1) / (std::sqrt(v / c2) + h.eps));
    }
  }
}

/// Divides lr by 10 after `patience` consecutive epochs without a strictly
/// better validation accuracy. Returns true when it decayed.
inline bool plateau_schedule(OptimState& state, double val_accuracy) {
  if (val_accuracy > state.best) {
    state.best = val_accuracy;
    state.plateau = 0;
    return false;
  }
  if (++state.plateau >= state.patience) {
    state.lr *= state.decay;
    state.plateau = 0;
    return true;
  }
  return false;
}

}  // namespace hnet
