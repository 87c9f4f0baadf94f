#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hnet/data.hpp"
#include "hnet/loss.hpp"
#include "hnet/model.hpp"
#include "hnet/optim.hpp"

namespace hnet {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 50;
  int epochs = 200;
  std::uint64_t seed = 0;
  int eval_batch = 100;
  int recalibrate_rows = 500;  // rows used to re-estimate normalization statistics per epoch; 0 keeps the running averages
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;  // rate used during the epoch
};

inline std::string metrics_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,val_acc,lr\n";
  for (const auto& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_acc << ',' << e.lr << '\n';
  return out.str();
}

/// Row order of one epoch: Fisher-Yates driven by a generator seeded from
/// (seed, epoch), so any epoch can be replayed in isolation.
inline std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

struct EvalReport {
  int correct = 0;
  int total = 0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
  double error_percent() const { return 100.0 * (1.0 - accuracy()); }
};

template <class T>
EvalReport evaluate(Model<T>& model, const Dataset& d, int batch = 100) {
  const int K = model.graph().n_classes;
  EvalReport r;
  r.confusion.assign(K, std::vector<int>(K, 0));
  for (int start = 0; start < d.size(); start += batch) {
    std::vector<int> rows;
    for (int i = start; i < std::min(d.size(), start + batch); ++i) rows.push_back(i);
    const auto z = model.logits(d.batch<T>(rows));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const int pred = argmax_class(z, static_cast<int>(j));
      const int truth = d.labels[rows[j]];
      if (truth >= 0 && truth < K) r.confusion[truth][pred]++;
      r.correct += pred == truth;
      r.total++;
    }
  }
  return r;
}

/// Loss and gradients of one minibatch in training mode; gradients land in
/// the parameter store.
template <class T>
double train_batch_gradients(Model<T>& model, const Tensor<T>& x, std::span<const int> labels) {
  auto tr = model.forward(x, true, true);
  auto& tape = tr.tape;
  const Tensor<T>& z = tape.value(tr.logits());
  const T loss = cross_entropy(z, labels);
  const auto zid = tr.logits();
  std::vector<int> lab(labels.begin(), labels.end());
  const auto lid = tape.record(Tensor<T>({1, 1, 1, 1}, loss), {zid}, [zid, lab](Tape<T>& t, typename Tape<T>::Id self) {
    auto g = cross_entropy_grad<T>(t.value(zid), lab);
    const T s = t.grad(self).data[0];
    for (auto& v : g.data) v *= s;
    add_into(t.grad(zid), g);
  });
  tape.backward(lid);
  model.collect_gradients(tr);
  return static_cast<double>(loss);
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Runs epochs state.epoch .. cfg.epochs-1 of minibatch Adam with the plateau
/// schedule; resumes cleanly from a restored state. After each epoch the
/// normalization statistics are re-estimated on the first recalibrate_rows of
/// that epoch's order. Validation accuracy is
/// measured after every epoch; without a validation set it logs 0 and the
/// rate stays fixed.
template <class T>
std::vector<EpochLog> train(Model<T>& model, const Dataset& train_set, const Dataset* val_set,
                            const TrainConfig& cfg, OptimState& state, const EpochCallback& on_epoch = {}) {
  if (state.step == 0 && state.epoch == 0) state.lr = cfg.lr;
  std::vector<EpochLog> log;
  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(train_set.size(), cfg.seed, epoch);
    double loss_sum = 0.0;
    for (int start = 0; start < train_set.size(); start += cfg.batch_size) {
      std::vector<int> rows(order.begin() + start, order.begin() + std::min(train_set.size(), start + cfg.batch_size));
      std::vector<int> labels;
      for (int r : rows) labels.push_back(train_set.labels[r]);
      loss_sum += train_batch_gradients(model, train_set.batch<T>(rows), labels) * static_cast<double>(rows.size());
      adam_step(model.params(), state);
    }
    if (cfg.recalibrate_rows > 0) {
      const int n = std::min(cfg.recalibrate_rows, train_set.size());
      std::vector<Tensor<T>> batches;
      for (int start = 0; start < n; start += cfg.batch_size) {
        std::vector<int> rows(order.begin() + start, order.begin() + std::min(n, start + cfg.batch_size));
        batches.push_back(train_set.batch<T>(rows));
      }
      model.recalibrate_statistics(batches);
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / train_set.size();
    e.lr = state.lr;
    const bool has_val = val_set != nullptr && val_set->size() > 0;
    e.val_acc = has_val ? evaluate(model, *val_set, cfg.eval_batch).accuracy() : 0.0;
    if (has_val) plateau_schedule(state, e.val_acc);
    state.epoch = epoch + 1;
    log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return log;
}

}  // namespace hnet
