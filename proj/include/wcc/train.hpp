#pragma once

// Desk-scale training and evaluation loops. Fully deterministic for a fixed
// (seed, config): data order, initialization and reductions are all
// fixed-order, so repeated runs produce byte-identical metrics files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "wcc/backbone.hpp"
#include "wcc/checkpoint.hpp"
#include "wcc/data.hpp"
#include "wcc/ops.hpp"
#include "wcc/synth.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

struct TrainConfig {
  long epochs = 10;
  double lr = 0.001;
  double weight_decay = 0.02;
  long batch = 64;
  std::uint64_t seed = 0;

  void validate() const {
    check_shape(epochs >= 1 && batch >= 1, "train config: non-positive epochs/batch");
    check_shape(lr >= 0 && weight_decay >= 0, "train config: negative lr/weight decay");
  }
};

struct EpochRow {
  long epoch = 0;
  double train_loss = 0, train_acc = 0, test_acc = 0;
};

inline const char* metrics_csv_header() { return "epoch,train_loss,train_accuracy,test_accuracy"; }

inline std::string metrics_csv_row(const EpochRow& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%ld,%.6f,%.6f,%.6f", r.epoch, r.train_loss, r.train_acc,
                r.test_acc);
  return buf;
}

namespace detail {

inline long argmax_lowest_tie(const float* v, long k) {
  long best = 0;
  for (long i = 1; i < k; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

template <typename T>
long argmax_lowest_tie_t(const T* v, long k) {
  long best = 0;
  for (long i = 1; i < k; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Locates the first non-finite traced output for the NaN diagnostic.
template <typename T>
std::string first_non_finite(const Trace<T>& trace) {
  for (const auto& [name, t] : trace)
    if (!t.all_finite()) return name;
  return "loss";
}

}  // namespace detail

// Top-1 accuracy over a dataset; logit ties break toward the lowest class
// index.
template <typename T, typename Model>
double evaluate_classifier(Model& model, const Dataset& data, long batch = 128) {
  check_shape(data.count > 0, "evaluate: empty dataset");
  NoGradGuard no_grad;
  long correct = 0;
  std::vector<long> idx(batch);
  for (long start = 0; start < data.count; start += batch) {
    const long n = std::min(batch, data.count - start);
    idx.resize(n);
    for (long i = 0; i < n; ++i) idx[i] = start + i;
    Tensor<T> x = batch_tensor<T>(data, idx);
    Tensor<T> logits = model.forward(x, /*training=*/false);
    const long k = logits.shape().c;
    for (long i = 0; i < n; ++i) {
      const long pred = detail::argmax_lowest_tie_t(logits.data().data() + i * k, k);
      if (pred == data.labels[start + i]) ++correct;
    }
  }
  return double(correct) / double(data.count);
}

// SGD classification training. Emits one CSV row per epoch when out_dir is
// set and keeps the best-test-accuracy checkpoint.
template <typename T, typename Model>
std::vector<EpochRow> train_classifier(Model& model, const Dataset& train, const Dataset& test,
                                       const TrainConfig& cfg,
                                       const std::optional<std::filesystem::path>& out_dir = {},
                                       std::ostream* log = nullptr) {
  cfg.validate();
  check_shape(train.count > 0, "train: empty dataset");
  std::optional<std::ofstream> csv;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    csv.emplace(*out_dir / "metrics.csv");
    *csv << metrics_csv_header() << "\n";
  }

  Rng shuffle_rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<long> order(train.count);
  for (long i = 0; i < train.count; ++i) order[i] = i;

  std::vector<EpochRow> history;
  double best_acc = -1;
  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double loss_sum = 0;
    long loss_batches = 0, correct = 0;
    for (long start = 0; start < train.count; start += cfg.batch) {
      const long n = std::min(cfg.batch, train.count - start);
      if (n < 2) continue;  // batch statistics need at least two samples
      std::span<const long> idx(order.data() + start, static_cast<std::size_t>(n));
      Tensor<T> x = batch_tensor<T>(train, idx);
      std::vector<long> labels(n);
      for (long i = 0; i < n; ++i) labels[i] = train.labels[idx[i]];

      Tensor<T> logits = model.forward(x, /*training=*/true);
      Tensor<T> loss = cross_entropy<T>(logits, labels);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        Trace<T> trace;
        NoGradGuard no_grad;
        model.forward(x, true, &trace);
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           "; first non-finite output: " + detail::first_non_finite(trace));
      }
      backward(loss);
      sgd_step(model.registry(), static_cast<T>(cfg.lr), static_cast<T>(cfg.weight_decay));

      loss_sum += lv;
      ++loss_batches;
      const long k = logits.shape().c;
      for (long i = 0; i < n; ++i)
        if (detail::argmax_lowest_tie_t(logits.data().data() + i * k, k) == labels[i]) ++correct;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_batches ? loss_sum / loss_batches : 0.0;
    row.train_acc = double(correct) / double(train.count);
    row.test_acc = test.count > 0 ? evaluate_classifier<T>(model, test) : 0.0;
    history.push_back(row);
    if (csv) *csv << metrics_csv_row(row) << "\n";
    if (log) *log << "epoch " << epoch << ": " << metrics_csv_row(row) << "\n" << std::flush;
    if (out_dir && row.test_acc > best_acc) {
      best_acc = row.test_acc;
      save_checkpoint(*out_dir / "best.ckpt", model.registry());
    }
  }
  return history;
}

// Dual-modality counterparts over synthetic multispectral pairs.
template <typename T, typename Model>
double evaluate_dual(Model& model, const SynthPairs& data, std::span<const long> indices,
                     long batch = 64) {
  check_shape(!indices.empty(), "evaluate_dual: empty index set");
  NoGradGuard no_grad;
  long correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += batch) {
    const long n = std::min<long>(batch, static_cast<long>(indices.size() - start));
    std::span<const long> idx(indices.data() + start, static_cast<std::size_t>(n));
    Tensor<T> rgb = synth_rgb_batch<T>(data, idx);
    Tensor<T> ir = synth_ir_batch<T>(data, idx);
    Tensor<T> logits = model.forward(rgb, ir, /*training=*/false);
    const long k = logits.shape().c;
    for (long i = 0; i < n; ++i) {
      const long pred = detail::argmax_lowest_tie_t(logits.data().data() + i * k, k);
      if (pred == data.labels[idx[i]]) ++correct;
    }
  }
  return double(correct) / double(indices.size());
}

template <typename T, typename Model>
std::vector<EpochRow> train_dual_classifier(Model& model, const SynthPairs& data,
                                            std::span<const long> train_idx,
                                            std::span<const long> test_idx, const TrainConfig& cfg,
                                            std::ostream* log = nullptr) {
  cfg.validate();
  Rng shuffle_rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<long> order(train_idx.begin(), train_idx.end());
  std::vector<EpochRow> history;
  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double loss_sum = 0;
    long loss_batches = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const long n = std::min<long>(cfg.batch, static_cast<long>(order.size() - start));
      if (n < 2) continue;
      std::span<const long> idx(order.data() + start, static_cast<std::size_t>(n));
      Tensor<T> rgb = synth_rgb_batch<T>(data, idx);
      Tensor<T> ir = synth_ir_batch<T>(data, idx);
      std::vector<long> labels(n);
      for (long i = 0; i < n; ++i) labels[i] = data.labels[idx[i]];
      Tensor<T> logits = model.forward(rgb, ir, /*training=*/true);
      Tensor<T> loss = cross_entropy<T>(logits, labels);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        Trace<T> trace;
        NoGradGuard no_grad;
        model.forward(rgb, ir, true, &trace);
        throw NumericError("train_dual: non-finite loss at epoch " + std::to_string(epoch) +
                           "; first non-finite output: " + detail::first_non_finite(trace));
      }
      backward(loss);
      sgd_step(model.registry(), static_cast<T>(cfg.lr), static_cast<T>(cfg.weight_decay));
      loss_sum += lv;
      ++loss_batches;
      const long k = logits.shape().c;
      for (long i = 0; i < n; ++i)
        if (detail::argmax_lowest_tie_t(logits.data().data() + i * k, k) == labels[i]) ++correct;
    }
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_batches ? loss_sum / loss_batches : 0.0;
    row.train_acc = double(correct) / double(order.size());
    row.test_acc = evaluate_dual<T>(model, data, test_idx);
    history.push_back(row);
    if (log) *log << "epoch " << epoch << ": " << metrics_csv_row(row) << "\n" << std::flush;
  }
  return history;
}

inline void save_norm_stats(const std::filesystem::path& path, const NormStats& s) {
  std::ofstream os(path);
  for (std::size_t c = 0; c < s.mean.size(); ++c) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "mean_%zu = %.8f\nstd_%zu = %.8f\n", c, s.mean[c], c,
                  s.stddev[c]);
    os << buf;
  }
}

}  // namespace wcc
