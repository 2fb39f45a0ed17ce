// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "xmodal/dataio.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/model.hpp"

namespace xmodal {

enum class ClassWeightMode { Uniform, InverseFrequency };

std::string_view to_string(ClassWeightMode mode);
std::optional<ClassWeightMode> parse_class_weight_mode(std::string_view name);

struct TrainConfig {
  double learning_rate = 5e-8;  // multimodal default; unimodal encoder runs use 5e-6
  std::size_t batch_size = 2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t max_epochs = 50;
  std::size_t patience = 1;
  ClassWeightMode class_weight_mode = ClassWeightMode::InverseFrequency;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;  // epochs between validation evaluations

  void validate() const;
};

// Uniform: all ones. InverseFrequency: w_c = N / (C * n_c) with N the total
// count and C the number of classes that actually occur; absent classes get
// weight 0. The normalization keeps the mean weight near 1 so configured
// learning rates stay meaningful.
std::vector<double> class_weights(std::span<const std::size_t> counts, ClassWeightMode mode);
std::vector<double> class_weights(const std::array<std::size_t, kNumEmotions>& counts,
                                  ClassWeightMode mode);

// -w[gold] * log softmax(logits)[gold], computed via log-sum-exp. Gradient:
// w[gold] * (softmax(logits) - onehot(gold)).
Tensor weighted_cross_entropy(const Tensor& logits, std::size_t gold,
                              std::span<const double> weights);

// Decoupled-weight-decay Adam. Moment state is kept in double precision
// regardless of parameter dtype; a parameter without a gradient buffer is
// treated as having a zero gradient.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, const TrainConfig& cfg);

  void step();
  void zero_grad();
  std::size_t step_count() const { return step_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  TrainConfig cfg_;
  std::size_t step_ = 0;
};

struct EvalRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // weighted mean over the epoch's samples
  double val_weighted_f1 = 0.0;

  bool operator==(const EvalRecord&) const = default;
};

struct TrainHistory {
  std::vector<EvalRecord> entries;
  std::size_t best_index = 0;  // maximal validation weighted F1, earliest on ties

  void append(const EvalRecord& rec);
  bool operator==(const TrainHistory&) const = default;
};

// True once the number of evaluations since the best one reaches `patience`;
// an evaluation that sets a new best resets the counter.
bool early_stop_check(const TrainHistory& history, std::size_t patience);

// JSON line for the training log: epoch, mean train loss, validation weighted
// F1, wall-clock seconds.
std::string history_record_json(const EvalRecord& rec, double wall_seconds);

// Eval-mode predictions over a split, folded into the full metric report.
EvalReport evaluate_split(const BimodalClassifier& model, const SplitDataset& ds);

// Shuffled epochs of per-sample forward/backward accumulated into batches of
// cfg.batch_size (one AdamW step per batch, batch loss = sum of sample losses
// over the sum of participating gold-class weights), validation every
// eval_every epochs, early stopping on the validation weighted F1. The model
// is left holding the best-scoring parameters. Deterministic for a fixed
// seed. `on_eval` fires after each validation pass.
TrainHistory train_loop(BimodalClassifier& model, const SplitDataset& train,
                        const SplitDataset& validation, const TrainConfig& cfg,
                        const std::function<void(const EvalRecord&)>& on_eval = {});

}  // namespace xmodal
