// SPDX-License-Identifier: Apache-2.0
#include "xmodal/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace xmodal {

std::string_view to_string(ClassWeightMode mode) {
  return mode == ClassWeightMode::Uniform ? "uniform" : "inverse-frequency";
}

std::optional<ClassWeightMode> parse_class_weight_mode(std::string_view name) {
  if (name == "uniform") return ClassWeightMode::Uniform;
  if (name == "inverse-frequency") return ClassWeightMode::InverseFrequency;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw ValueError("TrainConfig: learning_rate must be positive");
  if (batch_size < 1) throw ValueError("TrainConfig: batch_size must be at least 1");
  if (patience < 1) throw ValueError("TrainConfig: patience must be at least 1");
  if (eval_every < 1) throw ValueError("TrainConfig: eval_every must be at least 1");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw ValueError("TrainConfig: betas must lie in [0, 1)");
  if (eps <= 0) throw ValueError("TrainConfig: eps must be positive");
  if (weight_decay < 0) throw ValueError("TrainConfig: weight_decay must be nonnegative");
}

std::vector<double> class_weights(std::span<const std::size_t> counts, ClassWeightMode mode) {
  if (mode == ClassWeightMode::Uniform) return std::vector<double>(counts.size(), 1.0);
  std::size_t total = 0, present = 0;
  for (std::size_t c : counts) {
    total += c;
    if (c > 0) ++present;
  }
  if (total == 0) throw ValueError("class_weights: all class counts are zero");
  std::vector<double> w(counts.size(), 0.0);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > 0)
      w[i] = static_cast<double>(total) / (static_cast<double>(present) * static_cast<double>(counts[i]));
  }
  return w;
}

std::vector<double> class_weights(const std::array<std::size_t, kNumEmotions>& counts,
                                  ClassWeightMode mode) {
  return class_weights(std::span<const std::size_t>(counts.data(), counts.size()), mode);
}

Tensor weighted_cross_entropy(const Tensor& logits, std::size_t gold,
                              std::span<const double> weights) {
  if (logits.rank() != 1) throw ValueError("weighted_cross_entropy: logits must be rank 1");
  const std::size_t c = logits.dim(0);
  if (gold >= c)
    throw ValueError("weighted_cross_entropy: gold index " + std::to_string(gold) +
                     " out of range for " + std::to_string(c) + " classes");
  if (weights.size() != c)
    throw ValueError("weighted_cross_entropy: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(c) + " classes");
  const double w = weights[gold];

  const auto lv = logits.to_vector();
  const double mx = *std::max_element(lv.begin(), lv.end());
  double z = 0;
  for (double l : lv) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  const double loss_value = w * (lse - lv[gold]);

  Tensor loss = Tensor::full(Shape{}, loss_value, logits.dtype());
  if (GradTape* tape = GradTape::active(); tape && logits.requires_grad()) {
    loss.set_requires_grad(true);
    std::vector<double> softmax_vals(c);
    for (std::size_t i = 0; i < c; ++i) softmax_vals[i] = std::exp(lv[i] - lse);
    tape->record("weighted_cross_entropy",
                 [li = logits.impl(), oi = loss.impl(), softmax_vals, gold, w, c] {
      if (!oi->has_grad() || !li->requires_grad) return;
      auto apply = [&](auto tag) {
        using T = decltype(tag);
        auto& g = detail::grad_vec<T>(*li);
        if (g.empty()) g.assign(li->numel(), T(0));
        const T upstream = detail::grad_vec<T>(*oi)[0];
        for (std::size_t i = 0; i < c; ++i) {
          const double delta = w * (softmax_vals[i] - (i == gold ? 1.0 : 0.0));
          g[i] += upstream * static_cast<T>(delta);
        }
      };
      if (li->dtype == DType::F32)
        apply(float{});
      else
        apply(double{});
    });
  }
  return loss;
}

AdamW::AdamW(std::vector<Tensor> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].numel(), 0.0);
    v_[i].assign(params_[i].numel(), 0.0);
  }
}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& param = params_[p];
    const bool has_grad = param.has_grad();
    const std::vector<double> grad =
        has_grad ? param.grad_to_vector() : std::vector<double>(param.numel(), 0.0);
    auto& m = m_[p];
    auto& v = v_[p];
    auto update = [&](auto* data, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        const double theta = static_cast<double>(data[i]);
        const double next = theta - cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps) -
                            cfg_.learning_rate * cfg_.weight_decay * theta;
        data[i] = static_cast<std::remove_reference_t<decltype(data[i])>>(next);
      }
    };
    if (param.dtype() == DType::F32)
      update(param.mutable_data<float>().data(), param.numel());
    else
      update(param.mutable_data<double>().data(), param.numel());
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void TrainHistory::append(const EvalRecord& rec) {
  entries.push_back(rec);
  if (entries.size() == 1 || rec.val_weighted_f1 > entries[best_index].val_weighted_f1)
    best_index = entries.size() - 1;
}

bool early_stop_check(const TrainHistory& history, std::size_t patience) {
  if (history.entries.empty()) throw ValueError("early_stop_check: no evaluations recorded");
  return history.entries.size() - 1 - history.best_index >= patience;
}

std::string history_record_json(const EvalRecord& rec, double wall_seconds) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["train_loss"] = rec.train_loss;
  j["val_weighted_f1"] = rec.val_weighted_f1;
  j["wall_seconds"] = wall_seconds;
  return j.dump();
}

EvalReport evaluate_split(const BimodalClassifier& model, const SplitDataset& ds) {
  std::vector<EmotionLabel> golds, preds;
  golds.reserve(ds.records.size());
  preds.reserve(ds.records.size());
  for (const auto& rec : ds.records) {
    golds.push_back(rec.label);
    preds.push_back(model.predict(rec));
  }
  return evaluate_predictions(golds, preds);
}

TrainHistory train_loop(BimodalClassifier& model, const SplitDataset& train,
                        const SplitDataset& validation, const TrainConfig& cfg,
                        const std::function<void(const EvalRecord&)>& on_eval) {
  cfg.validate();
  if (train.records.empty()) throw ValueError("train_loop: empty training split");
  if (validation.records.empty()) throw ValueError("train_loop: empty validation split");

  const auto weights = class_weights(class_counts(train), cfg.class_weight_mode);

  Rng master(cfg.seed);
  Rng shuffle_rng = master.derive(RngStream::Shuffle);
  Rng dropout_rng = master.derive(RngStream::Dropout);

  auto params = model.trainable_parameters();
  AdamW opt(params, cfg);

  TrainHistory history;
  std::vector<Tensor> best_snapshot;
  auto snapshot = [&] {
    best_snapshot.clear();
    best_snapshot.reserve(params.size());
    for (const auto& p : params) best_snapshot.push_back(p.clone());
  };

  std::vector<std::size_t> order(train.records.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0, weight_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      double batch_weight = 0.0;
      for (std::size_t i = start; i < end; ++i)
        batch_weight += weights[static_cast<std::size_t>(train.records[order[i]].label)];
      if (batch_weight == 0.0) continue;

      for (std::size_t i = start; i < end; ++i) {
        const auto& rec = train.records[order[i]];
        const std::size_t gold = static_cast<std::size_t>(rec.label);
        GradTape tape;
        Tensor logits = model.forward(rec, /*training=*/true, &dropout_rng);
        Tensor loss = weighted_cross_entropy(logits, gold, weights);
        const double value = loss.item();
        if (!std::isfinite(value))
          throw NumericError("train_loop: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(start / cfg.batch_size) + " (sample '" +
                             rec.id + "')");
        loss_sum += value;
        weight_sum += weights[gold];
        tape.backward(scale(loss, 1.0 / batch_weight));
      }
      opt.step();
      opt.zero_grad();
    }

    if (epoch % cfg.eval_every == 0) {
      const EvalReport report = evaluate_split(model, validation);
      EvalRecord rec;
      rec.epoch = epoch;
      rec.train_loss = weight_sum > 0 ? loss_sum / weight_sum : 0.0;
      rec.val_weighted_f1 = report.weighted.f1;
      history.append(rec);
      if (on_eval) on_eval(rec);
      if (history.best_index == history.entries.size() - 1) snapshot();
      if (early_stop_check(history, cfg.patience)) break;
    }
  }

  if (!best_snapshot.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_data_from(best_snapshot[i]);
  }
  return history;
}

}  // namespace xmodal
