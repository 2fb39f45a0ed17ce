// SPDX-License-Identifier: Apache-2.0
#include "xmodal/config_json.hpp"

namespace xmodal {

namespace {

std::string dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }

DType dtype_from(const std::string& s) {
  if (s == "f32") return DType::F32;
  if (s == "f64") return DType::F64;
  throw ValueError("config: unknown dtype '" + s + "'");
}

std::string encoder_kind_name(EncoderKind k) {
  return k == EncoderKind::FileBacked ? "file-backed" : "toy-transformer";
}

EncoderKind encoder_kind_from(const std::string& s) {
  if (s == "file-backed") return EncoderKind::FileBacked;
  if (s == "toy-transformer") return EncoderKind::ToyTransformer;
  throw ValueError("config: unknown encoder kind '" + s + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const EncoderConfig& cfg) {
  j = nlohmann::json{{"kind", encoder_kind_name(cfg.kind)},
                     {"model_dim", cfg.model_dim},
                     {"max_seq_len", cfg.max_seq_len},
                     {"input_dim", cfg.input_dim},
                     {"depth", cfg.depth},
                     {"num_heads", cfg.num_heads}};
}

void from_json(const nlohmann::json& j, EncoderConfig& cfg) {
  if (j.contains("kind")) cfg.kind = encoder_kind_from(j.at("kind").get<std::string>());
  cfg.model_dim = j.value("model_dim", cfg.model_dim);
  cfg.max_seq_len = j.value("max_seq_len", cfg.max_seq_len);
  cfg.input_dim = j.value("input_dim", cfg.input_dim);
  cfg.depth = j.value("depth", cfg.depth);
  cfg.num_heads = j.value("num_heads", cfg.num_heads);
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"model_dim", cfg.model_dim},
                     {"num_heads", cfg.num_heads},
                     {"num_classes", cfg.num_classes},
                     {"dropout_p", cfg.dropout_p},
                     {"fusion", std::string(to_string(cfg.fusion))},
                     {"text_len", cfg.text_len},
                     {"audio_len", cfg.audio_len},
                     {"mask_padding", cfg.mask_padding},
                     {"train_encoders", cfg.train_encoders},
                     {"allow_truncation", cfg.allow_truncation},
                     {"hidden_head_dim", cfg.hidden_head_dim},
                     {"text_encoder", cfg.text_encoder},
                     {"audio_encoder", cfg.audio_encoder},
                     {"dtype", dtype_name(cfg.dtype)}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  cfg.model_dim = j.value("model_dim", cfg.model_dim);
  cfg.num_heads = j.value("num_heads", cfg.num_heads);
  cfg.num_classes = j.value("num_classes", cfg.num_classes);
  cfg.dropout_p = j.value("dropout_p", cfg.dropout_p);
  if (j.contains("fusion")) {
    const auto parsed = parse_fusion_kind(j.at("fusion").get<std::string>());
    if (!parsed) throw ValueError("config: unknown fusion '" + j.at("fusion").get<std::string>() + "'");
    cfg.fusion = *parsed;
  }
  cfg.text_len = j.value("text_len", cfg.text_len);
  cfg.audio_len = j.value("audio_len", cfg.audio_len);
  cfg.mask_padding = j.value("mask_padding", cfg.mask_padding);
  cfg.train_encoders = j.value("train_encoders", cfg.train_encoders);
  cfg.allow_truncation = j.value("allow_truncation", cfg.allow_truncation);
  cfg.hidden_head_dim = j.value("hidden_head_dim", cfg.hidden_head_dim);
  if (j.contains("text_encoder")) from_json(j.at("text_encoder"), cfg.text_encoder);
  if (j.contains("audio_encoder")) from_json(j.at("audio_encoder"), cfg.audio_encoder);
  if (j.contains("dtype")) cfg.dtype = dtype_from(j.at("dtype").get<std::string>());
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"learning_rate", cfg.learning_rate},
                     {"batch_size", cfg.batch_size},
                     {"beta1", cfg.beta1},
                     {"beta2", cfg.beta2},
                     {"eps", cfg.eps},
                     {"weight_decay", cfg.weight_decay},
                     {"max_epochs", cfg.max_epochs},
                     {"patience", cfg.patience},
                     {"class_weights", std::string(to_string(cfg.class_weight_mode))},
                     {"seed", cfg.seed},
                     {"eval_every", cfg.eval_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.eps = j.value("eps", cfg.eps);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  if (j.contains("class_weights")) {
    const auto parsed = parse_class_weight_mode(j.at("class_weights").get<std::string>());
    if (!parsed)
      throw ValueError("config: unknown class_weights mode '" +
                       j.at("class_weights").get<std::string>() + "'");
    cfg.class_weight_mode = *parsed;
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.eval_every = j.value("eval_every", cfg.eval_every);
}

void to_json(nlohmann::json& j, const SyntheticConfig& cfg) {
  j = nlohmann::json{{"n_train", cfg.n_train},
                     {"n_validation", cfg.n_validation},
                     {"n_test", cfg.n_test},
                     {"feature_dim", cfg.feature_dim},
                     {"text_len", cfg.text_len},
                     {"audio_len", cfg.audio_len},
                     {"class_priors", cfg.class_priors},
                     {"interaction_strength", cfg.interaction_strength},
                     {"noise_scale", cfg.noise_scale},
                     {"prototype_scale", cfg.prototype_scale},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& cfg) {
  cfg.n_train = j.value("n_train", cfg.n_train);
  cfg.n_validation = j.value("n_validation", cfg.n_validation);
  cfg.n_test = j.value("n_test", cfg.n_test);
  cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
  cfg.text_len = j.value("text_len", cfg.text_len);
  cfg.audio_len = j.value("audio_len", cfg.audio_len);
  if (j.contains("class_priors")) {
    const auto priors = j.at("class_priors").get<std::vector<double>>();
    if (priors.size() != kNumEmotions)
      throw ValueError("config: class_priors needs exactly 7 entries");
    for (std::size_t i = 0; i < kNumEmotions; ++i) cfg.class_priors[i] = priors[i];
  }
  cfg.interaction_strength = j.value("interaction_strength", cfg.interaction_strength);
  cfg.noise_scale = j.value("noise_scale", cfg.noise_scale);
  cfg.prototype_scale = j.value("prototype_scale", cfg.prototype_scale);
  cfg.seed = j.value("seed", cfg.seed);
}

}  // namespace xmodal
