// SPDX-License-Identifier: Apache-2.0
#include "xmodal/model.hpp"

namespace xmodal {

std::string_view to_string(FusionKind kind) {
  return kind == FusionKind::Concat ? "concat" : "cross-attention";
}

std::optional<FusionKind> parse_fusion_kind(std::string_view name) {
  if (name == "concat") return FusionKind::Concat;
  if (name == "cross-attention") return FusionKind::CrossAttention;
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (model_dim == 0) throw ValueError("ModelConfig: model_dim must be positive");
  if (num_heads == 0 || model_dim % num_heads != 0)
    throw ValueError("ModelConfig: model_dim " + std::to_string(model_dim) +
                     " is not divisible by num_heads " + std::to_string(num_heads));
  if (num_classes < 2) throw ValueError("ModelConfig: num_classes must be at least 2");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw ValueError("ModelConfig: dropout_p must be in [0, 1)");
  if (text_len == 0 || audio_len == 0)
    throw ValueError("ModelConfig: text_len and audio_len must be set");
  if (fusion == FusionKind::CrossAttention && text_len > audio_len)
    throw ValueError("ModelConfig: cross-attention fusion pads text up to the audio length; "
                     "text_len " + std::to_string(text_len) + " > audio_len " +
                     std::to_string(audio_len));
  for (const auto* enc : {&text_encoder, &audio_encoder}) {
    if (enc->model_dim != model_dim)
      throw ValueError("ModelConfig: encoder model_dim " + std::to_string(enc->model_dim) +
                       " != model_dim " + std::to_string(model_dim));
  }
}

std::size_t ModelConfig::head_input_size() const {
  return fusion == FusionKind::Concat ? (text_len + audio_len) * model_dim : audio_len * model_dim;
}

Tensor align_text_to_audio(const Tensor& text_hidden, std::size_t audio_len, bool allow_truncation) {
  return pad_to_length(text_hidden, audio_len, allow_truncation);
}

Tensor concat_fuse(const Tensor& text_hidden, const Tensor& audio_hidden) {
  if (text_hidden.rank() != 2 || audio_hidden.rank() != 2 ||
      text_hidden.dim(1) != audio_hidden.dim(1))
    throw ValueError("concat_fuse: feature dims differ: " + shape_str(text_hidden.shape()) + " vs " +
                     shape_str(audio_hidden.shape()));
  return concat(text_hidden, audio_hidden, 0);
}

Tensor cross_attention_fuse(const MultiHeadAttention& cross, const MultiHeadAttention& self_attn,
                            const Tensor& text_padded, const Tensor& audio_hidden,
                            std::size_t text_valid_len) {
  if (text_padded.shape() != audio_hidden.shape())
    throw ValueError("cross_attention_fuse: expected matching [T_a x d] inputs, got " +
                     shape_str(text_padded.shape()) + " and " + shape_str(audio_hidden.shape()));
  Tensor combined = cross.forward(text_padded, audio_hidden, text_padded, text_valid_len);
  return self_attn.forward(combined, combined, combined);
}

std::size_t argmax_index(const Tensor& logits) {
  const auto v = logits.to_vector();
  if (v.empty()) throw ValueError("argmax_index: empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

BimodalClassifier::BimodalClassifier(const ModelConfig& cfg, Rng& init) : cfg_(cfg) {
  cfg_.validate();
  text_enc_ = EncoderBackend(cfg_.text_encoder, cfg_.dtype, init);
  audio_enc_ = EncoderBackend(cfg_.audio_encoder, cfg_.dtype, init);
  if (cfg_.fusion == FusionKind::CrossAttention) {
    cross_.emplace(cfg_.model_dim, cfg_.num_heads, cfg_.dtype, init);
    self_.emplace(cfg_.model_dim, cfg_.num_heads, cfg_.dtype, init);
  }
  std::size_t head_in = cfg_.head_input_size();
  if (cfg_.hidden_head_dim > 0) {
    head_hidden_ = LinearLayer::glorot(head_in, cfg_.hidden_head_dim, cfg_.dtype, init);
    head_in = cfg_.hidden_head_dim;
  }
  head_ = LinearLayer::glorot(head_in, cfg_.num_classes, cfg_.dtype, init);
}

Tensor BimodalClassifier::fuse(const Tensor& text_hidden, const Tensor& audio_hidden) const {
  if (cfg_.fusion == FusionKind::Concat) return concat_fuse(text_hidden, audio_hidden);
  Tensor padded = align_text_to_audio(text_hidden, cfg_.audio_len, cfg_.allow_truncation);
  const std::size_t valid = cfg_.mask_padding ? cfg_.text_len : 0;
  return cross_attention_fuse(*cross_, *self_, padded, audio_hidden, valid);
}

Tensor BimodalClassifier::classify_head(const Tensor& combined, bool training,
                                        Rng* dropout_rng) const {
  if (combined.rank() != 2 || combined.numel() != cfg_.head_input_size())
    throw ValueError("classify_head: combined input " + shape_str(combined.shape()) +
                     " does not flatten to the configured head size " +
                     std::to_string(cfg_.head_input_size()) +
                     " (check text_len/audio_len against the data)");
  Tensor flat = flatten(combined);
  if (training && cfg_.dropout_p > 0.0) {
    if (!dropout_rng)
      throw ValueError("classify_head: training-mode dropout needs an RNG stream");
    flat = dropout(flat, cfg_.dropout_p, true, *dropout_rng);
  }
  if (head_hidden_) flat = head_hidden_->forward(flat);
  return head_.forward(flat);
}

Tensor BimodalClassifier::forward(const UtteranceRecord& record, bool training,
                                  Rng* dropout_rng) const {
  if (!record.text_features.defined())
    throw ValueError("forward: record '" + record.id + "' is missing text features");
  if (!record.audio_features.defined())
    throw ValueError("forward: record '" + record.id + "' is missing audio features");
  Tensor text_hidden = pad_to_length(text_enc_.encode(record.text_features), cfg_.text_len,
                                     cfg_.allow_truncation);
  Tensor audio_hidden = pad_to_length(audio_enc_.encode(record.audio_features), cfg_.audio_len,
                                      cfg_.allow_truncation);
  return classify_head(fuse(text_hidden, audio_hidden), training, dropout_rng);
}

EmotionLabel BimodalClassifier::predict(const UtteranceRecord& record) const {
  if (cfg_.num_classes != kNumEmotions)
    throw ValueError("predict: emotion readout needs num_classes == 7, configured " +
                     std::to_string(cfg_.num_classes));
  return static_cast<EmotionLabel>(argmax_index(forward(record, /*training=*/false)));
}

std::vector<NamedTensor> BimodalClassifier::named_parameters() const {
  std::vector<NamedTensor> out;
  text_enc_.collect_parameters("text_encoder", out);
  audio_enc_.collect_parameters("audio_encoder", out);
  if (cross_) cross_->collect_parameters("fusion.cross", out);
  if (self_) self_->collect_parameters("fusion.self", out);
  if (head_hidden_) head_hidden_->collect_parameters("head_hidden", out);
  head_.collect_parameters("head", out);
  return out;
}

std::vector<Tensor> BimodalClassifier::trainable_parameters() const {
  std::vector<NamedTensor> named;
  if (cfg_.train_encoders) {
    text_enc_.collect_parameters("text_encoder", named);
    audio_enc_.collect_parameters("audio_encoder", named);
  }
  if (cross_) cross_->collect_parameters("fusion.cross", named);
  if (self_) self_->collect_parameters("fusion.self", named);
  if (head_hidden_) head_hidden_->collect_parameters("head_hidden", named);
  head_.collect_parameters("head", named);
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (auto& nt : named) out.push_back(nt.tensor);
  return out;
}

}  // namespace xmodal
