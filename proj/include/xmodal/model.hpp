// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xmodal/dataio.hpp"
#include "xmodal/encoders.hpp"
#include "xmodal/nn.hpp"

namespace xmodal {

// Concat: both hidden sequences concatenated along the sequence axis, text
// rows first. CrossAttention: text padded to the audio length, one multi-head
// cross-attention stage (query and value from text, key from audio), then one
// multi-head self-attention stage over the combined sequence.
enum class FusionKind { Concat, CrossAttention };

std::string_view to_string(FusionKind kind);
std::optional<FusionKind> parse_fusion_kind(std::string_view name);

struct ModelConfig {
  std::size_t model_dim = 768;
  std::size_t num_heads = 128;
  std::size_t num_classes = kNumEmotions;
  double dropout_p = 0.1;
  FusionKind fusion = FusionKind::CrossAttention;
  std::size_t text_len = 0;   // fixed padded text length; required
  std::size_t audio_len = 0;  // fixed padded audio length; required
  bool mask_padding = false;  // mask cross-attention keys beyond text_len
  bool train_encoders = true;
  bool allow_truncation = false;
  std::size_t hidden_head_dim = 0;  // 0: single linear head; >0: extra linear before it
  EncoderConfig text_encoder;
  EncoderConfig audio_encoder;
  DType dtype = DType::F32;

  void validate() const;
  // Flattened size entering the classification head:
  // (text_len + audio_len) * model_dim for Concat, audio_len * model_dim for
  // CrossAttention.
  std::size_t head_input_size() const;
};

// Zero-pads the text hidden sequence at the tail to the audio length.
Tensor align_text_to_audio(const Tensor& text_hidden, std::size_t audio_len,
                           bool allow_truncation = false);

// Sequence-axis concatenation, text rows first.
Tensor concat_fuse(const Tensor& text_hidden, const Tensor& audio_hidden);

// The two-stage attention fusion: c = cross(Q = text_padded, K = audio_hidden,
// V = text_padded), then self(Q = K = V = c). Value deliberately comes from
// text and key from audio. text_valid_len > 0 masks cross-stage key positions
// whose value rows are alignment padding.
Tensor cross_attention_fuse(const MultiHeadAttention& cross, const MultiHeadAttention& self_attn,
                            const Tensor& text_padded, const Tensor& audio_hidden,
                            std::size_t text_valid_len = 0);

// Highest logit wins; ties break to the lowest class index.
std::size_t argmax_index(const Tensor& logits);

class BimodalClassifier {
 public:
  BimodalClassifier(const ModelConfig& cfg, Rng& init);

  const ModelConfig& config() const { return cfg_; }

  // Encode both modalities, pad to the configured lengths, fuse, classify.
  // `training` enables dropout, which draws from `dropout_rng`.
  Tensor forward(const UtteranceRecord& record, bool training, Rng* dropout_rng = nullptr) const;

  // Eval-mode argmax readout. Requires num_classes == 7.
  EmotionLabel predict(const UtteranceRecord& record) const;

  Tensor fuse(const Tensor& text_hidden, const Tensor& audio_hidden) const;
  // flatten -> dropout -> (optional hidden linear) -> linear -> logits.
  Tensor classify_head(const Tensor& combined, bool training, Rng* dropout_rng) const;

  std::size_t head_input_size() const { return cfg_.head_input_size(); }

  // Stable name scheme: text_encoder.* / audio_encoder.* (input.*, blockN.*),
  // fusion.cross.* / fusion.self.*, head_hidden.*, head.*.
  std::vector<NamedTensor> named_parameters() const;
  // Parameters the optimizer updates; excludes encoder parameters when
  // train_encoders is off.
  std::vector<Tensor> trainable_parameters() const;

  const EncoderBackend& text_encoder() const { return text_enc_; }
  const EncoderBackend& audio_encoder() const { return audio_enc_; }
  MultiHeadAttention& cross_attention() { return *cross_; }
  MultiHeadAttention& self_attention() { return *self_; }
  LinearLayer& head() { return head_; }
  const LinearLayer& head() const { return head_; }

 private:
  ModelConfig cfg_;
  EncoderBackend text_enc_;
  EncoderBackend audio_enc_;
  std::optional<MultiHeadAttention> cross_;
  std::optional<MultiHeadAttention> self_;
  std::optional<LinearLayer> head_hidden_;
  LinearLayer head_;
};

}  // namespace xmodal
