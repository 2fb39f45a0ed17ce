// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xmodal/nn.hpp"

namespace xmodal {

// FileBacked passes stored last-hidden-layer sequences through verbatim (the
// stand-in for fine-tuned pretrained encoders; embeddings come from any
// external tool). ToyTransformer is a small trainable encoder: an input
// projection followed by a stack of encoder blocks.
enum class EncoderKind { FileBacked, ToyTransformer };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::FileBacked;
  std::size_t model_dim = 768;
  std::size_t max_seq_len = 4096;
  std::size_t input_dim = 0;   // ToyTransformer raw-feature dim; 0 means model_dim
  std::size_t depth = 2;       // ToyTransformer encoder blocks
  std::size_t num_heads = 2;   // ToyTransformer attention heads

  std::size_t effective_input_dim() const { return input_dim == 0 ? model_dim : input_dim; }
};

class EncoderBackend {
 public:
  EncoderBackend() = default;
  EncoderBackend(const EncoderConfig& cfg, DType dtype, Rng& init);

  // features: [t x input_dim] for ToyTransformer, [t x model_dim] for
  // FileBacked. Returns [t x model_dim]. FileBacked returns the stored tensor
  // itself, bit-identical. No dropout inside: encoding is deterministic for
  // fixed parameters.
  Tensor encode(const Tensor& features) const;

  const EncoderConfig& config() const { return cfg_; }
  bool trainable() const { return cfg_.kind == EncoderKind::ToyTransformer; }

  // Empty for FileBacked.
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;

 private:
  EncoderConfig cfg_;
  LinearLayer input_proj_;
  std::vector<EncoderBlock> blocks_;
};

}  // namespace xmodal
