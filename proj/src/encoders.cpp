// SPDX-License-Identifier: Apache-2.0
#include "xmodal/encoders.hpp"

namespace xmodal {

EncoderBackend::EncoderBackend(const EncoderConfig& cfg, DType dtype, Rng& init) : cfg_(cfg) {
  if (cfg_.model_dim == 0) throw ValueError("EncoderBackend: model_dim must be positive");
  if (cfg_.kind == EncoderKind::ToyTransformer) {
    input_proj_ = LinearLayer::glorot(cfg_.effective_input_dim(), cfg_.model_dim, dtype, init);
    blocks_.reserve(cfg_.depth);
    for (std::size_t i = 0; i < cfg_.depth; ++i)
      blocks_.emplace_back(cfg_.model_dim, cfg_.num_heads, dtype, init);
  }
}

Tensor EncoderBackend::encode(const Tensor& features) const {
  if (!features.defined())
    throw ValueError("encode: missing modality data");
  if (features.rank() != 2)
    throw ValueError("encode: features must be rank 2, got " + shape_str(features.shape()));
  if (features.dim(0) > cfg_.max_seq_len)
    throw ValueError("encode: sequence length " + std::to_string(features.dim(0)) +
                     " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));

  if (cfg_.kind == EncoderKind::FileBacked) {
    if (features.dim(1) != cfg_.model_dim)
      throw ValueError("encode: stored feature dim " + std::to_string(features.dim(1)) +
                       " != configured model_dim " + std::to_string(cfg_.model_dim));
    return features;
  }

  if (features.dim(1) != cfg_.effective_input_dim())
    throw ValueError("encode: input feature dim " + std::to_string(features.dim(1)) +
                     " != configured input_dim " + std::to_string(cfg_.effective_input_dim()));
  Tensor h = input_proj_.forward(features);
  for (const auto& block : blocks_) h = block.forward(h);
  return h;
}

void EncoderBackend::collect_parameters(const std::string& prefix,
                                        std::vector<NamedTensor>& out) const {
  if (cfg_.kind == EncoderKind::FileBacked) return;
  input_proj_.collect_parameters(prefix + ".input", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect_parameters(prefix + ".block" + std::to_string(i), out);
}

}  // namespace xmodal
