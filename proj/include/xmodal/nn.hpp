// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xmodal/rng.hpp"
#include "xmodal/tensor.hpp"

namespace xmodal {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Affine map x.W + b with weight [in x out], bias [out]. Accepts rank-1 [in]
// or rank-2 [t x in] inputs.
struct LinearLayer {
  Tensor weight;
  Tensor bias;

  LinearLayer() = default;
  LinearLayer(Tensor w, Tensor b);

  // Glorot-uniform weights, zero biases, drawn from the init stream.
  static LinearLayer glorot(std::size_t in, std::size_t out, DType dtype, Rng& init);
  // Test mode: weight = I, bias = 0, untracked.
  static LinearLayer identity(std::size_t dim, DType dtype);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Scaled dot-product attention with num_heads parallel heads over a shared
// model dimension. Serves as cross-attention (query/value from one sequence,
// key from another) and self-attention (all three the same). No positional
// encoding; no masking unless a key_valid_len is passed.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  // Glorot-initialized projections W_q, W_k, W_v, W_o (each [d x d] + bias).
  MultiHeadAttention(std::size_t model_dim, std::size_t num_heads, DType dtype, Rng& init);
  // Test mode: all projections identity with zero bias, untracked.
  static MultiHeadAttention identity(std::size_t model_dim, std::size_t num_heads, DType dtype);

  // query [Tq x d], key [Tk x d], value [Tv x d] with Tk == Tv; returns
  // [Tq x d]. When key_valid_len > 0, attention weight over key positions
  // >= key_valid_len is forced to zero.
  Tensor forward(const Tensor& query, const Tensor& key, const Tensor& value,
                 std::size_t key_valid_len = 0) const;

  std::size_t num_heads() const { return num_heads_; }
  std::size_t model_dim() const { return model_dim_; }
  std::size_t head_dim() const { return model_dim_ / num_heads_; }

  LinearLayer& wq() { return wq_; }
  LinearLayer& wk() { return wk_; }
  LinearLayer& wv() { return wv_; }
  LinearLayer& wo() { return wo_; }
  const LinearLayer& wq() const { return wq_; }
  const LinearLayer& wk() const { return wk_; }
  const LinearLayer& wv() const { return wv_; }
  const LinearLayer& wo() const { return wo_; }

  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;

 private:
  std::size_t model_dim_ = 0;
  std::size_t num_heads_ = 0;
  LinearLayer wq_, wk_, wv_, wo_;
};

struct LayerNormParams {
  Tensor gain;  // [d], ones
  Tensor bias;  // [d], zeros

  LayerNormParams() = default;
  LayerNormParams(std::size_t dim, DType dtype, bool trainable);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Pre-norm transformer encoder block:
//   x + SelfAttn(LN1(x)), then h + FFN(LN2(h)), FFN = GELU between two
//   linears with hidden size 4d. Output shape equals input shape.
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(std::size_t model_dim, std::size_t num_heads, DType dtype, Rng& init);

  Tensor forward(const Tensor& x) const;

  MultiHeadAttention& attn() { return attn_; }
  LinearLayer& ff1() { return ff1_; }
  LinearLayer& ff2() { return ff2_; }

  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;

 private:
  LayerNormParams ln1_, ln2_;
  MultiHeadAttention attn_;
  LinearLayer ff1_, ff2_;
};

}  // namespace xmodal
