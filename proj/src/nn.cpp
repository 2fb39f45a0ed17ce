// SPDX-License-Identifier: Apache-2.0
#include "xmodal/nn.hpp"

#include <cmath>

namespace xmodal {

LinearLayer::LinearLayer(Tensor w, Tensor b) : weight(std::move(w)), bias(std::move(b)) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(1))
    throw ValueError("LinearLayer: weight " + shape_str(weight.shape()) + " and bias " +
                     shape_str(bias.shape()) + " are inconsistent");
}

LinearLayer LinearLayer::glorot(std::size_t in, std::size_t out, DType dtype, Rng& init) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w = Tensor::uniform({in, out}, -limit, limit, init, dtype);
  Tensor b = Tensor::zeros({out}, dtype);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  return LinearLayer(std::move(w), std::move(b));
}

LinearLayer LinearLayer::identity(std::size_t dim, DType dtype) {
  Tensor w = Tensor::zeros({dim, dim}, dtype);
  if (dtype == DType::F32) {
    auto span = w.mutable_data<float>();
    for (std::size_t i = 0; i < dim; ++i) span[i * dim + i] = 1.0f;
  } else {
    auto span = w.mutable_data<double>();
    for (std::size_t i = 0; i < dim; ++i) span[i * dim + i] = 1.0;
  }
  return LinearLayer(std::move(w), Tensor::zeros({dim}, dtype));
}

Tensor LinearLayer::forward(const Tensor& x) const {
  if (x.rank() == 1) {
    Tensor row = reshape(x, {1, x.dim(0)});
    return reshape(forward(row), {out_features()});
  }
  if (x.rank() != 2 || x.dim(1) != in_features())
    throw ValueError("LinearLayer: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  return add_bias(matmul(x, weight), bias);
}

void LinearLayer::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

MultiHeadAttention::MultiHeadAttention(std::size_t model_dim, std::size_t num_heads, DType dtype,
                                       Rng& init)
    : model_dim_(model_dim), num_heads_(num_heads) {
  if (num_heads == 0 || model_dim % num_heads != 0)
    throw ValueError("MultiHeadAttention: model_dim " + std::to_string(model_dim) +
                     " is not divisible by num_heads " + std::to_string(num_heads));
  wq_ = LinearLayer::glorot(model_dim, model_dim, dtype, init);
  wk_ = LinearLayer::glorot(model_dim, model_dim, dtype, init);
  wv_ = LinearLayer::glorot(model_dim, model_dim, dtype, init);
  wo_ = LinearLayer::glorot(model_dim, model_dim, dtype, init);
}

MultiHeadAttention MultiHeadAttention::identity(std::size_t model_dim, std::size_t num_heads,
                                                DType dtype) {
  if (num_heads == 0 || model_dim % num_heads != 0)
    throw ValueError("MultiHeadAttention: model_dim " + std::to_string(model_dim) +
                     " is not divisible by num_heads " + std::to_string(num_heads));
  MultiHeadAttention mha;
  mha.model_dim_ = model_dim;
  mha.num_heads_ = num_heads;
  mha.wq_ = LinearLayer::identity(model_dim, dtype);
  mha.wk_ = LinearLayer::identity(model_dim, dtype);
  mha.wv_ = LinearLayer::identity(model_dim, dtype);
  mha.wo_ = LinearLayer::identity(model_dim, dtype);
  return mha;
}

Tensor MultiHeadAttention::forward(const Tensor& query, const Tensor& key, const Tensor& value,
                                   std::size_t key_valid_len) const {
  for (const Tensor* t : {&query, &key, &value}) {
    if (t->rank() != 2 || t->dim(1) != model_dim_)
      throw ValueError("MultiHeadAttention: operand " + shape_str(t->shape()) +
                       " does not have feature dim " + std::to_string(model_dim_));
  }
  if (key.dim(0) != value.dim(0))
    throw ValueError("MultiHeadAttention: key length " + std::to_string(key.dim(0)) +
                     " differs from value length " + std::to_string(value.dim(0)));

  const Tensor q = wq_.forward(query);
  const Tensor k = wk_.forward(key);
  const Tensor v = wv_.forward(value);
  const std::size_t hd = head_dim();
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<Tensor> heads;
  heads.reserve(num_heads_);
  for (std::size_t h = 0; h < num_heads_; ++h) {
    const std::size_t c0 = h * hd, c1 = (h + 1) * hd;
    Tensor qh = slice_cols(q, c0, c1);
    Tensor kh = slice_cols(k, c0, c1);
    Tensor vh = slice_cols(v, c0, c1);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_hd);
    if (key_valid_len > 0 && key_valid_len < key.dim(0))
      scores = mask_columns_from(scores, key_valid_len);
    Tensor weights = softmax(scores, 1);
    heads.push_back(matmul(weights, vh));
  }
  Tensor merged = concat(std::span<const Tensor>(heads.data(), heads.size()), 1);
  return wo_.forward(merged);
}

void MultiHeadAttention::collect_parameters(const std::string& prefix,
                                            std::vector<NamedTensor>& out) const {
  wq_.collect_parameters(prefix + ".wq", out);
  wk_.collect_parameters(prefix + ".wk", out);
  wv_.collect_parameters(prefix + ".wv", out);
  wo_.collect_parameters(prefix + ".wo", out);
}

LayerNormParams::LayerNormParams(std::size_t dim, DType dtype, bool trainable)
    : gain(Tensor::ones({dim}, dtype)), bias(Tensor::zeros({dim}, dtype)) {
  gain.set_requires_grad(trainable);
  bias.set_requires_grad(trainable);
}

void LayerNormParams::collect_parameters(const std::string& prefix,
                                         std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

EncoderBlock::EncoderBlock(std::size_t model_dim, std::size_t num_heads, DType dtype, Rng& init)
    : ln1_(model_dim, dtype, true),
      ln2_(model_dim, dtype, true),
      attn_(model_dim, num_heads, dtype, init),
      ff1_(LinearLayer::glorot(model_dim, 4 * model_dim, dtype, init)),
      ff2_(LinearLayer::glorot(4 * model_dim, model_dim, dtype, init)) {}

Tensor EncoderBlock::forward(const Tensor& x) const {
  Tensor n1 = ln1_.forward(x);
  Tensor h = add(x, attn_.forward(n1, n1, n1));
  Tensor n2 = ln2_.forward(h);
  return add(h, ff2_.forward(gelu(ff1_.forward(n2))));
}

void EncoderBlock::collect_parameters(const std::string& prefix,
                                      std::vector<NamedTensor>& out) const {
  ln1_.collect_parameters(prefix + ".ln1", out);
  attn_.collect_parameters(prefix + ".attn", out);
  ln2_.collect_parameters(prefix + ".ln2", out);
  ff1_.collect_parameters(prefix + ".ff1", out);
  ff2_.collect_parameters(prefix + ".ff2", out);
}

}  // namespace xmodal
