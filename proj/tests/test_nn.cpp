// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <vector>

#include "attention_reference.hpp"
#include "doctest.h"
#include "xmodal/gradcheck.hpp"
#include "xmodal/nn.hpp"

using namespace xmodal;
using xmodal::testing::mha_reference;

namespace {

Tensor randn(Shape shape, Rng& rng, DType dtype = DType::F64) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from_vector(std::move(shape), v, dtype);
}

}  // namespace

TEST_CASE("linear with identity weight is the identity") {
  auto layer = LinearLayer::identity(3, DType::F64);
  Rng rng(1);
  auto x = randn({4, 3}, rng);
  CHECK(layer.forward(x).to_vector() == x.to_vector());
  auto v = randn({3}, rng);
  CHECK(layer.forward(v).to_vector() == v.to_vector());
}

TEST_CASE("linear on zero input returns the bias") {
  Rng rng(2);
  auto layer = LinearLayer::glorot(5, 3, DType::F64, rng);
  auto bias = randn({3}, rng);
  layer.bias.copy_data_from(bias);
  auto y = layer.forward(Tensor::zeros({2, 5}, DType::F64));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(y.at({i, j}) == doctest::Approx(bias.at({j})));
}

TEST_CASE("linear gradient vs finite differences") {
  Rng rng(3);
  auto layer = LinearLayer::glorot(4, 3, DType::F64, rng);
  auto x = randn({2, 4}, rng).set_requires_grad(true);
  auto readout = randn({2, 3}, rng);
  Tensor inputs[] = {x, layer.weight, layer.bias};
  double err = finite_diff_max_rel_err([&] { return sum(mul(layer.forward(x), readout)); }, inputs);
  CHECK(err <= 1e-6);
}

TEST_CASE("linear rejects dimension mismatch") {
  Rng rng(4);
  auto layer = LinearLayer::glorot(4, 3, DType::F64, rng);
  CHECK_THROWS_AS(layer.forward(Tensor::zeros({2, 5}, DType::F64)), ValueError);
}

TEST_CASE("single-key attention returns the value row for any query") {
  auto mha = MultiHeadAttention::identity(4, 1, DType::F64);
  Rng rng(5);
  auto q = randn({3, 4}, rng);
  auto k = randn({1, 4}, rng);
  auto v = randn({1, 4}, rng);
  auto out = mha.forward(q, k, v);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.at({i, j}) == doctest::Approx(v.at({0, j})));
}

TEST_CASE("attention output shape matches the query length at full scale") {
  auto mha = MultiHeadAttention::identity(768, 128, DType::F32);
  Rng rng(6);
  auto q = Tensor::uniform({1214, 768}, -1, 1, rng, DType::F32);
  auto k = Tensor::uniform({1214, 768}, -1, 1, rng, DType::F32);
  auto out = mha.forward(q, k, q);
  CHECK(out.shape() == Shape{1214, 768});
}

TEST_CASE("attention matches the explicit per-head oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    MultiHeadAttention mha(4, 2, DType::F64, rng);
    const std::size_t tq = 1 + rng.index(4);
    const std::size_t tk = 1 + rng.index(4);
    auto q = randn({tq, 4}, rng);
    auto k = randn({tk, 4}, rng);
    auto v = randn({tk, 4}, rng);
    auto got = mha.forward(q, k, v).to_vector();
    auto want = mha_reference(mha, q.to_vector(), tq, k.to_vector(), tk, v.to_vector(), tk);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
  }
}

TEST_CASE("attention rejects mismatched key/value lengths and bad head counts") {
  Rng rng(8);
  MultiHeadAttention mha(4, 2, DType::F64, rng);
  auto q = randn({2, 4}, rng);
  auto k = randn({3, 4}, rng);
  auto v = randn({2, 4}, rng);
  CHECK_THROWS_AS(mha.forward(q, k, v), ValueError);

  CHECK_THROWS_AS(MultiHeadAttention(100, 128, DType::F64, rng), ValueError);
  CHECK_NOTHROW(MultiHeadAttention(768, 128, DType::F32, rng));  // head_dim 6
}

TEST_CASE("attention rows are convex combinations in test mode") {
  auto mha = MultiHeadAttention::identity(6, 2, DType::F64);
  Rng rng(9);
  auto q = randn({4, 6}, rng);
  auto k = randn({5, 6}, rng);
  auto v = randn({5, 6}, rng);
  auto out = mha.forward(q, k, v);
  for (std::size_t j = 0; j < 6; ++j) {
    double lo = v.at({0, j}), hi = v.at({0, j});
    for (std::size_t s = 1; s < 5; ++s) {
      lo = std::min(lo, v.at({s, j}));
      hi = std::max(hi, v.at({s, j}));
    }
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(out.at({i, j}) >= lo - 1e-9);
      CHECK(out.at({i, j}) <= hi + 1e-9);
    }
  }
}

TEST_CASE("attention is invariant to joint key/value row permutation") {
  Rng rng(10);
  MultiHeadAttention mha(4, 2, DType::F64, rng);
  auto q = randn({3, 4}, rng);
  auto k = randn({5, 4}, rng);
  auto v = randn({5, 4}, rng);
  auto base = mha.forward(q, k, v).to_vector();

  std::vector<std::size_t> perm{4, 2, 0, 3, 1};
  auto kv = k.to_vector();
  auto vv = v.to_vector();
  std::vector<double> kp(kv.size()), vp(vv.size());
  for (std::size_t s = 0; s < 5; ++s)
    for (std::size_t j = 0; j < 4; ++j) {
      kp[s * 4 + j] = kv[perm[s] * 4 + j];
      vp[s * 4 + j] = vv[perm[s] * 4 + j];
    }
  auto permuted =
      mha.forward(q, Tensor::from_vector({5, 4}, kp, DType::F64), Tensor::from_vector({5, 4}, vp, DType::F64))
          .to_vector();
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(permuted[i] == doctest::Approx(base[i]).epsilon(1e-6));
}

TEST_CASE("head count changes output values but never shape") {
  Rng rng(11);
  auto q = randn({3, 8}, rng);
  std::vector<std::vector<double>> outputs;
  for (std::size_t heads : {1u, 2u, 4u, 8u}) {
    Rng init(42);  // identical projection weights across head counts
    MultiHeadAttention mha(8, heads, DType::F64, init);
    auto out = mha.forward(q, q, q);
    CHECK(out.shape() == Shape{3, 8});
    outputs.push_back(out.to_vector());
  }
  for (std::size_t i = 1; i < outputs.size(); ++i) {
    double diff = 0;
    for (std::size_t j = 0; j < outputs[i].size(); ++j)
      diff = std::max(diff, std::abs(outputs[i][j] - outputs[0][j]));
    CHECK(diff > 1e-9);
  }
}

TEST_CASE("attention key_valid_len masks trailing key positions") {
  auto mha = MultiHeadAttention::identity(4, 1, DType::F64);
  Rng rng(12);
  auto q = randn({2, 4}, rng);
  auto k = randn({5, 4}, rng);
  auto v = randn({5, 4}, rng);
  auto masked = mha.forward(q, k, v, /*key_valid_len=*/2);

  // Equivalent to attending over the first two rows only.
  auto kv = k.to_vector();
  auto vv = v.to_vector();
  auto k2 = Tensor::from_vector({2, 4}, std::vector<double>(kv.begin(), kv.begin() + 8), DType::F64);
  auto v2 = Tensor::from_vector({2, 4}, std::vector<double>(vv.begin(), vv.begin() + 8), DType::F64);
  auto direct = mha.forward(q, k2, v2);
  auto a = masked.to_vector(), b = direct.to_vector();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
}

TEST_CASE("encoder block preserves shape") {
  Rng rng(13);
  EncoderBlock block(8, 2, DType::F64, rng);
  auto x = randn({5, 8}, rng);
  CHECK(block.forward(x).shape() == Shape{5, 8});
}

TEST_CASE("encoder block with zeroed output projections is the identity") {
  Rng rng(14);
  EncoderBlock block(6, 2, DType::F64, rng);
  for (auto* t : {&block.attn().wo().weight, &block.attn().wo().bias, &block.ff2().weight,
                  &block.ff2().bias}) {
    auto span = t->mutable_data<double>();
    std::fill(span.begin(), span.end(), 0.0);
  }
  auto x = randn({4, 6}, rng);
  CHECK(block.forward(x).to_vector() == x.to_vector());
}

TEST_CASE("encoder block gradient vs finite differences") {
  Rng rng(15);
  EncoderBlock block(6, 2, DType::F64, rng);
  auto x = randn({3, 6}, rng).set_requires_grad(true);
  std::vector<NamedTensor> named;
  block.collect_parameters("block", named);
  std::vector<Tensor> inputs{x};
  for (auto& nt : named) inputs.push_back(nt.tensor);
  auto readout = randn({3, 6}, rng);
  double err = finite_diff_max_rel_err([&] { return sum(mul(block.forward(x), readout)); }, inputs);
  CHECK(err <= 1e-5);
}

TEST_CASE("parameter names are stable and complete") {
  Rng rng(16);
  EncoderBlock block(4, 2, DType::F64, rng);
  std::vector<NamedTensor> named;
  block.collect_parameters("enc.block0", named);
  std::vector<std::string> names;
  for (auto& nt : named) names.push_back(nt.name);
  // 2 layer norms x2 + 4 attention projections x2 + 2 ffn layers x2
  CHECK(names.size() == 16);
  CHECK(std::find(names.begin(), names.end(), "enc.block0.attn.wq.weight") != names.end());
  CHECK(std::find(names.begin(), names.end(), "enc.block0.ln1.gain") != names.end());
  CHECK(std::find(names.begin(), names.end(), "enc.block0.ff2.bias") != names.end());
}
