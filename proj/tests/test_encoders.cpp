// SPDX-License-Identifier: Apache-2.0
#include <vector>

#include "doctest.h"
#include "xmodal/encoders.hpp"
#include "xmodal/gradcheck.hpp"

using namespace xmodal;

namespace {

Tensor randn(Shape shape, Rng& rng, DType dtype = DType::F64) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from_vector(std::move(shape), v, dtype);
}

}  // namespace

TEST_CASE("file-backed encoder passes stored sequences through bit-identically") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::FileBacked;
  cfg.model_dim = 768;
  Rng rng(1);
  EncoderBackend backend(cfg, DType::F32, rng);
  auto stored = Tensor::uniform({17, 768}, -2, 2, rng, DType::F32);
  auto out = backend.encode(stored);
  CHECK(out.same_bits(stored));

  std::vector<NamedTensor> params;
  backend.collect_parameters("text_encoder", params);
  CHECK(params.empty());
}

TEST_CASE("file-backed encoder rejects wrong dims and missing data") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::FileBacked;
  cfg.model_dim = 8;
  cfg.max_seq_len = 16;
  Rng rng(2);
  EncoderBackend backend(cfg, DType::F32, rng);
  CHECK_THROWS_AS(backend.encode(Tensor::zeros({3, 5}, DType::F32)), ValueError);
  CHECK_THROWS_AS(backend.encode(Tensor{}), ValueError);
  CHECK_THROWS_AS(backend.encode(Tensor::zeros({17, 8}, DType::F32)), ValueError);
}

TEST_CASE("toy encoder with depth zero is just the input projection") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::ToyTransformer;
  cfg.model_dim = 6;
  cfg.input_dim = 4;
  cfg.depth = 0;
  Rng rng(3);
  EncoderBackend backend(cfg, DType::F64, rng);
  auto x = randn({3, 4}, rng);
  auto out = backend.encode(x);
  CHECK(out.shape() == Shape{3, 6});

  std::vector<NamedTensor> params;
  backend.collect_parameters("enc", params);
  REQUIRE(params.size() == 2);  // input projection only
  auto w = params[0].tensor.to_vector();
  auto b = params[1].tensor.to_vector();
  auto xv = x.to_vector();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 6; ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < 4; ++i) acc += xv[r * 4 + i] * w[i * 6 + j];
      CHECK(out.at({r, j}) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("toy encoder gradient reaches the input projection") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::ToyTransformer;
  cfg.model_dim = 8;
  cfg.depth = 1;
  cfg.num_heads = 2;
  Rng rng(4);
  EncoderBackend backend(cfg, DType::F64, rng);
  auto x = randn({3, 8}, rng);
  auto readout = randn({3, 8}, rng);

  std::vector<NamedTensor> named;
  backend.collect_parameters("enc", named);
  Tensor w_in;
  std::vector<Tensor> inputs;
  for (auto& nt : named) {
    inputs.push_back(nt.tensor);
    if (nt.name == "enc.input.weight") w_in = nt.tensor;
  }
  REQUIRE(w_in.defined());

  {
    GradTape tape;
    tape.backward(sum(mul(backend.encode(x), readout)));
  }
  REQUIRE(w_in.has_grad());
  double norm = 0;
  for (double g : w_in.grad_to_vector()) norm += g * g;
  CHECK(norm > 1e-12);
  for (auto& t : inputs) t.zero_grad();

  double err = finite_diff_max_rel_err(
      [&] { return sum(mul(backend.encode(x), readout)); },
      std::span<Tensor>(inputs.data(), inputs.size()));
  CHECK(err <= 1e-4);
}

TEST_CASE("encoding is deterministic for fixed parameters") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::ToyTransformer;
  cfg.model_dim = 8;
  cfg.depth = 2;
  cfg.num_heads = 2;
  Rng rng(5);
  EncoderBackend backend(cfg, DType::F32, rng);
  auto x = Tensor::uniform({4, 8}, -1, 1, rng, DType::F32);
  CHECK(backend.encode(x).same_bits(backend.encode(x)));
}
