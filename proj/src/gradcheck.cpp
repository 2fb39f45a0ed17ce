// SPDX-License-Identifier: Apache-2.0
#include "xmodal/gradcheck.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "xmodal/model.hpp"
#include "xmodal/nn.hpp"
#include "xmodal/train.hpp"

namespace xmodal {

double finite_diff_max_rel_err(const std::function<Tensor()>& f, std::span<Tensor> inputs, double h,
                               double denom_floor) {
  for (Tensor& in : inputs) {
    if (in.dtype() != DType::F64)
      throw ValueError("finite_diff_max_rel_err: inputs must be F64");
    if (!in.requires_grad())
      throw ValueError("finite_diff_max_rel_err: inputs must require grad");
    in.zero_grad();
  }

  {
    GradTape tape;
    Tensor loss = f();
    tape.backward(loss);
  }

  double worst = 0.0;
  for (Tensor& in : inputs) {
    const auto analytic = in.has_grad() ? in.grad_to_vector() : std::vector<double>(in.numel(), 0.0);
    auto data = in.mutable_data<double>();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = f().item();
      data[i] = saved - h;
      const double down = f().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), denom_floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    in.zero_grad();
  }
  return worst;
}

namespace {

Tensor randn64(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from_vector(std::move(shape), v, DType::F64);
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckResult> results;
  Rng rng(seed);

  auto check = [&](std::string name, double tol, const std::function<Tensor()>& f,
                   std::vector<Tensor> inputs) {
    const double err = finite_diff_max_rel_err(f, std::span<Tensor>(inputs.data(), inputs.size()));
    results.push_back({std::move(name), err, tol});
  };

  {
    auto a = randn64({3, 4}, rng).set_requires_grad(true);
    auto b = randn64({4, 2}, rng).set_requires_grad(true);
    auto r = randn64({3, 2}, rng);
    check("matmul", 1e-6, [=] { return sum(mul(matmul(a, b), r)); }, {a, b});
  }
  {
    auto x = randn64({3, 5}, rng).set_requires_grad(true);
    auto r = randn64({5, 3}, rng);
    check("transpose", 1e-6, [=] { return sum(mul(transpose(x), r)); }, {x});
  }
  {
    auto a = randn64({4, 3}, rng).set_requires_grad(true);
    auto b = randn64({4, 3}, rng).set_requires_grad(true);
    auto r = randn64({4, 3}, rng);
    check("add", 1e-6, [=] { return sum(mul(add(a, b), r)); }, {a, b});
    check("mul", 1e-6, [=] { return sum(mul(mul(a, b), r)); }, {a, b});
    check("scale", 1e-6, [=] { return sum(mul(scale(a, -1.7), r)); }, {a});
  }
  {
    auto x = randn64({4, 3}, rng).set_requires_grad(true);
    auto bias = randn64({3}, rng).set_requires_grad(true);
    auto r = randn64({4, 3}, rng);
    check("add_bias", 1e-6, [=] { return sum(mul(add_bias(x, bias), r)); }, {x, bias});
  }
  {
    auto x = randn64({2, 5}, rng).set_requires_grad(true);
    auto r = randn64({2, 5}, rng);
    check("softmax", 1e-6, [=] { return sum(mul(softmax(x, 1), r)); }, {x});
  }
  {
    auto x = randn64({3, 2}, rng).set_requires_grad(true);
    auto r = randn64({5, 2}, rng);
    check("pad_to_length", 1e-6, [=] { return sum(mul(pad_to_length(x, 5), r)); }, {x});
  }
  {
    auto a = randn64({2, 3}, rng).set_requires_grad(true);
    auto b = randn64({4, 3}, rng).set_requires_grad(true);
    auto r = randn64({6, 3}, rng);
    check("concat", 1e-6, [=] { return sum(mul(concat(a, b, 0), r)); }, {a, b});
  }
  {
    auto x = randn64({3, 4}, rng).set_requires_grad(true);
    auto r = randn64({12}, rng);
    check("flatten", 1e-6, [=] { return sum(mul(flatten(x), r)); }, {x});
  }
  {
    auto x = randn64({4, 6}, rng).set_requires_grad(true);
    auto r = randn64({4, 2}, rng);
    check("slice_cols", 1e-6, [=] { return sum(mul(slice_cols(x, 2, 4), r)); }, {x});
  }
  {
    auto x = randn64({40}, rng).set_requires_grad(true);
    auto r = randn64({40}, rng);
    const std::uint64_t mask_seed = rng.next();
    check("dropout", 1e-6,
          [=] {
            Rng mask_rng(mask_seed);  // same mask on every evaluation
            return sum(mul(dropout(x, 0.3, true, mask_rng), r));
          },
          {x});
  }
  {
    auto x = randn64({4, 3}, rng).set_requires_grad(true);
    auto r = randn64({4, 3}, rng);
    check("gelu", 1e-6, [=] { return sum(mul(gelu(x), r)); }, {x});
  }
  {
    auto x = randn64({3, 5}, rng).set_requires_grad(true);
    auto gain = randn64({5}, rng).set_requires_grad(true);
    auto bias = randn64({5}, rng).set_requires_grad(true);
    auto r = randn64({3, 5}, rng);
    check("layer_norm", 1e-6, [=] { return sum(mul(layer_norm(x, gain, bias), r)); },
          {x, gain, bias});
  }
  {
    auto layer = LinearLayer::glorot(4, 3, DType::F64, rng);
    auto x = randn64({2, 4}, rng).set_requires_grad(true);
    auto r = randn64({2, 3}, rng);
    check("linear", 1e-6, [=] { return sum(mul(layer.forward(x), r)); },
          {x, layer.weight, layer.bias});
  }
  {
    MultiHeadAttention mha(4, 2, DType::F64, rng);
    auto q = randn64({3, 4}, rng).set_requires_grad(true);
    auto k = randn64({5, 4}, rng).set_requires_grad(true);
    auto v = randn64({5, 4}, rng).set_requires_grad(true);
    auto r = randn64({3, 4}, rng);
    std::vector<Tensor> inputs{q, k, v};
    std::vector<NamedTensor> named;
    mha.collect_parameters("mha", named);
    for (auto& nt : named) inputs.push_back(nt.tensor);
    check("multi_head_attention", 1e-6, [=] { return sum(mul(mha.forward(q, k, v), r)); }, inputs);
  }
  {
    EncoderBlock block(6, 2, DType::F64, rng);
    auto x = randn64({3, 6}, rng).set_requires_grad(true);
    auto r = randn64({3, 6}, rng);
    std::vector<Tensor> inputs{x};
    std::vector<NamedTensor> named;
    block.collect_parameters("block", named);
    for (auto& nt : named) inputs.push_back(nt.tensor);
    check("encoder_block", 1e-5, [=] { return sum(mul(block.forward(x), r)); }, inputs);
  }
  {
    auto logits = randn64({7}, rng).set_requires_grad(true);
    std::vector<double> w{1.3, 0.9, 1.0, 0.7, 1.1, 0.8, 1.2};
    const std::size_t gold = rng.index(7);
    check("weighted_cross_entropy", 1e-6, [=] { return weighted_cross_entropy(logits, gold, w); },
          {logits});
  }

  // Both full architectures, tiny dims, toy encoders.
  for (FusionKind fusion : {FusionKind::Concat, FusionKind::CrossAttention}) {
    ModelConfig cfg;
    cfg.model_dim = 8;
    cfg.num_heads = 2;
    cfg.fusion = fusion;
    cfg.text_len = 3;
    cfg.audio_len = 5;
    cfg.dtype = DType::F64;
    cfg.text_encoder.kind = EncoderKind::ToyTransformer;
    cfg.text_encoder.model_dim = 8;
    cfg.text_encoder.depth = 1;
    cfg.audio_encoder.kind = EncoderKind::ToyTransformer;
    cfg.audio_encoder.model_dim = 8;
    cfg.audio_encoder.depth = 1;

    BimodalClassifier model(cfg, rng);
    UtteranceRecord rec;
    rec.id = "gradcheck";
    rec.label = EmotionLabel::Neutral;
    rec.text_features = randn64({3, 8}, rng);
    rec.audio_features = randn64({5, 8}, rng);
    auto readout = randn64({7}, rng);

    std::vector<Tensor> inputs;
    for (auto& nt : model.named_parameters()) inputs.push_back(nt.tensor);
    const std::string name = fusion == FusionKind::Concat ? "classifier_concat"
                                                          : "classifier_cross_attention";
    check(name, 1e-4,
          [=, &model] { return sum(mul(model.forward(rec, false), readout)); }, inputs);
  }

  return results;
}

std::string format_gradcheck_report(std::span<const GradCheckResult> results) {
  std::ostringstream os;
  for (const auto& r : results) {
    os << (r.pass() ? "[PASS] " : "[FAIL] ") << std::left << std::setw(28) << r.component
       << " max rel err " << std::scientific << std::setprecision(3) << r.max_rel_err << "  (tol "
       << r.tolerance << ")\n";
  }
  return os.str();
}

}  // namespace xmodal
