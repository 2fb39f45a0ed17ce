// SPDX-License-Identifier: Apache-2.0
#include <vector>

#include "doctest.h"
#include "xmodal/gradcheck.hpp"

using namespace xmodal;

namespace {

// y = 2x whose recorded rule deliberately claims dy/dx = 3. Exists to prove
// the checker notices broken gradients.
Tensor doubled_with_wrong_grad(const Tensor& x) {
  auto v = x.to_vector();
  for (auto& e : v) e *= 2.0;
  Tensor out = Tensor::from_vector(x.shape(), v, x.dtype());
  if (GradTape* tape = GradTape::active(); tape && x.requires_grad()) {
    out.set_requires_grad(true);
    tape->record("bad_double", [xi = x.impl(), oi = out.impl()] {
      auto& g = detail::grad_vec<double>(*xi);
      if (g.empty()) g.assign(xi->numel(), 0.0);
      const auto& dy = detail::grad_vec<double>(*oi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * dy[i];
    });
  }
  return out;
}

}  // namespace

TEST_CASE("the full gradient suite passes on a correct build") {
  auto results = run_gradcheck_suite(1234);
  REQUIRE(results.size() >= 18);
  for (const auto& r : results) {
    INFO(r.component, " err=", r.max_rel_err);
    CHECK(r.pass());
  }

  bool has_concat = false, has_cross = false, has_mha = false;
  for (const auto& r : results) {
    has_concat |= r.component == "classifier_concat";
    has_cross |= r.component == "classifier_cross_attention";
    has_mha |= r.component == "multi_head_attention";
  }
  CHECK(has_concat);
  CHECK(has_cross);
  CHECK(has_mha);
}

TEST_CASE("the verdict is stable across seeds") {
  for (std::uint64_t seed : {1ULL, 7ULL, 99ULL}) {
    auto results = run_gradcheck_suite(seed);
    for (const auto& r : results) {
      INFO("seed ", seed, " component ", r.component);
      CHECK(r.pass());
    }
  }
}

TEST_CASE("a corrupted gradient rule is detected and named") {
  Rng rng(5);
  std::vector<double> v(12);
  for (auto& x : v) x = rng.normal();
  auto x = Tensor::from_vector({12}, v, DType::F64).set_requires_grad(true);
  Tensor inputs[] = {x};
  const double err = finite_diff_max_rel_err([&] { return sum(doubled_with_wrong_grad(x)); }, inputs);
  CHECK(err > 0.1);  // claimed 3, truth 2

  GradCheckResult result{"bad_double", err, 1e-6};
  CHECK_FALSE(result.pass());
  auto report = format_gradcheck_report(std::span<const GradCheckResult>(&result, 1));
  CHECK(report.find("[FAIL]") != std::string::npos);
  CHECK(report.find("bad_double") != std::string::npos);
}

TEST_CASE("report formatting marks passes and failures") {
  auto results = run_gradcheck_suite(42);
  auto report = format_gradcheck_report(results);
  CHECK(report.find("[PASS] matmul") != std::string::npos);
  CHECK(report.find("classifier_cross_attention") != std::string::npos);
  CHECK(report.find("[FAIL]") == std::string::npos);
}
