#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dpx/gradcheck.hpp"
#include "dpx/ops.hpp"
#include "dpx/property_suite.hpp"

using dpx::Tensor;
namespace grad = dpx::grad;
namespace props = dpx::props;

TEST_SUITE("gradcheck") {

TEST_CASE("linear function has a unit gradient") {
  // Dyadic inputs and a power-of-two step keep every perturbed sum exact.
  const Tensor<double> x({7}, {0.5, -1.25, 2, 0.125, -3, 1.75, 0});
  const auto g = grad::finite_difference_grad([](const Tensor<double>& t) { return dpx::sum(t); }, x, 0x1p-20);
  for (double v : g.data()) CHECK(std::abs(v - 1) < 1e-10);
}

TEST_CASE("half the squared norm has gradient x") {
  dpx::Rng rng(2);
  const auto x = rng.normal_tensor<double>({7}, 1.0);
  const auto g = grad::finite_difference_grad([](const Tensor<double>& t) { return dpx::dot(t, t) / 2; }, x, 1e-5);
  CHECK(dpx::max_abs_diff(g, x) < 1e-8);
}

TEST_CASE("non-finite objective is a domain error") {
  const Tensor<double> x({2}, {1, 2});
  CHECK_THROWS_AS(grad::finite_difference_grad([](const Tensor<double>&) { return NAN; }, x), dpx::DomainError);
}

TEST_CASE("group comparison") {
  const Tensor<double> a({3}, {1, 2, 3});
  CHECK(grad::compare_group("same", a, a, 1e-6).passed);
  CHECK_FALSE(grad::compare_group("off", a, Tensor<double>({3}, {1, 2, 3.1}), 1e-6).passed);
  // Vanishing gradients pass on the round-off floor alone.
  CHECK(grad::compare_group("tiny", Tensor<double>({2}), Tensor<double>({2}, {1e-12, -1e-12}), 1e-6, 1e-10).passed);
  CHECK(grad::relative_error(1.0, 1.0) == 0.0);
}

}  // TEST_SUITE

TEST_SUITE("properties") {

TEST_CASE("default seed passes every property") {
  const auto report = props::run_property_suite({});
  for (const auto& r : report.results) CHECK_MESSAGE(r.status != props::Status::kFail, r.name << ": " << r.detail);
  CHECK(report.results.size() == props::registry().size());
}

TEST_CASE("one record per registered property, identical across runs") {
  props::SuiteConfig cfg;
  cfg.filter = "tensor.";
  const auto a = props::run_property_suite(cfg), b = props::run_property_suite(cfg);
  std::size_t expected = 0;
  for (const auto& p : props::registry()) expected += p.name.rfind("tensor.", 0) == 0;
  const std::string text = a.to_jsonl();
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == expected);
  CHECK(text == b.to_jsonl());
}

TEST_CASE("skipping softmax normalization fails the normalization property") {
  props::SuiteConfig cfg;
  cfg.filter = "tensor.softmax_normalization";
  cfg.mutate = {"tensor.softmax_normalization"};
  const auto report = props::run_property_suite(cfg);
  REQUIRE(report.results.size() == 1);
  CHECK(report.results[0].status == props::Status::kFail);
  CHECK(report.results[0].mutated);
}

TEST_CASE("structural properties hold with the difference branch disabled") {
  props::SuiteConfig cfg;
  cfg.ablation.enable_difference = false;
  const auto report = props::run_property_suite(cfg);
  CHECK(report.passed());
}

}  // TEST_SUITE
