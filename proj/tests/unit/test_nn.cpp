#include <cmath>

#include "doctest.h"
#include "dpx/gradcheck.hpp"
#include "dpx/nn.hpp"
#include "dpx/ops.hpp"

using dpx::Tensor;
namespace nn = dpx::nn;
namespace grad = dpx::grad;

namespace {

// Scalar probe <W, f(x)> so every output element contributes a distinct weight.
template <class F>
double probed(F&& f, const Tensor<double>& w) {
  return grad::probe(f(), w);
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("linear with identity weights passes the input through") {
  dpx::Rng rng(1);
  const auto x = rng.normal_tensor<double>({5, 4}, 1.0);
  CHECK(nn::Linear<double>::identity(4).forward(x) == x);
}

TEST_CASE("linear rejects a width mismatch") {
  dpx::Rng rng(1);
  const auto l = nn::Linear<double>::init(4, 3, rng);
  CHECK_THROWS_AS(l.forward(Tensor<double>({2, 5})), dpx::DimensionError);
}

TEST_CASE("zero cotangent gives zero linear gradients") {
  dpx::Rng rng(2);
  const auto l = nn::Linear<double>::init(4, 3, rng);
  const auto x = rng.normal_tensor<double>({5, 4}, 1.0);
  auto g = dpx::zeros_like_params<double>(l);
  const auto dx = l.backward(x, Tensor<double>({5, 3}), g);
  CHECK(dx == Tensor<double>::zeros({5, 4}));
  CHECK(g.weight == Tensor<double>::zeros({4, 3}));
  CHECK(g.bias == Tensor<double>::zeros({3}));
}

TEST_CASE("linear backward matches central differences") {
  dpx::Rng rng(3);
  auto l = nn::Linear<double>::init(4, 3, rng);
  l.weight = rng.normal_tensor<double>({4, 3}, 1.0);
  l.bias = rng.normal_tensor<double>({3}, 1.0);
  auto x = rng.normal_tensor<double>({5, 4}, 1.0);
  const auto w = rng.normal_tensor<double>({5, 3}, 1.0);
  auto g = dpx::zeros_like_params<double>(l);
  const auto dx = l.backward(x, w, g);
  grad::GradCheckReport report;
  report.tolerance = 1e-7;
  auto loss = [&] { return probed([&] { return l.forward(x); }, w); };
  grad::check_params(report, l, g, loss);
  grad::check_input(report, "x", x, dx, loss);
  for (const auto& r : report.groups) CHECK_MESSAGE(r.rel_error <= 1e-7, r.name);
}

TEST_CASE("layer norm maps a constant row to zeros") {
  const auto ln = nn::LayerNorm<double>::init(6);
  const auto y = ln.forward(Tensor<double>::full({1, 6}, 3.25));
  for (double v : y.data()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("layer norm output has zero mean and unit variance") {
  dpx::Rng rng(4);
  const auto y = nn::LayerNorm<double>::init(64).forward(rng.normal_tensor<double>({1, 64}, 5.0));
  double mean = 0, var = 0;
  for (double v : y.data()) mean += v / 64;
  for (double v : y.data()) var += (v - mean) * (v - mean) / 64;
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(var - 1) < 1e-4);
}

TEST_CASE("layer norm rejects a zero width") {
  CHECK_THROWS_AS(nn::LayerNorm<double>::init(0), dpx::DimensionError);
}

TEST_CASE("layer norm backward matches central differences") {
  dpx::Rng rng(5);
  auto ln = nn::LayerNorm<double>::init(6);
  ln.gain = rng.normal_tensor<double>({6}, 1.0);
  ln.shift = rng.normal_tensor<double>({6}, 1.0);
  auto x = rng.normal_tensor<double>({3, 6}, 1.0);
  const auto w = rng.normal_tensor<double>({3, 6}, 1.0);
  nn::LayerNorm<double>::Cache cache;
  ln.forward(x, &cache);
  auto g = dpx::zeros_like_params<double>(ln);
  const auto dx = ln.backward(cache, w, g);
  grad::GradCheckReport report;
  auto loss = [&] { return probed([&] { return ln.forward(x); }, w); };
  grad::check_params(report, ln, g, loss);
  grad::check_input(report, "x", x, dx, loss);
  CHECK(report.passed());
  CHECK(report.worst_rel_error() <= 1e-6);
}

TEST_CASE("gelu fixes zero") {
  CHECK(nn::gelu(Tensor<double>({1}, {0.0}))[0] == 0.0);
}

TEST_CASE("mlp2 final activations") {
  dpx::Rng rng(6);
  auto m = nn::Mlp2<double>::init(5, 7, 4, nn::FinalActivation::kSoftmax, rng);
  m.first.weight = rng.normal_tensor<double>({5, 7}, 1.0);
  m.second.weight = rng.normal_tensor<double>({7, 4}, 1.0);
  const auto x = rng.normal_tensor<double>({6, 5}, 1.0);
  const auto soft = m.forward(x);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 4; ++j) s += soft.at(i, j);
    CHECK(std::abs(s - 1) < 1e-6);
  }
  m.final_activation = nn::FinalActivation::kSigmoid;
  const auto sig = m.forward(x);
  for (double v : sig.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("mlp2 backward matches central differences for every activation") {
  for (auto act : {nn::FinalActivation::kNone, nn::FinalActivation::kSoftmax, nn::FinalActivation::kSigmoid}) {
    dpx::Rng rng(7);
    auto m = nn::Mlp2<double>::init(3, 5, 4, act, rng);
    m.visit([&](std::string_view, Tensor<double>& t) { t = rng.normal_tensor<double>(t.shape(), 1.0); });
    auto x = rng.normal_tensor<double>({2, 3}, 1.0);
    const auto w = rng.normal_tensor<double>({2, 4}, 1.0);
    nn::Mlp2<double>::Cache cache;
    m.forward(x, &cache);
    auto g = dpx::zeros_like_params<double>(m);
    const auto dx = m.backward(cache, w, g);
    grad::GradCheckReport report;
    auto loss = [&] { return probed([&] { return m.forward(x); }, w); };
    grad::check_params(report, m, g, loss);
    grad::check_input(report, "x", x, dx, loss);
    CHECK_MESSAGE(report.passed(), nn::activation_name(act));
  }
}

TEST_CASE("drop path is the identity in eval mode") {
  dpx::Rng rng(8);
  nn::DropPathConfig cfg{0.5, nn::DropPathMode::kEval};
  const auto x = rng.normal_tensor<double>({4, 3}, 1.0);
  CHECK(nn::drop_path(x, cfg.sample_scale(rng)) == x);
  cfg.mode = nn::DropPathMode::kTrain;
  for (int i = 0; i < 20; ++i) {
    const double s = cfg.sample_scale(rng);
    CHECK((s == 0.0 || s == 2.0));
  }
}

}  // TEST_SUITE
