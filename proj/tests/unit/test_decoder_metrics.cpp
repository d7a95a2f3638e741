#include <cstdint>
#include <set>

#include "doctest.h"
#include "dpx/decoder.hpp"
#include "dpx/metrics.hpp"
#include "dpx/ops.hpp"
#include "dpx/scene.hpp"

using dpx::Tensor;
namespace dec = dpx::dec;
namespace metrics = dpx::metrics;
using I32 = std::int32_t;

namespace {

std::array<dpx::enc::BiModalFeatures<double>, 4> features(const std::array<std::size_t, 4>& dims, std::size_t side,
                                                          dpx::Rng* rng) {
  std::array<dpx::enc::BiModalFeatures<double>, 4> f;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t h = std::max<std::size_t>(side >> s, 1), n = h * h;
    auto t = [&] { return rng ? rng->normal_tensor<double>({n, dims[s]}, 1.0) : Tensor<double>({n, dims[s]}); };
    f[s] = {{h, h, t()}, {h, h, t()}};
  }
  return f;
}

metrics::SegmentationMap map2x2(std::initializer_list<I32> v) { return {Tensor<I32>({2, 2}, std::vector<I32>(v))}; }

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("one class gives one logit channel") {
  dpx::Rng rng(1);
  const std::array<std::size_t, 4> dims{4, 8, 8, 16};
  const auto d = dec::Decoder<double>::init(dims, 6, 1, rng);
  const auto logits = dec::decoder_forward(d, features(dims, 8, &rng), 16, 16);
  CHECK(logits.shape() == dpx::Shape{256, 1});
}

TEST_CASE("zero features through a zero-bias decoder give zero logits") {
  dpx::Rng rng(2);
  const std::array<std::size_t, 4> dims{4, 8, 8, 16};
  const auto d = dec::Decoder<double>::init(dims, 6, 3, rng);
  const auto logits = dec::decoder_forward(d, features(dims, 8, nullptr), 8, 8);
  CHECK(logits == Tensor<double>::zeros({64, 3}));
}

TEST_CASE("bilinear resampling keeps a constant map constant") {
  const auto plan = dec::bilinear_plan(3, 5, 8, 7);
  const auto out = dec::bilinear_resize(Tensor<double>::full({15, 2}, -1.25), plan);
  CHECK(out.shape() == dpx::Shape{56, 2});
  for (double v : out.data()) CHECK(std::abs(v + 1.25) < 1e-12);
}

TEST_CASE("inconsistent stage geometry is rejected") {
  dpx::Rng rng(3);
  const std::array<std::size_t, 4> dims{4, 8, 8, 16};
  const auto d = dec::Decoder<double>::init(dims, 6, 2, rng);
  auto f = features(dims, 8, &rng);
  f[2].depth.height = 1;
  CHECK_THROWS_AS(dec::decoder_forward(d, f, 8, 8), dpx::DimensionError);
}

}  // TEST_SUITE

TEST_SUITE("metrics") {

TEST_CASE("perfect prediction gives a diagonal matrix and unit metrics") {
  const auto gt = map2x2({0, 2, 1, 1});
  const auto cm = metrics::confusion(gt, gt, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) CHECK(cm.at(i, j) == 0);
  CHECK(metrics::miou(cm) == 1.0);
  CHECK(metrics::macc(cm) == 1.0);
  CHECK(metrics::pixel_acc(cm) == 1.0);
}

TEST_CASE("hand-tallied 2x2 example") {
  const auto cm = metrics::confusion(map2x2({0, 0, 1, 1}), map2x2({0, 1, 1, 1}), 2);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 0);
  CHECK(cm.at(1, 1) == 2);
  CHECK(cm.row_sum(0) == 2);
  CHECK(cm.row_sum(1) == 2);
  CHECK(metrics::pixel_acc(cm) == doctest::Approx(3.0 / 4).epsilon(1e-15));
  CHECK(metrics::miou(cm) == doctest::Approx(7.0 / 12).epsilon(1e-15));
  CHECK(metrics::macc(cm) == doctest::Approx(3.0 / 4).epsilon(1e-15));
}

TEST_CASE("row sums are ground-truth class counts") {
  dpx::Rng rng(4);
  Tensor<I32> gt({6, 7}), pred({6, 7});
  std::array<std::uint64_t, 5> counts{};
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i] = static_cast<I32>(rng.below(5));
    pred[i] = static_cast<I32>(rng.below(5));
    ++counts[static_cast<std::size_t>(gt[i])];
  }
  const auto cm = metrics::confusion({gt}, {pred}, 5);
  for (std::size_t c = 0; c < 5; ++c) CHECK(cm.row_sum(c) == counts[c]);
}

TEST_CASE("out-of-range labels and empty matrices are domain errors") {
  CHECK_THROWS_AS(metrics::confusion(map2x2({0, 0, 1, 2}), map2x2({0, 0, 1, 1}), 2), dpx::DomainError);
  CHECK_THROWS_AS(metrics::confusion(map2x2({0, 0, 1, -1}), map2x2({0, 0, 1, 1}), 2), dpx::DomainError);
  CHECK_THROWS_AS(metrics::miou(metrics::ConfusionMatrix(3)), dpx::DomainError);
  CHECK_THROWS_AS(metrics::macc(metrics::ConfusionMatrix(3)), dpx::DomainError);
  CHECK_THROWS_AS(metrics::pixel_acc(metrics::ConfusionMatrix(3)), dpx::DomainError);
}

TEST_CASE("random five-class maps match a per-pixel oracle exactly") {
  dpx::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 1 + rng.below(12), w = 1 + rng.below(12), k = 5;
    Tensor<I32> gt({h, w}), pred({h, w});
    for (std::size_t i = 0; i < gt.size(); ++i) {
      gt[i] = static_cast<I32>(rng.below(k));
      pred[i] = rng.uniform() < 0.5 ? gt[i] : static_cast<I32>(rng.below(k));
    }
    double iou_sum = 0, acc_sum = 0, correct = 0;
    std::size_t iou_n = 0, acc_n = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double inter = 0, uni = 0, in_gt = 0;
      for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool g = gt[i] == static_cast<I32>(c), q = pred[i] == static_cast<I32>(c);
        inter += g && q;
        uni += g || q;
        in_gt += g;
      }
      if (uni > 0) iou_sum += inter / uni, ++iou_n;
      if (in_gt > 0) acc_sum += inter / in_gt, ++acc_n;
    }
    for (std::size_t i = 0; i < gt.size(); ++i) correct += gt[i] == pred[i];
    const auto cm = metrics::confusion({gt}, {pred}, k);
    CHECK(metrics::miou(cm) == iou_sum / static_cast<double>(iou_n));
    CHECK(metrics::macc(cm) == acc_sum / static_cast<double>(acc_n));
    CHECK(metrics::pixel_acc(cm) == correct / static_cast<double>(gt.size()));
  }
}

TEST_CASE("synthetic scenes") {
  SUBCASE("one shape over two classes uses both labels") {
    dpx::scene::SceneParams p{.height = 16, .width = 16, .num_classes = 2, .shapes = 1, .seed = 3};
    const auto sc = dpx::scene::generate_scene(p);
    std::set<I32> seen(sc.labels.labels.data().begin(), sc.labels.labels.data().end());
    CHECK(seen == std::set<I32>{0, 1});
  }
  SUBCASE("equal seeds give identical scenes") {
    const dpx::scene::SceneParams p{.seed = 9};
    CHECK(dpx::scene::generate_scene(p) == dpx::scene::generate_scene(p));
  }
  SUBCASE("depth decreases strictly with layer index") {
    const dpx::scene::SceneParams p{.shapes = 6, .seed = 4};
    const auto sc = dpx::scene::generate_scene(p);
    for (std::size_t l = 0; l < 6; ++l) CHECK(dpx::scene::layer_depth(l + 1, 6) < dpx::scene::layer_depth(l, 6));
    for (std::size_t i = 0; i < sc.depth.size(); ++i)
      CHECK(sc.depth[i] == dpx::scene::layer_depth(static_cast<std::size_t>(sc.layers[i]), 6));
  }
  SUBCASE("fewer than two classes is a config error") {
    CHECK_THROWS_AS(dpx::scene::generate_scene({.num_classes = 1}), dpx::ConfigError);
  }
}

}  // TEST_SUITE
