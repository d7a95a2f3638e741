#include <cmath>
#include <cstdlib>
#include <functional>

#include "doctest.h"
#include "dpx/attention.hpp"
#include "dpx/ops.hpp"

using dpx::Tensor;
namespace attn = dpx::attn;
using Grid = attn::TokenGrid<double>;

namespace {

attn::AttentionParams<double> random_params(const attn::AttentionConfig& cfg, dpx::Rng& rng) {
  auto p = attn::AttentionParams<double>::init(cfg, rng, {.zero_output_projection = false, .weight_std = 0.5});
  p.visit([&](std::string_view, Tensor<double>& t) { t = rng.normal_tensor<double>(t.shape(), 0.5); });
  return p;
}

Grid random_grid(std::size_t h, std::size_t w, std::size_t d, dpx::Rng& rng) {
  return {h, w, rng.normal_tensor<double>({h * w, d}, 1.0)};
}

// x + O(concat_h softmax_{j in allowed(i)}(q_i k_j / sqrt(dh)) v_j), written out per
// scalar; keys and values come from `y`.
Tensor<double> dense_oracle(const attn::AttentionConfig& cfg, const attn::AttentionParams<double>& p, const Grid& x,
                            const Grid& y, const std::function<bool(std::size_t, std::size_t)>& allowed) {
  const std::size_t n = x.tokens(), d = cfg.dim, dh = cfg.head_dim();
  auto project = [&](const Tensor<double>& in, const dpx::nn::Linear<double>& l) {
    Tensor<double> out({in.shape()[0], d});
    for (std::size_t i = 0; i < in.shape()[0]; ++i)
      for (std::size_t c = 0; c < d; ++c) {
        double s = l.bias[c];
        for (std::size_t k = 0; k < d; ++k) s += in.at(i, k) * l.weight.at(k, c);
        out.at(i, c) = s;
      }
    return out;
  };
  const auto q = project(x.feature, p.q), k = project(y.feature, p.k), v = project(y.feature, p.v);
  Tensor<double> heads({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      std::vector<double> s(y.tokens(), -INFINITY);
      double mx = -INFINITY, total = 0;
      for (std::size_t j = 0; j < y.tokens(); ++j) {
        if (!allowed(i, j)) continue;
        s[j] = 0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) s[j] += q.at(i, c) * k.at(j, c);
        s[j] /= std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      for (std::size_t j = 0; j < y.tokens(); ++j) total += allowed(i, j) ? std::exp(s[j] - mx) : 0.0;
      for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < y.tokens(); ++j)
          if (allowed(i, j)) acc += std::exp(s[j] - mx) / total * v.at(j, c);
        heads.at(i, c) = acc;
      }
    }
  return dpx::add(x.feature, project(heads, p.o));
}

const auto everywhere = [](std::size_t, std::size_t) { return true; };

}  // namespace

TEST_SUITE("attention") {

TEST_CASE("single-token self attention gives x + O(V(x))") {
  dpx::Rng rng(1);
  const attn::AttentionConfig cfg{.dim = 4, .heads = 2};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(1, 1, 4, rng);
  const auto y = attn::self_attention(cfg, p, x);
  CHECK(dpx::max_abs_diff(y.feature, dpx::add(x.feature, p.o.forward(p.v.forward(x.feature)))) < 1e-12);
}

TEST_CASE("self attention is permutation equivariant") {
  dpx::Rng rng(2);
  const attn::AttentionConfig cfg{.dim = 4, .heads = 2};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(1, 5, 4, rng);
  const std::size_t perm[] = {3, 0, 4, 1, 2};
  Grid px{1, 5, Tensor<double>({5, 4})};
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 4; ++c) px.feature.at(i, c) = x.feature.at(perm[i], c);
  const auto y = attn::self_attention(cfg, p, x), py = attn::self_attention(cfg, p, px);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(py.feature.at(i, c) - y.feature.at(perm[i], c)) < 1e-12);
}

TEST_CASE("self attention matches the dense oracle") {
  dpx::Rng rng(3);
  const attn::AttentionConfig cfg{.dim = 2, .heads = 1};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(1, 3, 2, rng);
  CHECK(dpx::max_abs_diff(attn::self_attention(cfg, p, x).feature, dense_oracle(cfg, p, x, x, everywhere)) < 1e-5);
}

TEST_CASE("cross attention with a zero value path is the residual") {
  dpx::Rng rng(4);
  const attn::AttentionConfig cfg{.dim = 4, .heads = 2};
  auto p = random_params(cfg, rng);
  p.v = dpx::nn::Linear<double>::zeros(4, 4);
  p.o.bias.fill(0.0);
  const Grid x = random_grid(2, 2, 4, rng), y = random_grid(2, 2, 4, rng);
  const auto [ox, oy] = attn::cross_attention(cfg, p, x, y);
  CHECK(ox.feature == x.feature);
  CHECK(oy.feature == y.feature);
}

TEST_CASE("cross attention on one token weights its single key by one") {
  dpx::Rng rng(5);
  const attn::AttentionConfig cfg{.dim = 4, .heads = 2};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(1, 1, 4, rng), y = random_grid(1, 1, 4, rng);
  const auto [ox, oy] = attn::cross_attention(cfg, p, x, y);
  CHECK(dpx::max_abs_diff(ox.feature, dpx::add(x.feature, p.o.forward(p.v.forward(y.feature)))) < 1e-12);
  CHECK(dpx::max_abs_diff(oy.feature, dpx::add(y.feature, p.o.forward(p.v.forward(x.feature)))) < 1e-12);
}

TEST_CASE("cross attention matches the dense oracle in both directions") {
  dpx::Rng rng(6);
  const attn::AttentionConfig cfg{.dim = 4, .heads = 2};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(2, 2, 4, rng), y = random_grid(2, 2, 4, rng);
  const auto [ox, oy] = attn::cross_attention(cfg, p, x, y);
  CHECK(dpx::max_abs_diff(ox.feature, dense_oracle(cfg, p, x, y, everywhere)) < 1e-5);
  CHECK(dpx::max_abs_diff(oy.feature, dense_oracle(cfg, p, y, x, everywhere)) < 1e-5);
  CHECK_THROWS_AS(attn::cross_attention(cfg, p, x, random_grid(1, 3, 4, rng)), dpx::DimensionError);
}

TEST_CASE("a window spanning the grid is full cross attention") {
  dpx::Rng rng(7);
  attn::AttentionConfig cfg{.dim = 4, .heads = 2, .window = 3};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(3, 3, 4, rng), y = random_grid(3, 3, 4, rng);
  const auto full = attn::cross_attention(cfg, p, x, y);
  const auto win = attn::shifted_window_cross_attention(cfg, p, x, y);
  CHECK(dpx::max_abs_diff(win.first.feature, full.first.feature) < 1e-5);
  CHECK(dpx::max_abs_diff(win.second.feature, full.second.feature) < 1e-5);
  cfg.window = 4;
  CHECK_THROWS_AS(attn::shifted_window_cross_attention(cfg, p, x, y), dpx::ConfigError);
}

TEST_CASE("window attention only sees its own window") {
  dpx::Rng rng(8);
  const attn::AttentionConfig cfg{.dim = 4, .heads = 2, .window = 2};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(4, 4, 4, rng), y = random_grid(4, 4, 4, rng);
  const auto base = attn::shifted_window_cross_attention(cfg, p, x, y);
  Grid moved = y;
  for (std::size_t c = 0; c < 4; ++c) moved.feature.at(15, c) += 3.0;  // bottom-right window only
  const auto after = attn::shifted_window_cross_attention(cfg, p, x, moved);
  for (std::size_t c = 0; c < 4; ++c) CHECK(after.first.feature.at(0, c) == base.first.feature.at(0, c));
  CHECK(after.first.feature.at(15, 0) != base.first.feature.at(15, 0));
}

TEST_CASE("4x4 window-2 attention equals full attention on each 2x2 sub-grid") {
  dpx::Rng rng(9);
  const attn::AttentionConfig cfg{.dim = 4, .heads = 2, .window = 2};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(4, 4, 4, rng), y = random_grid(4, 4, 4, rng);
  const auto win = attn::shifted_window_cross_attention(cfg, p, x, y);
  for (std::size_t wr = 0; wr < 4; wr += 2)
    for (std::size_t wc = 0; wc < 4; wc += 2) {
      auto sub = [&](const Grid& g) {
        Grid s{2, 2, Tensor<double>({4, 4})};
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t c = 0; c < 4; ++c) s.feature.at(i, c) = g.feature.at((wr + i / 2) * 4 + wc + i % 2, c);
        return s;
      };
      const auto part = attn::cross_attention(cfg, p, sub(x), sub(y));
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 4; ++c) {
          const std::size_t k = (wr + i / 2) * 4 + wc + i % 2;
          CHECK(std::abs(win.first.feature.at(k, c) - part.first.feature.at(i, c)) < 1e-5);
          CHECK(std::abs(win.second.feature.at(k, c) - part.second.feature.at(i, c)) < 1e-5);
        }
    }
}

TEST_CASE("local attention degenerates to full and pixel-wise attention") {
  dpx::Rng rng(10);
  attn::AttentionConfig cfg{.dim = 4, .heads = 2, .radius = 3};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(3, 4, 4, rng), y = random_grid(3, 4, 4, rng);
  const auto full = attn::cross_attention(cfg, p, x, y);
  const auto wide = attn::local_cross_attention(cfg, p, x, y);
  CHECK(dpx::max_abs_diff(wide.first.feature, full.first.feature) < 1e-5);
  CHECK(dpx::max_abs_diff(wide.second.feature, full.second.feature) < 1e-5);
  cfg.radius = 0;
  const auto point = attn::local_cross_attention(cfg, p, x, y);
  const auto pixel = attn::pixelwise_cross_attention(cfg, p, x, y);
  CHECK(dpx::max_abs_diff(point.first.feature, pixel.first.feature) < 1e-5);
  CHECK(dpx::max_abs_diff(point.second.feature, pixel.second.feature) < 1e-5);
  cfg.radius = -1;
  CHECK_THROWS_AS(attn::local_cross_attention(cfg, p, x, y), dpx::ConfigError);
}

TEST_CASE("local attention on a 5x5 grid matches the masked dense oracle") {
  dpx::Rng rng(11);
  const attn::AttentionConfig cfg{.dim = 4, .heads = 2, .radius = 1};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(5, 5, 4, rng), y = random_grid(5, 5, 4, rng);
  auto near = [](std::size_t i, std::size_t j) {
    const long dr = static_cast<long>(i / 5) - static_cast<long>(j / 5);
    const long dc = static_cast<long>(i % 5) - static_cast<long>(j % 5);
    return std::labs(dr) <= 1 && std::labs(dc) <= 1;
  };
  const auto out = attn::local_cross_attention(cfg, p, x, y);
  CHECK(dpx::max_abs_diff(out.first.feature, dense_oracle(cfg, p, x, y, near)) < 1e-5);
  CHECK(dpx::max_abs_diff(out.second.feature, dense_oracle(cfg, p, y, x, near)) < 1e-5);
}

TEST_CASE("pixel-wise attention with one key and no noise gives V(y) + x") {
  dpx::Rng rng(12);
  const attn::AttentionConfig cfg{.dim = 4, .heads = 2};
  auto p = random_params(cfg, rng);
  p.o = dpx::nn::Linear<double>::identity(4);
  const Grid x = random_grid(2, 3, 4, rng), y = random_grid(2, 3, 4, rng);
  const auto [ox, oy] = attn::pixelwise_cross_attention(cfg, p, x, y);
  CHECK(dpx::max_abs_diff(ox.feature, dpx::add(p.v.forward(y.feature), x.feature)) < 1e-12);
  CHECK(dpx::max_abs_diff(oy.feature, dpx::add(p.v.forward(x.feature), y.feature)) < 1e-12);
}

TEST_CASE("pixel-wise attention ignores other pixels of the other modality") {
  dpx::Rng rng(13);
  const attn::AttentionConfig cfg{.dim = 4, .heads = 2, .noise_tokens = 2};
  const auto p = random_params(cfg, rng);
  const Grid x = random_grid(3, 3, 4, rng), y = random_grid(3, 3, 4, rng);
  const auto base = attn::pixelwise_cross_attention(cfg, p, x, y);
  Grid moved = y;
  for (std::size_t c = 0; c < 4; ++c) moved.feature.at(4, c) -= 2.0;
  const auto after = attn::pixelwise_cross_attention(cfg, p, x, moved);
  for (std::size_t k = 0; k < 9; ++k)
    for (std::size_t c = 0; c < 4; ++c) {
      if (k != 4) CHECK(after.first.feature.at(k, c) == base.first.feature.at(k, c));
    }
  CHECK(after.first.feature.at(4, 0) != base.first.feature.at(4, 0));
}

TEST_CASE("pixel-wise weights with two noise keys sum to one") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    dpx::Rng rng(seed);
    const attn::AttentionConfig cfg{.dim = 4, .heads = 2, .noise_tokens = 2};
    const auto p = random_params(cfg, rng);
    const Grid x = random_grid(2, 2, 4, rng), y = random_grid(2, 2, 4, rng);
    attn::DirectionCache<double> cache;
    attn::attend_direction(cfg, p, x.feature, y.feature,
                           attn::variant_key_sets(attn::Variant::kPixelwise, cfg, 2, 2, false), &cache);
    for (std::size_t q = 0; q < cache.sets.queries(); ++q) {
      const std::size_t m = cache.sets.keys(q).size();
      CHECK(m == 3);
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        double s = 0;
        for (std::size_t j = 0; j < m; ++j) s += cache.weights[cache.sets.offsets[q] * cfg.heads + h * m + j];
        CHECK(std::abs(s - 1) < 1e-6);
      }
    }
  }
}

TEST_CASE("variant names round trip and unknown names list the valid ones") {
  for (auto v : attn::kAllVariants) CHECK(attn::parse_variant(attn::variant_name(v)) == v);
  try {
    attn::parse_variant("bogus");
    FAIL("expected ConfigError");
  } catch (const dpx::ConfigError& e) {
    CHECK(std::string(e.what()).find("sa, ca, swca, lca, pwca, dsim") != std::string::npos);
  }
}

}  // TEST_SUITE
