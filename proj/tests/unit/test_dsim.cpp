#include <cmath>
#include <vector>

#include "doctest.h"
#include "dpx/dsim.hpp"
#include "dpx/gradcheck.hpp"
#include "dpx/ops.hpp"

using dpx::Tensor;
namespace dsim = dpx::dsim;
using Grid = dpx::attn::TokenGrid<double>;
using Vec = std::vector<double>;

namespace {

dsim::DsimConfig config(std::size_t d, std::size_t heads, std::size_t noise) {
  dsim::DsimConfig cfg;
  cfg.dim = d;
  cfg.heads = heads;
  cfg.options.noise_tokens = noise;
  return cfg;
}

// Every tensor redrawn, the fusion factors included, so no term vanishes by construction.
dsim::DsimParams<double> random_params(const dsim::DsimConfig& cfg, dpx::Rng& rng) {
  auto p = dsim::DsimParams<double>::init(cfg, rng, {.zero_output_projection = false});
  p.visit([&](std::string_view, Tensor<double>& t) { t = rng.normal_tensor<double>(t.shape(), 0.6); });
  return p;
}

Grid random_grid(std::size_t h, std::size_t w, std::size_t d, dpx::Rng& rng) {
  return {h, w, rng.normal_tensor<double>({h * w, d}, 1.0)};
}

Vec row(const Tensor<double>& t, std::size_t i) {
  const std::size_t d = t.shape()[1];
  return Vec(t.data().begin() + i * d, t.data().begin() + (i + 1) * d);
}

Vec affine(const Vec& x, const dpx::nn::Linear<double>& l) {
  Vec y(l.out_features());
  for (std::size_t c = 0; c < y.size(); ++c) {
    y[c] = l.bias[c];
    for (std::size_t k = 0; k < x.size(); ++k) y[c] += x[k] * l.weight.at(k, c);
  }
  return y;
}

// second(gelu(first(x))) then a softmax over the row.
Vec discriminator(const Vec& x, const dpx::nn::Mlp2<double>& m) {
  Vec h = affine(x, m.first);
  for (double& v : h) v = 0.5 * v * (1 + std::tanh(0.7978845608028654 * (v + 0.044715 * v * v * v)));
  Vec z = affine(h, m.second);
  double mx = z[0], total = 0;
  for (double v : z) mx = std::max(mx, v);
  for (double& v : z) total += (v = std::exp(v - mx));
  for (double& v : z) v /= total;
  return z;
}

Vec hadamard(const Vec& a, const Vec& b, const Vec& c) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i] * c[i];
  return out;
}

Vec minus(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// One pixel of the rgb output, single head, written straight from the definitions:
// scores from the discriminators, gated keys, differential values, noise rows first.
Vec literal_rgb_pixel(const dsim::DsimConfig& cfg, const dsim::DsimParams<double>& p, const Vec& xr, const Vec& xd) {
  const auto& disc = p.discriminators;
  const Vec d_r = discriminator(minus(xr, xd), disc.f_d_rgb);
  Vec cat = xr;
  cat.insert(cat.end(), xd.begin(), xd.end());
  const Vec s = discriminator(cat, disc.f_s);
  const Vec q_lt = affine(xr, p.lt_q);
  const Vec alpha = row(p.factors.alpha_rgb.reshaped({1, cfg.dim}), 0);
  const Vec beta = row(p.factors.beta_rgb.reshaped({1, cfg.dim}), 0);
  const Vec v_r = affine(xr, p.lt_v), v_d = affine(xd, p.lt_v);
  std::vector<Vec> keys{row(p.noise.k_rgb, 0), hadamard(alpha, q_lt, d_r), hadamard(beta, q_lt, s)};
  std::vector<Vec> values{row(p.noise.v_rgb, 0), minus(v_r, v_d), v_d};
  const Vec q = affine(xr, p.w_q);
  std::vector<double> w;
  double mx = -INFINITY, total = 0;
  for (const auto& k : keys) {
    const Vec kp = affine(k, p.w_k);
    double dotv = 0;
    for (std::size_t c = 0; c < cfg.dim; ++c) dotv += q[c] * kp[c];
    w.push_back(dotv / std::sqrt(static_cast<double>(cfg.dim)));
    mx = std::max(mx, w.back());
  }
  for (double& v : w) total += (v = std::exp(v - mx));
  Vec att(cfg.dim, 0.0);
  for (std::size_t j = 0; j < values.size(); ++j) {
    const Vec vp = affine(values[j], p.w_v);
    for (std::size_t c = 0; c < cfg.dim; ++c) att[c] += w[j] / total * vp[c];
  }
  Vec out = affine(att, p.w_o);
  for (std::size_t c = 0; c < cfg.dim; ++c) out[c] += xr[c];
  return out;
}

}  // namespace

TEST_SUITE("dsim") {

TEST_CASE("identical modalities with shared difference discriminators give equal scores") {
  dpx::Rng rng(1);
  const auto cfg = config(4, 1, 1);
  auto p = random_params(cfg, rng);
  p.discriminators.f_d_depth = p.discriminators.f_d_rgb;
  const Grid x = random_grid(2, 2, 4, rng);
  const auto r = dsim::relation_scores(p.discriminators, x, x);
  CHECK(r.d_rgb == r.d_depth);
}

TEST_CASE("softmax discriminators produce normalized rows") {
  dpx::Rng rng(2);
  const auto cfg = config(6, 2, 1);
  const auto p = random_params(cfg, rng);
  const auto r = dsim::relation_scores(p.discriminators, random_grid(2, 3, 6, rng), random_grid(2, 3, 6, rng));
  for (const auto* t : {&r.d_rgb, &r.d_depth, &r.s})
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (double v : row(*t, i)) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1) < 1e-6);
    }
}

TEST_CASE("swapping modalities and difference discriminators swaps the difference scores") {
  dpx::Rng rng(3);
  const auto cfg = config(4, 1, 1);
  const auto p = random_params(cfg, rng);
  auto swapped = p.discriminators;
  std::swap(swapped.f_d_rgb, swapped.f_d_depth);
  const Grid xr = random_grid(2, 2, 4, rng), xd = random_grid(2, 2, 4, rng);
  const auto a = dsim::relation_scores(p.discriminators, xr, xd);
  const auto b = dsim::relation_scores(swapped, xd, xr);
  CHECK(a.d_rgb == b.d_depth);
  CHECK(a.d_depth == b.d_rgb);
}

TEST_CASE("zero fusion factors zero both key entries") {
  dpx::Rng rng(4);
  dsim::FusionFactors<double> f{Tensor<double>({4}), Tensor<double>({4}), Tensor<double>({4}), Tensor<double>({4})};
  auto t = [&] { return rng.normal_tensor<double>({3, 4}, 1.0); };
  const auto [kr, kd] = dsim::build_keys(f, t(), t(), t(), t(), t());
  CHECK(kr == Tensor<double>::zeros({3, 2, 4}));
  CHECK(kd == Tensor<double>::zeros({3, 2, 4}));
}

TEST_CASE("neutral gating copies the key projection into both entries") {
  dpx::Rng rng(5);
  const auto one = Tensor<double>::ones({4});
  dsim::FusionFactors<double> f{one, one, one, one};
  const auto qr = rng.normal_tensor<double>({3, 4}, 1.0), qd = rng.normal_tensor<double>({3, 4}, 1.0);
  const auto ones = Tensor<double>::ones({3, 4});
  const auto [kr, kd] = dsim::build_keys(f, qr, qd, ones, ones, ones);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t e = 0; e < 2; ++e)
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(kr.at(i, e, c) == qr.at(i, c));
        CHECK(kd.at(i, e, c) == qd.at(i, c));
      }
}

TEST_CASE("keys match a scalar loop exactly") {
  dpx::Rng rng(6);
  auto t = [&](dpx::Shape s) { return rng.normal_tensor<double>(std::move(s), 1.0); };
  dsim::FusionFactors<double> f{t({4}), t({4}), t({4}), t({4})};
  const auto qr = t({3, 4}), qd = t({3, 4}), dr = t({3, 4}), dd = t({3, 4}), s = t({3, 4});
  const auto [kr, kd] = dsim::build_keys(f, qr, qd, dr, dd, s);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(kr.at(i, 0, c) == f.alpha_rgb[c] * qr.at(i, c) * dr.at(i, c));
      CHECK(kr.at(i, 1, c) == f.beta_rgb[c] * qr.at(i, c) * s.at(i, c));
      CHECK(kd.at(i, 0, c) == f.alpha_depth[c] * qd.at(i, c) * dd.at(i, c));
      CHECK(kd.at(i, 1, c) == f.beta_depth[c] * qd.at(i, c) * s.at(i, c));
    }
  CHECK_THROWS_AS(dsim::build_keys(f, qr, t({2, 4}), dr, dd, s), dpx::DimensionError);
}

TEST_CASE("differential values") {
  dpx::Rng rng(7);
  const auto vr = rng.normal_tensor<double>({5, 4}, 1.0), vd = rng.normal_tensor<double>({5, 4}, 1.0);
  {
    const auto [a, b] = dsim::build_values(vr, vr);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(a.at(i, 0, c) == 0.0);
        CHECK(b.at(i, 0, c) == 0.0);
      }
  }
  const auto [a, b] = dsim::build_values(vr, vd);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(a.at(i, 0, c) == -b.at(i, 0, c));
      CHECK(a.at(i, 0, c) == vr.at(i, c) - vd.at(i, c));
      CHECK(a.at(i, 1, c) == vd.at(i, c));
      CHECK(b.at(i, 0, c) == vd.at(i, c) - vr.at(i, c));
      CHECK(b.at(i, 1, c) == vr.at(i, c));
    }
}

TEST_CASE("assembled sets") {
  dpx::Rng rng(8);
  auto sets = [&](std::size_t n, std::size_t d) { return rng.normal_tensor<double>({n, 2, d}, 1.0); };
  SUBCASE("without noise each pixel keeps its two entries") {
    const auto p = random_params(config(4, 1, 0), rng);
    const auto x = rng.normal_tensor<double>({3, 4}, 1.0);
    const auto [r, d] = dsim::assemble_qkv(p, x, x, sets(3, 4), sets(3, 4), sets(3, 4), sets(3, 4));
    CHECK(r.k.shape() == dpx::Shape{3, 2, 4});
    CHECK(d.v.shape() == dpx::Shape{3, 2, 4});
  }
  SUBCASE("identity projections leave the inputs") {
    auto p = random_params(config(4, 1, 1), rng);
    p.w_q = p.w_k = p.w_v = dpx::nn::Linear<double>::identity(4);
    const auto x = rng.normal_tensor<double>({3, 4}, 1.0);
    const auto k = sets(3, 4), v = sets(3, 4);
    const auto [r, d] = dsim::assemble_qkv(p, x, x, k, k, v, v);
    CHECK(r.q == x);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(r.k.at(i, 0, c) == p.noise.k_rgb.at(0, c));
        CHECK(r.v.at(i, 0, c) == p.noise.v_rgb.at(0, c));
        for (std::size_t e = 0; e < 2; ++e) {
          CHECK(r.k.at(i, 1 + e, c) == k.at(i, e, c));
          CHECK(r.v.at(i, 1 + e, c) == v.at(i, e, c));
        }
      }
  }
  SUBCASE("nine pixels, width eight, two noise tokens") {
    const auto p = random_params(config(8, 2, 2), rng);
    const auto x = rng.normal_tensor<double>({9, 8}, 1.0);
    const auto [r, d] = dsim::assemble_qkv(p, x, x, sets(9, 8), sets(9, 8), sets(9, 8), sets(9, 8));
    CHECK(r.k.shape() == dpx::Shape{9, 4, 8});
    CHECK(d.k.shape() == dpx::Shape{9, 4, 8});
  }
}

TEST_CASE("depth perturbation at one pixel leaves every other rgb output bitwise unchanged") {
  dpx::Rng rng(9);
  const auto cfg = config(4, 2, 1);
  const auto p = random_params(cfg, rng);
  const Grid xr = random_grid(3, 3, 4, rng), xd = random_grid(3, 3, 4, rng);
  const auto base = dsim::paca_forward(cfg, p, xr, xd);
  for (std::size_t j = 0; j < 9; ++j) {
    Grid moved = xd;
    for (std::size_t c = 0; c < 4; ++c) moved.feature.at(j, c) += 0.5 + 0.1 * static_cast<double>(c);
    const auto after = dsim::paca_forward(cfg, p, xr, moved);
    for (std::size_t k = 0; k < 9; ++k) {
      if (k == j) continue;
      CHECK(row(after.first.feature, k) == row(base.first.feature, k));
    }
    CHECK(row(after.first.feature, j) != row(base.first.feature, j));
  }
}

TEST_CASE("zero output projection makes the module the identity") {
  dpx::Rng rng(10);
  const auto cfg = config(4, 2, 2);
  auto p = random_params(cfg, rng);
  p.w_o = dpx::nn::Linear<double>::zeros(4, 4);
  const Grid xr = random_grid(2, 2, 4, rng), xd = random_grid(2, 2, 4, rng);
  const auto [yr, yd] = dsim::paca_forward(cfg, p, xr, xd);
  CHECK(yr.feature == xr.feature);
  CHECK(yd.feature == xd.feature);
}

TEST_CASE("forward matches the literal per-pixel composition") {
  dpx::Rng rng(11);
  const auto cfg = config(4, 1, 1);
  const auto p = random_params(cfg, rng);
  const Grid xr = random_grid(2, 2, 4, rng), xd = random_grid(2, 2, 4, rng);
  const auto [yr, yd] = dsim::paca_forward(cfg, p, xr, xd);
  for (std::size_t k = 0; k < 4; ++k) {
    const Vec want = literal_rgb_pixel(cfg, p, row(xr.feature, k), row(xd.feature, k));
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(yr.feature.at(k, c) - want[c]) < 1e-5);
  }
}

TEST_CASE("per-pixel attention weights sum to one") {
  dpx::Rng rng(12);
  const auto cfg = config(6, 3, 2);
  const auto p = random_params(cfg, rng);
  dsim::DsimCache<double> cache;
  dsim::dsim_branches(cfg, p, random_grid(2, 3, 6, rng), random_grid(2, 3, 6, rng), &cache);
  const std::size_t m = cfg.keys_per_pixel();
  for (const auto* w : {&cache.weights_rgb, &cache.weights_depth})
    for (std::size_t q = 0; q < 6; ++q)
      for (std::size_t h = 0; h < 3; ++h) {
        double s = 0;
        for (std::size_t j = 0; j < m; ++j) s += (*w)[q * m * 3 + h * m + j];
        CHECK(std::abs(s - 1) < 1e-6);
      }
}

TEST_CASE("backward") {
  dpx::Rng rng(13);
  const auto cfg = config(4, 2, 1);
  auto p = random_params(cfg, rng);
  Grid xr = random_grid(2, 2, 4, rng), xd = random_grid(2, 2, 4, rng);
  const auto wr = rng.normal_tensor<double>({4, 4}, 1.0), wd = rng.normal_tensor<double>({4, 4}, 1.0);

  SUBCASE("without a forward cache") {
    auto g = dpx::zeros_like_params<double>(p);
    CHECK_THROWS_AS(dsim::dsim_backward(cfg, p, dsim::DsimCache<double>{}, wr, wd, g), dpx::StateError);
  }
  SUBCASE("zero cotangent") {
    dsim::DsimCache<double> cache;
    dsim::dsim_branches(cfg, p, xr, xd, &cache);
    auto g = dpx::zeros_like_params<double>(p);
    const auto [dxr, dxd] = dsim::dsim_backward(cfg, p, cache, Tensor<double>({4, 4}), Tensor<double>({4, 4}), g);
    CHECK(dpx::max_abs(dxr) == 0.0);
    CHECK(dpx::max_abs(dxd) == 0.0);
    g.visit([](std::string_view name, Tensor<double>& t) { CHECK_MESSAGE(dpx::max_abs(t) == 0.0, name); });
  }
  SUBCASE("central differences") {
    dsim::DsimCache<double> cache;
    dsim::dsim_branches(cfg, p, xr, xd, &cache);
    auto g = dpx::zeros_like_params<double>(p);
    const auto [dxr, dxd] = dsim::dsim_backward(cfg, p, cache, wr, wd, g);
    auto loss = [&] {
      const auto [br, bd] = dsim::dsim_branches(cfg, p, xr, xd);
      return dpx::grad::probe(br, wr) + dpx::grad::probe(bd, wd);
    };
    dpx::grad::GradCheckReport report;
    dpx::grad::check_params(report, p, g, loss);
    dpx::grad::check_input(report, "xr", xr.feature, dxr, loss);
    dpx::grad::check_input(report, "xd", xd.feature, dxd, loss);
    for (const auto& r : report.groups) CHECK_MESSAGE(r.passed, r.name << " rel " << r.rel_error);
    CHECK(report.worst_rel_error() <= 1e-6);
  }
  SUBCASE("noise tokens behind zero key and value projections get no gradient") {
    p.w_k = dpx::nn::Linear<double>::zeros(4, 4);
    p.w_v = dpx::nn::Linear<double>::zeros(4, 4);
    dsim::DsimCache<double> cache;
    dsim::dsim_branches(cfg, p, xr, xd, &cache);
    auto g = dpx::zeros_like_params<double>(p);
    dsim::dsim_backward(cfg, p, cache, wr, wd, g);
    g.noise.visit([](std::string_view name, Tensor<double>& t) { CHECK_MESSAGE(dpx::max_abs(t) == 0.0, name); });
    CHECK(dpx::max_abs(g.w_v.weight) > 0.0);
  }
}

}  // TEST_SUITE
