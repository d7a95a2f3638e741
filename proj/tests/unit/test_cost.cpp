#include <cmath>

#include "doctest.h"
#include "dpx/cli.hpp"
#include "dpx/cost_model.hpp"
#include "dpx/flops.hpp"
#include "dpx/model.hpp"

namespace cost = dpx::cost;
namespace attn = dpx::attn;
using attn::Variant;
using Grid = attn::TokenGrid<double>;

namespace {

dpx::dsim::DsimConfig dsim_config(std::size_t d, std::size_t heads, std::size_t noise) {
  dpx::dsim::DsimConfig cfg;
  cfg.dim = d;
  cfg.heads = heads;
  cfg.options.noise_tokens = noise;
  return cfg;
}

// FLOPs tallied by the instrumented kernels during one module application.
std::uint64_t executed(Variant v, const attn::AttentionConfig& cfg, std::size_t h, std::size_t w, bool shifted,
                       dpx::Rng& rng) {
  const Grid x{h, w, rng.normal_tensor<double>({h * w, cfg.dim}, 1.0)};
  const Grid y{h, w, rng.normal_tensor<double>({h * w, cfg.dim}, 1.0)};
  if (v == Variant::kDsim) {
    const auto dcfg = dsim_config(cfg.dim, cfg.heads, cfg.noise_tokens);
    const auto p = dpx::dsim::DsimParams<double>::init(dcfg, rng);
    dpx::flops::Scope s;
    dpx::dsim::dsim_branches(dcfg, p, x, y);
    return s.count();
  }
  const auto p = attn::AttentionParams<double>::init(cfg, rng);
  dpx::flops::Scope s;
  if (v == Variant::kSelf) {
    attn::self_branch(cfg, p, x);
    attn::self_branch(cfg, p, y);
  } else {
    attn::cross_branches(v, cfg, p, x, y, shifted);
  }
  return s.count();
}

}  // namespace

TEST_SUITE("cost") {

TEST_CASE("doubling the token count") {
  attn::AttentionConfig cfg{.dim = 16, .heads = 4};
  const auto a = cost::count_attention(Variant::kFull, cfg, 6, 5), b = cost::count_attention(Variant::kFull, cfg, 6, 10);
  CHECK(b.flops_matching("attention") == 4 * a.flops_matching("attention"));
  for (std::size_t noise : {0, 1, 2}) {
    const auto dcfg = dsim_config(16, 4, noise);
    CHECK(cost::count_dsim(dcfg, 6, 10).total_flops() == 2 * cost::count_dsim(dcfg, 6, 5).total_flops());
  }
  CHECK(cost::count_attention(Variant::kPixelwise, cfg, 6, 10).total_flops() ==
        2 * cost::count_attention(Variant::kPixelwise, cfg, 6, 5).total_flops());
}

TEST_CASE("on one token full and pixel-wise attention scores cost the same") {
  for (std::size_t heads : {1, 2, 4}) {
    const attn::AttentionConfig cfg{.dim = 8, .heads = heads};
    CHECK(cost::count_attention(Variant::kFull, cfg, 1, 1).flops_matching("attention") ==
          cost::count_attention(Variant::kPixelwise, cfg, 1, 1).flops_matching("attention"));
  }
}

TEST_CASE("closed-form counts equal the instrumented execution for every variant") {
  dpx::Rng rng(1);
  for (int t = 0; t < 6; ++t) {
    const std::size_t h = 1 + rng.below(8), w = 1 + rng.below(8), heads = 1 + rng.below(2);
    attn::AttentionConfig cfg{.dim = heads * (1 + rng.below(8)), .heads = heads};
    cfg.window = 1 + rng.below(std::min(h, w));
    cfg.radius = static_cast<long>(rng.below(3));
    for (Variant v : attn::kAllVariants) {
      auto c = cfg;
      c.noise_tokens = v == Variant::kSelf ? 0 : rng.below(3);
      for (bool shifted : {false, true}) {
        if (shifted && v != Variant::kShiftedWindow) continue;
        const auto exec = executed(v, c, h, w, shifted, rng);
        CHECK_MESSAGE(exec == cost::count_attention(v, c, h, w, shifted).total_flops(),
                      attn::variant_name(v) << " on " << h << "x" << w);
      }
    }
  }
}

TEST_CASE("parameter counts ignore geometry and FLOPs follow it") {
  dpx::ModelConfig small;
  small.encoder.height = small.encoder.width = 16;
  auto large = small;
  large.encoder.height = large.encoder.width = 32;
  const auto a = cost::count_model(small), b = cost::count_model(large);
  CHECK(a.total_params() == b.total_params());
  CHECK(b.total_flops() > a.total_flops());
  const auto dcfg = dsim_config(8, 2, 1);
  CHECK(cost::count_dsim(dcfg, 8, 8).total_flops() == 4 * cost::count_dsim(dcfg, 4, 4).total_flops());
  CHECK(cost::count_dsim(dcfg, 8, 8).total_params() == cost::count_dsim(dcfg, 4, 4).total_params());
}

TEST_CASE("toy parameter count equals the parameter walk") {
  for (Variant v : {Variant::kFull, Variant::kShiftedWindow, Variant::kLocal, Variant::kPixelwise, Variant::kDsim}) {
    dpx::ModelConfig mc;
    mc.encoder.inter = v;
    dpx::Rng rng(2);
    const auto m = dpx::Model<float>::init(mc, rng);
    CHECK_MESSAGE(dpx::count_params<float>(m) == cost::count_model(mc).total_params(), attn::variant_name(v));
  }
}

TEST_CASE("mit-b3-like: dsim needs fewer FLOPs than full cross attention") {
  dpx::ModelConfig mc;
  mc.encoder = dpx::enc::EncoderConfig::preset("mit-b3-like");
  const auto ca = cost::count_model(mc, Variant::kFull), ds = cost::count_model(mc, Variant::kDsim);
  CHECK(ds.total_flops() < ca.total_flops());
}

// Known deviation: with standard q/k/v/o projections a cross-attention block
// holds 4d^2 weights while DSIM adds three discriminators and the LT maps on
// top of its own four projections, so the parameter column cannot favor DSIM.
TEST_CASE("mit-b3-like: dsim has fewer parameters than full cross attention" * doctest::may_fail()) {
  dpx::ModelConfig mc;
  mc.encoder = dpx::enc::EncoderConfig::preset("mit-b3-like");
  const auto ca = cost::count_model(mc, Variant::kFull), ds = cost::count_model(mc, Variant::kDsim);
  CHECK(ds.total_params() < ca.total_params());
}

TEST_CASE("published reductions") {
  const auto r = cost::compare_values("ca", 527.98e6, 749.01e9, "dsim", 85.40e6, 205.73e9);
  CHECK(std::abs(r.params_pct - 83.83) < 0.01);
  CHECK(std::abs(r.flops_pct - 72.53) < 0.01);
  const auto same = cost::compare_values("a", 3, 4, "b", 3, 4);
  CHECK(same.params_pct == 0.0);
  CHECK(same.flops_pct == 0.0);
  CHECK_THROWS_AS(cost::compare_values("a", 0, 4, "b", 3, 4), dpx::DomainError);
  dpx::ModelConfig mc;
  const auto rep = cost::count_model(mc);
  const auto self = cost::compare_variants(rep, rep);
  CHECK(self.params_pct == 0.0);
  CHECK(self.flops_pct == 0.0);
}

TEST_CASE("bundled reference file") {
  const auto rows = dpx::cli::compare_reference(std::string(DPX_DATA_DIR) + "/published_attention_costs.json");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].dataset == "sunrgbd");
  CHECK(std::abs(rows[1].reduction.params_pct - 83.83) < 0.01);
  CHECK(std::abs(rows[1].reduction.flops_pct - 72.53) < 0.01);
}

TEST_CASE("log-log slopes separate quadratic and linear mechanisms") {
  const attn::AttentionConfig cfg{.dim = 32, .heads = 4};
  const auto dcfg = dsim_config(32, 4, 1);
  std::vector<double> n, full, ours;
  for (std::size_t side : {4, 8, 16, 32}) {
    n.push_back(static_cast<double>(side * side));
    full.push_back(static_cast<double>(cost::count_attention(Variant::kFull, cfg, side, side).flops_matching("attention")));
    ours.push_back(static_cast<double>(cost::count_dsim(dcfg, side, side).total_flops()));
  }
  CHECK(std::abs(cost::loglog_slope(n, full) - 2.0) <= 0.05);
  CHECK(std::abs(cost::loglog_slope(n, ours) - 1.0) <= 0.05);
}

}  // TEST_SUITE
