#include <set>
#include <string>

#include "doctest.h"
#include "dpx/encoder.hpp"
#include "dpx/ops.hpp"

using dpx::Tensor;
namespace enc = dpx::enc;
using Grid = dpx::attn::TokenGrid<double>;

namespace {

enc::EncoderConfig small(std::size_t side, std::array<std::size_t, 4> depths) {
  auto cfg = enc::EncoderConfig::preset("toy");
  cfg.height = cfg.width = side;
  for (std::size_t s = 0; s < 4; ++s) {
    cfg.stages[s].depth = depths[s];
    cfg.stages[s].dim = 4 << s;
    cfg.stages[s].heads = 2;
  }
  cfg.window = 2;
  cfg.mlp_ratio = 2;
  return cfg;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("patch geometry arithmetic") {
  CHECK(enc::patch_output_extent(64, {7, 4, 3}) == 16);
  CHECK(enc::patch_output_extent(16, {3, 2, 1}) == 8);
  CHECK(enc::patch_output_extent(16, {3, 1, 1}) == 16);
}

TEST_CASE("non-overlapping embedding of a constant image is constant") {
  dpx::Rng rng(1);
  auto pe = enc::PatchEmbed<double>::init({2, 2, 0}, 3, 5, rng);
  const Grid img{6, 4, Tensor<double>::full({24, 3}, 0.75)};
  const auto out = pe.forward(img);
  CHECK(out.height == 3);
  CHECK(out.width == 2);
  for (std::size_t k = 1; k < out.tokens(); ++k)
    for (std::size_t c = 0; c < 5; ++c) CHECK(out.feature.at(k, c) == out.feature.at(0, c));
}

TEST_CASE("embedding of 64x64 with kernel 7, stride 4, padding 3 has 16x16 tokens") {
  dpx::Rng rng(2);
  const auto pe = enc::PatchEmbed<double>::init({7, 4, 3}, 3, 8, rng);
  const auto out = pe.forward(Grid{64, 64, rng.normal_tensor<double>({64 * 64, 3}, 1.0)});
  CHECK(out.height == 16);
  CHECK(out.width == 16);
  CHECK(out.feature.shape() == dpx::Shape{256, 8});
}

TEST_CASE("embedding equals an explicit sliding-window gather followed by the projection") {
  dpx::Rng rng(3);
  const enc::PatchGeometry g{3, 2, 1};
  auto pe = enc::PatchEmbed<double>::init(g, 2, 4, rng);
  pe.proj.bias = rng.normal_tensor<double>({4}, 1.0);
  const Grid x{5, 6, rng.normal_tensor<double>({30, 2}, 1.0)};
  const auto out = pe.forward(x);
  CHECK(out.height == 3);
  CHECK(out.width == 3);
  for (std::size_t oy = 0; oy < 3; ++oy)
    for (std::size_t ox = 0; ox < 3; ++ox)
      for (std::size_t c = 0; c < 4; ++c) {
        double s = pe.proj.bias[c];
        std::size_t col = 0;
        for (long ky = 0; ky < 3; ++ky)
          for (long kx = 0; kx < 3; ++kx)
            for (std::size_t ch = 0; ch < 2; ++ch, ++col) {
              const long iy = static_cast<long>(oy) * 2 + ky - 1, ix = static_cast<long>(ox) * 2 + kx - 1;
              if (iy < 0 || ix < 0 || iy >= 5 || ix >= 6) continue;
              s += x.feature.at(static_cast<std::size_t>(iy * 6 + ix), ch) * pe.proj.weight.at(col, c);
            }
        CHECK(std::abs(out.feature.at(oy * 3 + ox, c) - s) < 1e-5);
      }
}

TEST_CASE("an indivisible geometry names the stage") {
  auto cfg = enc::EncoderConfig::preset("default");
  cfg.height = 60;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const dpx::ConfigError& e) {
    CHECK(std::string(e.what()).find("stage") != std::string::npos);
  }
}

TEST_CASE("zero-initialized residual projections make a block the identity") {
  for (auto inter : {dpx::attn::Variant::kDsim, dpx::attn::Variant::kFull, dpx::attn::Variant::kPixelwise}) {
    dpx::Rng rng(4);
    auto cfg = small(8, {1, 1, 1, 1});
    cfg.inter = inter;
    const auto spec = enc::block_spec(cfg, 0, 0);
    const auto block = enc::init_block<double>(spec, cfg.mlp_ratio, rng);
    const Grid xr{4, 4, rng.normal_tensor<double>({16, 4}, 1.0)}, xd{4, 4, rng.normal_tensor<double>({16, 4}, 1.0)};
    const auto out = enc::iimib_forward(spec, block, xr, xd);
    CHECK(out.rgb.feature == xr.feature);
    CHECK(out.depth.feature == xd.feature);
  }
}

TEST_CASE("blocks preserve geometry and compose sequentially") {
  dpx::Rng rng(5);
  const auto cfg = small(8, {3, 1, 1, 1});
  const auto e = enc::Encoder<double>::init(cfg, rng, {.zero_output_projection = false, .weight_std = 0.2});
  const auto rgb = rng.normal_tensor<double>({64, 3}, 1.0), depth = rng.normal_tensor<double>({64, 1}, 1.0);
  const auto fused = enc::encoder_forward(e, rgb, depth);

  Grid xr = e.embed_rgb.forward(Grid{8, 8, rgb});
  Grid xd = e.embed_depth.forward(Grid{8, 8, enc::replicate_channels(depth, 3)});
  xr.feature = e.embed_ln_rgb.forward(xr.feature);
  xd.feature = e.embed_ln_depth.forward(xd.feature);
  for (std::size_t b = 0; b < 3; ++b) {
    auto next = enc::iimib_forward(enc::block_spec(cfg, 0, b), e.stages[0].blocks[b], xr, xd);
    CHECK(next.rgb.height == xr.height);
    CHECK(next.rgb.width == xr.width);
    CHECK(next.rgb.feature.shape() == xr.feature.shape());
    xr = std::move(next.rgb);
    xd = std::move(next.depth);
  }
  CHECK(fused[0].rgb.feature == xr.feature);
  CHECK(fused[0].depth.feature == xd.feature);
}

TEST_CASE("stage geometry on 64x64") {
  auto cfg = enc::EncoderConfig::preset("default");
  for (auto& s : cfg.stages) s.depth = 1;
  const auto g = cfg.stage_geometry();
  const std::size_t want[] = {16, 8, 4, 2};
  for (std::size_t s = 0; s < 4; ++s) {
    CHECK(g[s].first == want[s]);
    CHECK(g[s].second == want[s]);
  }
}

TEST_CASE("identity blocks reduce the encoder to the embed and merge pipeline") {
  dpx::Rng rng(6);
  const auto cfg = small(8, {2, 1, 1, 1});
  const auto e = enc::Encoder<double>::init(cfg, rng);
  const auto rgb = rng.normal_tensor<double>({64, 3}, 1.0), depth = rng.normal_tensor<double>({64, 3}, 1.0);
  const auto out = enc::encoder_forward(e, rgb, depth);
  Grid xr = e.embed_rgb.forward(Grid{8, 8, rgb}), xd = e.embed_depth.forward(Grid{8, 8, depth});
  xr.feature = e.embed_ln_rgb.forward(xr.feature);
  xd.feature = e.embed_ln_depth.forward(xd.feature);
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) {
      const auto& m = e.merges[s - 1];
      xr = m.embed.forward(xr);
      xd = m.embed.forward(xd);
      xr.feature = m.ln_rgb.forward(xr.feature);
      xd.feature = m.ln_depth.forward(xd.feature);
    }
    CHECK(out[s].rgb.feature == xr.feature);
    CHECK(out[s].depth.feature == xd.feature);
  }
}

TEST_CASE("default encoder: 3/6/4/3 blocks, 8 heads, per-modality norms, shared weights") {
  const auto cfg = enc::EncoderConfig::preset("default");
  CHECK(cfg.total_blocks() == 16);
  dpx::Rng rng(7);
  auto e = enc::Encoder<float>::init(cfg, rng);
  const std::size_t depths[] = {3, 6, 4, 3};
  std::set<std::string> names;
  e.visit([&](std::string_view n, Tensor<float>&) { CHECK(names.insert(std::string(n)).second); });
  for (std::size_t s = 0; s < 4; ++s) {
    CHECK(e.stages[s].blocks.size() == depths[s]);
    CHECK(cfg.stages[s].heads == 8);
    const std::string stem = "stage" + std::to_string(s + 1) + ".block" + std::to_string(depths[s] - 1) + ".";
    for (const char* ln : {"ln_rgb_1", "ln_depth_1", "ln_rgb_2", "ln_depth_2"})
      CHECK(names.count(stem + ln + ".gain") == 1);
    // One copy of each shared tensor per block; no modality-tagged duplicates.
    CHECK(names.count(stem + "intra.q.weight") == 1);
    CHECK(names.count(stem + "inter.w_q.weight") == 1);
    CHECK(names.count(stem + "ffn.first.weight") == 1);
    CHECK(names.count(stem + "cross.q.weight") == 0);
    const std::string past = "stage" + std::to_string(s + 1) + ".block" + std::to_string(depths[s]) + ".";
    CHECK(names.count(past + "intra.q.weight") == 0);
  }
}

}  // TEST_SUITE
