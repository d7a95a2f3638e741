#include "dpx/encoder.hpp"

#include <algorithm>

#include "dpx/error.hpp"
#include "dpx/ops.hpp"

namespace dpx::enc {

std::size_t patch_output_extent(std::size_t extent, const PatchGeometry& g) {
  if (g.stride == 0 || extent + 2 * g.padding < g.kernel) return 0;
  return (extent + 2 * g.padding - g.kernel) / g.stride + 1;
}

namespace {

std::array<StageConfig, 4> make_stages(std::array<std::size_t, 4> depths, std::array<std::size_t, 4> dims,
                                       PatchGeometry embed) {
  std::array<StageConfig, 4> s;
  for (std::size_t i = 0; i < 4; ++i) {
    s[i].depth = depths[i];
    s[i].dim = dims[i];
    s[i].heads = 8;
    s[i].patch = i == 0 ? embed : PatchGeometry{3, 2, 1};
  }
  return s;
}

}  // namespace

EncoderConfig EncoderConfig::preset(std::string_view name) {
  EncoderConfig c;
  if (name == "default") {
    c.stages = make_stages({3, 6, 4, 3}, {8, 16, 32, 64}, {7, 4, 3});
  } else if (name == "toy") {
    // Stride-1 embedding keeps stage 1 at full resolution so a 16 x 16 scene can be fit pixel-exactly.
    c.stages = make_stages({1, 1, 1, 1}, {8, 16, 32, 64}, {3, 1, 1});
    c.height = c.width = 16;
  } else if (name == "mit-b3-like") {
    c.stages = make_stages({3, 6, 4, 3}, {64, 128, 320, 512}, {7, 4, 3});
    c.height = 480;
    c.width = 640;
  } else if (name == "mit-b5-like") {
    c.stages = make_stages({3, 6, 40, 3}, {64, 128, 320, 512}, {7, 4, 3});
    c.height = 480;
    c.width = 640;
  } else {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + std::string(name) + "'; valid presets: " + names);
  }
  return c;
}

std::vector<std::string> EncoderConfig::preset_names() { return {"default", "toy", "mit-b3-like", "mit-b5-like"}; }

void EncoderConfig::validate() const {
  if (in_channels == 0) throw ConfigError("encoder: in_channels must be positive");
  if (inter == attn::Variant::kSelf) throw ConfigError("encoder: 'sa' is not an inter-modal variant");
  if (window == 0) throw ConfigError("encoder: window must be >= 1");
  if (radius < 0) throw ConfigError("encoder: radius must be >= 0");
  if (mlp_ratio == 0) throw ConfigError("encoder: mlp_ratio must be >= 1");
  if (drop_path.rate < 0.0 || drop_path.rate >= 1.0) throw ConfigError("encoder: drop path rate must be in [0, 1)");
  std::size_t h = height, w = width;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    const std::string tag = "stage " + std::to_string(i + 1) + ": ";
    if (s.depth == 0) throw ConfigError(tag + "depth must be >= 1");
    if (s.dim == 0 || s.heads == 0 || s.dim % s.heads != 0) {
      throw ConfigError(tag + "dim " + std::to_string(s.dim) + " not divisible by heads " + std::to_string(s.heads));
    }
    if (i > 0 && s.dim < stages[i - 1].dim) throw ConfigError(tag + "dims must be non-decreasing");
    if (s.patch.kernel == 0 || s.patch.stride == 0) throw ConfigError(tag + "patch kernel and stride must be >= 1");
    if (h % s.patch.stride != 0 || w % s.patch.stride != 0) {
      throw ConfigError(tag + "input " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by stride " +
                        std::to_string(s.patch.stride));
    }
    const std::size_t oh = patch_output_extent(h, s.patch), ow = patch_output_extent(w, s.patch);
    if (oh == 0 || ow == 0) {
      throw ConfigError(tag + "kernel " + std::to_string(s.patch.kernel) + " larger than padded input " +
                        std::to_string(h) + "x" + std::to_string(w));
    }
    h = oh;
    w = ow;
  }
}

std::array<std::pair<std::size_t, std::size_t>, 4> EncoderConfig::stage_geometry() const {
  std::array<std::pair<std::size_t, std::size_t>, 4> g;
  std::size_t h = height, w = width;
  for (std::size_t i = 0; i < 4; ++i) {
    h = patch_output_extent(h, stages[i].patch);
    w = patch_output_extent(w, stages[i].patch);
    g[i] = {h, w};
  }
  return g;
}

std::size_t EncoderConfig::total_blocks() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.depth;
  return n;
}

template <class T>
Tensor<T> im2col(const Tensor<T>& feature, std::size_t height, std::size_t width, const PatchGeometry& g) {
  if (feature.rank() != 2 || feature.shape()[0] != height * width) {
    throw DimensionError("im2col: feature " + shape_str(feature.shape()) + " does not match grid " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t c = feature.shape()[1];
  const std::size_t oh = patch_output_extent(height, g), ow = patch_output_extent(width, g);
  if (oh == 0 || ow == 0) throw ConfigError("im2col: kernel larger than padded input");
  const std::size_t row = g.kernel * g.kernel * c;
  Tensor<T> cols({oh * ow, row});
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      T* dst = cols.data().data() + (oy * ow + ox) * row;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
          T* cell = dst + (ky * g.kernel + kx) * c;
          if (iy < 0 || ix < 0 || iy >= static_cast<long>(height) || ix >= static_cast<long>(width)) continue;
          const T* src = feature.data().data() + (static_cast<std::size_t>(iy) * width + static_cast<std::size_t>(ix)) * c;
          std::copy(src, src + c, cell);
        }
      }
    }
  }
  return cols;
}

template <class T>
Tensor<T> col2im(const Tensor<T>& columns, std::size_t height, std::size_t width, std::size_t channels,
                 const PatchGeometry& g) {
  const std::size_t oh = patch_output_extent(height, g), ow = patch_output_extent(width, g);
  const std::size_t row = g.kernel * g.kernel * channels;
  if (columns.rank() != 2 || columns.shape()[0] != oh * ow || columns.shape()[1] != row) {
    throw DimensionError("col2im: columns " + shape_str(columns.shape()) + " do not match the patch geometry");
  }
  Tensor<T> out({height * width, channels});
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const T* src = columns.data().data() + (oy * ow + ox) * row;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
          if (iy < 0 || ix < 0 || iy >= static_cast<long>(height) || ix >= static_cast<long>(width)) continue;
          T* dst = out.data().data() + (static_cast<std::size_t>(iy) * width + static_cast<std::size_t>(ix)) * channels;
          const T* cell = src + (ky * g.kernel + kx) * channels;
          for (std::size_t c = 0; c < channels; ++c) dst[c] += cell[c];
        }
      }
    }
  }
  return out;
}

namespace {

template <class T>
nn::Linear<T> make_linear(std::size_t in, std::size_t out, Rng& rng, double std) {
  nn::Linear<T> l;
  l.weight = rng.truncated_normal_tensor<T>({in, out}, std);
  l.bias = Tensor<T>({out});
  return l;
}

}  // namespace

template <class T>
PatchEmbed<T> PatchEmbed<T>::init(const PatchGeometry& g, std::size_t in_channels, std::size_t dim, Rng& rng,
                                  double weight_std) {
  PatchEmbed p;
  p.geometry = g;
  p.proj = make_linear<T>(g.kernel * g.kernel * in_channels, dim, rng, weight_std);
  return p;
}

template <class T>
TokenGrid<T> PatchEmbed<T>::forward(const TokenGrid<T>& x, Cache* cache) const {
  x.validate();
  const std::size_t c = x.channels();
  if (geometry.kernel * geometry.kernel * c != proj.in_features()) {
    throw DimensionError("patch embed: " + std::to_string(c) + " input channels do not match projection " +
                         shape_str(proj.weight.shape()));
  }
  Tensor<T> cols = im2col(x.feature, x.height, x.width, geometry);
  TokenGrid<T> out{patch_output_extent(x.height, geometry), patch_output_extent(x.width, geometry),
                   proj.forward(cols)};
  if (cache) {
    cache->in_height = x.height;
    cache->in_width = x.width;
    cache->in_channels = c;
    cache->columns = std::move(cols);
  }
  return out;
}

template <class T>
Tensor<T> PatchEmbed<T>::backward(const Cache& cache, const Tensor<T>& grad_out, PatchEmbed& grads) const {
  if (cache.columns.empty()) throw StateError("patch embed backward: missing forward cache");
  const Tensor<T> dcols = proj.backward(cache.columns, grad_out, grads.proj);
  return col2im(dcols, cache.in_height, cache.in_width, cache.in_channels, geometry);
}

BlockSpec block_spec(const EncoderConfig& cfg, std::size_t stage, std::size_t block) {
  const auto geom = cfg.stage_geometry()[stage];
  const auto& s = cfg.stages[stage];
  BlockSpec b;
  b.attention.dim = s.dim;
  b.attention.heads = s.heads;
  b.attention.window = std::min({cfg.window, geom.first, geom.second});
  b.attention.radius = cfg.radius;
  b.attention.noise_tokens = cfg.baseline_noise_tokens;
  b.intra = b.attention;
  b.intra.noise_tokens = 0;
  b.dsim.dim = s.dim;
  b.dsim.heads = s.heads;
  b.dsim.options = cfg.dsim;
  b.inter = cfg.inter;
  b.with_inter = cfg.dsim.ablation.enable_paca;
  b.shifted = block % 2 == 1;
  b.drop_path = cfg.drop_path;
  return b;
}

template <class T>
IimibBlock<T> init_block(const BlockSpec& spec, std::size_t mlp_ratio, Rng& rng, const attn::InitOptions& opts) {
  const std::size_t d = spec.attention.dim;
  IimibBlock<T> b;
  b.ln_rgb_1 = nn::LayerNorm<T>::init(d);
  b.ln_depth_1 = nn::LayerNorm<T>::init(d);
  b.ln_rgb_2 = nn::LayerNorm<T>::init(d);
  b.ln_depth_2 = nn::LayerNorm<T>::init(d);
  b.intra = attn::AttentionParams<T>::init(spec.intra, rng, opts);
  if (spec.with_inter) {
    if (spec.inter == attn::Variant::kDsim) {
      b.inter = dsim::DsimParams<T>::init(spec.dsim, rng, opts);
    } else {
      b.cross = attn::AttentionParams<T>::init(spec.attention, rng, opts);
    }
  }
  b.ffn.first = make_linear<T>(d, mlp_ratio * d, rng, opts.weight_std);
  b.ffn.second = opts.zero_output_projection ? nn::Linear<T>::zeros(mlp_ratio * d, d)
                                             : make_linear<T>(mlp_ratio * d, d, rng, opts.weight_std);
  b.ffn.final_activation = nn::FinalActivation::kNone;
  return b;
}

template <class T>
PerModality<TokenGrid<T>> iimib_forward(const BlockSpec& spec, const IimibBlock<T>& block, const TokenGrid<T>& xr,
                                        const TokenGrid<T>& xd, typename IimibBlock<T>::Cache* cache, Rng* drop_rng) {
  xr.validate();
  xd.validate();
  if (xr.height != xd.height || xr.width != xd.width || xr.channels() != xd.channels()) {
    throw DimensionError("iimib: modality geometries differ " + shape_str(xr.feature.shape()) + " vs " +
                         shape_str(xd.feature.shape()));
  }
  const std::size_t H = xr.height, W = xr.width;
  typename IimibBlock<T>::Cache local;
  auto& c = cache ? *cache : local;
  for (auto& s : c.path_scale) s = drop_rng ? spec.drop_path.sample_scale(*drop_rng) : 1.0;

  // Intra-modal self-attention with shared parameters.
  const Tensor<T> a_r = block.ln_rgb_1.forward(xr.feature, &c.ln1.rgb);
  const Tensor<T> a_d = block.ln_depth_1.forward(xd.feature, &c.ln1.depth);
  const Tensor<T> s_r = attn::self_branch(spec.intra, block.intra, TokenGrid<T>{H, W, a_r}, &c.intra.rgb);
  const Tensor<T> s_d = attn::self_branch(spec.intra, block.intra, TokenGrid<T>{H, W, a_d}, &c.intra.depth);
  c.x = {xr.feature, xd.feature};
  c.h = {add(xr.feature, nn::drop_path(s_r, c.path_scale[0])), add(xd.feature, nn::drop_path(s_d, c.path_scale[1]))};

  // Inter-modal exchange.
  if (spec.with_inter) {
    const TokenGrid<T> b_r{H, W, block.ln_rgb_2.forward(c.h.rgb, &c.ln2.rgb)};
    const TokenGrid<T> b_d{H, W, block.ln_depth_2.forward(c.h.depth, &c.ln2.depth)};
    auto [i_r, i_d] = spec.inter == attn::Variant::kDsim
                          ? dsim::dsim_branches(spec.dsim, block.inter, b_r, b_d, &c.dsim)
                          : attn::cross_branches(spec.inter, spec.attention, block.cross, b_r, b_d, spec.shifted,
                                                 &c.cross);
    c.y = {add(c.h.rgb, nn::drop_path(i_r, c.path_scale[2])), add(c.h.depth, nn::drop_path(i_d, c.path_scale[3]))};
  } else {
    c.y = c.h;
  }

  // Shared feed-forward.
  const Tensor<T> f_r = block.ffn.forward(c.y.rgb, &c.ffn.rgb);
  const Tensor<T> f_d = block.ffn.forward(c.y.depth, &c.ffn.depth);
  c.ran = true;
  return {TokenGrid<T>{H, W, add(c.y.rgb, nn::drop_path(f_r, c.path_scale[4]))},
          TokenGrid<T>{H, W, add(c.y.depth, nn::drop_path(f_d, c.path_scale[5]))}};
}

template <class T>
PerModality<Tensor<T>> iimib_backward(const BlockSpec& spec, const IimibBlock<T>& block,
                                      const typename IimibBlock<T>::Cache& c, const Tensor<T>& grad_rgb,
                                      const Tensor<T>& grad_depth, IimibBlock<T>& grads) {
  if (!c.ran) throw StateError("iimib backward: missing forward cache");
  auto scaled = [](const Tensor<T>& g, double s) { return nn::drop_path(g, s); };

  Tensor<T> gy_r = grad_rgb, gy_d = grad_depth;
  accumulate(gy_r, block.ffn.backward(c.ffn.rgb, scaled(grad_rgb, c.path_scale[4]), grads.ffn));
  accumulate(gy_d, block.ffn.backward(c.ffn.depth, scaled(grad_depth, c.path_scale[5]), grads.ffn));

  Tensor<T> gh_r = gy_r, gh_d = gy_d;
  if (spec.with_inter) {
    const Tensor<T> gi_r = scaled(gy_r, c.path_scale[2]), gi_d = scaled(gy_d, c.path_scale[3]);
    auto [gb_r, gb_d] = spec.inter == attn::Variant::kDsim
                            ? dsim::dsim_backward(spec.dsim, block.inter, c.dsim, gi_r, gi_d, grads.inter)
                            : attn::cross_branches_backward(spec.attention, block.cross, c.cross, gi_r, gi_d,
                                                            grads.cross);
    accumulate(gh_r, block.ln_rgb_2.backward(c.ln2.rgb, gb_r, grads.ln_rgb_2));
    accumulate(gh_d, block.ln_depth_2.backward(c.ln2.depth, gb_d, grads.ln_depth_2));
  }

  Tensor<T> gx_r = gh_r, gx_d = gh_d;
  const Tensor<T> ga_r =
      attn::self_branch_backward(spec.intra, block.intra, c.intra.rgb, scaled(gh_r, c.path_scale[0]), grads.intra);
  const Tensor<T> ga_d = attn::self_branch_backward(spec.intra, block.intra, c.intra.depth,
                                                    scaled(gh_d, c.path_scale[1]), grads.intra);
  accumulate(gx_r, block.ln_rgb_1.backward(c.ln1.rgb, ga_r, grads.ln_rgb_1));
  accumulate(gx_d, block.ln_depth_1.backward(c.ln1.depth, ga_d, grads.ln_depth_1));
  return {std::move(gx_r), std::move(gx_d)};
}

template <class T>
Encoder<T> Encoder<T>::init(const EncoderConfig& cfg, Rng& rng, const attn::InitOptions& opts) {
  cfg.validate();
  Encoder e;
  e.config = cfg;
  Rng embed_rng = rng.split(1);
  const auto& s0 = cfg.stages[0];
  e.embed_rgb = PatchEmbed<T>::init(s0.patch, cfg.in_channels, s0.dim, embed_rng, opts.weight_std);
  e.embed_depth = PatchEmbed<T>::init(s0.patch, cfg.in_channels, s0.dim, embed_rng, opts.weight_std);
  e.embed_ln_rgb = nn::LayerNorm<T>::init(s0.dim);
  e.embed_ln_depth = nn::LayerNorm<T>::init(s0.dim);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& s = cfg.stages[i + 1];
    Rng merge_rng = rng.split(2 + i);
    e.merges[i].embed = PatchEmbed<T>::init(s.patch, cfg.stages[i].dim, s.dim, merge_rng, opts.weight_std);
    e.merges[i].ln_rgb = nn::LayerNorm<T>::init(s.dim);
    e.merges[i].ln_depth = nn::LayerNorm<T>::init(s.dim);
  }
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t b = 0; b < cfg.stages[s].depth; ++b) {
      Rng block_rng = rng.split(100 + 1000 * s + b);
      e.stages[s].blocks.push_back(init_block<T>(block_spec(cfg, s, b), cfg.mlp_ratio, block_rng, opts));
    }
  }
  return e;
}

template <class T>
Tensor<T> replicate_channels(const Tensor<T>& depth, std::size_t channels) {
  const std::size_t n = depth.rank() == 3 ? depth.shape()[0] * depth.shape()[1] : depth.shape()[0];
  if (depth.rank() < 2 || depth.shape().back() != 1) {
    throw DimensionError("replicate_channels: expected a one-channel map, got " + shape_str(depth.shape()));
  }
  Tensor<T> out({n, channels});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < channels; ++c) out.at(i, c) = depth[i];
  return out;
}

namespace {

template <class T>
Tensor<T> as_tokens(const Tensor<T>& image, std::size_t height, std::size_t width, const char* what) {
  const bool grid = image.rank() == 3 && image.shape()[0] == height && image.shape()[1] == width;
  const bool flat = image.rank() == 2 && image.shape()[0] == height * width;
  if (!grid && !flat) {
    throw DimensionError(std::string(what) + " " + shape_str(image.shape()) + " does not match the configured " +
                         std::to_string(height) + "x" + std::to_string(width) + " input");
  }
  return as_matrix(image);
}

}  // namespace

template <class T>
std::array<BiModalFeatures<T>, 4> encoder_forward(const Encoder<T>& enc, const Tensor<T>& rgb, const Tensor<T>& depth,
                                                  EncoderCache<T>* cache, Rng* drop_rng) {
  const auto& cfg = enc.config;
  const std::size_t H = cfg.height, W = cfg.width;
  Tensor<T> r = as_tokens(rgb, H, W, "rgb");
  Tensor<T> d = as_tokens(depth, H, W, "depth");
  if (r.shape()[1] != cfg.in_channels) throw DimensionError("rgb: channel count does not match the encoder");
  if (d.shape()[1] == 1 && cfg.in_channels != 1) d = replicate_channels(d, cfg.in_channels);
  if (d.shape()[1] != cfg.in_channels) throw DimensionError("depth: channel count does not match the encoder");

  EncoderCache<T> local;
  auto& c = cache ? *cache : local;
  TokenGrid<T> xr = enc.embed_rgb.forward(TokenGrid<T>{H, W, r}, &c.embed_rgb);
  TokenGrid<T> xd = enc.embed_depth.forward(TokenGrid<T>{H, W, d}, &c.embed_depth);
  xr.feature = enc.embed_ln_rgb.forward(xr.feature, &c.embed_ln.rgb);
  xd.feature = enc.embed_ln_depth.forward(xd.feature, &c.embed_ln.depth);

  std::array<BiModalFeatures<T>, 4> out;
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) {
      const auto& m = enc.merges[s - 1];
      xr = m.embed.forward(xr, &c.merge[s - 1].rgb);
      xd = m.embed.forward(xd, &c.merge[s - 1].depth);
      xr.feature = m.ln_rgb.forward(xr.feature, &c.merge_ln[s - 1].rgb);
      xd.feature = m.ln_depth.forward(xd.feature, &c.merge_ln[s - 1].depth);
    }
    const auto& blocks = enc.stages[s].blocks;
    c.blocks[s].assign(blocks.size(), {});
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto next = iimib_forward(block_spec(cfg, s, b), blocks[b], xr, xd, &c.blocks[s][b], drop_rng);
      xr = std::move(next.rgb);
      xd = std::move(next.depth);
    }
    out[s] = {xr, xd};
  }
  c.ran = true;
  return out;
}

template <class T>
void encoder_backward(const Encoder<T>& enc, const EncoderCache<T>& c,
                      const std::array<PerModality<Tensor<T>>, 4>& grads_out, Encoder<T>& grads) {
  if (!c.ran) throw StateError("encoder backward: missing forward cache");
  const auto& cfg = enc.config;
  Tensor<T> gr, gd;
  for (std::size_t si = 4; si-- > 0;) {
    if (gr.empty()) {
      gr = grads_out[si].rgb;
      gd = grads_out[si].depth;
    } else {
      accumulate(gr, grads_out[si].rgb);
      accumulate(gd, grads_out[si].depth);
    }
    const auto& blocks = enc.stages[si].blocks;
    for (std::size_t b = blocks.size(); b-- > 0;) {
      auto g = iimib_backward(block_spec(cfg, si, b), blocks[b], c.blocks[si][b], gr, gd, grads.stages[si].blocks[b]);
      gr = std::move(g.rgb);
      gd = std::move(g.depth);
    }
    if (si > 0) {
      const auto& m = enc.merges[si - 1];
      auto& mg = grads.merges[si - 1];
      gr = m.embed.backward(c.merge[si - 1].rgb, m.ln_rgb.backward(c.merge_ln[si - 1].rgb, gr, mg.ln_rgb), mg.embed);
      gd = m.embed.backward(c.merge[si - 1].depth, m.ln_depth.backward(c.merge_ln[si - 1].depth, gd, mg.ln_depth),
                            mg.embed);
    }
  }
  enc.embed_rgb.backward(c.embed_rgb, enc.embed_ln_rgb.backward(c.embed_ln.rgb, gr, grads.embed_ln_rgb),
                         grads.embed_rgb);
  enc.embed_depth.backward(c.embed_depth, enc.embed_ln_depth.backward(c.embed_ln.depth, gd, grads.embed_ln_depth),
                           grads.embed_depth);
}

#define DPX_INSTANTIATE(T)                                                                                           \
  template Tensor<T> im2col(const Tensor<T>&, std::size_t, std::size_t, const PatchGeometry&);                       \
  template Tensor<T> col2im(const Tensor<T>&, std::size_t, std::size_t, std::size_t, const PatchGeometry&);          \
  template struct PatchEmbed<T>;                                                                                     \
  template IimibBlock<T> init_block(const BlockSpec&, std::size_t, Rng&, const attn::InitOptions&);                  \
  template PerModality<TokenGrid<T>> iimib_forward(const BlockSpec&, const IimibBlock<T>&, const TokenGrid<T>&,      \
                                                   const TokenGrid<T>&, typename IimibBlock<T>::Cache*, Rng*);       \
  template PerModality<Tensor<T>> iimib_backward(const BlockSpec&, const IimibBlock<T>&,                             \
                                                 const typename IimibBlock<T>::Cache&, const Tensor<T>&,             \
                                                 const Tensor<T>&, IimibBlock<T>&);                                  \
  template struct Encoder<T>;                                                                                        \
  template Tensor<T> replicate_channels(const Tensor<T>&, std::size_t);                                              \
  template std::array<BiModalFeatures<T>, 4> encoder_forward(const Encoder<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                                             EncoderCache<T>*, Rng*);                                \
  template void encoder_backward(const Encoder<T>&, const EncoderCache<T>&,                                          \
                                 const std::array<PerModality<Tensor<T>>, 4>&, Encoder<T>&);

DPX_INSTANTIATE(float)
DPX_INSTANTIATE(double)
#undef DPX_INSTANTIATE

}  // namespace dpx::enc
