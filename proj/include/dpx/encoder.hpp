#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "dpx/attention.hpp"
#include "dpx/dsim.hpp"
#include "dpx/nn.hpp"
#include "dpx/params.hpp"
#include "dpx/rng.hpp"
#include "dpx/tensor.hpp"

namespace dpx::enc {

using attn::TokenGrid;

struct PatchGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t padding = 1;

  bool operator==(const PatchGeometry&) const = default;
};

/// floor((extent + 2p - k) / s) + 1
std::size_t patch_output_extent(std::size_t extent, const PatchGeometry& g);

struct StageConfig {
  std::size_t depth = 1;
  std::size_t dim = 8;
  std::size_t heads = 8;
  PatchGeometry patch;  // embedding for stage 1, merging into this stage otherwise

  bool operator==(const StageConfig&) const = default;
};

struct EncoderConfig {
  std::array<StageConfig, 4> stages;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t in_channels = 3;
  attn::Variant inter = attn::Variant::kDsim;  // inter-modal mechanism of every block
  std::size_t window = 7;                      // capped at the stage grid
  long radius = 1;
  std::size_t baseline_noise_tokens = 0;       // noise rows for the baseline cross variants
  dsim::DsimOptions dsim;
  std::size_t mlp_ratio = 4;
  nn::DropPathConfig drop_path;

  bool operator==(const EncoderConfig&) const = default;

  /// Presets: "default", "toy", "mit-b3-like", "mit-b5-like".
  static EncoderConfig preset(std::string_view name);
  static std::vector<std::string> preset_names();

  /// Throws ConfigError naming the offending stage.
  void validate() const;
  /// Token grid (height, width) of every stage for the configured input.
  std::array<std::pair<std::size_t, std::size_t>, 4> stage_geometry() const;
  std::size_t total_blocks() const;
};

/// Strided sliding-window linear embedding followed by a layer norm.
template <class T>
struct PatchEmbed {
  PatchGeometry geometry;
  nn::Linear<T> proj;  // [k*k*c x d]

  struct Cache {
    std::size_t in_height = 0, in_width = 0, in_channels = 0;
    Tensor<T> columns;
  };

  static PatchEmbed init(const PatchGeometry& g, std::size_t in_channels, std::size_t dim, Rng& rng,
                         double weight_std = nn::kInitStd);

  /// x: feature [H*W x c] of an H x W grid.
  TokenGrid<T> forward(const TokenGrid<T>& x, Cache* cache = nullptr) const;
  Tensor<T> backward(const Cache& cache, const Tensor<T>& grad_out, PatchEmbed& grads) const;

  template <class F>
  void visit(F&& f) {
    proj.visit(with_prefix("proj.", f));
  }
};

/// Gathers k x k x c patches (zero padded) into rows: [Hout*Wout x k*k*c].
template <class T>
Tensor<T> im2col(const Tensor<T>& feature, std::size_t height, std::size_t width, const PatchGeometry& g);
/// Adjoint of im2col.
template <class T>
Tensor<T> col2im(const Tensor<T>& columns, std::size_t height, std::size_t width, std::size_t channels,
                 const PatchGeometry& g);

template <class T>
struct PerModality {
  T rgb;
  T depth;
};

template <class T>
struct IimibBlock {
  nn::LayerNorm<T> ln_rgb_1, ln_depth_1, ln_rgb_2, ln_depth_2;
  attn::AttentionParams<T> intra;
  attn::AttentionParams<T> cross;  // baseline inter variants only
  dsim::DsimParams<T> inter;       // kDsim only
  nn::Mlp2<T> ffn;

  struct Cache {
    PerModality<Tensor<T>> x, h, y;
    PerModality<typename nn::LayerNorm<T>::Cache> ln1, ln2;
    PerModality<attn::DirectionCache<T>> intra;
    attn::CrossCache<T> cross;
    dsim::DsimCache<T> dsim;
    PerModality<typename nn::Mlp2<T>::Cache> ffn;
    std::array<double, 6> path_scale{1, 1, 1, 1, 1, 1};
    bool ran = false;
  };

  template <class F>
  void visit(F&& f, attn::Variant inter_kind, bool with_inter) {
    ln_rgb_1.visit(with_prefix("ln_rgb_1.", f));
    ln_depth_1.visit(with_prefix("ln_depth_1.", f));
    ln_rgb_2.visit(with_prefix("ln_rgb_2.", f));
    ln_depth_2.visit(with_prefix("ln_depth_2.", f));
    intra.visit(with_prefix("intra.", f));
    if (with_inter) {
      if (inter_kind == attn::Variant::kDsim) {
        inter.visit(with_prefix("inter.", f));
      } else {
        cross.visit(with_prefix("cross.", f));
      }
    }
    ffn.visit(with_prefix("ffn.", f));
  }
};

/// Per-block settings derived from the encoder config and stage.
struct BlockSpec {
  attn::AttentionConfig intra;      // never carries noise tokens
  attn::AttentionConfig attention;  // baseline inter variants
  dsim::DsimConfig dsim;
  attn::Variant inter = attn::Variant::kDsim;
  bool with_inter = true;
  bool shifted = false;
  nn::DropPathConfig drop_path;
};

BlockSpec block_spec(const EncoderConfig& cfg, std::size_t stage, std::size_t block);

template <class T>
IimibBlock<T> init_block(const BlockSpec& spec, std::size_t mlp_ratio, Rng& rng,
                         const attn::InitOptions& opts = {});

/// LN -> intra self-attention (+res) -> LN -> inter-modal attention (+res) -> FFN (+res).
template <class T>
PerModality<TokenGrid<T>> iimib_forward(const BlockSpec& spec, const IimibBlock<T>& block,
                                        const TokenGrid<T>& xr, const TokenGrid<T>& xd,
                                        typename IimibBlock<T>::Cache* cache = nullptr, Rng* drop_rng = nullptr);

template <class T>
PerModality<Tensor<T>> iimib_backward(const BlockSpec& spec, const IimibBlock<T>& block,
                                      const typename IimibBlock<T>::Cache& cache, const Tensor<T>& grad_rgb,
                                      const Tensor<T>& grad_depth, IimibBlock<T>& grads);

/// Shared merge projection with per-modality layer norms.
template <class T>
struct Merge {
  PatchEmbed<T> embed;
  nn::LayerNorm<T> ln_rgb, ln_depth;

  template <class F>
  void visit(F&& f) {
    embed.visit(with_prefix("embed.", f));
    ln_rgb.visit(with_prefix("ln_rgb.", f));
    ln_depth.visit(with_prefix("ln_depth.", f));
  }
};

template <class T>
struct Stage {
  std::vector<IimibBlock<T>> blocks;
};

template <class T>
struct Encoder {
  EncoderConfig config;
  PatchEmbed<T> embed_rgb, embed_depth;
  nn::LayerNorm<T> embed_ln_rgb, embed_ln_depth;
  std::array<Merge<T>, 3> merges;
  std::array<Stage<T>, 4> stages;

  static Encoder init(const EncoderConfig& cfg, Rng& rng, const attn::InitOptions& opts = {});

  template <class F>
  void visit(F&& f) {
    embed_rgb.visit(with_prefix("embed_rgb.", f));
    embed_depth.visit(with_prefix("embed_depth.", f));
    embed_ln_rgb.visit(with_prefix("embed_ln_rgb.", f));
    embed_ln_depth.visit(with_prefix("embed_ln_depth.", f));
    for (std::size_t i = 0; i < merges.size(); ++i) merges[i].visit(with_prefix("merge" + std::to_string(i + 2) + ".", f));
    const bool with_inter = config.dsim.ablation.enable_paca;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      for (std::size_t b = 0; b < stages[s].blocks.size(); ++b) {
        auto g = with_prefix("stage" + std::to_string(s + 1) + ".block" + std::to_string(b) + ".", f);
        stages[s].blocks[b].visit(g, config.inter, with_inter);
      }
    }
  }
};

template <class T>
struct BiModalFeatures {
  TokenGrid<T> rgb;
  TokenGrid<T> depth;
};

template <class T>
struct EncoderCache {
  typename PatchEmbed<T>::Cache embed_rgb, embed_depth;
  PerModality<typename nn::LayerNorm<T>::Cache> embed_ln;
  std::array<PerModality<typename PatchEmbed<T>::Cache>, 3> merge;
  std::array<PerModality<typename nn::LayerNorm<T>::Cache>, 3> merge_ln;
  std::array<std::vector<typename IimibBlock<T>::Cache>, 4> blocks;
  bool ran = false;
};

/// rgb: [H*W x 3] (or [H x W x 3]); depth: [H*W x 1] or already 3-channel.
template <class T>
std::array<BiModalFeatures<T>, 4> encoder_forward(const Encoder<T>& enc, const Tensor<T>& rgb, const Tensor<T>& depth,
                                                  EncoderCache<T>* cache = nullptr, Rng* drop_rng = nullptr);

/// Gradients w.r.t. the four stage outputs in, parameter gradients accumulated.
template <class T>
void encoder_backward(const Encoder<T>& enc, const EncoderCache<T>& cache,
                      const std::array<PerModality<Tensor<T>>, 4>& grads_out, Encoder<T>& grads);

/// Replicates a one-channel depth map to `channels` channels.
template <class T>
Tensor<T> replicate_channels(const Tensor<T>& depth, std::size_t channels);

}  // namespace dpx::enc
