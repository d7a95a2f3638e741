#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "dpx/nn.hpp"
#include "dpx/params.hpp"
#include "dpx/rng.hpp"
#include "dpx/tensor.hpp"

namespace dpx::attn {

/// Attention mechanisms compared in the efficiency study. kSelf is intra-modal;
/// the rest exchange information between the two modalities.
enum class Variant { kSelf, kFull, kShiftedWindow, kLocal, kPixelwise, kDsim };

inline constexpr Variant kAllVariants[] = {Variant::kSelf,  Variant::kFull,      Variant::kShiftedWindow,
                                           Variant::kLocal, Variant::kPixelwise, Variant::kDsim};

/// Short names: sa, ca, swca, lca, pwca, dsim.
std::string_view variant_name(Variant v);
/// Throws ConfigError listing the valid names.
Variant parse_variant(std::string_view name);
std::string valid_variant_names();

struct AttentionConfig {
  std::size_t dim = 8;
  std::size_t heads = 8;
  std::size_t window = 7;    // shifted-window side length
  long radius = 1;           // local neighborhood radius
  std::size_t noise_tokens = 0;  // extra learnable key/value rows shared by every query

  std::size_t head_dim() const { return dim / heads; }
  double scale() const;
  void validate() const;
};

template <class T>
struct TokenGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor<T> feature;  // [height*width x channels], token k at (k / width, k % width)

  std::size_t tokens() const { return height * width; }
  std::size_t channels() const { return feature.rank() == 2 ? feature.shape()[1] : 0; }
  void validate() const;
};

/// Compressed per-query key index lists.
struct KeySets {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> indices;

  std::size_t queries() const { return offsets.size() - 1; }
  std::size_t total() const { return indices.size(); }
  std::span<const std::size_t> keys(std::size_t q) const {
    return {indices.data() + offsets[q], offsets[q + 1] - offsets[q]};
  }
  void push(std::span<const std::size_t> keys);
};

KeySets full_key_sets(std::size_t queries, std::size_t keys);
/// Non-overlapping windows; when shifted the partition moves by window / 2 and
/// partial windows at the borders stay separate (padding never enters a softmax).
KeySets window_key_sets(std::size_t height, std::size_t width, std::size_t window, bool shifted);
/// (2r+1)^2 neighborhood clipped at the borders.
KeySets local_key_sets(std::size_t height, std::size_t width, long radius);
KeySets pixel_key_sets(std::size_t tokens);
/// Query i attends keys [i * per_query, (i + 1) * per_query).
KeySets block_key_sets(std::size_t queries, std::size_t per_query);
/// Appends keys [first, first + count) to every set.
KeySets with_shared_keys(const KeySets& base, std::size_t first, std::size_t count);

/// Window partition sizes along one axis (used by the cost model as well).
std::vector<std::size_t> window_segments(std::size_t extent, std::size_t window, bool shifted);

/// Multi-head scaled dot-product attention where query i only sees sets.keys(i).
/// Heads split the channel axis. `weights`, if given, receives the softmax
/// weights laid out as [key-set offset * heads + head * set size + j].
/// FLOPs per (query, key) pair: 4d + 5 heads.
template <class T>
Tensor<T> attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const KeySets& sets,
                 std::size_t heads, T scale, std::vector<T>* weights = nullptr);

/// Accumulates into dq, dk, dv, which must already have the shapes of q, k, v.
template <class T>
void attend_backward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const KeySets& sets,
                     std::size_t heads, T scale, const std::vector<T>& weights, const Tensor<T>& grad_out,
                     Tensor<T>& dq, Tensor<T>& dk, Tensor<T>& dv);

struct InitOptions {
  bool zero_output_projection = true;
  double weight_std = nn::kInitStd;
};

/// Q/K/V/output projections shared by both modalities, plus optional noise tokens.
template <class T>
struct AttentionParams {
  nn::Linear<T> q, k, v, o;
  Tensor<T> noise_k;  // [noise_tokens x dim]
  Tensor<T> noise_v;

  static AttentionParams init(const AttentionConfig& cfg, Rng& rng, const InitOptions& opts = {});

  template <class F>
  void visit(F&& f) {
    q.visit(with_prefix("q.", f));
    k.visit(with_prefix("k.", f));
    v.visit(with_prefix("v.", f));
    o.visit(with_prefix("o.", f));
    if (!noise_k.empty()) {
      f("noise_k", noise_k);
      f("noise_v", noise_v);
    }
  }
};

template <class T>
struct DirectionCache {
  Tensor<T> query_in;
  Tensor<T> kv_in;
  Tensor<T> q, k, v;  // projected, noise rows appended to k and v
  std::vector<T> weights;
  Tensor<T> attended;
  KeySets sets;
};

/// Branch output o(attend(q(x), k([kv; noise]), v([kv; noise]))) without residual.
template <class T>
Tensor<T> attend_direction(const AttentionConfig& cfg, const AttentionParams<T>& p, const Tensor<T>& x,
                           const Tensor<T>& kv, KeySets sets, DirectionCache<T>* cache = nullptr);

/// Accumulates parameter grads and input grads (dx for the query side, dkv for keys/values).
template <class T>
void attend_direction_backward(const AttentionConfig& cfg, const AttentionParams<T>& p,
                               const DirectionCache<T>& cache, const Tensor<T>& grad_branch,
                               AttentionParams<T>& grads, Tensor<T>& dx, Tensor<T>& dkv);

/// Key sets of a cross variant on an H x W grid (noise tokens appended).
KeySets variant_key_sets(Variant v, const AttentionConfig& cfg, std::size_t height, std::size_t width,
                         bool shifted);

template <class T>
struct CrossCache {
  DirectionCache<T> rgb;    // rgb queries
  DirectionCache<T> depth;  // depth queries
};

/// Both directions of a baseline cross variant (kFull, kShiftedWindow, kLocal,
/// kPixelwise) without residuals: (branch for x, branch for y).
template <class T>
std::pair<Tensor<T>, Tensor<T>> cross_branches(Variant v, const AttentionConfig& cfg, const AttentionParams<T>& p,
                                               const TokenGrid<T>& x, const TokenGrid<T>& y, bool shifted,
                                               CrossCache<T>* cache = nullptr);

/// Returns (dx, dy).
template <class T>
std::pair<Tensor<T>, Tensor<T>> cross_branches_backward(const AttentionConfig& cfg, const AttentionParams<T>& p,
                                                        const CrossCache<T>& cache, const Tensor<T>& grad_x,
                                                        const Tensor<T>& grad_y, AttentionParams<T>& grads);

template <class T>
Tensor<T> self_branch(const AttentionConfig& cfg, const AttentionParams<T>& p, const TokenGrid<T>& x,
                      DirectionCache<T>* cache = nullptr);
template <class T>
Tensor<T> self_branch_backward(const AttentionConfig& cfg, const AttentionParams<T>& p,
                               const DirectionCache<T>& cache, const Tensor<T>& grad_branch,
                               AttentionParams<T>& grads);

// Residual forms of the individual mechanisms.

template <class T>
TokenGrid<T> self_attention(const AttentionConfig& cfg, const AttentionParams<T>& p, const TokenGrid<T>& x);

template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> cross_attention(const AttentionConfig& cfg, const AttentionParams<T>& p,
                                                      const TokenGrid<T>& x, const TokenGrid<T>& y);

/// Pass shifted = true on every other call to alternate the partition.
template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> shifted_window_cross_attention(const AttentionConfig& cfg,
                                                                     const AttentionParams<T>& p,
                                                                     const TokenGrid<T>& x, const TokenGrid<T>& y,
                                                                     bool shifted = false);

template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> local_cross_attention(const AttentionConfig& cfg, const AttentionParams<T>& p,
                                                            const TokenGrid<T>& x, const TokenGrid<T>& y);

template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> pixelwise_cross_attention(const AttentionConfig& cfg,
                                                                const AttentionParams<T>& p, const TokenGrid<T>& x,
                                                                const TokenGrid<T>& y);

}  // namespace dpx::attn
