#pragma once

#include <cstddef>
#include <string_view>
#include <utility>

#include "dpx/attention.hpp"
#include "dpx/nn.hpp"
#include "dpx/params.hpp"
#include "dpx/rng.hpp"
#include "dpx/tensor.hpp"

namespace dpx::dsim {

using attn::TokenGrid;

enum class DiscriminatorVariant { kMlp2Softmax, kMlp2Sigmoid };
std::string_view discriminator_name(DiscriminatorVariant v);
DiscriminatorVariant parse_discriminator(std::string_view name);

/// Which linear transform feeds the modulated keys. Keys are built from the
/// owner's query projection by default.
enum class KeySource { kQueryProjection, kKeyProjection };

/// Which per-pixel key/value set a query attends. kOwnerSets: RGB queries attend
/// the set built for RGB (its values carry the depth entry and the RGB - depth
/// difference). kCrossSets: RGB queries attend the set built for depth.
enum class Pairing { kOwnerSets, kCrossSets };

/// Structural ablation switches.
struct Ablation {
  bool enable_paca = true;             // inter-modal stage at all
  bool enable_similarity = true;       // otherwise the similarity gate is all ones
  bool enable_difference = true;       // otherwise the difference key/value entry is dropped
  bool enable_learning_factor = true;  // otherwise alpha = beta = 1, frozen

  bool operator==(const Ablation&) const = default;
};

struct DsimOptions {
  std::size_t noise_tokens = 1;
  std::size_t discriminator_hidden = 0;  // 0 means the feature width
  DiscriminatorVariant discriminator = DiscriminatorVariant::kMlp2Softmax;
  KeySource key_source = KeySource::kQueryProjection;
  Pairing pairing = Pairing::kOwnerSets;
  Ablation ablation;

  bool operator==(const DsimOptions&) const = default;
};

struct DsimConfig {
  std::size_t dim = 8;
  std::size_t heads = 8;
  DsimOptions options;

  /// Key/value entries built per pixel (difference + shared, or shared only).
  std::size_t entries() const { return options.ablation.enable_difference ? 2 : 1; }
  std::size_t keys_per_pixel() const { return options.noise_tokens + entries(); }
  std::size_t hidden() const { return options.discriminator_hidden ? options.discriminator_hidden : dim; }
  double scale() const;
  void validate() const;
};

template <class T>
struct RelationDiscriminators {
  nn::Mlp2<T> f_d_rgb;    // d -> d
  nn::Mlp2<T> f_d_depth;  // d -> d
  nn::Mlp2<T> f_s;        // 2d -> d

  template <class F>
  void visit(F&& f) {
    f_d_rgb.visit(with_prefix("f_d_rgb.", f));
    f_d_depth.visit(with_prefix("f_d_depth.", f));
    f_s.visit(with_prefix("f_s.", f));
  }
};

template <class T>
struct FusionFactors {
  Tensor<T> alpha_rgb, beta_rgb, alpha_depth, beta_depth;  // [d], initialized to 1

  template <class F>
  void visit(F&& f) {
    f("alpha_rgb", alpha_rgb);
    f("beta_rgb", beta_rgb);
    f("alpha_depth", alpha_depth);
    f("beta_depth", beta_depth);
  }
};

template <class T>
struct NoiseTokens {
  Tensor<T> k_rgb, v_rgb, k_depth, v_depth;  // [noise_tokens x d]

  template <class F>
  void visit(F&& f) {
    if (k_rgb.empty()) return;
    f("k_rgb", k_rgb);
    f("v_rgb", v_rgb);
    f("k_depth", k_depth);
    f("v_depth", v_depth);
  }
};

template <class T>
struct DsimParams {
  RelationDiscriminators<T> discriminators;
  FusionFactors<T> factors;
  NoiseTokens<T> noise;
  nn::Linear<T> lt_q, lt_k, lt_v;
  nn::Linear<T> w_q, w_k, w_v;
  nn::Linear<T> w_o;  // output projection after the heads are concatenated

  static DsimParams init(const DsimConfig& cfg, Rng& rng, const attn::InitOptions& opts = {});

  template <class F>
  void visit(F&& f) {
    discriminators.visit(with_prefix("disc.", f));
    factors.visit(with_prefix("factors.", f));
    noise.visit(with_prefix("noise.", f));
    lt_q.visit(with_prefix("lt_q.", f));
    lt_k.visit(with_prefix("lt_k.", f));
    lt_v.visit(with_prefix("lt_v.", f));
    w_q.visit(with_prefix("w_q.", f));
    w_k.visit(with_prefix("w_k.", f));
    w_v.visit(with_prefix("w_v.", f));
    w_o.visit(with_prefix("w_o.", f));
  }
};

template <class T>
struct RelationScores {
  Tensor<T> d_rgb;    // [N x d]
  Tensor<T> d_depth;  // [N x d]
  Tensor<T> s;        // [N x d]
};

/// Difference scores f_d(x_r - x_d), f_d(x_d - x_r) and similarity f_s([x_r, x_d]).
template <class T>
RelationScores<T> relation_scores(const RelationDiscriminators<T>& disc, const TokenGrid<T>& xr,
                                  const TokenGrid<T>& xd);

/// Per-pixel keys [alpha * q * D, beta * q * S] of shape [N x 2 x d] (or
/// [N x 1 x d] holding only the shared entry when `with_difference` is false).
template <class T>
std::pair<Tensor<T>, Tensor<T>> build_keys(const FusionFactors<T>& factors, const Tensor<T>& q_lt_rgb,
                                           const Tensor<T>& q_lt_depth, const Tensor<T>& d_rgb,
                                           const Tensor<T>& d_depth, const Tensor<T>& s, bool with_difference = true);

/// V_r = [v_r - v_d, v_d], V_d = [v_d - v_r, v_r]; same entry order as build_keys.
template <class T>
std::pair<Tensor<T>, Tensor<T>> build_values(const Tensor<T>& v_lt_rgb, const Tensor<T>& v_lt_depth,
                                             bool with_difference = true);

template <class T>
struct Assembled {
  Tensor<T> q;  // [N x d]
  Tensor<T> k;  // [N x P x d], noise rows first
  Tensor<T> v;  // [N x P x d]
};

/// Prepends the noise tokens to every pixel's key/value set and applies W^Q, W^K, W^V.
template <class T>
std::pair<Assembled<T>, Assembled<T>> assemble_qkv(const DsimParams<T>& p, const Tensor<T>& xr, const Tensor<T>& xd,
                                                   const Tensor<T>& k_rgb, const Tensor<T>& k_depth,
                                                   const Tensor<T>& v_rgb, const Tensor<T>& v_depth);

template <class T>
struct DsimCache {
  Tensor<T> xr, xd;
  typename nn::Mlp2<T>::Cache f_d_rgb, f_d_depth, f_s;
  Tensor<T> d_rgb, d_depth, s;
  Tensor<T> gate_rgb, gate_depth;  // lt projection feeding the keys
  Tensor<T> v_lt_rgb, v_lt_depth;
  Tensor<T> k_set_rgb, k_set_depth;  // [(N*P) x d] before W^K
  Tensor<T> v_set_rgb, v_set_depth;
  Tensor<T> q_rgb, q_depth;  // after W^Q
  Tensor<T> k_rgb, k_depth;  // after W^K, [(N*P) x d]
  Tensor<T> v_rgb, v_depth;
  std::vector<T> weights_rgb, weights_depth;
  Tensor<T> attended_rgb, attended_depth;
  attn::KeySets sets;
};

/// DSIM branch outputs W^O * PACA(...) for both modalities, without residual.
template <class T>
std::pair<Tensor<T>, Tensor<T>> dsim_branches(const DsimConfig& cfg, const DsimParams<T>& p, const TokenGrid<T>& xr,
                                              const TokenGrid<T>& xd, DsimCache<T>* cache = nullptr);

/// Pixel-aware cross-attention with the intra-modal features as residual.
template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> paca_forward(const DsimConfig& cfg, const DsimParams<T>& p,
                                                   const TokenGrid<T>& xr_intra, const TokenGrid<T>& xd_intra,
                                                   DsimCache<T>* cache = nullptr);

/// Gradients of dsim_branches: accumulates parameter grads, returns (dxr, dxd).
template <class T>
std::pair<Tensor<T>, Tensor<T>> dsim_backward(const DsimConfig& cfg, const DsimParams<T>& p, const DsimCache<T>& cache,
                                              const Tensor<T>& grad_rgb, const Tensor<T>& grad_depth,
                                              DsimParams<T>& grads);

}  // namespace dpx::dsim
