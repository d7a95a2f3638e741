#include "dpx/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpx/error.hpp"
#include "dpx/flops.hpp"
#include "dpx/ops.hpp"
#include "dpx/simd/kernels.hpp"

namespace dpx::attn {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kSelf:
      return "sa";
    case Variant::kFull:
      return "ca";
    case Variant::kShiftedWindow:
      return "swca";
    case Variant::kLocal:
      return "lca";
    case Variant::kPixelwise:
      return "pwca";
    case Variant::kDsim:
      return "dsim";
  }
  return "?";
}

std::string valid_variant_names() {
  std::string s;
  for (auto v : kAllVariants) {
    if (!s.empty()) s += ", ";
    s += variant_name(v);
  }
  return s;
}

Variant parse_variant(std::string_view name) {
  for (auto v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown attention variant '" + std::string(name) + "'; valid variants: " +
                    valid_variant_names());
}

double AttentionConfig::scale() const { return 1.0 / std::sqrt(static_cast<double>(head_dim())); }

void AttentionConfig::validate() const {
  if (dim == 0 || heads == 0) throw ConfigError("attention: dim and heads must be positive");
  if (dim % heads != 0) {
    throw ConfigError("attention: dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
  }
  if (window == 0) throw ConfigError("attention: window must be >= 1");
  if (radius < 0) throw ConfigError("attention: radius must be >= 0");
}

template <class T>
void TokenGrid<T>::validate() const {
  if (feature.rank() != 2 || feature.shape()[0] != height * width) {
    throw DimensionError("token grid " + std::to_string(height) + "x" + std::to_string(width) +
                         " does not match feature " + shape_str(feature.shape()));
  }
}

void KeySets::push(std::span<const std::size_t> keys) {
  indices.insert(indices.end(), keys.begin(), keys.end());
  offsets.push_back(indices.size());
}

KeySets full_key_sets(std::size_t queries, std::size_t keys) {
  KeySets s;
  std::vector<std::size_t> all(keys);
  for (std::size_t j = 0; j < keys; ++j) all[j] = j;
  for (std::size_t i = 0; i < queries; ++i) s.push(all);
  return s;
}

std::vector<std::size_t> window_segments(std::size_t extent, std::size_t window, bool shifted) {
  std::vector<std::size_t> segs;
  std::size_t pos = 0;
  const std::size_t first = shifted ? std::min(extent, window / 2) : 0;
  if (first > 0) {
    segs.push_back(first);
    pos = first;
  }
  while (pos < extent) {
    const std::size_t len = std::min(window, extent - pos);
    segs.push_back(len);
    pos += len;
  }
  return segs;
}

namespace {
std::vector<std::size_t> segment_index(std::size_t extent, std::size_t window, bool shifted) {
  std::vector<std::size_t> id(extent);
  std::size_t pos = 0, seg = 0;
  for (auto len : window_segments(extent, window, shifted)) {
    for (std::size_t i = 0; i < len; ++i) id[pos + i] = seg;
    pos += len;
    ++seg;
  }
  return id;
}
}  // namespace

KeySets window_key_sets(std::size_t height, std::size_t width, std::size_t window, bool shifted) {
  if (window == 0) throw ConfigError("window must be >= 1");
  if (window > std::min(height, width)) {
    throw ConfigError("window " + std::to_string(window) + " exceeds grid " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  const auto row_id = segment_index(height, window, shifted);
  const auto col_id = segment_index(width, window, shifted);
  KeySets s;
  std::vector<std::size_t> keys;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      keys.clear();
      for (std::size_t rr = 0; rr < height; ++rr) {
        if (row_id[rr] != row_id[r]) continue;
        for (std::size_t cc = 0; cc < width; ++cc) {
          if (col_id[cc] == col_id[c]) keys.push_back(rr * width + cc);
        }
      }
      s.push(keys);
    }
  }
  return s;
}

KeySets local_key_sets(std::size_t height, std::size_t width, long radius) {
  if (radius < 0) throw ConfigError("local attention radius must be >= 0");
  KeySets s;
  std::vector<std::size_t> keys;
  const long h = static_cast<long>(height), w = static_cast<long>(width);
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      keys.clear();
      for (long rr = std::max(0L, r - radius); rr <= std::min(h - 1, r + radius); ++rr)
        for (long cc = std::max(0L, c - radius); cc <= std::min(w - 1, c + radius); ++cc)
          keys.push_back(static_cast<std::size_t>(rr * w + cc));
      s.push(keys);
    }
  }
  return s;
}

KeySets pixel_key_sets(std::size_t tokens) { return block_key_sets(tokens, 1); }

KeySets block_key_sets(std::size_t queries, std::size_t per_query) {
  KeySets s;
  std::vector<std::size_t> keys(per_query);
  for (std::size_t i = 0; i < queries; ++i) {
    for (std::size_t j = 0; j < per_query; ++j) keys[j] = i * per_query + j;
    s.push(keys);
  }
  return s;
}

KeySets with_shared_keys(const KeySets& base, std::size_t first, std::size_t count) {
  if (count == 0) return base;
  KeySets s;
  std::vector<std::size_t> keys;
  for (std::size_t i = 0; i < base.queries(); ++i) {
    auto b = base.keys(i);
    keys.assign(b.begin(), b.end());
    for (std::size_t j = 0; j < count; ++j) keys.push_back(first + j);
    s.push(keys);
  }
  return s;
}

template <class T>
Tensor<T> attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const KeySets& sets,
                 std::size_t heads, T scale, std::vector<T>* weights) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) throw DimensionError("attend: operands must be 2-D");
  const std::size_t n = q.shape()[0], d = q.shape()[1];
  if (k.shape()[1] != d || v.shape()[1] != d || k.shape()[0] != v.shape()[0]) {
    throw DimensionError("attend: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                         shape_str(v.shape()) + " disagree");
  }
  if (heads == 0 || d % heads != 0) throw DimensionError("attend: channels not divisible by heads");
  if (sets.queries() != n) throw DimensionError("attend: key sets do not match query count");
  const std::size_t dh = d / heads;
  const std::size_t m = k.shape()[0];
  for (auto idx : sets.indices) {
    if (idx >= m) throw DimensionError("attend: key index out of range");
  }
  const auto& kern = simd::kernels<T>();
  Tensor<T> out({n, d});
  if (weights) weights->assign(sets.total() * heads, T(0));
  std::vector<T> w;
  for (std::size_t i = 0; i < n; ++i) {
    const auto keys = sets.keys(i);
    const std::size_t nk = keys.size();
    w.resize(nk);
    for (std::size_t h = 0; h < heads; ++h) {
      const T* qi = q.data().data() + i * d + h * dh;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        const T* kj = k.data().data() + keys[j] * d + h * dh;
        T s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        w[j] = s * scale;
        mx = std::max(mx, w[j]);
      }
      T total = 0;
      for (std::size_t j = 0; j < nk; ++j) {
        w[j] = std::exp(w[j] - mx);
        total += w[j];
      }
      T* oi = out.data().data() + i * d + h * dh;
      for (std::size_t j = 0; j < nk; ++j) {
        w[j] /= total;
        kern.axpy(w[j], v.data().data() + keys[j] * d + h * dh, oi, dh);
      }
      if (weights) std::copy(w.begin(), w.end(), weights->begin() + sets.offsets[i] * heads + h * nk);
    }
  }
  flops::add(sets.total() * (4 * d + 5 * heads));
  return out;
}

template <class T>
void attend_backward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const KeySets& sets,
                     std::size_t heads, T scale, const std::vector<T>& weights, const Tensor<T>& grad_out,
                     Tensor<T>& dq, Tensor<T>& dk, Tensor<T>& dv) {
  if (weights.size() != sets.total() * heads) throw StateError("attend backward: missing attention weights");
  require_same_shape(q, grad_out, "attend backward");
  require_same_shape(q, dq, "attend backward dq");
  require_same_shape(k, dk, "attend backward dk");
  require_same_shape(v, dv, "attend backward dv");
  const std::size_t n = q.shape()[0], d = q.shape()[1], dh = d / heads;
  std::vector<T> dw, ds;
  for (std::size_t i = 0; i < n; ++i) {
    const auto keys = sets.keys(i);
    const std::size_t nk = keys.size();
    dw.resize(nk);
    ds.resize(nk);
    for (std::size_t h = 0; h < heads; ++h) {
      const T* w = weights.data() + sets.offsets[i] * heads + h * nk;
      const T* go = grad_out.data().data() + i * d + h * dh;
      T inner = 0;
      for (std::size_t j = 0; j < nk; ++j) {
        const T* vj = v.data().data() + keys[j] * d + h * dh;
        T* dvj = dv.data().data() + keys[j] * d + h * dh;
        T s = 0;
        for (std::size_t c = 0; c < dh; ++c) {
          s += go[c] * vj[c];
          dvj[c] += w[j] * go[c];
        }
        dw[j] = s;
        inner += w[j] * s;
      }
      const T* qi = q.data().data() + i * d + h * dh;
      T* dqi = dq.data().data() + i * d + h * dh;
      for (std::size_t j = 0; j < nk; ++j) {
        ds[j] = w[j] * (dw[j] - inner) * scale;
        const T* kj = k.data().data() + keys[j] * d + h * dh;
        T* dkj = dk.data().data() + keys[j] * d + h * dh;
        for (std::size_t c = 0; c < dh; ++c) {
          dqi[c] += ds[j] * kj[c];
          dkj[c] += ds[j] * qi[c];
        }
      }
    }
  }
}

template <class T>
AttentionParams<T> AttentionParams<T>::init(const AttentionConfig& cfg, Rng& rng, const InitOptions& opts) {
  cfg.validate();
  const std::size_t d = cfg.dim;
  AttentionParams p;
  auto make = [&](std::size_t in, std::size_t out) {
    nn::Linear<T> l;
    l.weight = rng.truncated_normal_tensor<T>({in, out}, opts.weight_std);
    l.bias = Tensor<T>({out});
    return l;
  };
  p.q = make(d, d);
  p.k = make(d, d);
  p.v = make(d, d);
  p.o = opts.zero_output_projection ? nn::Linear<T>::zeros(d, d) : make(d, d);
  if (cfg.noise_tokens > 0) {
    p.noise_k = rng.truncated_normal_tensor<T>({cfg.noise_tokens, d}, opts.weight_std);
    p.noise_v = rng.truncated_normal_tensor<T>({cfg.noise_tokens, d}, opts.weight_std);
  }
  return p;
}

template <class T>
Tensor<T> attend_direction(const AttentionConfig& cfg, const AttentionParams<T>& p, const Tensor<T>& x,
                           const Tensor<T>& kv, KeySets sets, DirectionCache<T>* cache) {
  if (x.rank() != 2 || kv.rank() != 2 || x.shape()[1] != cfg.dim || kv.shape()[1] != cfg.dim) {
    throw DimensionError("attention: inputs " + shape_str(x.shape()) + " / " + shape_str(kv.shape()) +
                         " do not match dim " + std::to_string(cfg.dim));
  }
  Tensor<T> q = p.q.forward(x);
  Tensor<T> k = p.k.forward(kv);
  Tensor<T> v = p.v.forward(kv);
  if (!p.noise_k.empty()) {
    k = concat(k, p.k.forward(p.noise_k), 0);
    v = concat(v, p.v.forward(p.noise_v), 0);
  }
  std::vector<T> weights;
  Tensor<T> attended = attend(q, k, v, sets, cfg.heads, static_cast<T>(cfg.scale()), cache ? &weights : nullptr);
  Tensor<T> branch = p.o.forward(attended);
  if (cache) {
    cache->query_in = x;
    cache->kv_in = kv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->weights = std::move(weights);
    cache->attended = std::move(attended);
    cache->sets = std::move(sets);
  }
  return branch;
}

template <class T>
void attend_direction_backward(const AttentionConfig& cfg, const AttentionParams<T>& p,
                               const DirectionCache<T>& cache, const Tensor<T>& grad_branch,
                               AttentionParams<T>& grads, Tensor<T>& dx, Tensor<T>& dkv) {
  if (cache.attended.empty()) throw StateError("attention backward: missing forward cache");
  Tensor<T> d_att = p.o.backward(cache.attended, grad_branch, grads.o);
  Tensor<T> dq(cache.q.shape()), dk(cache.k.shape()), dv(cache.v.shape());
  attend_backward(cache.q, cache.k, cache.v, cache.sets, cfg.heads, static_cast<T>(cfg.scale()), cache.weights,
                  d_att, dq, dk, dv);
  accumulate(dx, p.q.backward(cache.query_in, dq, grads.q));
  const std::size_t m = cache.kv_in.shape()[0];
  if (p.noise_k.empty()) {
    accumulate(dkv, p.k.backward(cache.kv_in, dk, grads.k));
    accumulate(dkv, p.v.backward(cache.kv_in, dv, grads.v));
    return;
  }
  const std::size_t total = dk.shape()[0];
  accumulate(dkv, p.k.backward(cache.kv_in, slice(dk, 0, 0, m), grads.k));
  accumulate(dkv, p.v.backward(cache.kv_in, slice(dv, 0, 0, m), grads.v));
  accumulate(grads.noise_k, p.k.backward(p.noise_k, slice(dk, 0, m, total), grads.k));
  accumulate(grads.noise_v, p.v.backward(p.noise_v, slice(dv, 0, m, total), grads.v));
}

KeySets variant_key_sets(Variant v, const AttentionConfig& cfg, std::size_t height, std::size_t width,
                         bool shifted) {
  const std::size_t n = height * width;
  KeySets base;
  switch (v) {
    case Variant::kSelf:
    case Variant::kFull:
      base = full_key_sets(n, n);
      break;
    case Variant::kShiftedWindow:
      base = window_key_sets(height, width, cfg.window, shifted);
      break;
    case Variant::kLocal:
      base = local_key_sets(height, width, cfg.radius);
      break;
    case Variant::kPixelwise:
      base = pixel_key_sets(n);
      break;
    case Variant::kDsim:
      throw ConfigError("dsim key sets are built by the dsim module");
  }
  return with_shared_keys(base, n, cfg.noise_tokens);
}

namespace {
template <class T>
void check_pair(const AttentionConfig& cfg, const TokenGrid<T>& x, const TokenGrid<T>& y) {
  x.validate();
  y.validate();
  if (x.height != y.height || x.width != y.width || x.channels() != y.channels()) {
    throw DimensionError("cross attention: modality geometries differ " + shape_str(x.feature.shape()) + " vs " +
                         shape_str(y.feature.shape()));
  }
  if (x.channels() != cfg.dim) throw DimensionError("cross attention: channels do not match config dim");
}
}  // namespace

template <class T>
std::pair<Tensor<T>, Tensor<T>> cross_branches(Variant v, const AttentionConfig& cfg, const AttentionParams<T>& p,
                                               const TokenGrid<T>& x, const TokenGrid<T>& y, bool shifted,
                                               CrossCache<T>* cache) {
  cfg.validate();
  check_pair(cfg, x, y);
  const KeySets sets = variant_key_sets(v, cfg, x.height, x.width, shifted);
  Tensor<T> bx = attend_direction(cfg, p, x.feature, y.feature, sets, cache ? &cache->rgb : nullptr);
  Tensor<T> by = attend_direction(cfg, p, y.feature, x.feature, sets, cache ? &cache->depth : nullptr);
  return {std::move(bx), std::move(by)};
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> cross_branches_backward(const AttentionConfig& cfg, const AttentionParams<T>& p,
                                                        const CrossCache<T>& cache, const Tensor<T>& grad_x,
                                                        const Tensor<T>& grad_y, AttentionParams<T>& grads) {
  Tensor<T> dx(cache.rgb.query_in.shape()), dy(cache.depth.query_in.shape());
  attend_direction_backward(cfg, p, cache.rgb, grad_x, grads, dx, dy);
  attend_direction_backward(cfg, p, cache.depth, grad_y, grads, dy, dx);
  return {std::move(dx), std::move(dy)};
}

template <class T>
Tensor<T> self_branch(const AttentionConfig& cfg, const AttentionParams<T>& p, const TokenGrid<T>& x,
                      DirectionCache<T>* cache) {
  cfg.validate();
  x.validate();
  return attend_direction(cfg, p, x.feature, x.feature, variant_key_sets(Variant::kSelf, cfg, x.height, x.width, false),
                          cache);
}

template <class T>
Tensor<T> self_branch_backward(const AttentionConfig& cfg, const AttentionParams<T>& p,
                               const DirectionCache<T>& cache, const Tensor<T>& grad_branch,
                               AttentionParams<T>& grads) {
  Tensor<T> dx(cache.query_in.shape()), dkv(cache.query_in.shape());
  attend_direction_backward(cfg, p, cache, grad_branch, grads, dx, dkv);
  accumulate(dx, dkv);
  return dx;
}

namespace {
template <class T>
TokenGrid<T> residual(const TokenGrid<T>& x, const Tensor<T>& branch) {
  return {x.height, x.width, add(x.feature, branch)};
}

template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> run_cross(Variant v, const AttentionConfig& cfg, const AttentionParams<T>& p,
                                                const TokenGrid<T>& x, const TokenGrid<T>& y, bool shifted) {
  auto [bx, by] = cross_branches(v, cfg, p, x, y, shifted);
  return {residual(x, bx), residual(y, by)};
}
}  // namespace

template <class T>
TokenGrid<T> self_attention(const AttentionConfig& cfg, const AttentionParams<T>& p, const TokenGrid<T>& x) {
  return residual(x, self_branch(cfg, p, x));
}

template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> cross_attention(const AttentionConfig& cfg, const AttentionParams<T>& p,
                                                      const TokenGrid<T>& x, const TokenGrid<T>& y) {
  return run_cross(Variant::kFull, cfg, p, x, y, false);
}

template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> shifted_window_cross_attention(const AttentionConfig& cfg,
                                                                     const AttentionParams<T>& p,
                                                                     const TokenGrid<T>& x, const TokenGrid<T>& y,
                                                                     bool shifted) {
  return run_cross(Variant::kShiftedWindow, cfg, p, x, y, shifted);
}

template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> local_cross_attention(const AttentionConfig& cfg, const AttentionParams<T>& p,
                                                            const TokenGrid<T>& x, const TokenGrid<T>& y) {
  return run_cross(Variant::kLocal, cfg, p, x, y, false);
}

template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> pixelwise_cross_attention(const AttentionConfig& cfg,
                                                                const AttentionParams<T>& p, const TokenGrid<T>& x,
                                                                const TokenGrid<T>& y) {
  return run_cross(Variant::kPixelwise, cfg, p, x, y, false);
}

#define DPX_INSTANTIATE(T)                                                                                         \
  template struct TokenGrid<T>;                                                                                    \
  template struct AttentionParams<T>;                                                                              \
  template Tensor<T> attend(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const KeySets&, std::size_t, T,  \
                            std::vector<T>*);                                                                      \
  template void attend_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const KeySets&, std::size_t, \
                                T, const std::vector<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&, Tensor<T>&);   \
  template Tensor<T> attend_direction(const AttentionConfig&, const AttentionParams<T>&, const Tensor<T>&,         \
                                      const Tensor<T>&, KeySets, DirectionCache<T>*);                              \
  template void attend_direction_backward(const AttentionConfig&, const AttentionParams<T>&,                       \
                                          const DirectionCache<T>&, const Tensor<T>&, AttentionParams<T>&,         \
                                          Tensor<T>&, Tensor<T>&);                                                 \
  template std::pair<Tensor<T>, Tensor<T>> cross_branches(Variant, const AttentionConfig&,                         \
                                                          const AttentionParams<T>&, const TokenGrid<T>&,          \
                                                          const TokenGrid<T>&, bool, CrossCache<T>*);              \
  template std::pair<Tensor<T>, Tensor<T>> cross_branches_backward(const AttentionConfig&,                         \
                                                                   const AttentionParams<T>&,                      \
                                                                   const CrossCache<T>&, const Tensor<T>&,         \
                                                                   const Tensor<T>&, AttentionParams<T>&);         \
  template Tensor<T> self_branch(const AttentionConfig&, const AttentionParams<T>&, const TokenGrid<T>&,           \
                                 DirectionCache<T>*);                                                              \
  template Tensor<T> self_branch_backward(const AttentionConfig&, const AttentionParams<T>&,                       \
                                          const DirectionCache<T>&, const Tensor<T>&, AttentionParams<T>&);        \
  template TokenGrid<T> self_attention(const AttentionConfig&, const AttentionParams<T>&, const TokenGrid<T>&);    \
  template std::pair<TokenGrid<T>, TokenGrid<T>> cross_attention(const AttentionConfig&, const AttentionParams<T>&, \
                                                                 const TokenGrid<T>&, const TokenGrid<T>&);        \
  template std::pair<TokenGrid<T>, TokenGrid<T>> shifted_window_cross_attention(                                   \
      const AttentionConfig&, const AttentionParams<T>&, const TokenGrid<T>&, const TokenGrid<T>&, bool);          \
  template std::pair<TokenGrid<T>, TokenGrid<T>> local_cross_attention(                                            \
      const AttentionConfig&, const AttentionParams<T>&, const TokenGrid<T>&, const TokenGrid<T>&);                \
  template std::pair<TokenGrid<T>, TokenGrid<T>> pixelwise_cross_attention(                                        \
      const AttentionConfig&, const AttentionParams<T>&, const TokenGrid<T>&, const TokenGrid<T>&);

DPX_INSTANTIATE(float)
DPX_INSTANTIATE(double)
#undef DPX_INSTANTIATE

}  // namespace dpx::attn
