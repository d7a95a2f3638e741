#include "dpx/dsim.hpp"

#include <cmath>

#include "dpx/error.hpp"
#include "dpx/flops.hpp"
#include "dpx/ops.hpp"

namespace dpx::dsim {

std::string_view discriminator_name(DiscriminatorVariant v) {
  return v == DiscriminatorVariant::kMlp2Softmax ? "mlp2_softmax" : "mlp2_sigmoid";
}

DiscriminatorVariant parse_discriminator(std::string_view name) {
  if (name == "mlp2_softmax") return DiscriminatorVariant::kMlp2Softmax;
  if (name == "mlp2_sigmoid") return DiscriminatorVariant::kMlp2Sigmoid;
  throw ConfigError("unknown discriminator variant '" + std::string(name) +
                    "' (expected mlp2_softmax, mlp2_sigmoid)");
}

double DsimConfig::scale() const { return 1.0 / std::sqrt(static_cast<double>(dim / heads)); }

void DsimConfig::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError("dsim: dim " + std::to_string(dim) + " must be a positive multiple of heads " +
                      std::to_string(heads));
  }
}

template <class T>
DsimParams<T> DsimParams<T>::init(const DsimConfig& cfg, Rng& rng, const attn::InitOptions& opts) {
  cfg.validate();
  const std::size_t d = cfg.dim, h = cfg.hidden();
  const auto act = cfg.options.discriminator == DiscriminatorVariant::kMlp2Softmax ? nn::FinalActivation::kSoftmax
                                                                                   : nn::FinalActivation::kSigmoid;
  auto linear = [&](std::size_t in, std::size_t out) {
    nn::Linear<T> l;
    l.weight = rng.truncated_normal_tensor<T>({in, out}, opts.weight_std);
    l.bias = Tensor<T>({out});
    return l;
  };
  auto mlp = [&](std::size_t in) {
    nn::Mlp2<T> m;
    m.first = linear(in, h);
    m.second = linear(h, d);
    m.final_activation = act;
    return m;
  };
  DsimParams p;
  p.discriminators.f_d_rgb = mlp(d);
  p.discriminators.f_d_depth = mlp(d);
  p.discriminators.f_s = mlp(2 * d);
  p.factors.alpha_rgb = Tensor<T>::ones({d});
  p.factors.beta_rgb = Tensor<T>::ones({d});
  p.factors.alpha_depth = Tensor<T>::ones({d});
  p.factors.beta_depth = Tensor<T>::ones({d});
  if (cfg.options.noise_tokens > 0) {
    const std::size_t n = cfg.options.noise_tokens;
    p.noise.k_rgb = rng.truncated_normal_tensor<T>({n, d}, opts.weight_std);
    p.noise.v_rgb = rng.truncated_normal_tensor<T>({n, d}, opts.weight_std);
    p.noise.k_depth = rng.truncated_normal_tensor<T>({n, d}, opts.weight_std);
    p.noise.v_depth = rng.truncated_normal_tensor<T>({n, d}, opts.weight_std);
  }
  p.lt_q = linear(d, d);
  p.lt_k = linear(d, d);
  p.lt_v = linear(d, d);
  p.w_q = linear(d, d);
  p.w_k = linear(d, d);
  p.w_v = linear(d, d);
  p.w_o = opts.zero_output_projection ? nn::Linear<T>::zeros(d, d) : linear(d, d);
  return p;
}

namespace {

template <class T>
void check_pair(const TokenGrid<T>& xr, const TokenGrid<T>& xd) {
  xr.validate();
  xd.validate();
  if (xr.height != xd.height || xr.width != xd.width || xr.channels() != xd.channels()) {
    throw DimensionError("dsim: modality geometries differ " + shape_str(xr.feature.shape()) + " vs " +
                         shape_str(xd.feature.shape()));
  }
}

// out[i, c] = factor[c] * q[i, c] * score[i, c]; 2 FLOPs per element.
template <class T>
Tensor<T> gate(const Tensor<T>& factor, const Tensor<T>& q, const Tensor<T>& score) {
  require_same_shape(q, score, "dsim gate");
  const std::size_t d = factor.size();
  if (q.shape()[1] != d) throw DimensionError("dsim gate: factor width does not match features");
  Tensor<T> out(q.shape());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = factor[i % d] * q[i] * score[i];
  flops::add(2 * q.size());
  return out;
}

template <class T>
void gate_backward(const Tensor<T>& factor, const Tensor<T>& q, const Tensor<T>& score, const Tensor<T>& g,
                   Tensor<T>* dfactor, Tensor<T>& dq, Tensor<T>* dscore) {
  const std::size_t d = factor.size();
  for (std::size_t i = 0; i < q.size(); ++i) {
    const std::size_t c = i % d;
    if (dfactor) (*dfactor)[c] += g[i] * q[i] * score[i];
    dq[i] += g[i] * factor[c] * score[i];
    if (dscore) (*dscore)[i] += g[i] * factor[c] * q[i];
  }
}

// Stacks per-pixel entries [N x d] each into [N x E x d].
template <class T>
Tensor<T> stack_entries(const std::vector<const Tensor<T>*>& entries) {
  const std::size_t n = entries.front()->shape()[0], d = entries.front()->shape()[1];
  const std::size_t e = entries.size();
  Tensor<T> out({n, e, d});
  for (std::size_t j = 0; j < e; ++j) {
    require_same_shape(*entries[j], *entries.front(), "dsim entries");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) out.at(i, j, c) = (*entries[j])[i * d + c];
  }
  return out;
}

template <class T>
Tensor<T> entry(const Tensor<T>& stacked, std::size_t j) {
  const std::size_t n = stacked.shape()[0], d = stacked.shape()[2];
  Tensor<T> out({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = stacked.at(i, j, c);
  return out;
}

// [noise (n x d) broadcast; entries (N x E x d)] -> [N x (n + E) x d]
template <class T>
Tensor<T> prepend_noise(const Tensor<T>& noise, const Tensor<T>& entries) {
  const std::size_t n = entries.shape()[0], e = entries.shape()[1], d = entries.shape()[2];
  const std::size_t nn = noise.empty() ? 0 : noise.shape()[0];
  if (nn && noise.shape()[1] != d) throw DimensionError("dsim: noise token width does not match features");
  Tensor<T> out({n, nn + e, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < nn; ++j)
      for (std::size_t c = 0; c < d; ++c) out.at(i, j, c) = noise.at(j, c);
    for (std::size_t j = 0; j < e; ++j)
      for (std::size_t c = 0; c < d; ++c) out.at(i, nn + j, c) = entries.at(i, j, c);
  }
  return out;
}

// Splits a set gradient [N x P x d] into the noise gradient (summed over pixels) and per-entry grads.
template <class T>
Tensor<T> split_set_grad(const Tensor<T>& g, std::size_t noise_count, Tensor<T>* dnoise) {
  const std::size_t n = g.shape()[0], p = g.shape()[1], d = g.shape()[2];
  const std::size_t e = p - noise_count;
  Tensor<T> out({n, e, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < noise_count; ++j)
      for (std::size_t c = 0; c < d; ++c) (*dnoise)[j * d + c] += g.at(i, j, c);
    for (std::size_t j = 0; j < e; ++j)
      for (std::size_t c = 0; c < d; ++c) out.at(i, j, c) = g.at(i, noise_count + j, c);
  }
  return out;
}

// With the learning factor disabled alpha = beta = 1 regardless of the stored
// values, so the stored factors receive an exactly zero gradient.
template <class T>
const FusionFactors<T>& active_factors(const DsimConfig& cfg, const DsimParams<T>& p, FusionFactors<T>& ones) {
  if (cfg.options.ablation.enable_learning_factor) return p.factors;
  const Shape s{cfg.dim};
  ones = {Tensor<T>::ones(s), Tensor<T>::ones(s), Tensor<T>::ones(s), Tensor<T>::ones(s)};
  return ones;
}

}  // namespace

template <class T>
RelationScores<T> relation_scores(const RelationDiscriminators<T>& disc, const TokenGrid<T>& xr,
                                  const TokenGrid<T>& xd) {
  check_pair(xr, xd);
  RelationScores<T> r;
  r.d_rgb = disc.f_d_rgb.forward(sub(xr.feature, xd.feature));
  r.d_depth = disc.f_d_depth.forward(sub(xd.feature, xr.feature));
  r.s = disc.f_s.forward(concat(xr.feature, xd.feature, 1));
  return r;
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> build_keys(const FusionFactors<T>& f, const Tensor<T>& q_lt_rgb,
                                           const Tensor<T>& q_lt_depth, const Tensor<T>& d_rgb,
                                           const Tensor<T>& d_depth, const Tensor<T>& s, bool with_difference) {
  require_same_shape(q_lt_rgb, q_lt_depth, "build_keys");
  require_same_shape(q_lt_rgb, s, "build_keys similarity");
  const Tensor<T> shared_r = gate(f.beta_rgb, q_lt_rgb, s);
  const Tensor<T> shared_d = gate(f.beta_depth, q_lt_depth, s);
  if (!with_difference) return {stack_entries<T>({&shared_r}), stack_entries<T>({&shared_d})};
  require_same_shape(q_lt_rgb, d_rgb, "build_keys difference");
  require_same_shape(q_lt_depth, d_depth, "build_keys difference");
  const Tensor<T> diff_r = gate(f.alpha_rgb, q_lt_rgb, d_rgb);
  const Tensor<T> diff_d = gate(f.alpha_depth, q_lt_depth, d_depth);
  return {stack_entries<T>({&diff_r, &shared_r}), stack_entries<T>({&diff_d, &shared_d})};
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> build_values(const Tensor<T>& v_lt_rgb, const Tensor<T>& v_lt_depth,
                                             bool with_difference) {
  require_same_shape(v_lt_rgb, v_lt_depth, "build_values");
  if (!with_difference) return {stack_entries<T>({&v_lt_depth}), stack_entries<T>({&v_lt_rgb})};
  const Tensor<T> dr = sub(v_lt_rgb, v_lt_depth);
  const Tensor<T> dd = sub(v_lt_depth, v_lt_rgb);
  return {stack_entries<T>({&dr, &v_lt_depth}), stack_entries<T>({&dd, &v_lt_rgb})};
}

template <class T>
std::pair<Assembled<T>, Assembled<T>> assemble_qkv(const DsimParams<T>& p, const Tensor<T>& xr, const Tensor<T>& xd,
                                                   const Tensor<T>& k_rgb, const Tensor<T>& k_depth,
                                                   const Tensor<T>& v_rgb, const Tensor<T>& v_depth) {
  if (k_rgb.rank() != 3 || k_rgb.shape() != v_rgb.shape() || k_rgb.shape() != k_depth.shape() ||
      k_rgb.shape() != v_depth.shape()) {
    throw DimensionError("assemble_qkv: per-pixel key/value sets disagree");
  }
  const std::size_t nk = p.noise.k_rgb.empty() ? 0 : p.noise.k_rgb.shape()[0];
  const std::size_t nv = p.noise.v_rgb.empty() ? 0 : p.noise.v_rgb.shape()[0];
  if (nk != nv) throw DimensionError("assemble_qkv: key and value noise token counts differ");
  auto one = [&](const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& noise_k,
                 const Tensor<T>& noise_v) {
    Assembled<T> a;
    a.q = p.w_q.forward(x);
    a.k = p.w_k.forward(prepend_noise(noise_k, k));
    a.v = p.w_v.forward(prepend_noise(noise_v, v));
    return a;
  };
  return {one(xr, k_rgb, v_rgb, p.noise.k_rgb, p.noise.v_rgb),
          one(xd, k_depth, v_depth, p.noise.k_depth, p.noise.v_depth)};
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> dsim_branches(const DsimConfig& cfg, const DsimParams<T>& p, const TokenGrid<T>& xr,
                                              const TokenGrid<T>& xd, DsimCache<T>* cache) {
  cfg.validate();
  check_pair(xr, xd);
  if (xr.channels() != cfg.dim) throw DimensionError("dsim: channels do not match config dim");
  const auto& ab = cfg.options.ablation;
  const std::size_t n = xr.tokens(), d = cfg.dim;
  DsimCache<T> local;
  DsimCache<T>& c = cache ? *cache : local;
  c.xr = xr.feature;
  c.xd = xd.feature;

  if (ab.enable_difference) {
    c.d_rgb = p.discriminators.f_d_rgb.forward(sub(xr.feature, xd.feature), &c.f_d_rgb);
    c.d_depth = p.discriminators.f_d_depth.forward(sub(xd.feature, xr.feature), &c.f_d_depth);
  }
  c.s = ab.enable_similarity ? p.discriminators.f_s.forward(concat(xr.feature, xd.feature, 1), &c.f_s)
                             : Tensor<T>::ones({n, d});

  const nn::Linear<T>& key_lt = cfg.options.key_source == KeySource::kQueryProjection ? p.lt_q : p.lt_k;
  c.gate_rgb = key_lt.forward(xr.feature);
  c.gate_depth = key_lt.forward(xd.feature);
  c.v_lt_rgb = p.lt_v.forward(xr.feature);
  c.v_lt_depth = p.lt_v.forward(xd.feature);

  FusionFactors<T> ones;
  auto [k_r, k_d] = build_keys(active_factors(cfg, p, ones), c.gate_rgb, c.gate_depth, c.d_rgb, c.d_depth, c.s, ab.enable_difference);
  auto [v_r, v_d] = build_values(c.v_lt_rgb, c.v_lt_depth, ab.enable_difference);

  const std::size_t per_pixel = cfg.keys_per_pixel();
  if ((p.noise.k_rgb.empty() ? 0 : p.noise.k_rgb.shape()[0]) != cfg.options.noise_tokens) {
    throw DimensionError("dsim: noise token count does not match config");
  }
  c.k_set_rgb = prepend_noise(p.noise.k_rgb, k_r).reshaped({n * per_pixel, d});
  c.k_set_depth = prepend_noise(p.noise.k_depth, k_d).reshaped({n * per_pixel, d});
  c.v_set_rgb = prepend_noise(p.noise.v_rgb, v_r).reshaped({n * per_pixel, d});
  c.v_set_depth = prepend_noise(p.noise.v_depth, v_d).reshaped({n * per_pixel, d});
  c.q_rgb = p.w_q.forward(xr.feature);
  c.q_depth = p.w_q.forward(xd.feature);
  c.k_rgb = p.w_k.forward(c.k_set_rgb);
  c.k_depth = p.w_k.forward(c.k_set_depth);
  c.v_rgb = p.w_v.forward(c.v_set_rgb);
  c.v_depth = p.w_v.forward(c.v_set_depth);
  c.sets = attn::block_key_sets(n, per_pixel);

  const bool owner = cfg.options.pairing == Pairing::kOwnerSets;
  const T scale = static_cast<T>(cfg.scale());
  c.attended_rgb = attn::attend(c.q_rgb, owner ? c.k_rgb : c.k_depth, owner ? c.v_rgb : c.v_depth, c.sets, cfg.heads,
                                scale, &c.weights_rgb);
  c.attended_depth = attn::attend(c.q_depth, owner ? c.k_depth : c.k_rgb, owner ? c.v_depth : c.v_rgb, c.sets,
                                  cfg.heads, scale, &c.weights_depth);
  return {p.w_o.forward(c.attended_rgb), p.w_o.forward(c.attended_depth)};
}

template <class T>
std::pair<TokenGrid<T>, TokenGrid<T>> paca_forward(const DsimConfig& cfg, const DsimParams<T>& p,
                                                   const TokenGrid<T>& xr_intra, const TokenGrid<T>& xd_intra,
                                                   DsimCache<T>* cache) {
  auto [br, bd] = dsim_branches(cfg, p, xr_intra, xd_intra, cache);
  return {TokenGrid<T>{xr_intra.height, xr_intra.width, add(xr_intra.feature, br)},
          TokenGrid<T>{xd_intra.height, xd_intra.width, add(xd_intra.feature, bd)}};
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> dsim_backward(const DsimConfig& cfg, const DsimParams<T>& p, const DsimCache<T>& c,
                                              const Tensor<T>& grad_rgb, const Tensor<T>& grad_depth,
                                              DsimParams<T>& grads) {
  if (c.attended_rgb.empty() || c.sets.queries() == 0) throw StateError("dsim backward: missing forward cache");
  const auto& ab = cfg.options.ablation;
  const std::size_t n = c.xr.shape()[0], d = cfg.dim, per_pixel = cfg.keys_per_pixel();
  const std::size_t noise = cfg.options.noise_tokens;
  const bool owner = cfg.options.pairing == Pairing::kOwnerSets;
  const T scale = static_cast<T>(cfg.scale());

  const Tensor<T> d_att_r = p.w_o.backward(c.attended_rgb, grad_rgb, grads.w_o);
  const Tensor<T> d_att_d = p.w_o.backward(c.attended_depth, grad_depth, grads.w_o);

  Tensor<T> dq_r(c.q_rgb.shape()), dq_d(c.q_depth.shape());
  Tensor<T> dk_r(c.k_rgb.shape()), dk_d(c.k_depth.shape());
  Tensor<T> dv_r(c.v_rgb.shape()), dv_d(c.v_depth.shape());
  attn::attend_backward(c.q_rgb, owner ? c.k_rgb : c.k_depth, owner ? c.v_rgb : c.v_depth, c.sets, cfg.heads, scale,
                        c.weights_rgb, d_att_r, dq_r, owner ? dk_r : dk_d, owner ? dv_r : dv_d);
  attn::attend_backward(c.q_depth, owner ? c.k_depth : c.k_rgb, owner ? c.v_depth : c.v_rgb, c.sets, cfg.heads,
                        scale, c.weights_depth, d_att_d, dq_d, owner ? dk_d : dk_r, owner ? dv_d : dv_r);

  Tensor<T> dxr = p.w_q.backward(c.xr, dq_r, grads.w_q);
  Tensor<T> dxd = p.w_q.backward(c.xd, dq_d, grads.w_q);

  const Shape set_shape{n, per_pixel, d};
  Tensor<T> dummy;
  auto set_grad = [&](const Tensor<T>& set_in, const Tensor<T>& dproj, nn::Linear<T>& lin_grads,
                      const nn::Linear<T>& lin, Tensor<T>& dnoise) {
    Tensor<T> g = lin.backward(set_in, dproj, lin_grads).reshaped(set_shape);
    return split_set_grad(g, noise, noise ? &dnoise : &dummy);
  };
  const Tensor<T> dk_entries_r = set_grad(c.k_set_rgb, dk_r, grads.w_k, p.w_k, grads.noise.k_rgb);
  const Tensor<T> dk_entries_d = set_grad(c.k_set_depth, dk_d, grads.w_k, p.w_k, grads.noise.k_depth);
  const Tensor<T> dv_entries_r = set_grad(c.v_set_rgb, dv_r, grads.w_v, p.w_v, grads.noise.v_rgb);
  const Tensor<T> dv_entries_d = set_grad(c.v_set_depth, dv_d, grads.w_v, p.w_v, grads.noise.v_depth);

  // Values: V_r = [v_r - v_d, v_d], V_d = [v_d - v_r, v_r].
  Tensor<T> dvlt_r({n, d}), dvlt_d({n, d});
  {
    const std::size_t shared = ab.enable_difference ? 1 : 0;
    accumulate(dvlt_d, entry(dv_entries_r, shared));
    accumulate(dvlt_r, entry(dv_entries_d, shared));
    if (ab.enable_difference) {
      const Tensor<T> g_r = entry(dv_entries_r, 0), g_d = entry(dv_entries_d, 0);
      accumulate(dvlt_r, g_r);
      accumulate(dvlt_d, g_d);
      for (std::size_t i = 0; i < n * d; ++i) {
        dvlt_d[i] -= g_r[i];
        dvlt_r[i] -= g_d[i];
      }
    }
  }
  accumulate(dxr, p.lt_v.backward(c.xr, dvlt_r, grads.lt_v));
  accumulate(dxd, p.lt_v.backward(c.xd, dvlt_d, grads.lt_v));

  // Keys.
  const bool learn = ab.enable_learning_factor;
  FusionFactors<T> ones;
  const FusionFactors<T>& f = active_factors(cfg, p, ones);
  Tensor<T> dgate_r({n, d}), dgate_d({n, d});
  Tensor<T> ds({n, d});
  Tensor<T> dD_r({n, d}), dD_d({n, d});
  {
    const std::size_t shared = ab.enable_difference ? 1 : 0;
    gate_backward(f.beta_rgb, c.gate_rgb, c.s, entry(dk_entries_r, shared),
                  learn ? &grads.factors.beta_rgb : nullptr, dgate_r, &ds);
    gate_backward(f.beta_depth, c.gate_depth, c.s, entry(dk_entries_d, shared),
                  learn ? &grads.factors.beta_depth : nullptr, dgate_d, &ds);
    if (ab.enable_difference) {
      gate_backward(f.alpha_rgb, c.gate_rgb, c.d_rgb, entry(dk_entries_r, 0),
                    learn ? &grads.factors.alpha_rgb : nullptr, dgate_r, &dD_r);
      gate_backward(f.alpha_depth, c.gate_depth, c.d_depth, entry(dk_entries_d, 0),
                    learn ? &grads.factors.alpha_depth : nullptr, dgate_d, &dD_d);
    }
  }
  const nn::Linear<T>& key_lt = cfg.options.key_source == KeySource::kQueryProjection ? p.lt_q : p.lt_k;
  nn::Linear<T>& key_lt_grads = cfg.options.key_source == KeySource::kQueryProjection ? grads.lt_q : grads.lt_k;
  accumulate(dxr, key_lt.backward(c.xr, dgate_r, key_lt_grads));
  accumulate(dxd, key_lt.backward(c.xd, dgate_d, key_lt_grads));

  // Discriminators.
  if (ab.enable_similarity) {
    const Tensor<T> dcat = p.discriminators.f_s.backward(c.f_s, ds, grads.discriminators.f_s);
    accumulate(dxr, slice(dcat, 1, 0, d));
    accumulate(dxd, slice(dcat, 1, d, 2 * d));
  }
  if (ab.enable_difference) {
    const Tensor<T> g_rd = p.discriminators.f_d_rgb.backward(c.f_d_rgb, dD_r, grads.discriminators.f_d_rgb);
    const Tensor<T> g_dr = p.discriminators.f_d_depth.backward(c.f_d_depth, dD_d, grads.discriminators.f_d_depth);
    for (std::size_t i = 0; i < n * d; ++i) {
      dxr[i] += g_rd[i] - g_dr[i];
      dxd[i] += g_dr[i] - g_rd[i];
    }
  }
  return {std::move(dxr), std::move(dxd)};
}

#define DPX_INSTANTIATE(T)                                                                                          \
  template struct DsimParams<T>;                                                                                    \
  template RelationScores<T> relation_scores(const RelationDiscriminators<T>&, const TokenGrid<T>&,                 \
                                             const TokenGrid<T>&);                                                  \
  template std::pair<Tensor<T>, Tensor<T>> build_keys(const FusionFactors<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                                      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);  \
  template std::pair<Tensor<T>, Tensor<T>> build_values(const Tensor<T>&, const Tensor<T>&, bool);                  \
  template std::pair<Assembled<T>, Assembled<T>> assemble_qkv(const DsimParams<T>&, const Tensor<T>&,               \
                                                              const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                                              const Tensor<T>&, const Tensor<T>&);                  \
  template std::pair<Tensor<T>, Tensor<T>> dsim_branches(const DsimConfig&, const DsimParams<T>&,                   \
                                                         const TokenGrid<T>&, const TokenGrid<T>&, DsimCache<T>*);  \
  template std::pair<TokenGrid<T>, TokenGrid<T>> paca_forward(const DsimConfig&, const DsimParams<T>&,              \
                                                              const TokenGrid<T>&, const TokenGrid<T>&,             \
                                                              DsimCache<T>*);                                       \
  template std::pair<Tensor<T>, Tensor<T>> dsim_backward(const DsimConfig&, const DsimParams<T>&,                   \
                                                         const DsimCache<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                                         DsimParams<T>&);

DPX_INSTANTIATE(float)
DPX_INSTANTIATE(double)
#undef DPX_INSTANTIATE

}  // namespace dpx::dsim
