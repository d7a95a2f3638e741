#include "dpx/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "dpx/error.hpp"
#include "dpx/flops.hpp"
#include "dpx/ops.hpp"

namespace dpx::dec {

namespace {

struct Axis {
  std::size_t lo, hi;
  double frac;
};

Axis source(std::size_t o, std::size_t in, std::size_t out) {
  double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  s = std::max(s, 0.0);
  std::size_t lo = std::min(static_cast<std::size_t>(s), in - 1);
  const std::size_t hi = std::min(lo + 1, in - 1);
  const double frac = lo == hi ? 0.0 : s - static_cast<double>(lo);
  return {lo, hi, frac};
}

}  // namespace

BilinearPlan bilinear_plan(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w) {
  if (in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0) throw DimensionError("bilinear: empty geometry");
  BilinearPlan p{in_h, in_w, out_h, out_w, {}, {}};
  p.taps.reserve(out_h * out_w);
  p.weights.reserve(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const Axis ay = source(y, in_h, out_h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const Axis ax = source(x, in_w, out_w);
      p.taps.push_back({ay.lo * in_w + ax.lo, ay.lo * in_w + ax.hi, ay.hi * in_w + ax.lo, ay.hi * in_w + ax.hi});
      p.weights.push_back({(1 - ay.frac) * (1 - ax.frac), (1 - ay.frac) * ax.frac, ay.frac * (1 - ax.frac),
                           ay.frac * ax.frac});
    }
  }
  return p;
}

template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, const BilinearPlan& plan) {
  if (x.rank() != 2 || x.shape()[0] != plan.in_h * plan.in_w) {
    throw DimensionError("bilinear: input " + shape_str(x.shape()) + " does not match the " +
                         std::to_string(plan.in_h) + "x" + std::to_string(plan.in_w) + " plan");
  }
  if (plan.identity()) return x;
  const std::size_t c = x.shape()[1];
  Tensor<T> out({plan.out_h * plan.out_w, c});
  for (std::size_t o = 0; o < plan.taps.size(); ++o) {
    const auto& t = plan.taps[o];
    const T w0 = static_cast<T>(plan.weights[o][0]), w1 = static_cast<T>(plan.weights[o][1]);
    const T w2 = static_cast<T>(plan.weights[o][2]), w3 = static_cast<T>(plan.weights[o][3]);
    for (std::size_t ch = 0; ch < c; ++ch) {
      out.at(o, ch) = w0 * x.at(t[0], ch) + w1 * x.at(t[1], ch) + w2 * x.at(t[2], ch) + w3 * x.at(t[3], ch);
    }
  }
  flops::add(7 * out.size());
  return out;
}

template <class T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_out, const BilinearPlan& plan) {
  if (plan.identity()) return grad_out;
  const std::size_t c = grad_out.shape()[1];
  Tensor<T> g({plan.in_h * plan.in_w, c});
  for (std::size_t o = 0; o < plan.taps.size(); ++o) {
    for (std::size_t k = 0; k < 4; ++k) {
      const T w = static_cast<T>(plan.weights[o][k]);
      for (std::size_t ch = 0; ch < c; ++ch) g.at(plan.taps[o][k], ch) += w * grad_out.at(o, ch);
    }
  }
  return g;
}

template <class T>
Decoder<T> Decoder<T>::init(const std::array<std::size_t, 4>& stage_dims, std::size_t embed_dim,
                            std::size_t num_classes, Rng& rng, double weight_std) {
  if (embed_dim == 0) throw ConfigError("decoder: embed dim must be positive");
  if (num_classes == 0) throw ConfigError("decoder: num_classes must be positive");
  auto linear = [&](std::size_t in, std::size_t out) {
    nn::Linear<T> l;
    l.weight = rng.truncated_normal_tensor<T>({in, out}, weight_std);
    l.bias = Tensor<T>({out});
    return l;
  };
  Decoder d;
  for (std::size_t i = 0; i < 4; ++i) d.proj[i] = linear(stage_dims[i], embed_dim);
  d.head.first = linear(4 * embed_dim, embed_dim);
  d.head.second = linear(embed_dim, num_classes);
  d.head.final_activation = nn::FinalActivation::kNone;
  return d;
}

template <class T>
Tensor<T> decoder_forward(const Decoder<T>& d, const std::array<enc::BiModalFeatures<T>, 4>& features,
                          std::size_t out_h, std::size_t out_w, DecoderCache<T>* cache) {
  DecoderCache<T> local;
  auto& c = cache ? *cache : local;
  const std::size_t h1 = features[0].rgb.height, w1 = features[0].rgb.width;
  std::vector<Tensor<T>> up;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& f = features[i];
    f.rgb.validate();
    f.depth.validate();
    if (f.rgb.height != f.depth.height || f.rgb.width != f.depth.width) {
      throw DimensionError("decoder: stage " + std::to_string(i + 1) + " modality geometries differ");
    }
    if (f.rgb.height > h1 || f.rgb.width > w1) {
      throw DimensionError("decoder: stage " + std::to_string(i + 1) + " grid exceeds the stage-1 grid");
    }
    c.fused[i] = add(f.rgb.feature, f.depth.feature);
    c.to_stage1[i] = bilinear_plan(f.rgb.height, f.rgb.width, h1, w1);
    up.push_back(bilinear_resize(d.proj[i].forward(c.fused[i]), c.to_stage1[i]));
  }
  const Tensor<T> cat = concat<T>({std::cref(up[0]), std::cref(up[1]), std::cref(up[2]), std::cref(up[3])}, 1);
  const Tensor<T> logits = d.head.forward(cat, &c.head);
  c.to_input = bilinear_plan(h1, w1, out_h, out_w);
  c.embed_dim = d.proj[0].out_features();
  c.ran = true;
  return bilinear_resize(logits, c.to_input);
}

template <class T>
std::array<Tensor<T>, 4> decoder_backward(const Decoder<T>& d, const DecoderCache<T>& c, const Tensor<T>& grad_logits,
                                          Decoder<T>& grads) {
  if (!c.ran) throw StateError("decoder backward: missing forward cache");
  const Tensor<T> g_logits = bilinear_resize_backward(grad_logits, c.to_input);
  const Tensor<T> g_cat = d.head.backward(c.head, g_logits, grads.head);
  std::array<Tensor<T>, 4> out;
  const std::size_t e = c.embed_dim;
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor<T> g_up = slice(g_cat, 1, i * e, (i + 1) * e);
    out[i] = d.proj[i].backward(c.fused[i], bilinear_resize_backward(g_up, c.to_stage1[i]), grads.proj[i]);
  }
  return out;
}

#define DPX_INSTANTIATE(T)                                                                                      \
  template Tensor<T> bilinear_resize(const Tensor<T>&, const BilinearPlan&);                                    \
  template Tensor<T> bilinear_resize_backward(const Tensor<T>&, const BilinearPlan&);                           \
  template struct Decoder<T>;                                                                                   \
  template Tensor<T> decoder_forward(const Decoder<T>&, const std::array<enc::BiModalFeatures<T>, 4>&,          \
                                     std::size_t, std::size_t, DecoderCache<T>*);                               \
  template std::array<Tensor<T>, 4> decoder_backward(const Decoder<T>&, const DecoderCache<T>&, const Tensor<T>&, \
                                                     Decoder<T>&);

DPX_INSTANTIATE(float)
DPX_INSTANTIATE(double)
#undef DPX_INSTANTIATE

}  // namespace dpx::dec
