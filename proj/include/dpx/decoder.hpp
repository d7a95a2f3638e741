#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "dpx/encoder.hpp"
#include "dpx/nn.hpp"
#include "dpx/params.hpp"
#include "dpx/tensor.hpp"

namespace dpx::dec {

/// Bilinear resampling plan, align_corners = false. Source coordinate of
/// output pixel o is (o + 0.5) * in / out - 0.5, clamped to [0, in - 1].
struct BilinearPlan {
  std::size_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::vector<std::array<std::size_t, 4>> taps;  // per output pixel
  std::vector<std::array<double, 4>> weights;

  bool identity() const { return in_h == out_h && in_w == out_w; }
};

BilinearPlan bilinear_plan(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w);

/// x: [in_h*in_w x c] -> [out_h*out_w x c]. FLOPs: 7 per output element and
/// channel (4 multiplies, 3 adds); the identity resample is free.
template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, const BilinearPlan& plan);
template <class T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_out, const BilinearPlan& plan);

/// Multi-scale head: per-stage projection to a common width, resampling to the
/// stage-1 grid, concatenation, two linear layers with GELU in between, and a
/// final resampling to the input grid.
template <class T>
struct Decoder {
  std::array<nn::Linear<T>, 4> proj;
  nn::Mlp2<T> head;  // [4E -> E] -> GELU -> [E -> classes]

  static Decoder init(const std::array<std::size_t, 4>& stage_dims, std::size_t embed_dim, std::size_t num_classes,
                      Rng& rng, double weight_std = nn::kInitStd);

  std::size_t num_classes() const { return head.second.out_features(); }

  template <class F>
  void visit(F&& f) {
    for (std::size_t i = 0; i < proj.size(); ++i) proj[i].visit(with_prefix("proj" + std::to_string(i + 1) + ".", f));
    head.visit(with_prefix("head.", f));
  }
};

template <class T>
struct DecoderCache {
  std::array<Tensor<T>, 4> fused;
  std::array<BilinearPlan, 4> to_stage1;
  BilinearPlan to_input;
  typename nn::Mlp2<T>::Cache head;
  std::size_t embed_dim = 0;
  bool ran = false;
};

/// Returns per-pixel logits [out_h*out_w x classes]. Modalities are fused by summation.
template <class T>
Tensor<T> decoder_forward(const Decoder<T>& d, const std::array<enc::BiModalFeatures<T>, 4>& features,
                          std::size_t out_h, std::size_t out_w, DecoderCache<T>* cache = nullptr);

/// Gradients for the four stage features (the same tensor applies to both modalities).
template <class T>
std::array<Tensor<T>, 4> decoder_backward(const Decoder<T>& d, const DecoderCache<T>& cache,
                                          const Tensor<T>& grad_logits, Decoder<T>& grads);

}  // namespace dpx::dec
