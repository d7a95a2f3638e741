#pragma once

#include <cstddef>
#include <cstdint>

#include "dpx/decoder.hpp"
#include "dpx/encoder.hpp"
#include "dpx/tensor.hpp"

namespace dpx {

struct ModelConfig {
  enc::EncoderConfig encoder = enc::EncoderConfig::preset("toy");
  std::size_t decoder_dim = 64;
  std::size_t num_classes = 4;

  bool operator==(const ModelConfig&) const = default;
  void validate() const;
};

/// Dual-branch encoder plus multi-scale decoder.
template <class T>
struct Model {
  ModelConfig config;
  enc::Encoder<T> encoder;
  dec::Decoder<T> decoder;

  static Model init(const ModelConfig& cfg, Rng& rng, const attn::InitOptions& opts = {});

  template <class F>
  void visit(F&& f) {
    encoder.visit(with_prefix("encoder.", f));
    decoder.visit(with_prefix("decoder.", f));
  }
};

template <class T>
struct ModelCache {
  enc::EncoderCache<T> encoder;
  dec::DecoderCache<T> decoder;
};

/// Logits [H*W x classes].
template <class T>
Tensor<T> model_forward(const Model<T>& m, const Tensor<T>& rgb, const Tensor<T>& depth,
                        ModelCache<T>* cache = nullptr, Rng* drop_rng = nullptr);

template <class T>
void model_backward(const Model<T>& m, const ModelCache<T>& cache, const Tensor<T>& grad_logits, Model<T>& grads);

template <class T>
struct LossResult {
  T loss;
  Tensor<T> grad;  // d loss / d logits
};

/// Mean per-pixel softmax cross-entropy against integer labels [H*W] or [H x W].
template <class T>
LossResult<T> cross_entropy(const Tensor<T>& logits, const Tensor<std::int32_t>& labels);

/// Per-pixel argmax as a label tensor of shape [height x width].
template <class T>
Tensor<std::int32_t> argmax_labels(const Tensor<T>& logits, std::size_t height, std::size_t width);

}  // namespace dpx
