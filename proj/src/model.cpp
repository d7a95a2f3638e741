#include "dpx/model.hpp"

#include <cmath>

#include "dpx/error.hpp"
#include "dpx/ops.hpp"

namespace dpx {

void ModelConfig::validate() const {
  encoder.validate();
  if (decoder_dim == 0) throw ConfigError("decoder_dim must be positive");
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
}

template <class T>
Model<T> Model<T>::init(const ModelConfig& cfg, Rng& rng, const attn::InitOptions& opts) {
  cfg.validate();
  Model m;
  m.config = cfg;
  Rng enc_rng = rng.split(11);
  Rng dec_rng = rng.split(12);
  m.encoder = enc::Encoder<T>::init(cfg.encoder, enc_rng, opts);
  std::array<std::size_t, 4> dims{};
  for (std::size_t i = 0; i < 4; ++i) dims[i] = cfg.encoder.stages[i].dim;
  m.decoder = dec::Decoder<T>::init(dims, cfg.decoder_dim, cfg.num_classes, dec_rng, opts.weight_std);
  return m;
}

template <class T>
Tensor<T> model_forward(const Model<T>& m, const Tensor<T>& rgb, const Tensor<T>& depth, ModelCache<T>* cache,
                        Rng* drop_rng) {
  const auto feats = enc::encoder_forward(m.encoder, rgb, depth, cache ? &cache->encoder : nullptr, drop_rng);
  return dec::decoder_forward(m.decoder, feats, m.config.encoder.height, m.config.encoder.width,
                              cache ? &cache->decoder : nullptr);
}

template <class T>
void model_backward(const Model<T>& m, const ModelCache<T>& cache, const Tensor<T>& grad_logits, Model<T>& grads) {
  const auto g = dec::decoder_backward(m.decoder, cache.decoder, grad_logits, grads.decoder);
  std::array<enc::PerModality<Tensor<T>>, 4> per_stage;
  for (std::size_t i = 0; i < 4; ++i) per_stage[i] = {g[i], g[i]};
  enc::encoder_backward(m.encoder, cache.encoder, per_stage, grads.encoder);
}

template <class T>
LossResult<T> cross_entropy(const Tensor<T>& logits, const Tensor<std::int32_t>& labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [pixels x classes]");
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " pixels");
  }
  if (n == 0) throw DomainError("cross_entropy: no pixels");
  LossResult<T> r{T(0), Tensor<T>({n, k})};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw DomainError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
    T mx = logits.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.at(i, j));
    T z = 0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(i, j) - mx);
    const T log_z = std::log(z) + mx;
    total += static_cast<double>(log_z - logits.at(i, static_cast<std::size_t>(y)));
    for (std::size_t j = 0; j < k; ++j) {
      const T p = std::exp(logits.at(i, j) - log_z);
      r.grad.at(i, j) = (p - (j == static_cast<std::size_t>(y) ? T(1) : T(0))) / static_cast<T>(n);
    }
  }
  r.loss = static_cast<T>(total / static_cast<double>(n));
  return r;
}

template <class T>
Tensor<std::int32_t> argmax_labels(const Tensor<T>& logits, std::size_t height, std::size_t width) {
  if (logits.rank() != 2 || logits.shape()[0] != height * width) {
    throw DimensionError("argmax_labels: logits " + shape_str(logits.shape()) + " do not match the grid");
  }
  const std::size_t k = logits.shape()[1];
  Tensor<std::int32_t> out({height, width});
  for (std::size_t i = 0; i < height * width; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out[i] = static_cast<std::int32_t>(best);
  }
  return out;
}

#define DPX_INSTANTIATE(T)                                                                                       \
  template struct Model<T>;                                                                                      \
  template Tensor<T> model_forward(const Model<T>&, const Tensor<T>&, const Tensor<T>&, ModelCache<T>*, Rng*);   \
  template void model_backward(const Model<T>&, const ModelCache<T>&, const Tensor<T>&, Model<T>&);              \
  template LossResult<T> cross_entropy(const Tensor<T>&, const Tensor<std::int32_t>&);                           \
  template Tensor<std::int32_t> argmax_labels(const Tensor<T>&, std::size_t, std::size_t);

DPX_INSTANTIATE(float)
DPX_INSTANTIATE(double)
#undef DPX_INSTANTIATE

}  // namespace dpx
