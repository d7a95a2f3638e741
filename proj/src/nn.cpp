#include "dpx/nn.hpp"

#include <cmath>

#include "dpx/error.hpp"
#include "dpx/flops.hpp"
#include "dpx/ops.hpp"

namespace dpx::nn {

template <class T>
Linear<T> Linear<T>::init(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = rng.truncated_normal_tensor<T>({in, out}, kInitStd);
  if (with_bias) l.bias = Tensor<T>({out});
  return l;
}

template <class T>
Linear<T> Linear<T>::zeros(std::size_t in, std::size_t out, bool with_bias) {
  Linear l;
  l.weight = Tensor<T>({in, out});
  if (with_bias) l.bias = Tensor<T>({out});
  return l;
}

template <class T>
Linear<T> Linear<T>::identity(std::size_t d) {
  Linear l;
  l.weight = Tensor<T>::identity(d);
  l.bias = Tensor<T>({d});
  return l;
}

template <class T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  if (weight.rank() != 2 || x.rank() == 0 || x.shape().back() != in_features()) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  Tensor<T> y = matmul(as_matrix(x), weight);
  if (has_bias()) {
    const std::size_t rows = y.shape()[0], out = out_features();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < out; ++j) y.at(i, j) += bias[j];
    flops::add(rows * out);
  }
  Shape shape = x.shape();
  shape.back() = out_features();
  return std::move(y).reshaped(std::move(shape));
}

template <class T>
Tensor<T> Linear<T>::backward(const Tensor<T>& x, const Tensor<T>& grad_out, Linear& grads) const {
  const Tensor<T> xm = as_matrix(x);
  const Tensor<T> gm = as_matrix(grad_out);
  if (gm.shape()[0] != xm.shape()[0] || gm.shape()[1] != out_features()) {
    throw DimensionError("linear backward: grad " + shape_str(grad_out.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  accumulate(grads.weight, matmul(transpose(xm), gm));
  if (has_bias()) accumulate(grads.bias, column_sum(gm));
  Tensor<T> dx = matmul(gm, transpose(weight));
  return std::move(dx).reshaped(x.shape());
}

template <class T>
LayerNorm<T> LayerNorm<T>::init(std::size_t d) {
  if (d == 0) throw DimensionError("layernorm: normalized dimension must be positive");
  LayerNorm ln;
  ln.gain = Tensor<T>::ones({d});
  ln.shift = Tensor<T>({d});
  return ln;
}

template <class T>
Tensor<T> LayerNorm<T>::forward(const Tensor<T>& x, Cache* cache) const {
  const std::size_t d = gain.size();
  if (d == 0) throw DimensionError("layernorm: normalized dimension must be positive");
  if (x.rank() == 0 || x.shape().back() != d) {
    throw DimensionError("layernorm: input " + shape_str(x.shape()) + " does not match width " +
                         std::to_string(d));
  }
  const std::size_t rows = x.size() / d;
  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(epsilon));
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const T n = (xr[j] - mean) * inv;
      xhat[r * d + j] = n;
      y[r * d + j] = gain[j] * n + shift[j];
    }
  }
  flops::add(rows * (7 * d + 5));
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class T>
Tensor<T> LayerNorm<T>::backward(const Cache& cache, const Tensor<T>& grad_out, LayerNorm& grads) const {
  if (cache.normalized.empty() && !grad_out.empty()) throw StateError("layernorm backward: missing cache");
  require_same_shape(cache.normalized, grad_out, "layernorm backward");
  const std::size_t d = gain.size();
  const std::size_t rows = grad_out.size() / d;
  Tensor<T> dx(grad_out.shape());
  std::vector<T> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    T mean_dxhat = 0, mean_dxhat_xhat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T g = grad_out[r * d + j];
      const T n = cache.normalized[r * d + j];
      grads.gain[j] += g * n;
      grads.shift[j] += g;
      dxhat[j] = g * gain[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * n;
    }
    mean_dxhat /= static_cast<T>(d);
    mean_dxhat_xhat /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) {
      dx[r * d + j] = cache.inv_std[r] * (dxhat[j] - mean_dxhat - cache.normalized[r * d + j] * mean_dxhat_xhat);
    }
  }
  return dx;
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T c = static_cast<T>(kGeluSqrt2OverPi);
  const T a = static_cast<T>(kGeluCubic);
  Tensor<T> y = map(x, [&](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v))); });
  flops::add(9 * x.size());
  return y;
}

template <class T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  require_same_shape(x, grad_out, "gelu backward");
  const T c = static_cast<T>(kGeluSqrt2OverPi);
  const T a = static_cast<T>(kGeluCubic);
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    const T th = std::tanh(c * (v + a * v * v * v));
    const T dinner = c * (T(1) + T(3) * a * v * v);
    g[i] = grad_out[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * dinner);
  }
  return g;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = map(x, [](T v) { return T(1) / (T(1) + std::exp(-v)); });
  flops::add(3 * x.size());
  return y;
}

std::string_view activation_name(FinalActivation a) {
  switch (a) {
    case FinalActivation::kNone:
      return "none";
    case FinalActivation::kSoftmax:
      return "softmax";
    case FinalActivation::kSigmoid:
      return "sigmoid";
  }
  return "none";
}

FinalActivation parse_activation(std::string_view name) {
  if (name == "none") return FinalActivation::kNone;
  if (name == "softmax") return FinalActivation::kSoftmax;
  if (name == "sigmoid") return FinalActivation::kSigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected none, softmax, sigmoid)");
}

template <class T>
Mlp2<T> Mlp2<T>::init(std::size_t in, std::size_t hidden, std::size_t out, FinalActivation act, Rng& rng) {
  Mlp2 m;
  m.first = Linear<T>::init(in, hidden, rng);
  m.second = Linear<T>::init(hidden, out, rng);
  m.final_activation = act;
  return m;
}

template <class T>
Tensor<T> Mlp2<T>::forward(const Tensor<T>& x, Cache* cache) const {
  if (first.out_features() != second.in_features()) {
    throw DimensionError("mlp2: hidden widths do not chain");
  }
  Tensor<T> pre = first.forward(x);
  Tensor<T> hidden = gelu(pre);
  Tensor<T> z = second.forward(hidden);
  Tensor<T> out;
  switch (final_activation) {
    case FinalActivation::kNone:
      out = std::move(z);
      break;
    case FinalActivation::kSoftmax:
      out = softmax(z, z.rank() - 1);
      break;
    case FinalActivation::kSigmoid:
      out = sigmoid(z);
      break;
  }
  if (cache) {
    cache->input = x;
    cache->pre_hidden = std::move(pre);
    cache->hidden = std::move(hidden);
    cache->output = out;
  }
  return out;
}

template <class T>
Tensor<T> Mlp2<T>::backward(const Cache& cache, const Tensor<T>& grad_out, Mlp2& grads) const {
  if (cache.output.empty() && !grad_out.empty()) throw StateError("mlp2 backward: missing cache");
  require_same_shape(cache.output, grad_out, "mlp2 backward");
  Tensor<T> dz;
  switch (final_activation) {
    case FinalActivation::kNone:
      dz = grad_out;
      break;
    case FinalActivation::kSoftmax:
      dz = softmax_backward_last(cache.output, grad_out);
      break;
    case FinalActivation::kSigmoid:
      dz = Tensor<T>(grad_out.shape());
      for (std::size_t i = 0; i < dz.size(); ++i) {
        const T s = cache.output[i];
        dz[i] = grad_out[i] * s * (T(1) - s);
      }
      break;
  }
  Tensor<T> dh = second.backward(cache.hidden, dz, grads.second);
  Tensor<T> dpre = gelu_backward(cache.pre_hidden, dh);
  return first.backward(cache.input, dpre, grads.first);
}

double DropPathConfig::sample_scale(Rng& rng) const {
  if (mode == DropPathMode::kEval || rate <= 0.0) return 1.0;
  if (rate >= 1.0) throw ConfigError("drop path rate must be in [0, 1)");
  return rng.uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
}

template <class T>
Tensor<T> drop_path(const Tensor<T>& branch, double scale_factor) {
  if (scale_factor == 1.0) return branch;
  return map(branch, [&](T v) { return static_cast<T>(scale_factor) * v; });
}

template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct Mlp2<float>;
template struct Mlp2<double>;
template Tensor<float> gelu(const Tensor<float>&);
template Tensor<double> gelu(const Tensor<double>&);
template Tensor<float> gelu_backward(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> gelu_backward(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> sigmoid(const Tensor<float>&);
template Tensor<double> sigmoid(const Tensor<double>&);
template Tensor<float> drop_path(const Tensor<float>&, double);
template Tensor<double> drop_path(const Tensor<double>&, double);

}  // namespace dpx::nn
