#pragma once

#include <cstddef>
#include <string_view>

#include "dpx/params.hpp"
#include "dpx/rng.hpp"
#include "dpx/tensor.hpp"

namespace dpx::nn {

inline constexpr double kInitStd = 0.02;

/// y = x W + b over the last axis. W is [in x out].
template <class T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;  // empty when the layer has no bias

  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  static Linear zeros(std::size_t in, std::size_t out, bool with_bias = true);
  static Linear identity(std::size_t d);

  std::size_t in_features() const { return weight.rank() == 2 ? weight.shape()[0] : 0; }
  std::size_t out_features() const { return weight.rank() == 2 ? weight.shape()[1] : 0; }
  bool has_bias() const { return !bias.empty(); }

  /// Accepts any rank; leading axes are batch axes. FLOPs: 2 rows in out + rows out (bias).
  Tensor<T> forward(const Tensor<T>& x) const;
  /// Accumulates dW and db into `grads`, returns dx.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& grad_out, Linear& grads) const;

  template <class F>
  void visit(F&& f) {
    f("weight", weight);
    if (has_bias()) f("bias", bias);
  }
};

template <class T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> shift;
  double epsilon = 1e-5;

  struct Cache {
    Tensor<T> normalized;
    std::vector<T> inv_std;
  };

  static LayerNorm init(std::size_t d);

  /// Normalizes the last axis. FLOPs per row of width d: 7d + 5.
  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const;
  Tensor<T> backward(const Cache& cache, const Tensor<T>& grad_out, LayerNorm& grads) const;

  template <class F>
  void visit(F&& f) {
    f("gain", gain);
    f("shift", shift);
  }
};

// GELU, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))). FLOPs: 9 per element.
inline constexpr double kGeluSqrt2OverPi = 0.7978845608028654;
inline constexpr double kGeluCubic = 0.044715;

template <class T>
Tensor<T> gelu(const Tensor<T>& x);
template <class T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

/// Logistic function. FLOPs: 3 per element (exp, add, divide).
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);

enum class FinalActivation { kNone, kSoftmax, kSigmoid };

std::string_view activation_name(FinalActivation a);
FinalActivation parse_activation(std::string_view name);

/// second(gelu(first(x))) followed by an optional softmax / sigmoid over the last axis.
template <class T>
struct Mlp2 {
  Linear<T> first;
  Linear<T> second;
  FinalActivation final_activation = FinalActivation::kNone;

  struct Cache {
    Tensor<T> input;
    Tensor<T> pre_hidden;
    Tensor<T> hidden;
    Tensor<T> output;
  };

  static Mlp2 init(std::size_t in, std::size_t hidden, std::size_t out, FinalActivation act, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const;
  Tensor<T> backward(const Cache& cache, const Tensor<T>& grad_out, Mlp2& grads) const;

  template <class F>
  void visit(F&& f) {
    first.visit(with_prefix("first.", f));
    second.visit(with_prefix("second.", f));
  }
};

enum class DropPathMode { kTrain, kEval };

/// Stochastic depth on a residual branch. With a single sample per step the
/// whole branch is either dropped or rescaled by 1 / (1 - rate).
struct DropPathConfig {
  double rate = 0.0;
  DropPathMode mode = DropPathMode::kEval;

  bool operator==(const DropPathConfig&) const = default;

  /// Multiplier for one branch evaluation; exactly 1 in eval mode.
  double sample_scale(Rng& rng) const;
};

template <class T>
Tensor<T> drop_path(const Tensor<T>& branch, double scale_factor);

}  // namespace dpx::nn
