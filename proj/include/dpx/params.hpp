#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dpx/tensor.hpp"

namespace dpx {

// Learnable state is a tree of structs exposing
//   template <class F> void visit(F&& f)
// which calls f(name, Tensor<T>&) for every parameter tensor. A struct of the
// same type holds gradients, so optimizers and finite-difference checks can walk
// parameters and gradients in lockstep.

/// Wraps a visitor so every name it receives carries `prefix`.
template <class F>
auto with_prefix(std::string prefix, F& f) {
  return [prefix = std::move(prefix), &f](std::string_view name, auto& t) { f(prefix + std::string(name), t); };
}

template <class T, class P>
std::vector<std::pair<std::string, Tensor<T>*>> flatten_params(P& p) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  p.visit([&](std::string_view name, Tensor<T>& t) { out.emplace_back(std::string(name), &t); });
  return out;
}

template <class T, class P>
std::size_t count_params(const P& p) {
  std::size_t n = 0;
  const_cast<P&>(p).visit([&](std::string_view, Tensor<T>& t) { n += t.size(); });
  return n;
}

/// Same structure as `p` with every tensor zeroed.
template <class T, class P>
P zeros_like_params(const P& p) {
  P z = p;
  z.visit([](std::string_view, Tensor<T>& t) {
    for (auto& v : t.data()) v = T(0);
  });
  return z;
}

/// param -= lr * grad for every tensor pair.
template <class T, class P>
void sgd_step(P& params, const P& grads, T lr) {
  auto ps = flatten_params<T>(params);
  auto gs = flatten_params<T>(const_cast<P&>(grads));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& w = *ps[i].second;
    const auto& g = *gs[i].second;
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
  }
}

}  // namespace dpx
