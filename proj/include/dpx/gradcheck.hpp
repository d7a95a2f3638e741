#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dpx/params.hpp"
#include "dpx/tensor.hpp"

namespace dpx::grad {

inline constexpr double kDefaultStep = 1e-6;
inline constexpr double kShallowTolerance = 1e-6;  // up to three stacked layers
inline constexpr double kDeepTolerance = 1e-5;
inline constexpr double kEpsilon = 1e-12;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
/// Throws DomainError when f(x) is not finite.
Tensor<double> finite_difference_grad(const std::function<double(const Tensor<double>&)>& f,
                                      const Tensor<double>& x, double h = kDefaultStep);

/// |a - f| / max(|a|, |f|, eps)
double relative_error(double analytic, double numeric, double eps = kEpsilon);

struct GroupResult {
  std::string name;
  std::size_t size = 0;
  double max_abs_error = 0;
  /// max |a - f| over the group divided by max(max |a|, max |f|, eps).
  double rel_error = 0;
  /// Largest per-element relative error among elements whose magnitude is at
  /// least 1e-3 of the group scale (informational).
  double max_element_rel_error = 0;
  double abs_floor = 0;
  double magnitude = 0;  // max |gradient| over both estimates
  bool passed = false;
};

struct GradCheckReport {
  std::string label;
  double step = kDefaultStep;
  double tolerance = kShallowTolerance;
  std::string precision = "double";
  std::size_t max_samples = 0;  // per tensor; 0 checks every element
  std::uint64_t sample_seed = 1;
  std::vector<GroupResult> groups;

  bool passed() const;
  /// Largest rel_error among groups resolvable at `tolerance`: magnitude * tolerance >= abs_floor.
  double worst_rel_error() const;
  /// One JSON object per group.
  std::string to_jsonl() const;
};

/// A group passes when rel_error <= tolerance, or when every difference is
/// below `abs_floor` (the round-off level of the difference quotient, used for
/// gradients that vanish identically).
GroupResult compare_group(std::string name, const Tensor<double>& analytic, const Tensor<double>& numeric,
                          double tolerance, double abs_floor = kEpsilon);

/// 64 * machine epsilon * max(|loss|, 1) / h
double roundoff_floor(double loss_value, double h);

/// Every index when max_samples == 0 or n <= max_samples, else a seeded subset.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t max_samples, std::uint64_t seed);
Tensor<double> gather(const Tensor<double>& t, const std::vector<std::size_t>& idx);
/// Central differences of `loss` at the listed elements of `x` (restored afterwards), as a 1-D tensor.
Tensor<double> numeric_grad_at(Tensor<double>& x, const std::vector<std::size_t>& idx,
                               const std::function<double()>& loss, double h = kDefaultStep);

/// Perturbs each element of `x` in place and evaluates `loss()`; restores `x`.
Tensor<double> numeric_grad_inplace(Tensor<double>& x, const std::function<double()>& loss, double h = kDefaultStep);

/// Compares analytic parameter gradients against central differences of `loss`.
/// `params` and `grads` must share structure.
template <class P>
void check_params(GradCheckReport& report, P& params, P& grads, const std::function<double()>& loss,
                  std::string_view prefix = "") {
  auto ps = flatten_params<double>(params);
  auto gs = flatten_params<double>(grads);
  const double floor = roundoff_floor(loss(), report.step);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto idx = sample_indices(ps[i].second->size(), report.max_samples, report.sample_seed + i);
    const Tensor<double> numeric = numeric_grad_at(*ps[i].second, idx, loss, report.step);
    report.groups.push_back(compare_group(std::string(prefix) + ps[i].first, gather(*gs[i].second, idx), numeric,
                                          report.tolerance, floor));
  }
}

/// Same for an input tensor.
void check_input(GradCheckReport& report, std::string name, Tensor<double>& x, const Tensor<double>& analytic,
                 const std::function<double()>& loss);

/// sum(out * weights): the scalar probe used to pull back a fixed cotangent.
double probe(const Tensor<double>& out, const Tensor<double>& weights);

}  // namespace dpx::grad
