#include "dpx/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "dpx/error.hpp"
#include "dpx/ops.hpp"
#include "dpx/rng.hpp"

namespace dpx::grad {

Tensor<double> finite_difference_grad(const std::function<double(const Tensor<double>&)>& f, const Tensor<double>& x,
                                      double h) {
  if (!std::isfinite(f(x))) throw DomainError("finite_difference_grad: f(x) is not finite");
  Tensor<double> probe_x = x;
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe_x[i];
    probe_x[i] = orig + h;
    const double fp = f(probe_x);
    probe_x[i] = orig - h;
    const double fm = f(probe_x);
    probe_x[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

double relative_error(double analytic, double numeric, double eps) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), eps});
}

double roundoff_floor(double loss_value, double h) {
  return 64 * std::numeric_limits<double>::epsilon() * std::max(std::abs(loss_value), 1.0) / h;
}

GroupResult compare_group(std::string name, const Tensor<double>& analytic, const Tensor<double>& numeric,
                          double tolerance, double abs_floor) {
  require_same_shape(analytic, numeric, "gradcheck");
  GroupResult r;
  r.name = std::move(name);
  r.size = analytic.size();
  const double scale = std::max({max_abs(analytic), max_abs(numeric), kEpsilon});
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::abs(analytic[i] - numeric[i]);
    r.max_abs_error = std::max(r.max_abs_error, diff);
    if (std::max(std::abs(analytic[i]), std::abs(numeric[i])) >= 1e-3 * scale) {
      r.max_element_rel_error = std::max(r.max_element_rel_error, relative_error(analytic[i], numeric[i]));
    }
  }
  r.rel_error = r.max_abs_error / scale;
  r.abs_floor = abs_floor;
  r.magnitude = std::max(max_abs(analytic), max_abs(numeric));
  r.passed = std::isfinite(r.rel_error) && (r.rel_error <= tolerance || r.max_abs_error <= abs_floor);
  return r;
}

Tensor<double> numeric_grad_inplace(Tensor<double>& x, const std::function<double()>& loss, double h) {
  if (!std::isfinite(loss())) throw DomainError("gradcheck: loss is not finite");
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = loss();
    x[i] = orig - h;
    const double fm = loss();
    x[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t max_samples, std::uint64_t seed) {
  std::vector<std::size_t> idx;
  if (max_samples == 0 || n <= max_samples) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  Rng rng(seed);
  std::vector<char> taken(n, 0);
  while (idx.size() < max_samples) {
    const auto i = static_cast<std::size_t>(rng.below(n));
    if (taken[i]) continue;
    taken[i] = 1;
    idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor<double> gather(const Tensor<double>& t, const std::vector<std::size_t>& idx) {
  Tensor<double> g({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) g[i] = t[idx[i]];
  return g;
}

Tensor<double> numeric_grad_at(Tensor<double>& x, const std::vector<std::size_t>& idx,
                               const std::function<double()>& loss, double h) {
  Tensor<double> g({idx.size()});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = loss();
    x[i] = orig - h;
    const double fm = loss();
    x[i] = orig;
    g[k] = (fp - fm) / (2 * h);
  }
  return g;
}

void check_input(GradCheckReport& report, std::string name, Tensor<double>& x, const Tensor<double>& analytic,
                 const std::function<double()>& loss) {
  const double l0 = loss();
  if (!std::isfinite(l0)) throw DomainError("gradcheck: loss is not finite");
  const auto idx = sample_indices(x.size(), report.max_samples, report.sample_seed + 7919);
  const Tensor<double> numeric = numeric_grad_at(x, idx, loss, report.step);
  report.groups.push_back(compare_group(std::move(name), gather(analytic, idx), numeric, report.tolerance,
                                        roundoff_floor(l0, report.step)));
}

double probe(const Tensor<double>& out, const Tensor<double>& weights) { return dot(out, weights); }

bool GradCheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(), [](const GroupResult& g) { return g.passed; });
}

double GradCheckReport::worst_rel_error() const {
  double w = 0;
  for (const auto& g : groups) {
    if (g.magnitude * tolerance >= g.abs_floor) w = std::max(w, g.rel_error);
  }
  return w;
}

std::string GradCheckReport::to_jsonl() const {
  std::string out;
  for (const auto& g : groups) {
    out += nlohmann::json{{"schema", "dpx.gradcheck.v1"},
                          {"case", label},
                          {"group", g.name},
                          {"size", g.size},
                          {"step", step},
                          {"precision", precision},
                          {"tolerance", tolerance},
                          {"max_abs_error", g.max_abs_error},
                          {"rel_error", g.rel_error},
                          {"abs_floor", g.abs_floor},
                          {"magnitude", g.magnitude},
                          {"passed", g.passed}}
               .dump();
    out += '\n';
  }
  return out;
}

}  // namespace dpx::grad
