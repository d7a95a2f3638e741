#include "dpx/property_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "dpx/attention.hpp"
#include "dpx/config.hpp"
#include "dpx/cost_model.hpp"
#include "dpx/decoder.hpp"
#include "dpx/dsim.hpp"
#include "dpx/encoder.hpp"
#include "dpx/flops.hpp"
#include "dpx/gradcheck.hpp"
#include "dpx/io.hpp"
#include "dpx/metrics.hpp"
#include "dpx/model.hpp"
#include "dpx/nn.hpp"
#include "dpx/ops.hpp"
#include "dpx/scene.hpp"
#include "dpx/simd/kernels.hpp"

namespace dpx::props {

dsim::DsimOptions Context::dsim_options(std::size_t noise_tokens) const {
  dsim::DsimOptions o;
  o.noise_tokens = noise_tokens;
  o.discriminator = discriminator;
  o.ablation = ablation;
  return o;
}

std::string_view status_name(Status s) {
  switch (s) {
    case Status::kPass: return "pass";
    case Status::kFail: return "fail";
    case Status::kSkip: return "skip";
  }
  return "fail";
}

namespace {

using attn::AttentionConfig;
using attn::TokenGrid;
using attn::Variant;

Outcome expect(bool ok, std::string detail, double metric = 0) {
  return {ok ? Status::kPass : Status::kFail, std::move(detail), metric};
}
Outcome skip(std::string why) { return {Status::kSkip, std::move(why), 0}; }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

std::uint64_t name_key(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

template <class T>
Tensor<T> normal(Rng& rng, Shape s, double std = 1.0) {
  return rng.normal_tensor<T>(std::move(s), std);
}

template <class T>
TokenGrid<T> grid(Rng& rng, std::size_t h, std::size_t w, std::size_t d) {
  return {h, w, normal<T>(rng, {h * w, d})};
}

template <class T, class P>
void randomize(P& p, Rng& rng, double std) {
  p.visit([&](std::string_view, Tensor<T>& t) {
    for (auto& v : t.data()) v = static_cast<T>(std * rng.normal());
  });
}

// Negates the first gradient tensor with a non-zero entry: the mutation used
// by every finite-difference property.
template <class P>
void corrupt_grads(P& g) {
  bool done = false;
  g.visit([&](std::string_view, Tensor<double>& t) {
    if (done || max_abs(t) == 0.0) return;
    for (auto& v : t.data()) v = -v;
    done = true;
  });
}

struct FdTally {
  std::size_t instances = 0;
  double worst = 0;
  std::vector<std::string> failures;

  void add(const grad::GradCheckReport& r) {
    ++instances;
    worst = std::max(worst, r.worst_rel_error());
    for (const auto& g : r.groups) {
      if (!g.passed && failures.size() < 4) failures.push_back(r.label + ":" + g.name + " rel=" + fmt(g.rel_error) + " abs=" + fmt(g.max_abs_error) + " floor=" + fmt(g.abs_floor));
    }
  }
  Outcome outcome() const {
    std::string d = std::to_string(instances) + " instances, worst resolvable rel " + fmt(worst);
    for (const auto& f : failures) d += "; " + f;
    return expect(failures.empty(), d, worst);
  }
};

std::vector<Variant> cross_variants() {
  return {Variant::kFull, Variant::kShiftedWindow, Variant::kLocal, Variant::kPixelwise};
}

// ---------------------------------------------------------------- tensor

Outcome matmul_oracle(Context& c) {
  double worst_d = 0, worst_f = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + c.rng.below(16), k = 1 + c.rng.below(16), n = 1 + c.rng.below(16);
    const auto a = normal<double>(c.rng, {m, k}), b = normal<double>(c.rng, {k, n});
    const auto p = matmul(a, b);
    const auto pf = matmul(a.cast<float>(), b.cast<float>());
    const std::size_t kk = c.mutated ? k - 1 : k;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t l = 0; l < kk; ++l) s += a.at(i, l) * b.at(l, j);
        worst_d = std::max(worst_d, std::abs(p.at(i, j) - s));
        worst_f = std::max(worst_f, std::abs(pf.at(i, j) - s) / std::max(1.0, std::abs(s)));
      }
    }
  }
  return expect(worst_d <= 1e-12 && worst_f <= 1e-5, "double " + fmt(worst_d) + ", single " + fmt(worst_f), worst_d);
}

template <class T>
Tensor<T> softmax_or_unnormalized(const Tensor<T>& x, std::size_t axis, bool mutated) {
  if (!mutated) return softmax(x, axis);
  const T mx = *std::max_element(x.data().begin(), x.data().end());
  return map(x, [mx](T v) { return static_cast<T>(std::exp(v - mx)); });
}

Outcome softmax_normalization(Context& c) {
  double worst_d = 0, worst_f = 0;
  bool in_range = true;
  for (int t = 0; t < 1000; ++t) {
    Shape s(1 + c.rng.below(3));
    for (auto& e : s) e = 1 + c.rng.below(6);
    const std::size_t axis = c.rng.below(s.size());
    const auto x = normal<double>(c.rng, s, 3.0);
    const auto yd = softmax_or_unnormalized(x, axis, c.mutated);
    const auto yf = softmax_or_unnormalized(x.cast<float>(), axis, c.mutated);
    const std::size_t inner = detail::inner_count(s, axis), outer = detail::outer_count(s, axis);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        double sd = 0, sf = 0;
        for (std::size_t j = 0; j < s[axis]; ++j) {
          const std::size_t idx = (o * s[axis] + j) * inner + i;
          sd += yd[idx];
          sf += yf[idx];
          in_range = in_range && yd[idx] > 0.0 && yd[idx] <= 1.0;
        }
        worst_d = std::max(worst_d, std::abs(sd - 1.0));
        worst_f = std::max(worst_f, std::abs(sf - 1.0));
      }
    }
  }
  return expect(in_range && worst_d <= 1e-12 && worst_f <= 1e-6,
                "max |sum - 1|: double " + fmt(worst_d) + ", single " + fmt(worst_f), worst_d);
}

Outcome softmax_shift_invariance(Context& c) {
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t rows = 1 + c.rng.below(5), cols = 2 + c.rng.below(6);
    const auto x = normal<double>(c.rng, {rows, cols});
    const double shift = c.rng.uniform(-10, 10);
    Tensor<double> xs = map(x, [shift](double v) { return v + shift; });
    if (c.mutated) xs[0] += 1.0;
    worst = std::max(worst, max_abs_diff(softmax(x, 1), softmax(xs, 1)));
  }
  return expect(worst <= 1e-12, "max diff " + fmt(worst), worst);
}

Outcome determinism(Context& c) {
  const auto a = normal<double>(c.rng, {6, 5}), b = normal<double>(c.rng, {5, 7});
  auto ln = nn::LayerNorm<double>::init(7);
  auto pipeline = [&](const Tensor<double>& x) { return nn::gelu(ln.forward(softmax(matmul(x, b), 1))); };
  const auto first = pipeline(a);
  Tensor<double> a2 = a;
  if (c.mutated) a2[3] = std::nextafter(a2[3], 1e9);
  const auto second = pipeline(a2);
  return expect(first == second, first == second ? "bit-identical" : "outputs differ");
}

Outcome concat_slice_roundtrip(Context& c) {
  bool ok = true;
  for (int t = 0; t < 50; ++t) {
    const std::size_t r = 1 + c.rng.below(4), wa = 1 + c.rng.below(5), wb = 1 + c.rng.below(5);
    const auto a = normal<double>(c.rng, {r, wa}), b = normal<double>(c.rng, {r, wb});
    const auto cat = concat(a, b, 1);
    const std::size_t off = c.mutated ? 1 : 0;
    ok = ok && cat.shape() == Shape{r, wa + wb};
    ok = ok && slice(cat, 1, off, wa + off) == a && slice(cat, 1, wa, wa + wb) == b;
    const auto rows = concat(a, normal<double>(c.rng, {2, wa}), 0);
    ok = ok && slice(rows, 0, 0, r) == a;
    ok = ok && max_abs(sub(a, a)) == 0.0;
  }
  return expect(ok, ok ? "exact round trips" : "round trip mismatch");
}

Outcome dptf_roundtrip(Context& c) {
  bool ok = true;
  std::string why;
  auto check = [&](auto tensor, io::Precision prec) {
    using T = typename decltype(tensor)::value_type;
    auto bytes = io::encode(tensor);
    ok = ok && bytes.size() >= 7 && std::memcmp(bytes.data(), "DPTF", 4) == 0 && bytes[4] == io::kFormatVersion;
    ok = ok && bytes[5] == static_cast<std::uint8_t>(prec) && bytes[6] == tensor.rank();
    for (std::size_t i = 0; ok && i < tensor.rank(); ++i) {
      std::uint64_t e = 0;
      for (int b = 0; b < 8; ++b) e |= static_cast<std::uint64_t>(bytes[7 + 8 * i + b]) << (8 * b);
      ok = e == tensor.shape()[i];
    }
    ok = ok && bytes.size() == 7 + 8 * tensor.rank() + sizeof(T) * tensor.size();
    if (c.mutated && tensor.size() > 0) bytes.back() ^= 0x40;
    if (!(io::decode<T>(bytes) == tensor)) {
      ok = false;
      why = "decode mismatch";
    }
  };
  for (int t = 0; t < 20; ++t) {
    Shape s(1 + c.rng.below(3));
    for (auto& e : s) e = c.rng.below(5) + (t % 4 == 0 ? 0 : 1);
    check(normal<float>(c.rng, s), io::Precision::kSingle);
    check(normal<double>(c.rng, s), io::Precision::kDouble);
    Tensor<std::int32_t> lab(s);
    for (auto& v : lab.data()) v = static_cast<std::int32_t>(c.rng.below(1000)) - 500;
    check(lab, io::Precision::kInt32);
  }
  return expect(ok, ok ? "60 tensors round-trip" : (why.empty() ? "header layout mismatch" : why));
}

template <class T>
bool kernels_match(const simd::KernelTable<T>& ref, const simd::KernelTable<T>& alt, Rng& rng, bool mutated) {
  auto same = [](const std::vector<T>& x, const std::vector<T>& y) {
    return x.size() == y.size() && (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(T)) == 0);
  };
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = rng.below(40);
    std::vector<T> a(n), b(n), o1(n), o2(n);
    for (auto& v : a) v = static_cast<T>(rng.normal());
    for (auto& v : b) v = static_cast<T>(rng.normal());
    const T alpha = static_cast<T>(rng.normal());
    ref.add(a.data(), b.data(), o1.data(), n);
    alt.add(a.data(), b.data(), o2.data(), n);
    if (mutated && n > 0) o2[0] += T(1);
    if (!same(o1, o2)) return false;
    ref.sub(a.data(), b.data(), o1.data(), n);
    alt.sub(a.data(), b.data(), o2.data(), n);
    if (!same(o1, o2)) return false;
    ref.mul(a.data(), b.data(), o1.data(), n);
    alt.mul(a.data(), b.data(), o2.data(), n);
    if (!same(o1, o2)) return false;
    ref.scale(alpha, a.data(), o1.data(), n);
    alt.scale(alpha, a.data(), o2.data(), n);
    if (!same(o1, o2)) return false;
    o1 = b;
    o2 = b;
    ref.axpy(alpha, a.data(), o1.data(), n);
    alt.axpy(alpha, a.data(), o2.data(), n);
    if (!same(o1, o2)) return false;
    const std::size_t m = 1 + rng.below(13), k = 1 + rng.below(13), p = 1 + rng.below(13);
    std::vector<T> x(m * k), y(k * p), c1(m * p), c2(m * p);
    for (auto& v : x) v = static_cast<T>(rng.normal());
    for (auto& v : y) v = static_cast<T>(rng.normal());
    ref.matmul(x.data(), y.data(), c1.data(), m, k, p);
    alt.matmul(x.data(), y.data(), c2.data(), m, k, p);
    if (!same(c1, c2)) return false;
  }
  return true;
}

Outcome simd_equivalence(Context& c) {
  std::string names;
  bool ok = true;
  for (auto isa : simd::available_isas()) {
    names += std::string(names.empty() ? "" : ",") + std::string(simd::isa_name(isa));
    ok = ok && kernels_match(simd::kernels_for<float>(simd::Isa::kScalar), simd::kernels_for<float>(isa), c.rng,
                             c.mutated);
    ok = ok && kernels_match(simd::kernels_for<double>(simd::Isa::kScalar), simd::kernels_for<double>(isa), c.rng,
                             c.mutated);
  }
  return expect(ok, "bitwise against scalar: " + names);
}

// ---------------------------------------------------------------- nn

Outcome nn_backward_fd(Context& c) {
  FdTally tally;
  for (int t = 0; t < 50; ++t) {
    grad::GradCheckReport rep;
    rep.tolerance = grad::kShallowTolerance;
    const std::size_t rows = 1 + c.rng.below(5), din = 1 + c.rng.below(8), dout = 1 + c.rng.below(8);
    Tensor<double> x = normal<double>(c.rng, {rows, din});
    const int kind = t % 5;
    if (kind <= 1) {
      rep.label = kind == 0 ? "linear" : "linear_nobias";
      auto l = nn::Linear<double>::zeros(din, dout, kind == 0);
      randomize<double>(l, c.rng, 0.7);
      const Tensor<double> r = normal<double>(c.rng, {rows, dout});
      auto g = zeros_like_params<double>(l);
      Tensor<double> dx = l.backward(x, r, g);
      if (c.mutated) corrupt_grads(g);
      auto loss = [&] { return grad::probe(l.forward(x), r); };
      grad::check_params(rep, l, g, loss);
      grad::check_input(rep, "x", x, dx, loss);
    } else if (kind == 2) {
      rep.label = "layernorm";
      const std::size_t d = 2 + c.rng.below(7);
      x = normal<double>(c.rng, {rows, d});
      auto ln = nn::LayerNorm<double>::init(d);
      randomize<double>(ln, c.rng, 0.7);
      const Tensor<double> r = normal<double>(c.rng, {rows, d});
      typename nn::LayerNorm<double>::Cache cache;
      ln.forward(x, &cache);
      auto g = zeros_like_params<double>(ln);
      Tensor<double> dx = ln.backward(cache, r, g);
      if (c.mutated) corrupt_grads(g);
      auto loss = [&] { return grad::probe(ln.forward(x), r); };
      grad::check_params(rep, ln, g, loss);
      grad::check_input(rep, "x", x, dx, loss);
    } else {
      const auto act = kind == 3 ? nn::FinalActivation::kSoftmax
                                 : (t % 2 ? nn::FinalActivation::kSigmoid : nn::FinalActivation::kNone);
      rep.label = "mlp2_" + std::string(nn::activation_name(act));
      nn::Mlp2<double> m;
      const std::size_t hid = 1 + c.rng.below(8);
      m.first = nn::Linear<double>::zeros(din, hid);
      m.second = nn::Linear<double>::zeros(hid, dout);
      m.final_activation = act;
      randomize<double>(m, c.rng, 0.7);
      const Tensor<double> r = normal<double>(c.rng, {rows, dout});
      typename nn::Mlp2<double>::Cache cache;
      m.forward(x, &cache);
      auto g = zeros_like_params<double>(m);
      Tensor<double> dx = m.backward(cache, r, g);
      if (c.mutated) corrupt_grads(g);
      auto loss = [&] { return grad::probe(m.forward(x), r); };
      grad::check_params(rep, m, g, loss);
      grad::check_input(rep, "x", x, dx, loss);
    }
    tally.add(rep);
  }
  return tally.outcome();
}

Outcome layernorm_statistics(Context& c) {
  double worst_mean = 0, worst_var = 0, worst_shift = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = 4 + c.rng.below(13);
    Tensor<double> x;
    double var_in = 0;
    do {  // rows need a variance well above epsilon for the unit-variance bound
      x = normal<double>(c.rng, {1, d}, c.rng.uniform(1.0, 5.0));
      const double mu = sum(x) / static_cast<double>(d);
      var_in = 0;
      for (auto v : x.data()) var_in += (v - mu) * (v - mu);
      var_in /= static_cast<double>(d);
    } while (var_in < 1.0);
    const auto ln = nn::LayerNorm<double>::init(d);
    const Tensor<double> y = c.mutated ? x : ln.forward(x);
    const double mu = sum(y) / static_cast<double>(d);
    double var = 0;
    for (auto v : y.data()) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    worst_mean = std::max(worst_mean, std::abs(mu));
    worst_var = std::max(worst_var, std::abs(var - 1.0));
    const double shift = c.rng.uniform(-10, 10);
    worst_shift = std::max(worst_shift, max_abs_diff(ln.forward(map(x, [shift](double v) { return v + shift; })),
                                                     ln.forward(x)));
  }
  return expect(worst_mean < 1e-6 && worst_var < 1e-4 && worst_shift < 1e-9,
                "mean " + fmt(worst_mean) + ", var-1 " + fmt(worst_var) + ", shift " + fmt(worst_shift), worst_var);
}

Outcome droppath_eval_identity(Context& c) {
  bool ok = true;
  for (int t = 0; t < 100; ++t) {
    nn::DropPathConfig dp{c.rng.uniform(0.0, 0.99), c.mutated ? nn::DropPathMode::kTrain : nn::DropPathMode::kEval};
    if (c.mutated) dp.rate = 0.5;
    const auto x = normal<double>(c.rng, {1 + c.rng.below(4), 1 + c.rng.below(4)});
    const double s = dp.sample_scale(c.rng);
    ok = ok && s == 1.0 && nn::drop_path(x, s) == x;
  }
  return expect(ok, ok ? "identity in eval mode" : "eval mode altered a branch");
}

Outcome mlp2_final_activation(Context& c) {
  double worst_sum = 0;
  bool sigmoid_range = true;
  for (int t = 0; t < 100; ++t) {
    const std::size_t din = 1 + c.rng.below(8), dout = 1 + c.rng.below(8);
    auto soft = nn::Mlp2<float>::init(din, din, dout, c.mutated ? nn::FinalActivation::kNone
                                                                : nn::FinalActivation::kSoftmax, c.rng);
    auto sig = nn::Mlp2<float>::init(din, din, dout, c.mutated ? nn::FinalActivation::kNone
                                                               : nn::FinalActivation::kSigmoid, c.rng);
    randomize<float>(soft, c.rng, 1.0);
    randomize<float>(sig, c.rng, 1.0);
    const auto x = normal<float>(c.rng, {3, din}, 2.0);
    const auto ys = soft.forward(x);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < dout; ++j) s += ys.at(i, j);
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    const auto yg = sig.forward(x);
    for (auto v : yg.data()) sigmoid_range = sigmoid_range && v >= 0.0f && v <= 1.0f;
  }
  const bool gelu0 = nn::gelu(Tensor<double>::zeros({1}))[0] == 0.0;
  return expect(worst_sum <= 1e-6 && sigmoid_range && gelu0,
                "softmax rows |sum-1| " + fmt(worst_sum) + (sigmoid_range ? ", sigmoid in [0,1]" : ", sigmoid out of range"),
                worst_sum);
}

// ---------------------------------------------------------------- attention

attn::InitOptions random_init(double std = 0.5) {
  attn::InitOptions o;
  o.zero_output_projection = false;
  o.weight_std = std;
  return o;
}

AttentionConfig random_attention(Rng& rng, std::size_t h, std::size_t w) {
  AttentionConfig cfg;
  const std::size_t dims[] = {2, 4, 8};
  cfg.dim = dims[rng.below(3)];
  cfg.heads = cfg.dim / (std::size_t{1} << rng.below(2));
  cfg.window = 1 + rng.below(std::min(h, w));
  cfg.radius = static_cast<long>(rng.below(3));
  cfg.noise_tokens = rng.below(3);
  return cfg;
}

Outcome attention_shape_preservation(Context& c) {
  bool ok = true;
  for (int t = 0; t < 30; ++t) {
    const std::size_t h = 1 + c.rng.below(5), w = 1 + c.rng.below(5);
    const auto cfg = random_attention(c.rng, h, w);
    const auto p = attn::AttentionParams<float>::init(cfg, c.rng, random_init());
    const auto x = grid<float>(c.rng, h, w, cfg.dim), y = grid<float>(c.rng, h, w, cfg.dim);
    const std::size_t want_c = c.mutated ? cfg.dim + 1 : cfg.dim;
    auto same = [&](const TokenGrid<float>& g) { return g.height == h && g.width == w && g.channels() == want_c; };
    ok = ok && same(attn::self_attention(cfg, p, x));
    for (auto v : cross_variants()) {
      const auto [a, b] = attn::cross_branches(v, cfg, p, x, y, t % 2 == 1);
      ok = ok && a.shape() == Shape{h * w, want_c} && b.shape() == Shape{h * w, want_c};
    }
  }
  return expect(ok, ok ? "all variants preserve geometry" : "geometry changed");
}

Outcome attention_locality(Context& c) {
  std::size_t checked = 0, violations = 0, ca_unchanged = 0;
  for (int inst = 0; inst < 6; ++inst) {
    const std::size_t h = 4 + c.rng.below(2), w = 4 + c.rng.below(3);
    AttentionConfig cfg;
    cfg.dim = 4;
    cfg.heads = 2;
    cfg.window = 2;
    cfg.radius = 1;
    cfg.noise_tokens = c.rng.below(3);
    const auto p = attn::AttentionParams<float>::init(cfg, c.rng, random_init());
    const auto x = grid<float>(c.rng, h, w, cfg.dim), y = grid<float>(c.rng, h, w, cfg.dim);
    const std::size_t n = h * w;
    for (auto v : {Variant::kShiftedWindow, Variant::kLocal, Variant::kPixelwise, Variant::kFull}) {
      for (bool shifted : {false, true}) {
        if (v != Variant::kShiftedWindow && shifted) continue;
        const auto sets = attn::variant_key_sets(v, cfg, h, w, shifted);
        const auto base = attn::cross_branches(v, cfg, p, x, y, shifted);
        for (int t = 0; t < 20; ++t) {
          const std::size_t k = c.rng.below(n);
          const auto keys = sets.keys(k);
          std::vector<std::size_t> candidates;
          for (std::size_t j = 0; j < n; ++j) {
            const bool inside = std::find(keys.begin(), keys.end(), j) != keys.end();
            if (v == Variant::kFull ? j != k : (c.mutated ? inside : !inside)) candidates.push_back(j);
          }
          if (candidates.empty()) continue;
          const std::size_t j = candidates[c.rng.below(candidates.size())];
          auto y2 = y;
          for (std::size_t ch = 0; ch < cfg.dim; ++ch) y2.feature.at(j, ch) += 1.0f;
          const auto out = attn::cross_branches(v, cfg, p, x, y2, shifted);
          bool same = true;
          for (std::size_t ch = 0; ch < cfg.dim; ++ch) {
            same = same && std::memcmp(&out.first.at(k, ch), &base.first.at(k, ch), sizeof(float)) == 0;
            if (k != j) same = same && std::memcmp(&out.second.at(k, ch), &base.second.at(k, ch), sizeof(float)) == 0;
          }
          if (v == Variant::kFull) {
            ca_unchanged += same ? 1 : 0;
          } else {
            ++checked;
            violations += same ? 0 : 1;
          }
        }
      }
    }
  }
  return expect(violations == 0 && ca_unchanged == 0 && checked > 0,
                std::to_string(checked) + " off-field perturbations, " + std::to_string(violations) +
                    " changed outputs; full CA unchanged in " + std::to_string(ca_unchanged) + " cases",
                static_cast<double>(violations));
}

Outcome attention_degenerate_equivalences(Context& c) {
  double worst = 0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t side = 2 + c.rng.below(4);
    AttentionConfig cfg = random_attention(c.rng, side, side);
    cfg.window = c.mutated ? side - 1 : side;
    const auto p = attn::AttentionParams<float>::init(cfg, c.rng, random_init());
    const auto x = grid<float>(c.rng, side, side, cfg.dim), y = grid<float>(c.rng, side, side, cfg.dim);
    const auto full = attn::cross_attention(cfg, p, x, y);
    const auto sw = attn::shifted_window_cross_attention(cfg, p, x, y, false);
    AttentionConfig wide = cfg;
    wide.radius = static_cast<long>(side);
    const auto local = attn::local_cross_attention(wide, p, x, y);
    AttentionConfig zero = cfg;
    zero.radius = c.mutated ? 1 : 0;
    const auto local0 = attn::local_cross_attention(zero, p, x, y);
    const auto pix = attn::pixelwise_cross_attention(cfg, p, x, y);
    for (const auto& [a, b] : {std::pair{&full, &sw}, std::pair{&full, &local}, std::pair{&pix, &local0}}) {
      worst = std::max<double>(worst, max_abs_diff(a->first.feature, b->first.feature));
      worst = std::max<double>(worst, max_abs_diff(a->second.feature, b->second.feature));
    }
  }
  return expect(worst <= 1e-5, "max diff " + fmt(worst), worst);
}

Outcome attention_window_oracle(Context& c) {
  double worst = 0;
  for (int t = 0; t < 5; ++t) {
    AttentionConfig cfg;
    cfg.dim = 4;
    cfg.heads = 2;
    cfg.window = 2;
    const auto p = attn::AttentionParams<float>::init(cfg, c.rng, random_init());
    const auto x = grid<float>(c.rng, 4, 4, 4), y = grid<float>(c.rng, 4, 4, 4);
    const auto sw = attn::cross_branches(Variant::kShiftedWindow, cfg, p, x, y, c.mutated);
    for (std::size_t wr = 0; wr < 2; ++wr) {
      for (std::size_t wc = 0; wc < 2; ++wc) {
        TokenGrid<float> sx{2, 2, Tensor<float>({4, 4})}, sy{2, 2, Tensor<float>({4, 4})};
        std::size_t idx[4];
        for (std::size_t i = 0; i < 4; ++i) {
          idx[i] = (2 * wr + i / 2) * 4 + 2 * wc + i % 2;
          for (std::size_t ch = 0; ch < 4; ++ch) {
            sx.feature.at(i, ch) = x.feature.at(idx[i], ch);
            sy.feature.at(i, ch) = y.feature.at(idx[i], ch);
          }
        }
        const auto sub = attn::cross_branches(Variant::kFull, cfg, p, sx, sy, false);
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t ch = 0; ch < 4; ++ch) {
            worst = std::max<double>(worst, std::abs(sub.first.at(i, ch) - sw.first.at(idx[i], ch)));
            worst = std::max<double>(worst, std::abs(sub.second.at(i, ch) - sw.second.at(idx[i], ch)));
          }
      }
    }
  }
  return expect(worst <= 1e-5, "max diff vs per-window CA " + fmt(worst), worst);
}

template <class W>
double worst_weight_sum(const attn::KeySets& sets, std::size_t heads, const W& weights, bool drop_last) {
  double worst = 0;
  for (std::size_t q = 0; q < sets.queries(); ++q) {
    const std::size_t m = sets.keys(q).size();
    for (std::size_t hd = 0; hd < heads; ++hd) {
      double s = 0;
      for (std::size_t j = 0; j + (drop_last ? 1 : 0) < m; ++j) s += weights[sets.offsets[q] * heads + hd * m + j];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  return worst;
}

Outcome attention_noise_normalization(Context& c) {
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t h = 1 + c.rng.below(4), w = 1 + c.rng.below(4);
    AttentionConfig cfg;
    cfg.dim = 4;
    cfg.heads = 1 + c.rng.below(2) * 1;
    cfg.noise_tokens = 2;
    const auto p = attn::AttentionParams<float>::init(cfg, c.rng, random_init(1.0));
    attn::CrossCache<float> cache;
    attn::cross_branches(Variant::kPixelwise, cfg, p, grid<float>(c.rng, h, w, 4), grid<float>(c.rng, h, w, 4), false,
                         &cache);
    worst = std::max(worst, worst_weight_sum(cache.rgb.sets, cfg.heads, cache.rgb.weights, c.mutated));
    worst = std::max(worst, worst_weight_sum(cache.depth.sets, cfg.heads, cache.depth.weights, c.mutated));
  }
  return expect(worst <= 1e-6, "max |sum - 1| " + fmt(worst), worst);
}

Outcome attention_residual_laws(Context& c) {
  bool ok = true;
  double perm_err = 0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t h = 1 + c.rng.below(4), w = 1 + c.rng.below(4);
    AttentionConfig cfg = random_attention(c.rng, h, w);
    auto p = attn::AttentionParams<float>::init(cfg, c.rng, random_init());
    const auto x = grid<float>(c.rng, h, w, cfg.dim), y = grid<float>(c.rng, h, w, cfg.dim);
    // Zero value path: only the residual survives.
    auto pz = p;
    if (!c.mutated) {
      pz.v = nn::Linear<float>::zeros(cfg.dim, cfg.dim);
      pz.noise_v = Tensor<float>(p.noise_v.shape());
    }
    for (auto& b : pz.o.bias.data()) b = 0.0f;
    const auto [rx, ry] = attn::cross_attention(cfg, pz, x, y);
    ok = ok && rx.feature == x.feature && ry.feature == y.feature;
    // Single token without noise: the weight is exactly 1.
    AttentionConfig one = cfg;
    one.noise_tokens = 0;
    auto p1 = attn::AttentionParams<float>::init(one, c.rng, random_init());
    const auto x1 = grid<float>(c.rng, 1, 1, cfg.dim);
    const auto s1 = attn::self_attention(one, p1, x1);
    const auto expect1 = add(p1.o.forward(p1.v.forward(x1.feature)), x1.feature);
    ok = ok && max_abs_diff(s1.feature, expect1) <= 1e-6f;
    // Permutation equivariance of self-attention.
    const std::size_t n = h * w;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[c.rng.below(i)]);
    TokenGrid<float> xp{1, n, Tensor<float>({n, cfg.dim})}, xs{1, n, x.feature};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < cfg.dim; ++ch) xp.feature.at(i, ch) = x.feature.at(perm[i], ch);
    const auto out = attn::self_attention(cfg, p, xs), outp = attn::self_attention(cfg, p, xp);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < cfg.dim; ++ch)
        perm_err = std::max<double>(perm_err, std::abs(outp.feature.at(i, ch) - out.feature.at(perm[i], ch)));
  }
  return expect(ok && perm_err <= 1e-5, std::string(ok ? "residual identities hold" : "residual identity broken") +
                                            ", permutation error " + fmt(perm_err),
                perm_err);
}

Outcome attention_backward_fd(Context& c) {
  FdTally tally;
  const std::pair<Variant, bool> cases[] = {{Variant::kSelf, false},          {Variant::kFull, false},
                                            {Variant::kShiftedWindow, false}, {Variant::kShiftedWindow, true},
                                            {Variant::kLocal, false},         {Variant::kPixelwise, false}};
  for (int inst = 0; inst < 2; ++inst) {
    for (const auto& [v, shifted] : cases) {
      AttentionConfig cfg;
      cfg.dim = 4;
      cfg.heads = 2;
      cfg.window = 2;
      cfg.radius = 1;
      cfg.noise_tokens = 1;
      auto p = attn::AttentionParams<double>::init(cfg, c.rng, random_init());
      auto x = grid<double>(c.rng, 3, 3, 4), y = grid<double>(c.rng, 3, 3, 4);
      const Tensor<double> rx = normal<double>(c.rng, {9, 4}), ry = normal<double>(c.rng, {9, 4});
      grad::GradCheckReport rep;
      rep.label = std::string(attn::variant_name(v)) + (shifted ? "_shifted" : "");
      auto g = zeros_like_params<double>(p);
      if (v == Variant::kSelf) {
        attn::DirectionCache<double> cache;
        attn::self_branch(cfg, p, x, &cache);
        Tensor<double> dx = attn::self_branch_backward(cfg, p, cache, rx, g);
        if (c.mutated) corrupt_grads(g);
        auto loss = [&] { return grad::probe(attn::self_branch(cfg, p, x), rx); };
        grad::check_params(rep, p, g, loss);
        grad::check_input(rep, "x", x.feature, dx, loss);
      } else {
        attn::CrossCache<double> cache;
        attn::cross_branches(v, cfg, p, x, y, shifted, &cache);
        auto [dx, dy] = attn::cross_branches_backward(cfg, p, cache, rx, ry, g);
        if (c.mutated) corrupt_grads(g);
        auto loss = [&] {
          const auto [a, b] = attn::cross_branches(v, cfg, p, x, y, shifted);
          return grad::probe(a, rx) + grad::probe(b, ry);
        };
        grad::check_params(rep, p, g, loss);
        grad::check_input(rep, "x", x.feature, dx, loss);
        grad::check_input(rep, "y", y.feature, dy, loss);
      }
      tally.add(rep);
    }
  }
  return tally.outcome();
}

// ---------------------------------------------------------------- dsim

dsim::DsimConfig dsim_config(const Context& c, std::size_t dim, std::size_t heads, std::size_t noise) {
  dsim::DsimConfig cfg;
  cfg.dim = dim;
  cfg.heads = heads;
  cfg.options = c.dsim_options(noise);
  return cfg;
}

template <class T>
dsim::DsimParams<T> dsim_params(const dsim::DsimConfig& cfg, Rng& rng, double std = 0.5) {
  auto p = dsim::DsimParams<T>::init(cfg, rng, random_init(std));
  if (cfg.options.ablation.enable_learning_factor) {
    p.factors.visit([&](std::string_view, Tensor<T>& t) {
      for (auto& v : t.data()) v = static_cast<T>(rng.uniform(0.5, 1.5));
    });
  }
  return p;
}

Outcome dsim_locality(Context& c) {
  std::size_t checked = 0, violations = 0;
  for (int inst = 0; inst < 4; ++inst) {
    const std::size_t h = 2 + c.rng.below(3), w = 2 + c.rng.below(3), n = h * w;
    const auto cfg = dsim_config(c, 4, 2, c.rng.below(3));
    const auto p = dsim_params<float>(cfg, c.rng);
    const auto xr = grid<float>(c.rng, h, w, 4), xd = grid<float>(c.rng, h, w, 4);
    const auto base = dsim::paca_forward(cfg, p, xr, xd);
    for (int t = 0; t < 20; ++t) {
      const std::size_t k = c.rng.below(n);
      std::size_t j = c.rng.below(n - 1);
      j = c.mutated ? k : (j >= k ? j + 1 : j);
      auto r2 = xr, d2 = xd;
      auto& target = t % 2 ? r2 : d2;
      for (std::size_t ch = 0; ch < 4; ++ch) target.feature.at(j, ch) += 0.75f;
      const auto out = dsim::paca_forward(cfg, p, r2, d2);
      bool same = true;
      for (std::size_t ch = 0; ch < 4; ++ch) {
        same = same && std::memcmp(&out.first.feature.at(k, ch), &base.first.feature.at(k, ch), sizeof(float)) == 0;
        same = same && std::memcmp(&out.second.feature.at(k, ch), &base.second.feature.at(k, ch), sizeof(float)) == 0;
      }
      ++checked;
      violations += same ? 0 : 1;
    }
  }
  return expect(violations == 0, std::to_string(checked) + " off-pixel perturbations, " + std::to_string(violations) +
                                     " changed outputs",
                static_cast<double>(violations));
}

Outcome dsim_attention_normalization(Context& c) {
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t h = 1 + c.rng.below(3), w = 1 + c.rng.below(3);
    const auto cfg = dsim_config(c, 4, 1 + c.rng.below(2), c.rng.below(3));
    const auto p = dsim_params<float>(cfg, c.rng, 1.0);
    dsim::DsimCache<float> cache;
    dsim::dsim_branches(cfg, p, grid<float>(c.rng, h, w, 4), grid<float>(c.rng, h, w, 4), &cache);
    if (cache.sets.keys(0).size() != cfg.keys_per_pixel()) return expect(false, "per-pixel key set has wrong extent");
    worst = std::max(worst, worst_weight_sum(cache.sets, cfg.heads, cache.weights_rgb, c.mutated));
    worst = std::max(worst, worst_weight_sum(cache.sets, cfg.heads, cache.weights_depth, c.mutated));
  }
  return expect(worst <= 1e-6, "max |sum - 1| " + fmt(worst), worst);
}

Outcome dsim_value_antisymmetry(Context& c) {
  if (!c.ablation.enable_difference) return skip("difference entry disabled");
  bool ok = true;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + c.rng.below(9), d = 1 + c.rng.below(6);
    const auto vr = normal<double>(c.rng, {n, d}), vd = normal<double>(c.rng, {n, d});
    const auto [Vr, Vd] = dsim::build_values(vr, vd);
    const auto [Er, Ed] = dsim::build_values(vr, vr);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < d; ++ch) {
        const double a = Vr.at(i, 0, ch), b = Vd.at(i, 0, ch);
        ok = ok && (c.mutated ? a == b : a == -b);
        ok = ok && Vr.at(i, 1, ch) == vd.at(i, ch) && Vd.at(i, 1, ch) == vr.at(i, ch);
        ok = ok && Er.at(i, 0, ch) == 0.0 && Ed.at(i, 0, ch) == 0.0;
      }
    // The same relation inside a full forward pass, before W^V.
    const auto cfg = dsim_config(c, 4, 2, c.rng.below(3));
    const auto p = dsim_params<double>(cfg, c.rng);
    dsim::DsimCache<double> cache;
    dsim::dsim_branches(cfg, p, grid<double>(c.rng, 2, 2, 4), grid<double>(c.rng, 2, 2, 4), &cache);
    const std::size_t P = cfg.keys_per_pixel(), noise = cfg.options.noise_tokens;
    for (std::size_t px = 0; px < 4; ++px)
      for (std::size_t ch = 0; ch < 4; ++ch) {
        const double a = cache.v_set_rgb.at(px * P + noise, ch), b = cache.v_set_depth.at(px * P + noise, ch);
        ok = ok && (c.mutated ? a == b : a == -b);
      }
  }
  return expect(ok, ok ? "difference entries are exact negatives" : "antisymmetry violated");
}

Outcome dsim_discriminator_contract(Context& c) {
  const bool softmax = c.discriminator == dsim::DiscriminatorVariant::kMlp2Softmax;
  double worst_sum = 0;
  bool in_range = true;
  for (int t = 0; t < 20; ++t) {
    const std::size_t h = 1 + c.rng.below(3), w = 1 + c.rng.below(3), d = 2 + c.rng.below(6);
    auto cfg = dsim_config(c, d, 1, 0);
    auto p = dsim_params<float>(cfg, c.rng, 1.0);
    if (c.mutated) {
      p.discriminators.f_d_rgb.final_activation = nn::FinalActivation::kNone;
      p.discriminators.f_s.final_activation = nn::FinalActivation::kNone;
    }
    const auto xr = grid<float>(c.rng, h, w, d), xd = grid<float>(c.rng, h, w, d);
    const auto r = dsim::relation_scores(p.discriminators, xr, xd);
    for (const Tensor<float>* s : {&r.d_rgb, &r.d_depth, &r.s}) {
      for (auto v : s->data()) in_range = in_range && v >= 0.0f && v <= 1.0f;
      if (!softmax) continue;
      for (std::size_t i = 0; i < h * w; ++i) {
        double acc = 0;
        for (std::size_t ch = 0; ch < d; ++ch) acc += s->at(i, ch);
        worst_sum = std::max(worst_sum, std::abs(acc - 1.0));
      }
    }
    // Similarity sees the RGB features first.
    const auto s_ref = p.discriminators.f_s.forward(concat(xr.feature, xd.feature, 1));
    in_range = in_range && s_ref == r.s;
  }
  return expect(in_range && worst_sum <= 1e-6,
                std::string(in_range ? "scores in [0,1]" : "score outside [0,1]") + ", max |row sum - 1| " +
                    fmt(worst_sum),
                worst_sum);
}

Outcome dsim_discriminator_swap(Context& c) {
  bool ok = true;
  for (int t = 0; t < 20; ++t) {
    const auto cfg = dsim_config(c, 4, 1, 0);
    auto p = dsim_params<float>(cfg, c.rng, 1.0);
    const auto xr = grid<float>(c.rng, 2, 3, 4), xd = grid<float>(c.rng, 2, 3, 4);
    const auto a = dsim::relation_scores(p.discriminators, xr, xd);
    auto swapped = p.discriminators;
    if (!c.mutated) std::swap(swapped.f_d_rgb, swapped.f_d_depth);
    const auto b = dsim::relation_scores(swapped, xd, xr);
    ok = ok && a.d_rgb == b.d_depth && a.d_depth == b.d_rgb;
    // Identical inputs and identical difference discriminators give identical scores.
    auto tied = p.discriminators;
    tied.f_d_depth = tied.f_d_rgb;
    const auto e = dsim::relation_scores(tied, xr, xr);
    ok = ok && e.d_rgb == e.d_depth;
  }
  return expect(ok, ok ? "swapping inputs and discriminators swaps scores bitwise" : "swap symmetry broken");
}

Outcome dsim_keys_oracle(Context& c) {
  bool ok = true;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + c.rng.below(6), d = 1 + c.rng.below(5);
    dsim::FusionFactors<double> f;
    f.visit([&](std::string_view, Tensor<double>& x) { x = normal<double>(c.rng, {d}); });
    const auto qr = normal<double>(c.rng, {n, d}), qd = normal<double>(c.rng, {n, d});
    const auto Dr = normal<double>(c.rng, {n, d}), Dd = normal<double>(c.rng, {n, d}), S = normal<double>(c.rng, {n, d});
    const auto [Kr, Kd] = dsim::build_keys(f, qr, qd, Dr, Dd, S);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < d; ++ch) {
        const double a_r = c.mutated ? f.beta_rgb[ch] : f.alpha_rgb[ch];
        ok = ok && Kr.at(i, 0, ch) == a_r * qr.at(i, ch) * Dr.at(i, ch);
        ok = ok && Kr.at(i, 1, ch) == f.beta_rgb[ch] * qr.at(i, ch) * S.at(i, ch);
        ok = ok && Kd.at(i, 0, ch) == f.alpha_depth[ch] * qd.at(i, ch) * Dd.at(i, ch);
        ok = ok && Kd.at(i, 1, ch) == f.beta_depth[ch] * qd.at(i, ch) * S.at(i, ch);
      }
    dsim::FusionFactors<double> zero{Tensor<double>({d}), Tensor<double>({d}), Tensor<double>({d}), Tensor<double>({d})};
    ok = ok && max_abs(dsim::build_keys(zero, qr, qd, Dr, Dd, S).first) == 0.0;
    dsim::FusionFactors<double> one{Tensor<double>::ones({d}), Tensor<double>::ones({d}), Tensor<double>::ones({d}),
                                    Tensor<double>::ones({d})};
    const auto ones = Tensor<double>::ones({n, d});
    const auto [Nr, Nd] = dsim::build_keys(one, qr, qd, ones, ones, ones);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < d; ++ch)
        ok = ok && Nr.at(i, 0, ch) == qr.at(i, ch) && Nr.at(i, 1, ch) == qr.at(i, ch) && Nd.at(i, 1, ch) == qd.at(i, ch);
  }
  return expect(ok, ok ? "keys match the scalar oracle exactly" : "key mismatch");
}

Outcome dsim_assemble_shapes(Context& c) {
  bool ok = true;
  const std::size_t entries = c.ablation.enable_difference ? 2 : 1;
  for (std::size_t noise : {0, 1, 2}) {
    const auto cfg = dsim_config(c, 8, 2, noise);
    const auto p = dsim_params<float>(cfg, c.rng);
    const auto xr = normal<float>(c.rng, {9, 8}), xd = normal<float>(c.rng, {9, 8});
    const auto [Kr, Kd] = dsim::build_keys(p.factors, xr, xd, xr, xd, xr, c.ablation.enable_difference);
    const auto [Vr, Vd] = dsim::build_values(xr, xd, c.ablation.enable_difference);
    const auto [ar, ad] = dsim::assemble_qkv(p, xr, xd, Kr, Kd, Vr, Vd);
    const Shape want{9, noise + entries + (c.mutated ? 1 : 0), 8};
    ok = ok && ar.k.shape() == want && ar.v.shape() == want && ad.k.shape() == want && ar.q.shape() == Shape{9, 8};
    ok = ok && cfg.keys_per_pixel() == noise + entries;
  }
  // Identity projections pass the per-pixel sets through unchanged.
  auto cfg = dsim_config(c, 4, 1, 1);
  auto p = dsim_params<double>(cfg, c.rng);
  p.w_q = p.w_k = p.w_v = nn::Linear<double>::identity(4);
  const auto xr = normal<double>(c.rng, {3, 4}), xd = normal<double>(c.rng, {3, 4});
  const auto [Kr, Kd] = dsim::build_keys(p.factors, xr, xd, xr, xd, xd);
  const auto [Vr, Vd] = dsim::build_values(xr, xd);
  const auto [ar, ad] = dsim::assemble_qkv(p, xr, xd, Kr, Kd, Vr, Vd);
  ok = ok && ar.q == xr && ad.q == xd;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t ch = 0; ch < 4; ++ch)
      ok = ok && ar.k.at(i, 0, ch) == p.noise.k_rgb.at(0, ch) && ar.k.at(i, 1, ch) == Kr.at(i, 0, ch) &&
           ar.v.at(i, 2, ch) == Vr.at(i, 1, ch) && ad.v.at(i, 0, ch) == p.noise.v_depth.at(0, ch);
  return expect(ok, ok ? "per-pixel set extent is noise + entries" : "assembled shape mismatch");
}

Outcome dsim_reduction(Context& c) {
  double worst = 0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t h = 1 + c.rng.below(4), w = 1 + c.rng.below(4);
    dsim::DsimConfig cfg;
    cfg.dim = 4;
    cfg.heads = 1 + c.rng.below(2);
    cfg.options.noise_tokens = c.mutated ? 1 : 0;
    cfg.options.ablation.enable_difference = false;  // a single shared key per pixel
    cfg.options.ablation.enable_similarity = false;  // S is all ones
    auto p = dsim_params<float>(cfg, c.rng);
    p.factors.alpha_rgb = p.factors.alpha_depth = Tensor<float>({4});
    p.factors.beta_rgb = p.factors.beta_depth = Tensor<float>::ones({4});
    p.lt_q = p.lt_k = p.lt_v = nn::Linear<float>::identity(4);
    AttentionConfig acfg;
    acfg.dim = 4;
    acfg.heads = cfg.heads;
    attn::AttentionParams<float> ap;
    ap.q = p.w_q;
    ap.k = p.w_k;
    ap.v = p.w_v;
    ap.o = p.w_o;
    const auto xr = grid<float>(c.rng, h, w, 4), xd = grid<float>(c.rng, h, w, 4);
    const auto a = dsim::paca_forward(cfg, p, xr, xd);
    const auto b = attn::pixelwise_cross_attention(acfg, ap, xr, xd);
    worst = std::max<double>(worst, max_abs_diff(a.first.feature, b.first.feature));
    worst = std::max<double>(worst, max_abs_diff(a.second.feature, b.second.feature));
  }
  return expect(worst <= 1e-5, "max diff vs single-key pixel-wise CA " + fmt(worst), worst);
}

Outcome dsim_residual_identity(Context& c) {
  bool ok = true;
  for (int t = 0; t < 10; ++t) {
    const auto cfg = dsim_config(c, 8, 2, c.rng.below(3));
    attn::InitOptions o;
    o.zero_output_projection = !c.mutated;
    const auto p = dsim::DsimParams<float>::init(cfg, c.rng, o);
    const auto xr = grid<float>(c.rng, 3, 2, 8), xd = grid<float>(c.rng, 3, 2, 8);
    const auto [yr, yd] = dsim::paca_forward(cfg, p, xr, xd);
    ok = ok && yr.feature == xr.feature && yd.feature == xd.feature;
  }
  return expect(ok, ok ? "zero output projection gives the identity" : "residual identity broken");
}

Outcome dsim_backward_fd(Context& c) {
  FdTally tally;
  for (int inst = 0; inst < 4; ++inst) {
    auto cfg = dsim_config(c, 4, inst % 2 ? 2 : 1, inst % 3);
    if (inst == 3) cfg.options.pairing = dsim::Pairing::kCrossSets;
    if (inst == 2) cfg.options.key_source = dsim::KeySource::kKeyProjection;
    auto p = dsim_params<double>(cfg, c.rng);
    auto xr = grid<double>(c.rng, 2, 2, 4), xd = grid<double>(c.rng, 2, 2, 4);
    const auto rr = normal<double>(c.rng, {4, 4}), rd = normal<double>(c.rng, {4, 4});
    dsim::DsimCache<double> cache;
    dsim::dsim_branches(cfg, p, xr, xd, &cache);
    auto g = zeros_like_params<double>(p);
    auto [dxr, dxd] = dsim::dsim_backward(cfg, p, cache, rr, rd, g);
    if (c.mutated) corrupt_grads(g);
    auto loss = [&] {
      const auto [a, b] = dsim::dsim_branches(cfg, p, xr, xd);
      return grad::probe(a, rr) + grad::probe(b, rd);
    };
    grad::GradCheckReport rep;
    rep.label = "dsim" + std::to_string(inst);
    grad::check_params(rep, p, g, loss);
    grad::check_input(rep, "xr", xr.feature, dxr, loss);
    grad::check_input(rep, "xd", xd.feature, dxd, loss);
    tally.add(rep);
  }
  return tally.outcome();
}

// ---------------------------------------------------------------- encoder

enc::EncoderConfig small_encoder(const Context& c, std::size_t h, std::size_t w, std::size_t dim, Variant inter) {
  auto e = enc::EncoderConfig::preset("toy");
  e.height = h;
  e.width = w;
  for (auto& s : e.stages) {
    s.dim = dim;
    s.heads = 2;
    s.depth = 1;
  }
  e.inter = inter;
  e.window = 2;
  e.mlp_ratio = 2;
  e.baseline_noise_tokens = 1;
  e.dsim = c.dsim_options(1);
  return e;
}

std::vector<Variant> inter_variants() {
  return {Variant::kFull, Variant::kShiftedWindow, Variant::kLocal, Variant::kPixelwise, Variant::kDsim};
}

Outcome encoder_geometry(Context& c) {
  std::size_t checked = 0, mismatches = 0;
  while (checked < 20) {
    auto e = small_encoder(c, 1 + c.rng.below(24), 1 + c.rng.below(24), 4, Variant::kDsim);
    e.stages[0].patch = {1 + c.rng.below(5), 1 + c.rng.below(3), c.rng.below(3)};
    for (std::size_t s = 1; s < 4; ++s) e.stages[s].patch = {1 + c.rng.below(3), 1 + c.rng.below(2), c.rng.below(2)};
    try {
      e.validate();
    } catch (const ConfigError&) {
      continue;
    }
    ++checked;
    std::size_t h = e.height, w = e.width;
    const auto geom = e.stage_geometry();
    Rng init = c.rng.split(checked);
    const auto encoder = enc::Encoder<float>::init(e, init);
    const auto feats = enc::encoder_forward(encoder, normal<float>(c.rng, {e.height * e.width, 3}),
                                            normal<float>(c.rng, {e.height * e.width, 1}));
    for (std::size_t s = 0; s < 4; ++s) {
      const auto& g = e.stages[s].patch;
      const long kk = static_cast<long>(g.kernel) + (c.mutated ? 1 : 0);
      h = static_cast<std::size_t>((static_cast<long>(h + 2 * g.padding) - kk) / static_cast<long>(g.stride) + 1);
      w = static_cast<std::size_t>((static_cast<long>(w + 2 * g.padding) - kk) / static_cast<long>(g.stride) + 1);
      const bool ok = geom[s] == std::pair{h, w} && feats[s].rgb.height == h && feats[s].rgb.width == w &&
                      feats[s].depth.feature.shape() == Shape{h * w, e.stages[s].dim};
      mismatches += ok ? 0 : 1;
    }
  }
  return expect(mismatches == 0, std::to_string(checked) + " configs, " + std::to_string(mismatches) +
                                     " stage extents off the closed form",
                static_cast<double>(mismatches));
}

Outcome encoder_residual_identity(Context& c) {
  bool ok = true;
  for (Variant v : inter_variants()) {
    const auto e = small_encoder(c, 3, 3, 8, v);
    for (std::size_t b = 0; b < 2; ++b) {
      const auto spec = enc::block_spec(e, 0, b);
      attn::InitOptions o;
      o.zero_output_projection = !c.mutated;
      const auto block = enc::init_block<float>(spec, e.mlp_ratio, c.rng, o);
      const auto xr = grid<float>(c.rng, 3, 3, 8), xd = grid<float>(c.rng, 3, 3, 8);
      const auto y = enc::iimib_forward(spec, block, xr, xd);
      // Only the feed-forward branch survives a zero output projection.
      ok = ok && y.rgb.feature == add(xr.feature, block.ffn.forward(xr.feature));
      ok = ok && y.depth.feature == add(xd.feature, block.ffn.forward(xd.feature));
    }
  }
  return expect(ok, ok ? "attention branches vanish at zero output projection" : "residual identity broken");
}

Outcome encoder_parameter_sharing(Context& c) {
  bool names_ok = true, shared_ok = true;
  for (Variant v : inter_variants()) {
    const auto e = small_encoder(c, 3, 3, 8, v);
    const auto spec = enc::block_spec(e, 0, 0);
    auto block = enc::init_block<float>(spec, e.mlp_ratio, c.rng, random_init());
    std::set<std::string> ln_groups;
    block.visit(
        [&](std::string_view name, Tensor<float>&) {
          const std::string n(name);
          if (n.rfind("ln_", 0) == 0) ln_groups.insert(n.substr(0, n.find('.')));
          const bool shared = n.rfind("intra.", 0) == 0 || n.rfind("ffn.", 0) == 0;
          if (shared && (n.find("rgb") != std::string::npos || n.find("depth") != std::string::npos)) {
            names_ok = false;
          }
        },
        spec.inter, spec.with_inter);
    names_ok = names_ok && ln_groups.size() == 4;

    // Without the exchange the streams only meet through shared weights: a
    // shared weight moves both, a per-modality norm only its own.
    auto isolated = spec;
    isolated.with_inter = false;
    const auto xr = grid<float>(c.rng, 3, 3, 8), xd = grid<float>(c.rng, 3, 3, 8);
    const auto before = enc::iimib_forward(isolated, block, xr, xd);
    auto& target = c.mutated ? block.ln_rgb_1.gain : block.intra.q.weight;
    target[0] += 0.5f;
    const auto after = enc::iimib_forward(isolated, block, xr, xd);
    shared_ok = shared_ok && before.rgb.feature != after.rgb.feature && before.depth.feature != after.depth.feature;
    block.ln_rgb_1.gain[0] += 0.5f;
    const auto own = enc::iimib_forward(isolated, block, xr, xd);
    shared_ok = shared_ok && own.rgb.feature != after.rgb.feature && own.depth.feature == after.depth.feature;
  }
  return expect(names_ok && shared_ok, std::string(names_ok ? "4 norm groups, shared names modality-free" :
                                                              "parameter naming broken") +
                                           (shared_ok ? "; shared weights move both streams" : "; sharing broken"));
}

template <class T>
enc::PerModality<TokenGrid<T>> block_by_hand(const enc::BlockSpec& spec, const enc::IimibBlock<T>& b,
                                             const TokenGrid<T>& xr, const TokenGrid<T>& xd, bool skip_norm) {
  const std::size_t H = xr.height, W = xr.width;
  const Tensor<T> ar = skip_norm ? xr.feature : b.ln_rgb_1.forward(xr.feature);
  const auto hr = add(xr.feature, attn::self_branch(spec.intra, b.intra, TokenGrid<T>{H, W, ar}));
  const auto hd = add(xd.feature, attn::self_branch(spec.intra, b.intra, TokenGrid<T>{H, W, b.ln_depth_1.forward(xd.feature)}));
  const TokenGrid<T> nr{H, W, b.ln_rgb_2.forward(hr)};
  const TokenGrid<T> nd{H, W, b.ln_depth_2.forward(hd)};
  Tensor<T> yr = hr, yd = hd;
  if (spec.with_inter) {
    const auto [ir, id] = spec.inter == Variant::kDsim
                              ? dsim::dsim_branches(spec.dsim, b.inter, nr, nd)
                              : attn::cross_branches(spec.inter, spec.attention, b.cross, nr, nd, spec.shifted);
    yr = add(hr, ir);
    yd = add(hd, id);
  }
  return {TokenGrid<T>{H, W, add(yr, b.ffn.forward(yr))}, TokenGrid<T>{H, W, add(yd, b.ffn.forward(yd))}};
}

Outcome encoder_block_composition(Context& c) {
  bool ok = true;
  for (Variant v : inter_variants()) {
    const auto e = small_encoder(c, 4, 3, 8, v);
    for (std::size_t b = 0; b < 2; ++b) {
      const auto spec = enc::block_spec(e, 0, b);
      const auto block = enc::init_block<float>(spec, e.mlp_ratio, c.rng, random_init());
      const auto xr = grid<float>(c.rng, 4, 3, 8), xd = grid<float>(c.rng, 4, 3, 8);
      const auto fused = enc::iimib_forward(spec, block, xr, xd);
      const auto hand = block_by_hand(spec, block, xr, xd, c.mutated);
      ok = ok && fused.rgb.feature == hand.rgb.feature && fused.depth.feature == hand.depth.feature;
    }
  }
  return expect(ok, ok ? "fused block equals the composed stages bitwise" : "block composition differs");
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> block_tensors(enc::IimibBlock<T>& b, const enc::BlockSpec& spec) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  b.visit([&](std::string_view name, Tensor<T>& t) { out.emplace_back(std::string(name), &t); }, spec.inter,
          spec.with_inter);
  return out;
}

Outcome encoder_block_backward_fd(Context& c) {
  FdTally tally;
  for (Variant v : inter_variants()) {
    const auto e = small_encoder(c, 3, 3, 4, v);
    for (std::size_t b = 0; b < 2; ++b) {
      const auto spec = enc::block_spec(e, 0, b);
      auto block = enc::init_block<double>(spec, e.mlp_ratio, c.rng, random_init());
      auto xr = grid<double>(c.rng, 3, 3, 4), xd = grid<double>(c.rng, 3, 3, 4);
      const auto rr = normal<double>(c.rng, {9, 4}), rd = normal<double>(c.rng, {9, 4});
      typename enc::IimibBlock<double>::Cache cache;
      enc::iimib_forward(spec, block, xr, xd, &cache);
      enc::IimibBlock<double> g = block;
      g.visit([](std::string_view, Tensor<double>& t) { t.fill(0.0); }, spec.inter, spec.with_inter);
      auto dx = enc::iimib_backward(spec, block, cache, rr, rd, g);
      if (c.mutated) {
        g.visit([](std::string_view name, Tensor<double>& t) {
          if (name == "ffn.second.weight") t = scale(t, -1.0);
        }, spec.inter, spec.with_inter);
      }
      auto loss = [&] {
        const auto y = enc::iimib_forward(spec, block, xr, xd);
        return grad::probe(y.rgb.feature, rr) + grad::probe(y.depth.feature, rd);
      };
      grad::GradCheckReport rep;
      rep.label = std::string(attn::variant_name(v)) + (spec.shifted ? "_shifted" : "");
      rep.tolerance = grad::kDeepTolerance;
      auto ps = block_tensors(block, spec);
      auto gs = block_tensors(g, spec);
      const double floor = grad::roundoff_floor(loss(), rep.step);
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const Tensor<double> numeric = grad::numeric_grad_inplace(*ps[i].second, loss, rep.step);
        rep.groups.push_back(grad::compare_group(ps[i].first, *gs[i].second, numeric, rep.tolerance, floor));
      }
      grad::check_input(rep, "xr", xr.feature, dx.rgb, loss);
      grad::check_input(rep, "xd", xd.feature, dx.depth, loss);
      tally.add(rep);
    }
  }
  return tally.outcome();
}

Outcome encoder_backward_fd(Context& c) {
  FdTally tally;
  for (Variant v : {Variant::kShiftedWindow, Variant::kDsim}) {
    auto e = small_encoder(c, 8, 8, 8, v);
    Rng init = c.rng.split(static_cast<std::uint64_t>(v) + 1);
    auto encoder = enc::Encoder<double>::init(e, init, random_init(0.3));
    const auto rgb = normal<double>(c.rng, {64, 3}), depth = normal<double>(c.rng, {64, 1});
    enc::EncoderCache<double> cache;
    const auto feats = enc::encoder_forward(encoder, rgb, depth, &cache);
    std::array<enc::PerModality<Tensor<double>>, 4> probes;
    for (std::size_t s = 0; s < 4; ++s) {
      probes[s] = {normal<double>(c.rng, feats[s].rgb.feature.shape()),
                   normal<double>(c.rng, feats[s].depth.feature.shape())};
    }
    auto g = zeros_like_params<double>(encoder);
    enc::encoder_backward(encoder, cache, probes, g);
    if (c.mutated) corrupt_grads(g);
    auto loss = [&] {
      const auto f = enc::encoder_forward(encoder, rgb, depth);
      double l = 0;
      for (std::size_t s = 0; s < 4; ++s) l += grad::probe(f[s].rgb.feature, probes[s].rgb) + grad::probe(f[s].depth.feature, probes[s].depth);
      return l;
    };
    grad::GradCheckReport rep;
    rep.label = std::string("encoder_") + std::string(attn::variant_name(v));
    rep.tolerance = grad::kDeepTolerance;
    rep.max_samples = 3;
    grad::check_params(rep, encoder, g, loss);
    tally.add(rep);
  }
  return tally.outcome();
}

// ---------------------------------------------------------------- decoder

Outcome decoder_bilinear_laws(Context& c) {
  double worst_const = 0, worst_adj = 0;
  bool identity_ok = true;
  for (int t = 0; t < 50; ++t) {
    const std::size_t ih = 1 + c.rng.below(9), iw = 1 + c.rng.below(9), oh = 1 + c.rng.below(17),
                      ow = 1 + c.rng.below(17), ch = 1 + c.rng.below(3);
    const auto plan = dec::bilinear_plan(ih, iw, oh, ow);
    const double k = c.rng.normal();
    Tensor<double> constant({ih * iw, ch});
    constant.fill(k);
    const auto resized = dec::bilinear_resize(constant, plan);
    for (double v : resized.data()) worst_const = std::max(worst_const, std::abs(v - k));

    const auto x = normal<double>(c.rng, {ih * iw, ch}), y = normal<double>(c.rng, {oh * ow, ch});
    const auto rx = dec::bilinear_resize(x, plan);
    const auto ry = dec::bilinear_resize_backward(c.mutated ? rx : y, plan);
    const double lhs = grad::probe(rx, y), rhs = grad::probe(x, ry);
    worst_adj = std::max(worst_adj, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));

    const auto same = dec::bilinear_plan(ih, iw, ih, iw);
    identity_ok = identity_ok && same.identity() && dec::bilinear_resize(x, same) == x;
  }
  return expect(worst_const <= 1e-12 && worst_adj <= 1e-12 && identity_ok,
                "constant " + fmt(worst_const) + ", adjoint " + fmt(worst_adj) +
                    (identity_ok ? ", same-size resize is the identity" : ", identity broken"),
                std::max(worst_const, worst_adj));
}

Outcome decoder_zero_logits(Context& c) {
  bool ok = true;
  for (std::size_t classes : {1, 3, 5}) {
    ModelConfig mc;
    mc.encoder = small_encoder(c, 8, 8, 8, Variant::kDsim);
    mc.decoder_dim = 8;
    mc.num_classes = classes;
    Rng init = c.rng.split(classes);
    auto m = Model<double>::init(mc, init, random_init());
    m.decoder.head.second.weight.fill(0.0);
    if (!c.mutated) m.decoder.head.second.bias.fill(0.0);
    else m.decoder.head.second.bias.fill(0.25);
    const auto logits = model_forward(m, normal<double>(c.rng, {64, 3}), normal<double>(c.rng, {64, 1}));
    Tensor<std::int32_t> labels({8, 8});
    for (auto& l : labels.data()) l = static_cast<std::int32_t>(c.rng.below(classes));
    const auto ce = cross_entropy(logits, labels);
    const auto pred = argmax_labels(logits, 8, 8);
    ok = ok && logits.shape() == Shape{64, classes} && max_abs(logits) == 0.0;
    ok = ok && std::abs(ce.loss - std::log(static_cast<double>(classes))) <= 1e-12;
    ok = ok && std::all_of(pred.data().begin(), pred.data().end(), [](std::int32_t v) { return v == 0; });
  }
  return expect(ok, ok ? "zero head gives zero logits, log(k) loss and class 0" : "zero-head contract broken");
}

// ---------------------------------------------------------------- metrics

metrics::SegmentationMap random_map(Rng& rng, std::size_t h, std::size_t w, std::size_t classes) {
  metrics::SegmentationMap m{Tensor<std::int32_t>({h, w})};
  for (auto& v : m.labels.data()) v = static_cast<std::int32_t>(rng.below(classes));
  return m;
}

struct BruteScores {
  double miou = 0, macc = 0, pixel = 0;
};

// Pixel loops only; classes absent from both maps are excluded from the means.
BruteScores brute_scores(const metrics::SegmentationMap& gt, const metrics::SegmentationMap& pred, std::size_t k) {
  BruteScores b;
  std::size_t iou_n = 0, acc_n = 0, correct = 0;
  const auto& g = gt.labels.data();
  const auto& p = pred.labels.data();
  for (std::size_t i = 0; i < g.size(); ++i) correct += g[i] == p[i];
  for (std::size_t cls = 0; cls < k; ++cls) {
    std::size_t inter = 0, uni = 0, truth = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const bool a = g[i] == static_cast<std::int32_t>(cls), q = p[i] == static_cast<std::int32_t>(cls);
      inter += a && q;
      uni += a || q;
      truth += a;
    }
    if (uni) b.miou += static_cast<double>(inter) / static_cast<double>(uni), ++iou_n;
    if (truth) b.macc += static_cast<double>(inter) / static_cast<double>(truth), ++acc_n;
  }
  b.miou /= static_cast<double>(iou_n);
  b.macc /= static_cast<double>(acc_n);
  b.pixel = static_cast<double>(correct) / static_cast<double>(g.size());
  return b;
}

Outcome metrics_oracle(Context& c) {
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 1 + c.rng.below(8), h = 1 + c.rng.below(32), w = 1 + c.rng.below(32);
    const auto gt = random_map(c.rng, h, w, k);
    auto pred = random_map(c.rng, h, w, k);
    // Bias toward agreement so high scores are exercised too.
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
      if (c.rng.uniform() < 0.5) pred.labels[i] = gt.labels[i];
    }
    const auto cm = c.mutated ? metrics::confusion(pred, gt, k) : metrics::confusion(gt, pred, k);
    const auto b = brute_scores(gt, pred, k);
    worst = std::max({worst, std::abs(metrics::miou(cm) - b.miou), std::abs(metrics::macc(cm) - b.macc),
                      std::abs(metrics::pixel_acc(cm) - b.pixel)});
  }
  return expect(worst <= 1e-12, "max diff vs pixel loop " + fmt(worst), worst);
}

Outcome metrics_invariants(Context& c) {
  bool ok = true;
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + c.rng.below(6), h = 1 + c.rng.below(16), w = 1 + c.rng.below(16);
    const auto gt = random_map(c.rng, h, w, k), pred = random_map(c.rng, h, w, k);
    const auto cm = metrics::confusion(gt, pred, k);
    const double mi = metrics::miou(cm), ma = metrics::macc(cm), pa = metrics::pixel_acc(cm);
    ok = ok && mi >= 0 && mi <= 1 && ma >= 0 && ma <= 1 && pa >= 0 && pa <= 1;

    // Joint pixel permutation changes nothing.
    std::vector<std::size_t> perm(gt.labels.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[c.rng.below(i)]);
    auto gp = gt, pp = pred;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      gp.labels[i] = gt.labels[perm[i]];
      pp.labels[i] = c.mutated ? pred.labels[i] : pred.labels[perm[i]];
    }
    ok = ok && metrics::confusion(gp, pp, k) == cm;

    // Counts add over disjoint pixel sets.
    const auto gt2 = random_map(c.rng, h, w, k), pred2 = random_map(c.rng, h, w, k);
    auto sum = cm;
    sum += metrics::confusion(gt2, pred2, k);
    metrics::SegmentationMap gcat{Tensor<std::int32_t>({2 * h, w})}, pcat{Tensor<std::int32_t>({2 * h, w})};
    for (std::size_t i = 0; i < h * w; ++i) {
      gcat.labels[i] = gt.labels[i];
      gcat.labels[h * w + i] = gt2.labels[i];
      pcat.labels[i] = pred.labels[i];
      pcat.labels[h * w + i] = pred2.labels[i];
    }
    ok = ok && metrics::confusion(gcat, pcat, k) == sum && sum.total() == 2 * h * w;

    const auto perfect = metrics::confusion(gt, gt, k);
    ok = ok && metrics::miou(perfect) == 1.0 && metrics::macc(perfect) == 1.0 && metrics::pixel_acc(perfect) == 1.0;
  }
  return expect(ok, ok ? "bounds, permutation, additivity and perfect-score laws hold" : "metric law violated");
}

// ---------------------------------------------------------------- cost

Outcome cost_instrumented_exactness(Context& c) {
  std::size_t cases = 0, mismatches = 0;
  std::string first;
  auto record = [&](const std::string& label, std::uint64_t exec, std::uint64_t model, std::size_t pe,
                    std::uint64_t pm) {
    ++cases;
    if (exec == model && pe == pm) return;
    ++mismatches;
    if (first.empty()) {
      first = label + " flops " + std::to_string(exec) + " vs " + std::to_string(model) + ", params " +
              std::to_string(pe) + " vs " + std::to_string(pm);
    }
  };
  for (int t = 0; t < 4; ++t) {
    const std::size_t h = 1 + c.rng.below(8), w = 1 + c.rng.below(8), heads = 1 + c.rng.below(2);
    const std::size_t d = heads * (1 + c.rng.below(8));
    AttentionConfig cfg;
    cfg.dim = d;
    cfg.heads = heads;
    cfg.window = 1 + c.rng.below(std::min(h, w));
    cfg.radius = static_cast<long>(c.rng.below(3));
    cfg.noise_tokens = c.rng.below(3);
    const std::size_t wc = c.mutated ? w + 1 : w;
    const auto x = grid<float>(c.rng, h, w, d), y = grid<float>(c.rng, h, w, d);
    {
      auto intra = cfg;
      intra.noise_tokens = 0;
      const auto p = attn::AttentionParams<float>::init(intra, c.rng);
      flops::Scope s;
      attn::self_branch(intra, p, x);
      attn::self_branch(intra, p, y);
      const auto r = cost::count_attention(Variant::kSelf, intra, h, wc);
      record("sa", s.count(), r.total_flops(), count_params<float>(p), r.total_params());
    }
    const auto p = attn::AttentionParams<float>::init(cfg, c.rng);
    for (Variant v : cross_variants()) {
      for (bool shifted : {false, true}) {
        if (shifted && v != Variant::kShiftedWindow) continue;
        flops::Scope s;
        attn::cross_branches(v, cfg, p, x, y, shifted);
        const auto r = cost::count_attention(v, cfg, h, wc, shifted);
        record(std::string(attn::variant_name(v)), s.count(), r.total_flops(), count_params<float>(p),
               r.total_params());
      }
    }
    const auto dcfg = dsim_config(c, d, heads, cfg.noise_tokens);
    const auto dp = dsim::DsimParams<float>::init(dcfg, c.rng);
    flops::Scope s;
    dsim::dsim_branches(dcfg, dp, x, y);
    const auto r = cost::count_dsim(dcfg, h, wc);
    record("dsim", s.count(), r.total_flops(), count_params<float>(dp), r.total_params());
  }
  for (Variant v : inter_variants()) {
    ModelConfig mc;
    mc.encoder = small_encoder(c, 8, 8, 8, v);
    mc.decoder_dim = 8;
    Rng init = c.rng.split(static_cast<std::uint64_t>(v) + 1);
    const auto m = Model<float>::init(mc, init);
    flops::Scope s;
    model_forward(m, normal<float>(c.rng, {64, 3}), normal<float>(c.rng, {64, 1}));
    auto counted = mc;
    if (c.mutated) counted.encoder.width = 16;
    const auto r = cost::count_model(counted);
    record("model_" + std::string(attn::variant_name(v)), s.count(), r.total_flops(), count_params<float>(m),
           r.total_params());
  }
  return expect(mismatches == 0,
                std::to_string(cases) + " cases, " + std::to_string(mismatches) + " mismatches" +
                    (first.empty() ? "" : "; " + first),
                static_cast<double>(mismatches));
}

Outcome cost_scaling_exponents(Context& c) {
  AttentionConfig cfg;
  cfg.dim = 32;
  cfg.heads = 4;
  cfg.window = 4;
  cfg.noise_tokens = 1;
  dsim::DsimConfig dcfg = dsim_config(c, 32, 4, 1);
  std::vector<double> n, full, window, local, pixel, ours;
  for (std::size_t side : {16, 32, 64, 128}) {
    n.push_back(static_cast<double>(side * side));
    full.push_back(static_cast<double>(cost::attention_pairs(Variant::kFull, cfg, side, side)));
    window.push_back(static_cast<double>(cost::attention_pairs(Variant::kShiftedWindow, cfg, side, side)));
    local.push_back(static_cast<double>(cost::attention_pairs(Variant::kLocal, cfg, side, side)));
    pixel.push_back(static_cast<double>(cost::attention_pairs(Variant::kPixelwise, cfg, side, side)));
    ours.push_back(static_cast<double>(cost::count_dsim(dcfg, side, side).total_flops()));
  }
  const double want_full = c.mutated ? 1.0 : 2.0;
  const double sf = cost::loglog_slope(n, full), sw = cost::loglog_slope(n, window), sl = cost::loglog_slope(n, local),
               sp = cost::loglog_slope(n, pixel), sd = cost::loglog_slope(n, ours);
  const bool ok = std::abs(sf - want_full) <= 0.05 && std::abs(sw - 1) <= 0.05 && std::abs(sl - 1) <= 0.05 &&
                  std::abs(sp - 1) <= 0.05 && std::abs(sd - 1) <= 0.05;
  return expect(ok, "slopes ca " + fmt(sf) + ", swca " + fmt(sw) + ", lca " + fmt(sl) + ", pwca " + fmt(sp) +
                        ", dsim " + fmt(sd),
                sf);
}

Outcome cost_param_walk(Context& c) {
  std::size_t mismatches = 0, cases = 0;
  for (const auto& preset : {"toy", "default"}) {
    for (Variant v : inter_variants()) {
      ModelConfig mc;
      mc.encoder = enc::EncoderConfig::preset(preset);
      mc.encoder.inter = v;
      mc.encoder.dsim.ablation = c.ablation;
      mc.encoder.dsim.discriminator = c.discriminator;
      Rng init = c.rng.split(cases + 1);
      const auto m = Model<float>::init(mc, init);
      const auto r = cost::count_model(mc, c.mutated ? Variant::kFull : v);
      std::uint64_t by_component = 0;
      for (const auto& comp : r.components) by_component += comp.params;
      ++cases;
      mismatches += (count_params<float>(m) == r.total_params() && by_component == r.total_params()) ? 0 : 1;
    }
  }
  return expect(mismatches == 0, std::to_string(cases) + " models, " + std::to_string(mismatches) +
                                     " parameter walks disagree with the closed form",
                static_cast<double>(mismatches));
}

Outcome cost_invariants(Context& c) {
  bool ok = true;
  for (int t = 0; t < 20; ++t) {
    AttentionConfig cfg;
    cfg.heads = 1 + c.rng.below(4);
    cfg.dim = cfg.heads * (1 + c.rng.below(8));
    cfg.noise_tokens = c.rng.below(3);
    const auto dcfg = dsim_config(c, cfg.dim, cfg.heads, cfg.noise_tokens);
    const std::size_t h = 1 + c.rng.below(16), w = 1 + c.rng.below(16);
    // Per-pixel mechanisms are exactly affine in the token count (noise rows
    // are projected once per call).
    auto pw = [&](std::size_t k) { return cost::count_attention(Variant::kPixelwise, cfg, h, k * w).total_flops(); };
    auto ds = [&](std::size_t k) { return cost::count_dsim(dcfg, k * h, w).total_flops(); };
    ok = ok && pw(3) - pw(2) == pw(2) - pw(1) && ds(3) - ds(2) == ds(2) - ds(1);
    // On one token every cross variant attends the same single key.
    const std::size_t one_w = c.mutated ? 2 : 1;
    const auto ref = cost::count_attention(Variant::kFull, cfg, 1, one_w).total_flops();
    for (Variant v : {Variant::kShiftedWindow, Variant::kLocal, Variant::kPixelwise}) {
      auto one = cfg;
      one.window = 1;
      ok = ok && cost::count_attention(v, one, 1, one_w).total_flops() == ref;
    }
    const auto a = cost::count_attention(Variant::kFull, cfg, h, w), b = cost::count_dsim(dcfg, h, w);
    const auto ab = cost::compare_variants(a, b), ba = cost::compare_variants(b, a), aa = cost::compare_variants(a, a);
    ok = ok && aa.params_pct == 0.0 && aa.flops_pct == 0.0;
    ok = ok && (ab.flops_pct > 0) == (ba.flops_pct < 0) && (ab.params_pct > 0) == (ba.params_pct < 0);
    ok = ok && ab.base == std::string(attn::variant_name(Variant::kFull)) && ab.ours == "dsim";
  }
  return expect(ok, ok ? "affinity, single-token coincidence and comparison laws hold" : "cost law violated");
}

// ---------------------------------------------------------------- cli config

config::RunConfig random_run_config(Rng& rng) {
  config::RunConfig r;
  const char* commands[] = {"cost", "shapes", "gradcheck", "smoke-train", "metrics", "gen-scene"};
  r.command = commands[rng.below(6)];
  const auto presets = enc::EncoderConfig::preset_names();
  r.preset = presets[rng.below(presets.size())];
  r.model.encoder = enc::EncoderConfig::preset(r.preset);
  auto& e = r.model.encoder;
  e.height = 8 + rng.below(64);
  e.width = 8 + rng.below(64);
  e.window = 1 + rng.below(9);
  e.radius = static_cast<long>(rng.below(4));
  e.baseline_noise_tokens = rng.below(3);
  e.mlp_ratio = 1 + rng.below(4);
  e.inter = static_cast<Variant>(1 + rng.below(5));
  for (auto& s : e.stages) {
    s.depth = 1 + rng.below(3);
    s.heads = 1 + rng.below(4);
    s.dim = s.heads * (1 + rng.below(16));
    s.patch = {1 + rng.below(7), 1 + rng.below(4), rng.below(3)};
  }
  e.dsim.noise_tokens = rng.below(4);
  e.dsim.discriminator_hidden = rng.below(3) * 8;
  e.dsim.discriminator = rng.below(2) ? dsim::DiscriminatorVariant::kMlp2Sigmoid : dsim::DiscriminatorVariant::kMlp2Softmax;
  e.dsim.key_source = rng.below(2) ? dsim::KeySource::kKeyProjection : dsim::KeySource::kQueryProjection;
  e.dsim.pairing = rng.below(2) ? dsim::Pairing::kCrossSets : dsim::Pairing::kOwnerSets;
  e.dsim.ablation = {rng.below(2) == 0, rng.below(2) == 0, rng.below(2) == 0, rng.below(2) == 0};
  e.drop_path.rate = rng.uniform(0, 0.3);
  e.drop_path.mode = rng.below(2) ? nn::DropPathMode::kTrain : nn::DropPathMode::kEval;
  r.model.decoder_dim = 1 + rng.below(96);
  r.model.num_classes = 1 + rng.below(40);
  r.variants.clear();
  for (std::size_t i = 0, n = rng.below(4); i < n; ++i) r.variants.push_back(static_cast<Variant>(rng.below(6)));
  r.seed = rng.next_u64();
  r.train = {1 + rng.below(1000), rng.uniform(1e-4, 1.0), 1 + rng.below(10), rng.below(8), rng.uniform(0, 0.2)};
  r.gradcheck = {1 + rng.below(100), rng.below(8)};
  r.out = "out" + std::to_string(rng.below(100));
  r.reference = rng.below(2) ? "" : "data/ref" + std::to_string(rng.below(10)) + ".json";
  return r;
}

Outcome config_roundtrip(Context& c) {
  std::size_t failures = 0;
  std::string first;
  for (int t = 0; t < 100; ++t) {
    const auto cfg = random_run_config(c.rng);
    const std::string text = config::serialize(cfg);
    auto back = config::parse(text);
    if (c.mutated) back.train.learning_rate = static_cast<float>(back.train.learning_rate);
    const bool ok = back == cfg && config::serialize(back) == text;
    if (!ok && first.empty()) first = config::to_json(cfg).dump().substr(0, 120);
    failures += ok ? 0 : 1;
  }
  return expect(failures == 0, "100 configs, " + std::to_string(failures) + " failed parse(serialize(c)) == c" +
                                   (first.empty() ? "" : "; first: " + first),
                static_cast<double>(failures));
}

// ---------------------------------------------------------------- scene

Outcome scene_construction(Context& c) {
  bool ok = true;
  std::string why;
  auto fail = [&](const std::string& w) {
    if (ok) why = w;
    ok = false;
  };
  for (int t = 0; t < 20; ++t) {
    scene::SceneParams sp;
    sp.height = 2 + c.rng.below(31);
    sp.width = 2 + c.rng.below(31);
    sp.num_classes = 2 + c.rng.below(6);
    sp.shapes = c.rng.below(8);
    sp.noise_std = c.rng.uniform(0, 0.1);
    sp.seed = c.rng.next_u64();
    const auto s = scene::generate_scene(sp);
    const std::size_t n = sp.height * sp.width;
    if (s.rgb.shape() != Shape{sp.height, sp.width, 3} || s.depth.shape() != Shape{sp.height, sp.width, 1} ||
        s.labels.labels.shape() != Shape{sp.height, sp.width}) {
      fail("shape");
    }
    bool background = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto layer = static_cast<std::size_t>(s.layers[i]);
      const std::size_t cls = layer == 0 ? 0 : 1 + (layer - 1) % (sp.num_classes - 1);
      background = background || layer == 0;
      if (layer > sp.shapes || static_cast<std::size_t>(s.labels.labels[i]) != cls) fail("layer/class");
      if (s.depth[i] != scene::layer_depth(layer, sp.shapes)) fail("depth");
    }
    if (!background) fail("no background pixel");
    auto again = sp;
    if (c.mutated) again.seed += 1;
    if (!(scene::generate_scene(again) == s)) fail("not deterministic");
  }
  return expect(ok, ok ? "20 scenes: shapes, layer classes, depth, background and determinism" : why);
}

// ---------------------------------------------------------------- gradcheck

Outcome grad_finite_difference_basics(Context& c) {
  double worst = 0;
  bool detects = true;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + c.rng.below(10);
    const auto x = normal<double>(c.rng, {n});
    const auto w = normal<double>(c.rng, {n});
    auto f = [&](const Tensor<double>& v) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += w[i] * std::sin(v[i]) + 0.25 * v[i] * v[i] * v[i];
      return s;
    };
    Tensor<double> analytic({n});
    for (std::size_t i = 0; i < n; ++i) analytic[i] = w[i] * std::cos(x[i]) + 0.75 * x[i] * x[i];
    if (c.mutated) analytic[0] *= 1.001;
    const auto numeric = grad::finite_difference_grad(f, x);
    const auto g = grad::compare_group("f", analytic, numeric, grad::kShallowTolerance);
    worst = std::max(worst, g.rel_error);
    // A 1e-3 relative corruption must always be caught.
    auto bad = analytic;
    bad[c.rng.below(n)] += 1e-3 * (1.0 + std::abs(analytic[0]));
    detects = detects && !grad::compare_group("bad", bad, numeric, grad::kShallowTolerance).passed;
  }
  const bool zeros_ok = grad::relative_error(0.0, 0.0) == 0.0;
  return expect(worst <= grad::kShallowTolerance && detects && zeros_ok,
                "worst rel " + fmt(worst) + (detects ? ", corruption detected" : ", corruption missed"), worst);
}

// ---------------------------------------------------------------- registry

std::vector<Property> build_registry() {
  std::vector<Property> r = {
      {"tensor.matmul_oracle", "tensor-core", "drops the last inner-product term", matmul_oracle},
      {"tensor.softmax_normalization", "tensor-core", "skips the normalizing division", softmax_normalization},
      {"tensor.softmax_shift_invariance", "tensor-core", "perturbs one shifted entry", softmax_shift_invariance},
      {"tensor.determinism", "tensor-core", "perturbs an input by one ulp", determinism},
      {"tensor.concat_slice_roundtrip", "tensor-core", "slices off by one", concat_slice_roundtrip},
      {"tensor.dptf_roundtrip", "tensor-core", "flips a payload byte", dptf_roundtrip},
      {"tensor.simd_equivalence", "tensor-core", "perturbs one kernel output", simd_equivalence},
      {"nn.backward_fd", "nn-primitives", "negates a parameter gradient", nn_backward_fd},
      {"nn.layernorm_statistics", "nn-primitives", "omits the mean subtraction", layernorm_statistics},
      {"nn.droppath_eval_identity", "nn-primitives", "scales in eval mode", droppath_eval_identity},
      {"nn.mlp2_final_activation", "nn-primitives", "drops the final activation", mlp2_final_activation},
      {"attention.shape_preservation", "attention-zoo", "expects an extra token", attention_shape_preservation},
      {"attention.locality", "attention-zoo", "perturbs inside the field", attention_locality},
      {"attention.degenerate_equivalences", "attention-zoo", "compares against a wrong degenerate case",
       attention_degenerate_equivalences},
      {"attention.window_oracle", "attention-zoo", "uses the shifted partition", attention_window_oracle},
      {"attention.noise_normalization", "attention-zoo", "drops the noise weights from the sum",
       attention_noise_normalization},
      {"attention.residual_laws", "attention-zoo", "keeps a non-zero output projection", attention_residual_laws},
      {"attention.backward_fd", "attention-zoo", "negates a parameter gradient", attention_backward_fd},
      {"dsim.locality", "dsim", "perturbs the query pixel itself", dsim_locality},
      {"dsim.attention_normalization", "dsim", "drops the last weight of each set", dsim_attention_normalization},
      {"dsim.value_antisymmetry", "dsim", "expects equal difference entries", dsim_value_antisymmetry},
      {"dsim.discriminator_contract", "dsim", "removes the final activation", dsim_discriminator_contract},
      {"dsim.discriminator_swap", "dsim", "swaps inputs without swapping discriminators", dsim_discriminator_swap},
      {"dsim.keys_oracle", "dsim", "gates the difference entry with beta", dsim_keys_oracle},
      {"dsim.assemble_shapes", "dsim", "expects one extra entry per pixel", dsim_assemble_shapes},
      {"dsim.reduction", "dsim", "adds a noise token to the single-key set", dsim_reduction},
      {"dsim.residual_identity", "dsim", "keeps a non-zero output projection", dsim_residual_identity},
      {"dsim.backward_fd", "dsim", "negates a parameter gradient", dsim_backward_fd},
      {"encoder.geometry", "iimib-encoder", "uses kernel + 1 in the closed form", encoder_geometry},
      {"encoder.residual_identity", "iimib-encoder", "keeps non-zero output projections", encoder_residual_identity},
      {"encoder.parameter_sharing", "iimib-encoder", "perturbs a per-modality norm instead",
       encoder_parameter_sharing},
      {"encoder.block_composition", "iimib-encoder", "skips the first RGB norm", encoder_block_composition},
      {"encoder.block_backward_fd", "iimib-encoder", "negates the feed-forward gradient", encoder_block_backward_fd},
      {"encoder.backward_fd", "iimib-encoder", "negates a parameter gradient", encoder_backward_fd},
      {"decoder.bilinear_laws", "decoder-metrics", "feeds the wrong cotangent", decoder_bilinear_laws},
      {"decoder.zero_logits", "decoder-metrics", "leaves a constant bias", decoder_zero_logits},
      {"metrics.oracle", "decoder-metrics", "swaps ground truth and prediction", metrics_oracle},
      {"metrics.invariants", "decoder-metrics", "permutes only the ground truth", metrics_invariants},
      {"cost.instrumented_exactness", "cost-model", "counts a wider grid", cost_instrumented_exactness},
      {"cost.scaling_exponents", "cost-model", "expects linear full attention", cost_scaling_exponents},
      {"cost.param_walk", "cost-model", "counts the full cross-attention variant", cost_param_walk},
      {"cost.invariants", "cost-model", "uses a two-token grid", cost_invariants},
      {"config.roundtrip", "cli", "rounds the learning rate to single precision", config_roundtrip},
      {"scene.construction", "cli", "regenerates with the next seed", scene_construction},
      {"grad.finite_difference_basics", "gradcheck-harness", "scales one analytic entry",
       grad_finite_difference_basics},
  };
  std::sort(r.begin(), r.end(), [](const Property& a, const Property& b) { return a.name < b.name; });
  return r;
}

}  // namespace

const std::vector<Property>& registry() {
  static const std::vector<Property> r = build_registry();
  return r;
}

bool SuiteReport::passed() const { return count(Status::kFail) == 0; }

std::size_t SuiteReport::count(Status s) const {
  return static_cast<std::size_t>(
      std::count_if(results.begin(), results.end(), [s](const PropertyResult& r) { return r.status == s; }));
}

std::string SuiteReport::to_jsonl() const {
  std::string out;
  for (const auto& r : results) {
    nlohmann::json j = {{"schema", kSchema},        {"seed", seed},         {"property", r.name},
                        {"module", r.module},       {"status", status_name(r.status)},
                        {"mutated", r.mutated},     {"metric", r.metric},   {"detail", r.detail}};
    out += j.dump() + "\n";
  }
  return out;
}

SuiteReport run_property_suite(const SuiteConfig& cfg) {
  SuiteReport report;
  report.seed = cfg.seed;
  for (const auto& p : registry()) {
    if (!cfg.filter.empty() && p.name.rfind(cfg.filter, 0) != 0) continue;
    Context ctx{Rng(cfg.seed).split(name_key(p.name)), cfg.ablation, cfg.discriminator, cfg.mutate.count(p.name) > 0};
    PropertyResult r{p.name, p.module, Status::kPass, "", 0, ctx.mutated, 0};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Outcome o = p.check(ctx);
      r.status = o.status;
      r.detail = o.detail;
      r.metric = o.metric;
    } catch (const std::exception& e) {
      r.status = Status::kFail;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.results.push_back(std::move(r));
  }
  return report;
}

}  // namespace dpx::props
