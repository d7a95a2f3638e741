#include "dpx/cost_model.hpp"

#include <cmath>
#include <ostream>

#include "json.hpp"

#include "dpx/error.hpp"

namespace dpx::cost {

using u64 = std::uint64_t;

std::uint64_t CostReport::total_params() const {
  u64 n = 0;
  for (const auto& c : components) n += c.params;
  return n;
}

std::uint64_t CostReport::total_flops() const {
  u64 n = 0;
  for (const auto& c : components) n += c.flops;
  return n;
}

std::uint64_t CostReport::flops_matching(std::string_view suffix) const {
  u64 n = 0;
  for (const auto& c : components) {
    if (c.name.size() >= suffix.size() && c.name.compare(c.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      n += c.flops;
    }
  }
  return n;
}

namespace {

u64 linear_flops(u64 rows, u64 in, u64 out) { return 2 * rows * in * out + rows * out; }
u64 linear_params(u64 in, u64 out) { return in * out + out; }
u64 layernorm_flops(u64 rows, u64 d) { return rows * (7 * d + 5); }

u64 activation_flops(nn::FinalActivation a, u64 elements) {
  switch (a) {
    case nn::FinalActivation::kSoftmax:
      return 4 * elements;
    case nn::FinalActivation::kSigmoid:
      return 3 * elements;
    case nn::FinalActivation::kNone:
      return 0;
  }
  return 0;
}

// Mlp2: first linear, GELU, second linear, final activation.
Component mlp2(std::string name, u64 rows, u64 in, u64 hidden, u64 out, nn::FinalActivation act) {
  return {std::move(name), linear_params(in, hidden) + linear_params(hidden, out),
          linear_flops(rows, in, hidden) + 9 * rows * hidden + linear_flops(rows, hidden, out) +
              activation_flops(act, rows * out)};
}

u64 sum_of_squares(const std::vector<std::size_t>& v) {
  u64 s = 0;
  for (auto x : v) s += static_cast<u64>(x) * x;
  return s;
}

u64 clipped_span_sum(std::size_t extent, long radius) {
  u64 s = 0;
  const long n = static_cast<long>(extent);
  for (long i = 0; i < n; ++i) s += static_cast<u64>(std::min(i + radius, n - 1) - std::max(i - radius, 0L) + 1);
  return s;
}

std::string dump_config(const attn::AttentionConfig& cfg) {
  return nlohmann::json{{"dim", cfg.dim},
                        {"heads", cfg.heads},
                        {"window", cfg.window},
                        {"radius", cfg.radius},
                        {"noise_tokens", cfg.noise_tokens}}
      .dump();
}

void append(CostReport& into, const CostReport& part, const std::string& prefix) {
  for (const auto& c : part.components) into.components.push_back({prefix + c.name, c.params, c.flops});
}

}  // namespace

std::uint64_t attention_pairs(attn::Variant v, const attn::AttentionConfig& cfg, std::size_t height,
                              std::size_t width, bool shifted) {
  const u64 n = static_cast<u64>(height) * width;
  u64 base = 0;
  switch (v) {
    case attn::Variant::kSelf:
    case attn::Variant::kFull:
      base = n * n;
      break;
    case attn::Variant::kShiftedWindow:
      if (cfg.window > std::min(height, width)) {
        throw ConfigError("window " + std::to_string(cfg.window) + " exceeds the grid");
      }
      base = sum_of_squares(attn::window_segments(height, cfg.window, shifted)) *
             sum_of_squares(attn::window_segments(width, cfg.window, shifted));
      break;
    case attn::Variant::kLocal:
      base = clipped_span_sum(height, cfg.radius) * clipped_span_sum(width, cfg.radius);
      break;
    case attn::Variant::kPixelwise:
      base = n;
      break;
    case attn::Variant::kDsim:
      throw ConfigError("dsim pairs depend on the dsim configuration");
  }
  return base + n * cfg.noise_tokens;
}

CostReport count_attention(attn::Variant v, const attn::AttentionConfig& cfg, std::size_t height, std::size_t width,
                           bool shifted) {
  cfg.validate();
  if (v == attn::Variant::kDsim) {
    dsim::DsimConfig d;
    d.dim = cfg.dim;
    d.heads = cfg.heads;
    d.options.noise_tokens = cfg.noise_tokens;
    return count_dsim(d, height, width);
  }
  const u64 n = static_cast<u64>(height) * width, d = cfg.dim, h = cfg.heads;
  // Noise rows are projected once per direction, not per pixel.
  const u64 noise = cfg.noise_tokens;
  const u64 pairs = attention_pairs(v, cfg, height, width, shifted);
  CostReport r;
  r.variant = std::string(attn::variant_name(v));
  r.height = height;
  r.width = width;
  r.config = dump_config(cfg);
  r.components.push_back({"q_proj", linear_params(d, d), 2 * linear_flops(n, d, d)});
  r.components.push_back({"k_proj", linear_params(d, d), 2 * linear_flops(n + noise, d, d)});
  r.components.push_back({"v_proj", linear_params(d, d), 2 * linear_flops(n + noise, d, d)});
  r.components.push_back({"noise", 2 * noise * d, 0});
  r.components.push_back({"attention", 0, 2 * pairs * (4 * d + 5 * h)});
  r.components.push_back({"o_proj", linear_params(d, d), 2 * linear_flops(n, d, d)});
  return r;
}

CostReport count_dsim(const dsim::DsimConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  const u64 n = static_cast<u64>(height) * width, d = cfg.dim, heads = cfg.heads, hid = cfg.hidden();
  const u64 noise = cfg.options.noise_tokens, per_pixel = cfg.keys_per_pixel();
  const auto& ab = cfg.options.ablation;
  const auto act = cfg.options.discriminator == dsim::DiscriminatorVariant::kMlp2Softmax
                       ? nn::FinalActivation::kSoftmax
                       : nn::FinalActivation::kSigmoid;
  CostReport r;
  r.variant = "dsim";
  r.height = height;
  r.width = width;
  r.config = nlohmann::json{{"dim", cfg.dim},
                            {"heads", cfg.heads},
                            {"noise_tokens", noise},
                            {"discriminator_hidden", hid},
                            {"discriminator", std::string(dsim::discriminator_name(cfg.options.discriminator))},
                            {"enable_similarity", ab.enable_similarity},
                            {"enable_difference", ab.enable_difference},
                            {"enable_learning_factor", ab.enable_learning_factor}}
                 .dump();

  Component fd_r = mlp2("f_d_rgb", n, d, hid, d, act);
  Component fd_d = mlp2("f_d_depth", n, d, hid, d, act);
  Component fs = mlp2("f_s", n, 2 * d, hid, d, act);
  if (!ab.enable_difference) fd_r.flops = fd_d.flops = 0;
  if (!ab.enable_similarity) fs.flops = 0;
  r.components.push_back({"difference_inputs", 0, ab.enable_difference ? 2 * n * d : 0});
  r.components.push_back(fd_r);
  r.components.push_back(fd_d);
  r.components.push_back(fs);
  r.components.push_back({"factors", 4 * d, 0});
  r.components.push_back({"noise", 4 * noise * d, 0});
  // Only one of lt_q / lt_k feeds the keys; both are allocated.
  r.components.push_back({"lt_q", linear_params(d, d), 2 * linear_flops(n, d, d)});
  r.components.push_back({"lt_k", linear_params(d, d), 0});
  r.components.push_back({"lt_v", linear_params(d, d), 2 * linear_flops(n, d, d)});
  const u64 gates = ab.enable_difference ? 4 : 2;
  r.components.push_back({"key_gating", 0, gates * 2 * n * d});
  r.components.push_back({"value_difference", 0, ab.enable_difference ? 2 * n * d : 0});
  r.components.push_back({"w_q", linear_params(d, d), 2 * linear_flops(n, d, d)});
  r.components.push_back({"w_k", linear_params(d, d), 2 * linear_flops(n * per_pixel, d, d)});
  r.components.push_back({"w_v", linear_params(d, d), 2 * linear_flops(n * per_pixel, d, d)});
  r.components.push_back({"attention", 0, 2 * n * per_pixel * (4 * d + 5 * heads)});
  r.components.push_back({"w_o", linear_params(d, d), 2 * linear_flops(n, d, d)});
  return r;
}

CostReport count_model(const ModelConfig& cfg) {
  cfg.validate();
  const auto& e = cfg.encoder;
  const auto geom = e.stage_geometry();
  CostReport r;
  r.variant = std::string(attn::variant_name(e.inter));
  r.height = e.height;
  r.width = e.width;
  r.config = nlohmann::json{{"height", e.height},
                            {"width", e.width},
                            {"inter", r.variant},
                            {"decoder_dim", cfg.decoder_dim},
                            {"num_classes", cfg.num_classes}}
                 .dump();

  // Patch embedding (separate parameters per modality) and its layer norms.
  {
    const auto& s = e.stages[0];
    const u64 rows = static_cast<u64>(geom[0].first) * geom[0].second;
    const u64 in = static_cast<u64>(s.patch.kernel) * s.patch.kernel * e.in_channels;
    r.components.push_back({"embed.proj", 2 * linear_params(in, s.dim), 2 * linear_flops(rows, in, s.dim)});
    r.components.push_back({"embed.norm", 2 * 2 * s.dim, 2 * layernorm_flops(rows, s.dim)});
  }
  for (std::size_t si = 0; si < 4; ++si) {
    const auto& s = e.stages[si];
    const u64 rows = static_cast<u64>(geom[si].first) * geom[si].second, d = s.dim;
    const std::string tag = "stage" + std::to_string(si + 1) + ".";
    if (si > 0) {
      // Merge projection shared across modalities, applied to both.
      const u64 in = static_cast<u64>(s.patch.kernel) * s.patch.kernel * e.stages[si - 1].dim;
      r.components.push_back({tag + "merge.proj", linear_params(in, d), 2 * linear_flops(rows, in, d)});
      r.components.push_back({tag + "merge.norm", 2 * 2 * d, 2 * layernorm_flops(rows, d)});
    }
    for (std::size_t b = 0; b < s.depth; ++b) {
      const auto spec = enc::block_spec(e, si, b);
      const std::string bt = tag + "block" + std::to_string(b) + ".";
      r.components.push_back({bt + "norm", 4 * 2 * d,
                              (spec.with_inter ? 4 : 2) * layernorm_flops(rows, d)});
      append(r, count_attention(attn::Variant::kSelf, spec.intra, geom[si].first, geom[si].second), bt + "intra.");
      u64 residual = 2 * rows * d;  // intra
      if (spec.with_inter) {
        const CostReport inter = spec.inter == attn::Variant::kDsim
                                     ? count_dsim(spec.dsim, geom[si].first, geom[si].second)
                                     : count_attention(spec.inter, spec.attention, geom[si].first, geom[si].second,
                                                       spec.shifted);
        append(r, inter, bt + "inter.");
        residual += 2 * rows * d;
      }
      const u64 hidden = e.mlp_ratio * d;
      Component ffn = mlp2(bt + "ffn", rows, d, hidden, d, nn::FinalActivation::kNone);
      ffn.flops *= 2;  // both modalities
      r.components.push_back(ffn);
      residual += 2 * rows * d;
      r.components.push_back({bt + "residual", 0, residual});
    }
  }
  // Decoder.
  const u64 rows1 = static_cast<u64>(geom[0].first) * geom[0].second, emb = cfg.decoder_dim;
  for (std::size_t si = 0; si < 4; ++si) {
    const u64 rows = static_cast<u64>(geom[si].first) * geom[si].second, d = e.stages[si].dim;
    const bool resize = geom[si] != geom[0];
    r.components.push_back({"decoder.stage" + std::to_string(si + 1), linear_params(d, emb),
                            rows * d + linear_flops(rows, d, emb) + (resize ? 7 * rows1 * emb : 0)});
  }
  Component head = mlp2("decoder.head", rows1, 4 * emb, emb, cfg.num_classes, nn::FinalActivation::kNone);
  const bool final_resize = geom[0].first != e.height || geom[0].second != e.width;
  head.flops += final_resize ? 7 * static_cast<u64>(e.height) * e.width * cfg.num_classes : 0;
  r.components.push_back(head);
  return r;
}

CostReport count_model(const ModelConfig& cfg, attn::Variant inter) {
  ModelConfig c = cfg;
  c.encoder.inter = inter;
  return count_model(c);
}

Reduction compare_values(const std::string& base_name, double base_params, double base_flops,
                         const std::string& ours_name, double ours_params, double ours_flops) {
  if (base_params == 0.0 || base_flops == 0.0) {
    throw DomainError("compare_variants: baseline '" + base_name + "' has a zero column");
  }
  return {base_name, ours_name, (base_params - ours_params) / base_params * 100.0,
          (base_flops - ours_flops) / base_flops * 100.0};
}

Reduction compare_variants(const CostReport& base, const CostReport& ours) {
  return compare_values(base.variant, static_cast<double>(base.total_params()),
                        static_cast<double>(base.total_flops()), ours.variant,
                        static_cast<double>(ours.total_params()), static_cast<double>(ours.total_flops()));
}

void write_jsonl(std::ostream& os, const CostReport& r) {
  for (const auto& c : r.components) {
    os << nlohmann::json{{"schema", "dpx.cost.v1"},
                         {"variant", r.variant},
                         {"height", r.height},
                         {"width", r.width},
                         {"component", c.name},
                         {"params", c.params},
                         {"flops", c.flops}}
              .dump()
       << '\n';
  }
  os << nlohmann::json{{"schema", "dpx.cost.v1"},
                       {"variant", r.variant},
                       {"height", r.height},
                       {"width", r.width},
                       {"component", "total"},
                       {"params", r.total_params()},
                       {"flops", r.total_flops()},
                       {"config", nlohmann::json::parse(r.config)}}
            .dump()
     << '\n';
}

void write_csv(std::ostream& os, const std::vector<CostReport>& reports) {
  os << "variant,height,width,component,params,flops\n";
  for (const auto& r : reports) {
    for (const auto& c : r.components) {
      os << r.variant << ',' << r.height << ',' << r.width << ',' << c.name << ',' << c.params << ',' << c.flops
         << '\n';
    }
    os << r.variant << ',' << r.height << ',' << r.width << ",total," << r.total_params() << ',' << r.total_flops()
       << '\n';
  }
}

void write_comparison_jsonl(std::ostream& os, const Reduction& r) {
  os << nlohmann::json{{"schema", "dpx.comparison.v1"},
                       {"base", r.base},
                       {"ours", r.ours},
                       {"params_reduction_pct", r.params_pct},
                       {"flops_reduction_pct", r.flops_pct}}
            .dump()
     << '\n';
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("loglog_slope: need >= 2 paired samples");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0 || y[i] <= 0) throw DomainError("loglog_slope: samples must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace dpx::cost
