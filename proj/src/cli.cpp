#include "dpx/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dpx/checkpoint.hpp"
#include "dpx/error.hpp"
#include "dpx/gradcheck.hpp"
#include "dpx/io.hpp"
#include "dpx/metrics.hpp"
#include "dpx/model.hpp"
#include "dpx/property_suite.hpp"
#include "dpx/scene.hpp"
#include "dpx/train.hpp"

namespace dpx::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::string variant;
  std::string variants;
  std::string ablation;
  std::string out;
  std::string reference;
  bool csv = false;
  std::optional<std::size_t> steps;
  double min_miou = 0.95;
  std::string gt, pred;
  std::optional<std::size_t> classes;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v << '%';
  return os.str();
}

// Precedence: defaults < --config file < DPX_SEED < explicit flags.
config::RunConfig resolve(const std::string& command, const Flags& f) {
  config::RunConfig c;
  if (!f.config_file.empty()) c = config::load_file(f.config_file);
  c.command = command;
  config::apply_env(c);
  if (f.seed) c.seed = *f.seed;
  if (!f.preset.empty()) {
    const auto keep = c.model.encoder.dsim;
    try {
      c.model.encoder = enc::EncoderConfig::preset(f.preset);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("--preset: ") + e.what());
    }
    c.model.encoder.dsim = keep;
    c.preset = f.preset;
  }
  if (!f.variants.empty() && !f.variant.empty()) throw UsageError("use either --variant or --variants, not both");
  if (!f.variants.empty()) c.variants = config::parse_variant_list(f.variants);
  if (!f.variant.empty()) c.variants = config::parse_variant_list(f.variant);
  if (!f.ablation.empty()) config::apply_ablation_list(f.ablation, c.model.encoder.dsim);
  if (!f.out.empty()) c.out = f.out;
  if (!f.reference.empty()) c.reference = f.reference;
  if (f.steps) c.train.steps = *f.steps;
  if (command != "cost" && !c.variants.empty()) {
    if (c.variants.front() == attn::Variant::kSelf) throw UsageError("'sa' is not an inter-modal variant");
    c.model.encoder.inter = c.variants.front();
  }
  return c;
}

scene::SceneParams scene_params(const config::RunConfig& c) {
  scene::SceneParams p;
  p.height = c.model.encoder.height;
  p.width = c.model.encoder.width;
  p.num_classes = c.model.num_classes;
  p.shapes = c.train.scene_shapes;
  p.noise_std = c.train.scene_noise;
  p.seed = c.seed;
  return p;
}

// ---- cost

int cmd_cost(const config::RunConfig& c, const Flags& f, std::ostream& out) {
  c.model.validate();
  if (c.variants.empty()) throw UsageError("cost: no variants selected");
  std::vector<cost::CostReport> reports;
  for (attn::Variant v : c.variants) {
    cost::CostReport r;
    if (v == attn::Variant::kSelf) {
      // Intra-modal attention only: the encoder without an inter-modal stage.
      ModelConfig m = c.model;
      m.encoder.dsim.ablation.enable_paca = false;
      r = cost::count_model(m);
      r.variant = "sa";
    } else {
      r = cost::count_model(c.model, v);
    }
    auto file = open_out(fs::path(c.out) / ("cost_" + r.variant + ".jsonl"));
    cost::write_jsonl(file, r);
    out << r.variant << ": params " << r.total_params() << ", flops " << r.total_flops() << " at " << r.height << 'x'
        << r.width << '\n';
    reports.push_back(std::move(r));
  }
  if (reports.size() > 1) {
    auto file = open_out(fs::path(c.out) / "comparison.jsonl");
    for (std::size_t i = 1; i < reports.size(); ++i) {
      const auto red = cost::compare_variants(reports[0], reports[i]);
      cost::write_comparison_jsonl(file, red);
      out << red.base << " -> " << red.ours << ": params reduced " << pct(red.params_pct) << ", flops reduced "
          << pct(red.flops_pct) << '\n';
    }
  }
  if (f.csv) {
    auto file = open_out(fs::path(c.out) / "cost.csv");
    cost::write_csv(file, reports);
  }
  if (!c.reference.empty()) {
    auto file = open_out(fs::path(c.out) / "reference_comparison.jsonl");
    for (const auto& rc : compare_reference(c.reference)) {
      json j{{"schema", "dpx.reference_comparison.v1"},
             {"dataset", rc.dataset},
             {"height", rc.height},
             {"width", rc.width},
             {"base", rc.reduction.base},
             {"ours", rc.reduction.ours},
             {"params_reduction_pct", rc.reduction.params_pct},
             {"flops_reduction_pct", rc.reduction.flops_pct}};
      file << j.dump() << '\n';
      out << "reference " << rc.dataset << " (" << rc.height << 'x' << rc.width << "): " << rc.reduction.base << " -> "
          << rc.reduction.ours << " params reduced " << pct(rc.reduction.params_pct) << ", flops reduced "
          << pct(rc.reduction.flops_pct) << '\n';
    }
  }
  return kOk;
}

// ---- shapes

int cmd_shapes(const config::RunConfig& c, std::ostream& out) {
  c.model.validate();
  const auto& e = c.model.encoder;
  Rng rng(c.seed);
  Rng init = rng.split(1), data = rng.split(2);
  const auto model = Model<float>::init(c.model, init);
  const std::size_t n = e.height * e.width;
  ModelCache<float> cache;
  const auto logits =
      model_forward(model, data.normal_tensor<float>({n, 3}, 1.0), data.normal_tensor<float>({n, 1}, 1.0), &cache);
  const auto geom = e.stage_geometry();
  auto file = open_out(fs::path(c.out) / "shapes.jsonl");
  bool ok = true;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& stage = model.encoder.stages[s];
    const std::size_t tokens = geom[s].first * geom[s].second;
    // The encoder re-derives every stage from the cached block inputs.
    const auto& blocks = cache.encoder.blocks[s];
    const bool stage_ok = stage.blocks.size() == e.stages[s].depth && blocks.size() == e.stages[s].depth &&
                          std::all_of(blocks.begin(), blocks.end(), [&](const auto& b) {
                            return b.x.rgb.shape() == Shape{tokens, e.stages[s].dim} &&
                                   b.x.depth.shape() == Shape{tokens, e.stages[s].dim};
                          });
    ok = ok && stage_ok;
    file << json{{"schema", "dpx.shapes.v1"},
                 {"stage", s + 1},
                 {"height", geom[s].first},
                 {"width", geom[s].second},
                 {"dim", e.stages[s].dim},
                 {"heads", e.stages[s].heads},
                 {"blocks", stage.blocks.size()},
                 {"passed", stage_ok}}
                .dump()
         << '\n';
    out << "stage " << s + 1 << ": " << geom[s].first << 'x' << geom[s].second << 'x' << e.stages[s].dim << ", "
        << stage.blocks.size() << " blocks, " << e.stages[s].heads << " heads " << (stage_ok ? "ok" : "MISMATCH")
        << '\n';
  }
  const bool logits_ok = logits.shape() == Shape{n, c.model.num_classes};
  ok = ok && logits_ok;
  file << json{{"schema", "dpx.shapes.v1"},
               {"stage", "logits"},
               {"height", e.height},
               {"width", e.width},
               {"dim", c.model.num_classes},
               {"passed", logits_ok}}
              .dump()
       << '\n';
  out << "logits: " << shape_str(logits.shape()) << (logits_ok ? " ok" : " MISMATCH") << '\n';
  return ok ? kOk : kCheckFailed;
}

// ---- gradcheck

std::vector<attn::Variant> inter_variants() {
  return {attn::Variant::kFull, attn::Variant::kShiftedWindow, attn::Variant::kLocal, attn::Variant::kPixelwise,
          attn::Variant::kDsim};
}

// Two chained blocks (plain then shifted) on a small grid, double precision.
grad::GradCheckReport stack_instance(const config::RunConfig& c, std::size_t i) {
  Rng rng = Rng(c.seed).split(1000 + i);
  enc::EncoderConfig e = c.model.encoder;
  e.inter = inter_variants()[i % 5];
  const std::size_t h = 2 + rng.below(2), w = 2 + rng.below(2);
  for (auto& s : e.stages) {
    s.dim = 4;
    s.heads = 2;
    s.depth = 2;
  }
  e.window = 2;
  e.mlp_ratio = 2;
  e.baseline_noise_tokens = e.dsim.noise_tokens;
  e.drop_path = {};
  attn::InitOptions init;
  init.zero_output_projection = false;
  init.weight_std = 0.5;
  std::array<enc::BlockSpec, 2> specs{enc::block_spec(e, 0, 0), enc::block_spec(e, 0, 1)};
  std::array<enc::IimibBlock<double>, 2> blocks{enc::init_block<double>(specs[0], e.mlp_ratio, rng, init),
                                                enc::init_block<double>(specs[1], e.mlp_ratio, rng, init)};
  attn::TokenGrid<double> xr{h, w, rng.normal_tensor<double>({h * w, 4}, 1.0)};
  attn::TokenGrid<double> xd{h, w, rng.normal_tensor<double>({h * w, 4}, 1.0)};
  const auto pr = rng.normal_tensor<double>({h * w, 4}, 1.0), pd = rng.normal_tensor<double>({h * w, 4}, 1.0);

  auto forward = [&](std::array<typename enc::IimibBlock<double>::Cache, 2>* caches) {
    auto a = enc::iimib_forward(specs[0], blocks[0], xr, xd, caches ? &(*caches)[0] : nullptr);
    return enc::iimib_forward(specs[1], blocks[1], a.rgb, a.depth, caches ? &(*caches)[1] : nullptr);
  };
  std::array<typename enc::IimibBlock<double>::Cache, 2> caches;
  forward(&caches);
  std::array<enc::IimibBlock<double>, 2> grads = blocks;
  for (std::size_t b = 0; b < 2; ++b) {
    grads[b].visit([](std::string_view, Tensor<double>& t) { t.fill(0.0); }, specs[b].inter, specs[b].with_inter);
  }
  const auto g1 = enc::iimib_backward(specs[1], blocks[1], caches[1], pr, pd, grads[1]);
  const auto g0 = enc::iimib_backward(specs[0], blocks[0], caches[0], g1.rgb, g1.depth, grads[0]);
  auto loss = [&] {
    const auto y = forward(nullptr);
    return grad::probe(y.rgb.feature, pr) + grad::probe(y.depth.feature, pd);
  };

  grad::GradCheckReport rep;
  rep.label = "iimib_stack_" + std::string(attn::variant_name(e.inter)) + "_" + std::to_string(i);
  rep.tolerance = grad::kDeepTolerance;
  const double floor = grad::roundoff_floor(loss(), rep.step);
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<std::pair<std::string, Tensor<double>*>> ps, gs;
    blocks[b].visit([&](std::string_view n, Tensor<double>& t) { ps.emplace_back(std::string(n), &t); },
                    specs[b].inter, specs[b].with_inter);
    grads[b].visit([&](std::string_view n, Tensor<double>& t) { gs.emplace_back(std::string(n), &t); },
                   specs[b].inter, specs[b].with_inter);
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const auto numeric = grad::numeric_grad_inplace(*ps[k].second, loss, rep.step);
      rep.groups.push_back(grad::compare_group("block" + std::to_string(b) + "." + ps[k].first, *gs[k].second,
                                               numeric, rep.tolerance, floor));
    }
  }
  grad::check_input(rep, "xr", xr.feature, g0.rgb, loss);
  grad::check_input(rep, "xd", xd.feature, g0.depth, loss);
  return rep;
}

grad::GradCheckReport model_instance(const config::RunConfig& c) {
  Rng rng = Rng(c.seed).split(7);
  ModelConfig mc = c.model;
  mc.encoder.drop_path = {};
  // Smallest input every stride divides, at least 8 pixels a side.
  std::size_t stride = 1;
  for (const auto& s : mc.encoder.stages) stride *= s.patch.stride;
  const std::size_t side = stride * ((8 + stride - 1) / stride);
  mc.encoder.height = std::min(mc.encoder.height, side);
  mc.encoder.width = std::min(mc.encoder.width, side);
  attn::InitOptions init;
  init.zero_output_projection = false;
  init.weight_std = 0.3;
  auto m = Model<double>::init(mc, rng, init);
  const std::size_t n = mc.encoder.height * mc.encoder.width;
  auto rgb = rng.uniform_tensor<double>({n, 3}, 0, 1), depth = rng.uniform_tensor<double>({n, 1}, 0, 1);
  // Unit-scale loss keeps the round-off floor of the difference quotient near 1e-8.
  const auto probe = rng.normal_tensor<double>({n, mc.num_classes}, 1.0 / static_cast<double>(n * mc.num_classes));
  ModelCache<double> cache;
  model_forward(m, rgb, depth, &cache);
  auto g = zeros_like_params<double>(m);
  model_backward(m, cache, probe, g);
  grad::GradCheckReport rep;
  rep.label = "model_" + std::string(attn::variant_name(mc.encoder.inter)) + "_" + std::to_string(mc.encoder.height) +
              "x" + std::to_string(mc.encoder.width);
  rep.tolerance = grad::kDeepTolerance;
  rep.max_samples = c.gradcheck.max_samples;
  rep.sample_seed = c.seed + 1;
  grad::check_params(rep, m, g, [&] { return grad::probe(model_forward(m, rgb, depth), probe); });
  return rep;
}

int cmd_gradcheck(const config::RunConfig& c, std::ostream& out) {
  c.model.validate();
  props::SuiteConfig sc;
  sc.seed = c.seed;
  sc.ablation = c.model.encoder.dsim.ablation;
  sc.discriminator = c.model.encoder.dsim.discriminator;
  const auto suite = props::run_property_suite(sc);
  {
    auto file = open_out(fs::path(c.out) / "properties.jsonl");
    file << suite.to_jsonl();
  }
  for (const auto& r : suite.results) {
    if (r.status != props::Status::kPass) out << r.name << ": " << props::status_name(r.status) << " (" << r.detail << ")\n";
  }
  out << "properties: " << suite.count(props::Status::kPass) << " passed, " << suite.count(props::Status::kFail)
      << " failed, " << suite.count(props::Status::kSkip) << " skipped\n";

  auto file = open_out(fs::path(c.out) / "gradcheck.jsonl");
  std::size_t failed = 0;
  double worst = 0;
  for (std::size_t i = 0; i < c.gradcheck.instances; ++i) {
    const auto rep = stack_instance(c, i);
    file << rep.to_jsonl();
    worst = std::max(worst, rep.worst_rel_error());
    if (!rep.passed()) {
      ++failed;
      out << rep.label << ": FAIL worst rel " << rep.worst_rel_error() << '\n';
    }
  }
  out << "block stacks: " << c.gradcheck.instances - failed << '/' << c.gradcheck.instances << " passed, worst rel "
      << worst << '\n';
  const auto full = model_instance(c);
  file << full.to_jsonl();
  out << full.label << ": " << (full.passed() ? "passed" : "FAILED") << ", worst rel " << full.worst_rel_error()
      << " over " << full.groups.size() << " tensors\n";
  return suite.passed() && failed == 0 && full.passed() ? kOk : kCheckFailed;
}

// ---- smoke-train

json step_json(const train::StepRecord& r) {
  return {{"schema", "dpx.train.v1"}, {"step", r.step},           {"loss", r.loss},
          {"miou", r.miou},           {"macc", r.macc},           {"pixel_acc", r.pixel_acc}};
}

int cmd_smoke_train(const config::RunConfig& c, const Flags& f, std::ostream& out) {
  c.model.validate();
  const auto sc = scene::generate_scene(scene_params(c));
  auto log = open_out(fs::path(c.out) / "train_log.jsonl");
  const std::size_t every = std::max<std::size_t>(c.train.log_every, 1);
  train::TrainOptions opts{c.train.steps, c.train.learning_rate, c.seed};
  auto result = train::smoke_train(c.model, sc, opts, [&](const train::StepRecord& r) {
    if (r.step % every == 0 || r.step == c.train.steps) log << step_json(r).dump() << '\n';
  });
  const auto& fin = result.final();
  ckpt::save<float>(fs::path(c.out) / "checkpoint", result.model, config::serialize(c));
  const bool ok = fin.miou >= f.min_miou;
  json summary = step_json(fin);
  summary["schema"] = "dpx.train_summary.v1";
  summary["min_miou"] = f.min_miou;
  summary["passed"] = ok;
  open_out(fs::path(c.out) / "final_metrics.json") << summary.dump(2) << '\n';
  out << "step " << fin.step << ": loss " << fin.loss << ", mIoU " << fin.miou << ", mAcc " << fin.macc
      << ", pixel acc " << fin.pixel_acc << (ok ? "" : "  (below target " + std::to_string(f.min_miou) + ")") << '\n';
  return ok ? kOk : kCheckFailed;
}

// ---- metrics

int cmd_metrics(const config::RunConfig& c, const Flags& f, std::ostream& out) {
  if (f.gt.empty() || f.pred.empty()) throw UsageError("metrics: --gt and --pred label files are required");
  const std::size_t k = f.classes.value_or(c.model.num_classes);
  const auto gt = metrics::read_labels(f.gt), pred = metrics::read_labels(f.pred);
  const auto cm = metrics::confusion(gt, pred, k);
  json counts = json::array();
  for (std::size_t i = 0; i < k; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < k; ++j) row.push_back(cm.at(i, j));
    counts.push_back(row);
  }
  const json j{{"schema", "dpx.metrics.v1"},       {"classes", k},
               {"pixels", cm.total()},             {"miou", metrics::miou(cm)},
               {"macc", metrics::macc(cm)},        {"pixel_acc", metrics::pixel_acc(cm)},
               {"confusion", counts}};
  open_out(fs::path(c.out) / "metrics.jsonl") << j.dump() << '\n';
  out << "mIoU " << metrics::miou(cm) << ", mAcc " << metrics::macc(cm) << ", pixel acc " << metrics::pixel_acc(cm)
      << " over " << cm.total() << " pixels\n";
  return kOk;
}

// ---- gen-scene

int cmd_gen_scene(const config::RunConfig& c, std::ostream& out) {
  const auto p = scene_params(c);
  const auto sc = scene::generate_scene(p);
  const fs::path dir(c.out);
  io::write_file(dir / "rgb.dptf", sc.rgb);
  io::write_file(dir / "depth.dptf", sc.depth);
  metrics::write_labels(dir / "labels.dptf", sc.labels);
  const json j{{"schema", "dpx.scene.v1"}, {"height", p.height},       {"width", p.width},
               {"num_classes", p.num_classes}, {"shapes", p.shapes}, {"noise_std", p.noise_std},
               {"seed", p.seed}};
  open_out(dir / "scene.json") << j.dump(2) << '\n';
  out << "scene " << p.height << 'x' << p.width << ", " << p.num_classes << " classes, " << p.shapes
      << " shapes written to " << dir.string() << '\n';
  return kOk;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_file, "JSON run config (dpx.config.v1)");
  sub->add_option("--seed", f.seed, "Seed; overrides the config file and DPX_SEED");
  sub->add_option("--preset", f.preset, "Encoder preset: default, toy, mit-b3-like, mit-b5-like");
  sub->add_option("--variant", f.variant, "Inter-modal variant: sa, ca, swca, lca, pwca, dsim");
  sub->add_option("--variants", f.variants, "Comma-separated variants (cost compares the first against the rest)");
  sub->add_option("--ablation", f.ablation, "Comma-separated switches: " + config::ablation_tokens());
  sub->add_option("--out", f.out, "Output directory");
}

}  // namespace

std::vector<ReferenceComparison> compare_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("reference file '" + path + "' cannot be opened");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("reference file '" + path + "': " + e.what());
  }
  try {
    if (j.at("schema") != "dpx.reference_costs.v1") throw UsageError("reference file '" + path + "': unknown schema");
    const std::string base = j.at("baseline_method"), ours = j.at("ours_method");
    const json *b = nullptr, *o = nullptr;
    for (const auto& m : j.at("methods")) {
      if (m.at("method") == base) b = &m;
      if (m.at("method") == ours) o = &m;
    }
    if (!b || !o) throw UsageError("reference file '" + path + "': methods '" + base + "' and '" + ours + "' required");
    std::vector<ReferenceComparison> res;
    for (const auto& [name, bd] : b->at("datasets").items()) {
      if (!o->at("datasets").contains(name)) continue;
      const auto& od = o->at("datasets").at(name);
      ReferenceComparison rc;
      rc.dataset = name;
      rc.height = bd.at("input").at(0);
      rc.width = bd.at("input").at(1);
      rc.reduction = cost::compare_values(base, b->at("params_m"), bd.at("flops_g"), ours, o->at("params_m"),
                                          od.at("flops_g"));
      res.push_back(rc);
    }
    std::sort(res.begin(), res.end(), [](const auto& x, const auto& y) { return x.dataset < y.dataset; });
    return res;
  } catch (const json::exception& e) {
    throw UsageError("reference file '" + path + "': " + e.what());
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"RGB-D pixel-aware fusion attention toolkit", "dpx"};
  app.require_subcommand(1);
  Flags f;
  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"cost", "Analytic parameter and FLOP reports per variant"},
      {"shapes", "Instantiate the model and check every stage geometry"},
      {"gradcheck", "Property suite plus finite-difference checks"},
      {"smoke-train", "Overfit one synthetic scene with gradient descent"},
      {"metrics", "Segmentation metrics of a prediction against ground truth"},
      {"gen-scene", "Write a synthetic RGB-D scene"},
  };
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub, f);
    const std::string name = cmd.name;
    if (name == "cost") {
      sub->add_option("--reference", f.reference, "Published-cost file (dpx.reference_costs.v1) to compare");
      sub->add_flag("--csv", f.csv, "Also write cost.csv");
    } else if (name == "smoke-train") {
      sub->add_option("--steps", f.steps, "Gradient steps");
      sub->add_option("--min-miou", f.min_miou, "Final mIoU required for a zero exit status");
    } else if (name == "metrics") {
      sub->add_option("--gt", f.gt, "Ground-truth label file (DPTF int32)");
      sub->add_option("--pred", f.pred, "Predicted label file (DPTF int32)");
      sub->add_option("--classes", f.classes, "Class count (defaults to the model's)");
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const auto c = resolve(command, f);
    fs::create_directories(c.out);
    if (command == "cost") return cmd_cost(c, f, out);
    if (command == "shapes") return cmd_shapes(c, out);
    if (command == "gradcheck") return cmd_gradcheck(c, out);
    if (command == "smoke-train") return cmd_smoke_train(c, f, out);
    if (command == "metrics") return cmd_metrics(c, f, out);
    return cmd_gen_scene(c, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace dpx::cli
