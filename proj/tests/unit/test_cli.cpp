#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "dpx/cli.hpp"
#include "dpx/config.hpp"
#include "dpx/scene.hpp"
#include "dpx/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run dpx_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dpx::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Fresh empty directory per test.
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dpx_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::size_t file_count(const fs::path& dir) {
  return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}));
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  return json::parse(f);
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("cost with two variants writes two reports and one comparison") {
  const auto dir = scratch("cost");
  const auto r = dpx_run({"cost", "--preset", "toy", "--variants", "ca,dsim", "--out", dir.string()});
  CHECK(r.code == dpx::cli::kOk);
  CHECK(file_count(dir) == 3);
  CHECK(fs::exists(dir / "cost_ca.jsonl"));
  CHECK(fs::exists(dir / "cost_dsim.jsonl"));
  CHECK(fs::exists(dir / "comparison.jsonl"));
}

TEST_CASE("cost against the bundled reference prints the published reductions") {
  const auto dir = scratch("reference");
  const auto r = dpx_run({"cost", "--preset", "toy", "--variants", "ca,dsim", "--reference",
                          std::string(DPX_DATA_DIR) + "/published_attention_costs.json", "--out", dir.string()});
  CHECK(r.code == dpx::cli::kOk);
  CHECK(r.out.find("params reduced 83.83%, flops reduced 72.53%") != std::string::npos);
}

TEST_CASE("unknown variant is a usage error listing the valid names") {
  const auto r = dpx_run({"cost", "--variants", "ca,bogus", "--out", scratch("bogus").string()});
  CHECK(r.code == dpx::cli::kUsage);
  CHECK(r.err.find("sa, ca, swca, lca, pwca, dsim") != std::string::npos);
}

TEST_CASE("bad config fields are usage errors naming the field") {
  const auto dir = scratch("badcfg");
  write_text(dir / "cfg.json", R"({"schema": "dpx.config.v1", "model": {"decoder_dims": 3}})");
  const auto r = dpx_run({"shapes", "--config", (dir / "cfg.json").string(), "--out", dir.string()});
  CHECK(r.code == dpx::cli::kUsage);
  CHECK(r.err.find("decoder_dims") != std::string::npos);
}

TEST_CASE("shapes on the default preset and on an indivisible geometry") {
  const auto dir = scratch("shapes");
  CHECK(dpx_run({"shapes", "--preset", "default", "--out", dir.string()}).code == dpx::cli::kOk);
  CHECK(fs::exists(dir / "shapes.jsonl"));
  write_text(dir / "cfg.json", R"({"preset": "default", "model": {"encoder": {"height": 60}}})");
  const auto bad = dpx_run({"shapes", "--config", (dir / "cfg.json").string(), "--out", dir.string()});
  CHECK(bad.code == dpx::cli::kUsage);
  CHECK(bad.err.find("stage") != std::string::npos);
}

TEST_CASE("gradcheck on the default toy config exits zero") {
  const auto dir = scratch("gradcheck");
  const auto r = dpx_run({"gradcheck", "--out", dir.string()});
  CHECK_MESSAGE(r.code == dpx::cli::kOk, r.out << r.err);
  CHECK(fs::exists(dir / "gradcheck.jsonl"));
  CHECK(fs::exists(dir / "properties.jsonl"));
}

TEST_CASE("gradcheck with the difference branch disabled still passes") {
  const auto dir = scratch("gradcheck_nodiff");
  write_text(dir / "cfg.json", R"({"gradcheck": {"instances": 6}})");
  const auto r = dpx_run({"gradcheck", "--config", (dir / "cfg.json").string(), "--ablation", "no-difference",
                          "--out", dir.string()});
  CHECK_MESSAGE(r.code == dpx::cli::kOk, r.out << r.err);
}

TEST_CASE("seed precedence: defaults, config file, environment, flag") {
  const auto dir = scratch("seed");
  write_text(dir / "cfg.json", R"({"seed": 5})");
  auto seed_of = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"gen-scene", "--config", (dir / "cfg.json").string(), "--out", dir.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    REQUIRE(dpx_run(args).code == dpx::cli::kOk);
    return read_json(dir / "scene.json")["seed"].get<std::uint64_t>();
  };
  ::unsetenv("DPX_SEED");
  CHECK(seed_of({}) == 5);
  ::setenv("DPX_SEED", "7", 1);
  CHECK(seed_of({}) == 7);
  CHECK(seed_of({"--seed", "9"}) == 9);
  ::unsetenv("DPX_SEED");
}

TEST_CASE("gen-scene then metrics on identical maps") {
  const auto dir = scratch("metrics");
  REQUIRE(dpx_run({"gen-scene", "--out", dir.string()}).code == dpx::cli::kOk);
  const auto labels = (dir / "labels.dptf").string();
  CHECK(dpx_run({"metrics", "--gt", labels, "--pred", labels, "--out", dir.string()}).code == dpx::cli::kOk);
  const json m = json::parse(std::ifstream(dir / "metrics.jsonl"));
  CHECK(m["miou"].get<double>() == 1.0);
  CHECK(m["schema"] == "dpx.metrics.v1");
  CHECK(dpx_run({"metrics", "--gt", labels, "--out", dir.string()}).code == dpx::cli::kUsage);
}

TEST_CASE("smoke-train with zero steps reports the untrained model and fails the target") {
  const auto dir = scratch("train0");
  const auto r = dpx_run({"smoke-train", "--steps", "0", "--out", dir.string()});
  CHECK(r.code == dpx::cli::kCheckFailed);
  const json fin = read_json(dir / "final_metrics.json");
  CHECK(fin["step"] == 0);
  CHECK(fin["passed"] == false);

  const dpx::ModelConfig cfg;
  const auto sc = dpx::scene::generate_scene({});
  const auto res = dpx::train::smoke_train(cfg, sc, {.steps = 0});
  REQUIRE(res.log.size() == 1);
  const auto untrained = dpx::train::evaluate(res.model, sc);
  CHECK(res.final().loss == untrained.loss);
  CHECK(res.final().miou == untrained.miou);
  CHECK(fin["loss"].get<double>() == untrained.loss);
}

TEST_CASE("equal seeds give identical loss curves") {
  const dpx::ModelConfig cfg;
  const auto sc = dpx::scene::generate_scene({});
  const auto a = dpx::train::smoke_train(cfg, sc, {.steps = 15, .seed = 4});
  const auto b = dpx::train::smoke_train(cfg, sc, {.steps = 15, .seed = 4});
  REQUIRE(a.log.size() == 16);
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
}

TEST_CASE("config round trip") {
  dpx::config::RunConfig c;
  c.seed = 42;
  c.variants = {dpx::attn::Variant::kFull, dpx::attn::Variant::kDsim};
  c.model.encoder.dsim.ablation.enable_difference = false;
  CHECK(dpx::config::parse(dpx::config::serialize(c)) == c);
  CHECK_THROWS_AS(dpx::config::parse(R"({"seed": "x"})"), dpx::UsageError);
}

}  // TEST_SUITE
