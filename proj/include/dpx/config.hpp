#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dpx/attention.hpp"
#include "dpx/model.hpp"

namespace dpx::config {

inline constexpr const char* kSchema = "dpx.config.v1";

struct TrainSettings {
  std::size_t steps = 500;
  double learning_rate = 0.15;
  std::size_t log_every = 1;
  std::size_t scene_shapes = 5;
  double scene_noise = 0.05;

  bool operator==(const TrainSettings&) const = default;
};

struct GradcheckSettings {
  std::size_t instances = 50;
  std::size_t max_samples = 4;  // per tensor for the full-model check

  bool operator==(const GradcheckSettings&) const = default;
};

/// Everything a CLI command needs. Serializes to a JSON tree; parse(serialize(c)) == c.
struct RunConfig {
  std::string command = "cost";
  std::string preset = "toy";
  ModelConfig model;
  std::vector<attn::Variant> variants{attn::Variant::kDsim};
  std::uint64_t seed = 0;
  TrainSettings train;
  GradcheckSettings gradcheck;
  std::string out = "out";
  std::string reference;  // optional published-cost file for `cost`

  bool operator==(const RunConfig&) const = default;

  attn::Variant variant() const { return variants.empty() ? model.encoder.inter : variants.front(); }
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; a "preset" key is applied before explicit
/// encoder fields. Unknown keys and type mismatches raise UsageError naming the field.
RunConfig from_json(const nlohmann::json& j);

std::string serialize(const RunConfig& c);
RunConfig parse(std::string_view text);
RunConfig load_file(const std::string& path);

nlohmann::json encoder_to_json(const enc::EncoderConfig& e);
/// Overrides the fields present in `j` on top of `e`.
void encoder_from_json(const nlohmann::json& j, enc::EncoderConfig& e, const std::string& path = "model.encoder");

/// Comma-separated switches: no-paca, no-similarity, no-difference,
/// no-learning-factor, sigmoid, softmax, full. Throws UsageError on an unknown token.
void apply_ablation_list(std::string_view list, dsim::DsimOptions& opts);
std::string ablation_tokens();

/// Comma-separated variant names; throws UsageError listing the valid ones.
std::vector<attn::Variant> parse_variant_list(std::string_view list);

/// Replaces the seed with DPX_SEED when that variable is set.
void apply_env(RunConfig& c);

}  // namespace dpx::config
