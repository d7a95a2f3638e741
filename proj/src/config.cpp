#include "dpx/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "dpx/error.hpp"

namespace dpx::config {

using nlohmann::json;

namespace {

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
  throw UsageError("config field '" + path + "': " + why);
}

void require_object(const json& j, const std::string& path, const std::set<std::string>& keys) {
  if (!j.is_object()) bad_field(path, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) bad_field(path.empty() ? k : path + "." + k, "unknown key");
  }
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

template <class T>
void read(const json& j, const std::string& key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string p = join(path, key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad_field(p, "expected a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) bad_field(p, "expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned()) {
        out = v.get<T>();
      } else if (v.get<long long>() < 0) {
        bad_field(p, "must be non-negative");
      } else {
        out = static_cast<T>(v.get<long long>());
      }
    } else {
      out = v.get<T>();
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) bad_field(p, "expected a number");
    out = v.get<T>();
  } else {
    if (!v.is_string()) bad_field(p, "expected a string");
    out = v.get<std::string>();
  }
}

template <class E, class Parse>
void read_enum(const json& j, const std::string& key, E& out, const std::string& path, Parse&& parse) {
  std::string s;
  read(j, key, s, path);
  if (s.empty()) return;
  try {
    out = parse(s);
  } catch (const std::exception& e) {
    bad_field(join(path, key), e.what());
  }
}

std::string key_source_name(dsim::KeySource k) { return k == dsim::KeySource::kQueryProjection ? "query" : "key"; }
dsim::KeySource parse_key_source(const std::string& s) {
  if (s == "query") return dsim::KeySource::kQueryProjection;
  if (s == "key") return dsim::KeySource::kKeyProjection;
  throw ConfigError("expected 'query' or 'key'");
}
std::string pairing_name(dsim::Pairing p) { return p == dsim::Pairing::kOwnerSets ? "owner" : "cross"; }
dsim::Pairing parse_pairing(const std::string& s) {
  if (s == "owner") return dsim::Pairing::kOwnerSets;
  if (s == "cross") return dsim::Pairing::kCrossSets;
  throw ConfigError("expected 'owner' or 'cross'");
}
std::string mode_name(nn::DropPathMode m) { return m == nn::DropPathMode::kTrain ? "train" : "eval"; }
nn::DropPathMode parse_mode(const std::string& s) {
  if (s == "train") return nn::DropPathMode::kTrain;
  if (s == "eval") return nn::DropPathMode::kEval;
  throw ConfigError("expected 'train' or 'eval'");
}

}  // namespace

json encoder_to_json(const enc::EncoderConfig& e) {
  json stages = json::array();
  for (const auto& s : e.stages) {
    stages.push_back({{"depth", s.depth},
                      {"dim", s.dim},
                      {"heads", s.heads},
                      {"patch", {{"kernel", s.patch.kernel}, {"stride", s.patch.stride}, {"padding", s.patch.padding}}}});
  }
  const auto& d = e.dsim;
  return {{"height", e.height},
          {"width", e.width},
          {"in_channels", e.in_channels},
          {"inter", std::string(attn::variant_name(e.inter))},
          {"window", e.window},
          {"radius", e.radius},
          {"baseline_noise_tokens", e.baseline_noise_tokens},
          {"mlp_ratio", e.mlp_ratio},
          {"drop_path", {{"rate", e.drop_path.rate}, {"mode", mode_name(e.drop_path.mode)}}},
          {"stages", stages},
          {"dsim",
           {{"noise_tokens", d.noise_tokens},
            {"discriminator_hidden", d.discriminator_hidden},
            {"discriminator", std::string(dsim::discriminator_name(d.discriminator))},
            {"key_source", key_source_name(d.key_source)},
            {"pairing", pairing_name(d.pairing)},
            {"ablation",
             {{"enable_paca", d.ablation.enable_paca},
              {"enable_similarity", d.ablation.enable_similarity},
              {"enable_difference", d.ablation.enable_difference},
              {"enable_learning_factor", d.ablation.enable_learning_factor}}}}}};
}

void encoder_from_json(const json& j, enc::EncoderConfig& e, const std::string& path) {
  require_object(j, path,
                 {"height", "width", "in_channels", "inter", "window", "radius", "baseline_noise_tokens", "mlp_ratio",
                  "drop_path", "stages", "dsim"});
  read(j, "height", e.height, path);
  read(j, "width", e.width, path);
  read(j, "in_channels", e.in_channels, path);
  read_enum(j, "inter", e.inter, path, [](const std::string& s) { return attn::parse_variant(s); });
  read(j, "window", e.window, path);
  read(j, "radius", e.radius, path);
  read(j, "baseline_noise_tokens", e.baseline_noise_tokens, path);
  read(j, "mlp_ratio", e.mlp_ratio, path);
  if (j.contains("drop_path")) {
    const std::string p = join(path, "drop_path");
    require_object(j["drop_path"], p, {"rate", "mode"});
    read(j["drop_path"], "rate", e.drop_path.rate, p);
    read_enum(j["drop_path"], "mode", e.drop_path.mode, p, parse_mode);
  }
  if (j.contains("stages")) {
    const std::string p = join(path, "stages");
    const json& st = j["stages"];
    if (!st.is_array() || st.size() != e.stages.size()) bad_field(p, "expected an array of 4 stages");
    for (std::size_t i = 0; i < e.stages.size(); ++i) {
      const std::string sp = p + "[" + std::to_string(i) + "]";
      require_object(st[i], sp, {"depth", "dim", "heads", "patch"});
      auto& s = e.stages[i];
      read(st[i], "depth", s.depth, sp);
      read(st[i], "dim", s.dim, sp);
      read(st[i], "heads", s.heads, sp);
      if (st[i].contains("patch")) {
        const std::string pp = sp + ".patch";
        require_object(st[i]["patch"], pp, {"kernel", "stride", "padding"});
        read(st[i]["patch"], "kernel", s.patch.kernel, pp);
        read(st[i]["patch"], "stride", s.patch.stride, pp);
        read(st[i]["patch"], "padding", s.patch.padding, pp);
      }
    }
  }
  if (j.contains("dsim")) {
    const std::string p = join(path, "dsim");
    const json& d = j["dsim"];
    require_object(d, p, {"noise_tokens", "discriminator_hidden", "discriminator", "key_source", "pairing", "ablation"});
    read(d, "noise_tokens", e.dsim.noise_tokens, p);
    read(d, "discriminator_hidden", e.dsim.discriminator_hidden, p);
    read_enum(d, "discriminator", e.dsim.discriminator, p,
              [](const std::string& s) { return dsim::parse_discriminator(s); });
    read_enum(d, "key_source", e.dsim.key_source, p, parse_key_source);
    read_enum(d, "pairing", e.dsim.pairing, p, parse_pairing);
    if (d.contains("ablation")) {
      const std::string ap = join(p, "ablation");
      require_object(d["ablation"], ap,
                     {"enable_paca", "enable_similarity", "enable_difference", "enable_learning_factor"});
      auto& a = e.dsim.ablation;
      read(d["ablation"], "enable_paca", a.enable_paca, ap);
      read(d["ablation"], "enable_similarity", a.enable_similarity, ap);
      read(d["ablation"], "enable_difference", a.enable_difference, ap);
      read(d["ablation"], "enable_learning_factor", a.enable_learning_factor, ap);
    }
  }
}

json to_json(const RunConfig& c) {
  json variants = json::array();
  for (auto v : c.variants) variants.push_back(std::string(attn::variant_name(v)));
  return {{"schema", kSchema},
          {"command", c.command},
          {"preset", c.preset},
          {"seed", c.seed},
          {"variants", variants},
          {"model",
           {{"encoder", encoder_to_json(c.model.encoder)},
            {"decoder_dim", c.model.decoder_dim},
            {"num_classes", c.model.num_classes}}},
          {"train",
           {{"steps", c.train.steps},
            {"learning_rate", c.train.learning_rate},
            {"log_every", c.train.log_every},
            {"scene_shapes", c.train.scene_shapes},
            {"scene_noise", c.train.scene_noise}}},
          {"gradcheck", {{"instances", c.gradcheck.instances}, {"max_samples", c.gradcheck.max_samples}}},
          {"out", c.out},
          {"reference", c.reference}};
}

RunConfig from_json(const json& j) {
  require_object(j, "", {"schema", "command", "preset", "seed", "variants", "model", "train", "gradcheck", "out",
                         "reference"});
  RunConfig c;
  std::string schema = kSchema;
  read(j, "schema", schema, "");
  if (schema != kSchema) bad_field("schema", "expected '" + std::string(kSchema) + "', got '" + schema + "'");
  read(j, "command", c.command, "");
  read(j, "preset", c.preset, "");
  try {
    c.model.encoder = enc::EncoderConfig::preset(c.preset);
  } catch (const ConfigError& e) {
    bad_field("preset", e.what());
  }
  read(j, "seed", c.seed, "");
  if (j.contains("variants")) {
    const json& v = j["variants"];
    c.variants.clear();
    if (v.is_string()) {
      c.variants = parse_variant_list(v.get<std::string>());
    } else if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string()) bad_field("variants[" + std::to_string(i) + "]", "expected a string");
        try {
          c.variants.push_back(attn::parse_variant(v[i].get<std::string>()));
        } catch (const ConfigError& e) {
          bad_field("variants[" + std::to_string(i) + "]", e.what());
        }
      }
    } else {
      bad_field("variants", "expected a list of names");
    }
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    require_object(m, "model", {"encoder", "decoder_dim", "num_classes"});
    if (m.contains("encoder")) encoder_from_json(m["encoder"], c.model.encoder);
    read(m, "decoder_dim", c.model.decoder_dim, "model");
    read(m, "num_classes", c.model.num_classes, "model");
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    require_object(t, "train", {"steps", "learning_rate", "log_every", "scene_shapes", "scene_noise"});
    read(t, "steps", c.train.steps, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "log_every", c.train.log_every, "train");
    read(t, "scene_shapes", c.train.scene_shapes, "train");
    read(t, "scene_noise", c.train.scene_noise, "train");
  }
  if (j.contains("gradcheck")) {
    const json& g = j["gradcheck"];
    require_object(g, "gradcheck", {"instances", "max_samples"});
    read(g, "instances", c.gradcheck.instances, "gradcheck");
    read(g, "max_samples", c.gradcheck.max_samples, "gradcheck");
  }
  read(j, "out", c.out, "");
  read(j, "reference", c.reference, "");
  return c;
}

std::string serialize(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

RunConfig parse(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

RunConfig load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ablation_tokens() { return "no-paca, no-similarity, no-difference, no-learning-factor, sigmoid, softmax, full"; }

void apply_ablation_list(std::string_view list, dsim::DsimOptions& opts) {
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = std::min(list.find(',', pos), list.size());
    const std::string_view tok = list.substr(pos, comma - pos);
    pos = comma + 1;
    if (tok.empty()) continue;
    auto& a = opts.ablation;
    if (tok == "no-paca") {
      a.enable_paca = false;
    } else if (tok == "no-similarity") {
      a.enable_similarity = false;
    } else if (tok == "no-difference") {
      a.enable_difference = false;
    } else if (tok == "no-learning-factor") {
      a.enable_learning_factor = false;
    } else if (tok == "sigmoid") {
      opts.discriminator = dsim::DiscriminatorVariant::kMlp2Sigmoid;
    } else if (tok == "softmax") {
      opts.discriminator = dsim::DiscriminatorVariant::kMlp2Softmax;
    } else if (tok == "full") {
      a = dsim::Ablation{};
    } else {
      throw UsageError("unknown ablation '" + std::string(tok) + "'; valid switches: " + ablation_tokens());
    }
  }
}

std::vector<attn::Variant> parse_variant_list(std::string_view list) {
  std::vector<attn::Variant> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = std::min(list.find(',', pos), list.size());
    const std::string_view tok = list.substr(pos, comma - pos);
    pos = comma + 1;
    if (tok.empty()) continue;
    try {
      out.push_back(attn::parse_variant(tok));
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("no variant given; valid variants: " + attn::valid_variant_names());
  return out;
}

void apply_env(RunConfig& c) {
  const char* s = std::getenv("DPX_SEED");
  if (!s || !*s) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0' || s[0] == '-') throw UsageError("DPX_SEED must be a non-negative integer, got '" + std::string(s) + "'");
  c.seed = v;
}

}  // namespace dpx::config
