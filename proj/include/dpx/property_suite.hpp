#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "dpx/dsim.hpp"
#include "dpx/rng.hpp"

namespace dpx::props {

inline constexpr const char* kSchema = "dpx.property.v1";

enum class Status { kPass, kFail, kSkip };

struct SuiteConfig {
  std::uint64_t seed = 0;
  dsim::Ablation ablation;
  dsim::DiscriminatorVariant discriminator = dsim::DiscriminatorVariant::kMlp2Softmax;
  /// Properties run with their known-bad mutation switched on.
  std::set<std::string> mutate;
  /// Only properties whose name starts with this prefix run ("" runs all).
  std::string filter;
};

/// Per-property view of the suite config. `rng` is keyed by the property name,
/// so a property's draws do not depend on which other properties ran.
struct Context {
  Rng rng;
  dsim::Ablation ablation;
  dsim::DiscriminatorVariant discriminator;
  bool mutated = false;

  dsim::DsimOptions dsim_options(std::size_t noise_tokens) const;
};

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
  double metric = 0;  // property-specific worst error or count
};

struct Property {
  std::string name;
  std::string module;
  std::string mutation;  // what the mutated run corrupts
  std::function<Outcome(Context&)> check;
};

/// All registered properties, sorted by name.
const std::vector<Property>& registry();

struct PropertyResult {
  std::string name;
  std::string module;
  Status status = Status::kPass;
  std::string detail;
  double metric = 0;
  bool mutated = false;
  double seconds = 0;
};

struct SuiteReport {
  std::uint64_t seed = 0;
  std::vector<PropertyResult> results;  // sorted by name

  bool passed() const;  // no kFail
  std::size_t count(Status s) const;
  /// One "dpx.property.v1" record per property. Timings are excluded so that
  /// equal seeds give byte-identical reports.
  std::string to_jsonl() const;
};

std::string_view status_name(Status s);

/// Runs every selected property; failures become report entries, never exceptions.
SuiteReport run_property_suite(const SuiteConfig& cfg);

}  // namespace dpx::props
