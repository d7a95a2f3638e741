#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dpx/config.hpp"
#include "dpx/cost_model.hpp"

namespace dpx::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,  // the command ran but one of its checks did not hold
  kUsage = 2,        // bad flags, config or geometry
  kRuntime = 3,      // divergence or I/O failure
};

/// Published per-dataset costs compared between two methods of a reference file.
struct ReferenceComparison {
  std::string dataset;
  std::size_t height = 0, width = 0;
  cost::Reduction reduction;
};

/// Reads a "dpx.reference_costs.v1" file and compares its baseline method
/// against its proposed method on every listed dataset (sorted by name).
std::vector<ReferenceComparison> compare_reference(const std::string& path);

/// Entry point behind the `dpx` binary. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dpx::cli
