#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dpx/attention.hpp"
#include "dpx/dsim.hpp"
#include "dpx/model.hpp"

namespace dpx::cost {

// Counting convention (shared with the instrumented kernels): a multiply-add is
// 2 FLOPs, any other arithmetic op is 1, softmax costs 4 per element, GELU 9,
// sigmoid 3, layer norm 7d + 5 per row, bilinear resampling 7 per output
// element and channel. Data movement (concat, slice, im2col, reshape) is free.

struct Component {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::string variant;
  std::size_t height = 0, width = 0;
  std::string config;  // compact JSON echo
  std::vector<Component> components;

  std::uint64_t total_params() const;
  std::uint64_t total_flops() const;
  /// Flops of the components whose name ends with `suffix`.
  std::uint64_t flops_matching(std::string_view suffix) const;
};

/// Number of (query, key) pairs a variant evaluates on an H x W grid (per direction, noise included).
std::uint64_t attention_pairs(attn::Variant v, const attn::AttentionConfig& cfg, std::size_t height,
                              std::size_t width, bool shifted = false);

/// One module application on a bi-modal pair: kSelf counts self-attention on
/// both modalities, the cross variants count both directions, kDsim counts
/// both DSIM branches. Residual additions belong to the enclosing block.
CostReport count_attention(attn::Variant v, const attn::AttentionConfig& cfg, std::size_t height, std::size_t width,
                           bool shifted = false);
CostReport count_dsim(const dsim::DsimConfig& cfg, std::size_t height, std::size_t width);

/// Full model: embeddings, merges, every block, and the decoder.
CostReport count_model(const ModelConfig& cfg);
/// Same as count_model with the inter-modal variant replaced.
CostReport count_model(const ModelConfig& cfg, attn::Variant inter);

struct Reduction {
  std::string base, ours;
  double params_pct = 0;  // (base - ours) / base * 100
  double flops_pct = 0;
};

/// Throws DomainError on a zero baseline column.
Reduction compare_variants(const CostReport& base, const CostReport& ours);
Reduction compare_values(const std::string& base_name, double base_params, double base_flops,
                         const std::string& ours_name, double ours_params, double ours_flops);

/// Records: one JSON object per component plus a "total" record.
void write_jsonl(std::ostream& os, const CostReport& r);
void write_csv(std::ostream& os, const std::vector<CostReport>& reports);
void write_comparison_jsonl(std::ostream& os, const Reduction& r);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace dpx::cost
