#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dpx/tensor.hpp"

namespace dpx::metrics {

/// Integer label grid; every label lies in [0, num_classes).
struct SegmentationMap {
  Tensor<std::int32_t> labels;  // [height x width]

  std::size_t height() const { return labels.rank() == 2 ? labels.shape()[0] : 0; }
  std::size_t width() const { return labels.rank() == 2 ? labels.shape()[1] : 0; }
  /// Throws DomainError on an out-of-range label.
  void validate(std::size_t num_classes) const;
  bool operator==(const SegmentationMap&) const = default;
};

/// counts(i, j): pixels of ground-truth class i predicted as class j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0)
      : classes_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t classes() const { return classes_; }
  std::uint64_t& at(std::size_t i, std::size_t j) { return counts_[i * classes_ + j]; }
  std::uint64_t at(std::size_t i, std::size_t j) const { return counts_[i * classes_ + j]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t i) const;
  std::uint64_t col_sum(std::size_t j) const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(const SegmentationMap& gt, const SegmentationMap& pred, std::size_t num_classes);

/// Mean IoU over classes with a non-empty union.
double miou(const ConfusionMatrix& cm);
/// Mean per-class accuracy over classes present in the ground truth.
double macc(const ConfusionMatrix& cm);
double pixel_acc(const ConfusionMatrix& cm);

void write_labels(const std::filesystem::path& path, const SegmentationMap& map);
SegmentationMap read_labels(const std::filesystem::path& path);

}  // namespace dpx::metrics
