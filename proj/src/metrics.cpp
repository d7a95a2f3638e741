#include "dpx/metrics.hpp"

#include "dpx/error.hpp"
#include "dpx/io.hpp"

namespace dpx::metrics {

void SegmentationMap::validate(std::size_t num_classes) const {
  if (labels.rank() != 2) throw DimensionError("segmentation map must be 2-D, got " + shape_str(labels.shape()));
  for (auto v : labels.data()) {
    if (v < 0 || static_cast<std::size_t>(v) >= num_classes) {
      throw DomainError("label " + std::to_string(v) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t i) const {
  std::uint64_t t = 0;
  for (std::size_t j = 0; j < classes_; ++j) t += at(i, j);
  return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t j) const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < classes_; ++i) t += at(i, j);
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw DimensionError("confusion matrices have different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix confusion(const SegmentationMap& gt, const SegmentationMap& pred, std::size_t num_classes) {
  if (gt.labels.shape() != pred.labels.shape()) {
    throw DimensionError("confusion: ground truth " + shape_str(gt.labels.shape()) + " vs prediction " +
                         shape_str(pred.labels.shape()));
  }
  gt.validate(num_classes);
  pred.validate(num_classes);
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    ++cm.at(static_cast<std::size_t>(gt.labels[i]), static_cast<std::size_t>(pred.labels[i]));
  }
  return cm;
}

namespace {
void require_counts(const ConfusionMatrix& cm, const char* what) {
  if (cm.total() == 0) throw DomainError(std::string(what) + ": confusion matrix is empty");
}
}  // namespace

double miou(const ConfusionMatrix& cm) {
  require_counts(cm, "miou");
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    const std::uint64_t uni = cm.row_sum(i) + cm.col_sum(i) - cm.at(i, i);
    if (uni == 0) continue;
    sum += static_cast<double>(cm.at(i, i)) / static_cast<double>(uni);
    ++counted;
  }
  return sum / static_cast<double>(counted);
}

double macc(const ConfusionMatrix& cm) {
  require_counts(cm, "macc");
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    const std::uint64_t row = cm.row_sum(i);
    if (row == 0) continue;
    sum += static_cast<double>(cm.at(i, i)) / static_cast<double>(row);
    ++counted;
  }
  return sum / static_cast<double>(counted);
}

double pixel_acc(const ConfusionMatrix& cm) {
  require_counts(cm, "pixel_acc");
  std::uint64_t diag = 0;
  for (std::size_t i = 0; i < cm.classes(); ++i) diag += cm.at(i, i);
  return static_cast<double>(diag) / static_cast<double>(cm.total());
}

void write_labels(const std::filesystem::path& path, const SegmentationMap& map) {
  io::write_file(path, map.labels);
}

SegmentationMap read_labels(const std::filesystem::path& path) {
  SegmentationMap m{io::read_file<std::int32_t>(path)};
  if (m.labels.rank() != 2) throw DimensionError("label file " + path.string() + " is not 2-D");
  return m;
}

}  // namespace dpx::metrics
