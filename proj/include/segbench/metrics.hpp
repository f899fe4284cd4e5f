#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace segbench {

inline constexpr std::uint8_t kIgnoreIndex = 255;

/// Row-major H x W label map view.
struct LabelView {
  std::span<const std::uint8_t> data;
  int height = 0;
  int width = 0;
};

/// K x K pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return k_; }
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * k_ + pred]; }
  std::uint64_t& at(int gt, int pred) { return counts_[static_cast<std::size_t>(gt) * k_ + pred]; }
  std::uint64_t total() const;

  /// Adds one image. Pixels whose ground truth equals `ignore_index` are skipped;
  /// any other out-of-range id (gt or prediction) is an error.
  void accumulate(LabelView pred, LabelView gt, std::uint8_t ignore_index = kIgnoreIndex);

  ConfusionMatrix& merge(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int k_;
  std::vector<std::uint64_t> counts_;
};

struct MiouResult {
  std::vector<double> per_class_iou;  // NaN for classes with zero union
  std::vector<bool> evaluable;
  double miou = 0.0;
};

/// IoU_c = tp / (row + col - tp); zero-union classes are excluded from the mean.
/// Throws when no class has a non-zero union.
MiouResult compute_miou(const ConfusionMatrix& cm);

/// One tab-separated line per (image, gt, pred) non-zero cell.
void write_confusion_tsv(std::ostream& os, const std::vector<std::pair<std::string, ConfusionMatrix>>& per_image);

}  // namespace segbench
