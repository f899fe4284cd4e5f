#include "segbench/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "segbench/error.hpp"

namespace segbench {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
  if (num_classes < 1) throw Error("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(k_) * k_, 0);
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(LabelView pred, LabelView gt, std::uint8_t ignore_index) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw Error("confusion: prediction is " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                " but label is " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  const std::size_t n = static_cast<std::size_t>(gt.height) * gt.width;
  if (pred.data.size() != n || gt.data.size() != n) throw Error("confusion: buffer size does not match dims");
  for (std::size_t i = 0; i < n; ++i) {
    const int g = gt.data[i];
    if (g == ignore_index) continue;
    const int p = pred.data[i];
    if (g >= k_ || p >= k_) {
      throw Error("confusion: class id " + std::to_string(g >= k_ ? g : p) + " out of range for K=" +
                  std::to_string(k_));
    }
    ++counts_[static_cast<std::size_t>(g) * k_ + p];
  }
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw Error("confusion: cannot merge matrices with different K");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

MiouResult compute_miou(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  MiouResult r;
  r.per_class_iou.assign(k, std::numeric_limits<double>::quiet_NaN());
  r.evaluable.assign(k, false);
  double sum = 0.0;
  int count = 0;
  for (int c = 0; c < k; ++c) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    r.per_class_iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    r.evaluable[c] = true;
    sum += r.per_class_iou[c];
    ++count;
  }
  if (count == 0) throw Error("mIoU: no evaluable class (every class has zero union)");
  r.miou = sum / count;
  return r;
}

void write_confusion_tsv(std::ostream& os, const std::vector<std::pair<std::string, ConfusionMatrix>>& per_image) {
  os << "image\tgt\tpred\tcount\n";
  for (const auto& [id, cm] : per_image) {
    for (int g = 0; g < cm.num_classes(); ++g) {
      for (int p = 0; p < cm.num_classes(); ++p) {
        if (cm.at(g, p) != 0) os << id << '\t' << g << '\t' << p << '\t' << cm.at(g, p) << '\n';
      }
    }
  }
}

}  // namespace segbench
