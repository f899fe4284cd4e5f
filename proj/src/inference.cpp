#include "segbench/inference.hpp"

#include <algorithm>

#include "segbench/error.hpp"

namespace segbench {
namespace F = torch::nn::functional;

std::vector<int> window_offsets(int length, int crop, int stride) {
  if (stride <= 0) stride = crop;
  if (length <= crop) return {0};
  std::vector<int> offsets;
  for (int off = 0; off + crop < length; off += stride) offsets.push_back(off);
  if (offsets.empty() || offsets.back() != length - crop) offsets.push_back(length - crop);
  return offsets;
}

torch::Tensor sliding_window_logits(const torch::Tensor& image, const WindowPredictor& predictor, int crop, int out_h,
                                    int out_w, int stride) {
  const int h = static_cast<int>(image.size(1));
  const int w = static_cast<int>(image.size(2));
  if (h < crop || w < crop) throw Error("sliding window: image smaller than the crop; run prepare_eval first");
  const auto ys = window_offsets(h, crop, stride);
  const auto xs = window_offsets(w, crop, stride);

  torch::Tensor sum;
  torch::Tensor count;
  if (ys.size() == 1 && xs.size() == 1) {
    sum = predictor(image);
  } else {
    count = torch::zeros({1, h, w});
    for (int y : ys) {
      for (int x : xs) {
        auto window = image.narrow(1, y, crop).narrow(2, x, crop);
        auto logits = predictor(window);
        if (!sum.defined()) sum = torch::zeros({logits.size(0), h, w}, logits.options());
        sum.narrow(1, y, crop).narrow(2, x, crop).add_(logits);
        count.narrow(1, y, crop).narrow(2, x, crop).add_(1.0);
      }
    }
    sum = sum / count;
  }
  if (out_h == h && out_w == w) return sum;
  return F::interpolate(sum.unsqueeze(0), F::InterpolateFuncOptions()
                                              .size(std::vector<int64_t>{out_h, out_w})
                                              .mode(torch::kBilinear)
                                              .align_corners(false))
      .squeeze(0);
}

torch::Tensor argmax_labels(const torch::Tensor& logits) { return logits.argmax(0).to(torch::kUInt8); }

ConfusionMatrix evaluate(SegmentationModel& model, const SegmentationDataset& dataset, const EvalOptions& options) {
  torch::NoGradGuard ng;
  model->eval();
  const int k = model->num_classes();
  ConfusionMatrix total(k);
  WindowPredictor predictor = [&](const torch::Tensor& window) { return model->predict(window.unsqueeze(0)).squeeze(0); };
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const SegmentationSample raw = dataset.get(i);
    const SegmentationSample prepared = prepare_eval(raw, options.crop);
    const cv::Mat& img = prepared.image;
    auto tensor = image_to_tensor(img.ptr<std::uint8_t>(), img.rows, img.cols);
    auto logits = sliding_window_logits(tensor, predictor, options.crop, raw.label.rows, raw.label.cols, options.stride);
    auto pred = argmax_labels(logits).contiguous();
    cv::Mat label = raw.label.isContinuous() ? raw.label : raw.label.clone();
    ConfusionMatrix cm(k);
    const std::size_t n = static_cast<std::size_t>(label.rows) * label.cols;
    cm.accumulate({{pred.data_ptr<std::uint8_t>(), n}, label.rows, label.cols},
                  {{label.ptr<std::uint8_t>(), n}, label.rows, label.cols}, dataset.spec().ignore_index);
    total.merge(cm);
    if (options.per_image) options.per_image->emplace_back(raw.id, cm);
  }
  model->train();
  return total;
}

}  // namespace segbench
