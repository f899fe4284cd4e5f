#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "segbench/data.hpp"
#include "segbench/metrics.hpp"
#include "segbench/model.hpp"

namespace segbench {

/// Maps one window [3, crop, crop] to logits [K, crop, crop].
using WindowPredictor = std::function<torch::Tensor(const torch::Tensor&)>;

/// Window starts along a side of `length`: multiples of `stride` with the last window
/// shifted to end exactly at the edge. A side shorter than `crop` gets one window at 0.
std::vector<int> window_offsets(int length, int crop, int stride);

/// Averages window logits over a (shortest-side-resized) image [3, H, W], then bilinearly
/// resizes the result to (out_h, out_w). stride <= 0 means stride = crop.
torch::Tensor sliding_window_logits(const torch::Tensor& image, const WindowPredictor& predictor, int crop, int out_h,
                                    int out_w, int stride = 0);

/// Argmax over classes (lowest index wins ties) -> [H, W] uint8.
torch::Tensor argmax_labels(const torch::Tensor& logits);

struct EvalOptions {
  int crop = 512;
  int stride = 0;
  std::vector<std::pair<std::string, ConfusionMatrix>>* per_image = nullptr;  // optional audit dump
};

/// Full-image evaluation: prepare_eval, sliding windows, resize back, argmax, confusion.
ConfusionMatrix evaluate(SegmentationModel& model, const SegmentationDataset& dataset, const EvalOptions& options);

}  // namespace segbench
