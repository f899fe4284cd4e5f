#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "segbench/datasets.hpp"

namespace segbench {

/// image: CV_8UC3 RGB; label: CV_8UC1 train ids with 255 = ignore; equal spatial dims.
struct SegmentationSample {
  cv::Mat image;
  cv::Mat label;
  std::string id;
};

/// Ordered, lazily loaded split of a dataset. Order is fixed at construction (sorted paths).
class SegmentationDataset {
 public:
  using Loader = std::function<SegmentationSample(std::size_t)>;
  SegmentationDataset(DatasetSpec spec, std::string split, std::size_t size, Loader loader);

  const DatasetSpec& spec() const { return spec_; }
  const std::string& split() const { return split_; }
  std::size_t size() const { return size_; }
  SegmentationSample get(std::size_t index) const;

 private:
  DatasetSpec spec_;
  std::string split_;
  std::size_t size_;
  Loader loader_;
};

/// Root for a dataset: $SEGBENCH_<NAME>_ROOT, then the `datasets.yaml` file named by
/// $SEGBENCH_DATASETS, then $SEGBENCH_DATA_ROOT/<standard dir>. Empty if none is set.
std::filesystem::path dataset_root(const std::string& name);

/// Loads `split` of the named dataset. toy-shapes is generated; others read their standard
/// layout under `root` (dataset_root() when empty). Every listed file is checked up front and
/// the first missing path is reported. `limit` > 0 keeps only the first `limit` samples.
SegmentationDataset load_dataset(const std::string& name, const std::string& split,
                                 const std::filesystem::path& root = {}, int limit = 0);

/// toy-shapes sample `index` of `split`: rectangles, ellipses and triangles on noise, K = 4.
SegmentationSample make_toy_sample(const std::string& split, std::size_t index);

/// hflip(0.5) -> color jitter (image only) -> scale in [0.5, 2] (bilinear image, nearest label)
/// -> pad to crop (image 0, label 255) -> random crop x crop window.
SegmentationSample augment_train(const SegmentationSample& sample, int crop, std::mt19937_64& rng);

/// Resizes the image so its shortest side equals `crop` (bilinear, aspect kept); label untouched.
SegmentationSample prepare_eval(const SegmentationSample& sample, int crop);

/// Shortest side to `crop`, longer side scaled and rounded.
cv::Size eval_size(cv::Size original, int crop);

/// GTA V (Cityscapes label-id encoded) annotation -> Cityscapes train ids, unmapped -> 255.
cv::Mat map_labels(const cv::Mat& gta_label);

/// Reads an 8-bit grayscale or palette PNG as raw indices.
cv::Mat read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const cv::Mat& label);

/// RNG for augmentation of (seed, step, slot); identical inputs give identical streams.
std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t step, std::uint64_t slot);

}  // namespace segbench
