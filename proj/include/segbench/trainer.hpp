#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include <torch/torch.h>

#include "segbench/config.hpp"
#include "segbench/data.hpp"
#include "segbench/error.hpp"
#include "segbench/model.hpp"
#include "segbench/registry.hpp"
#include "segbench/schedule.hpp"
#include "segbench/store.hpp"

namespace segbench {

/// Raised when a training loss becomes NaN or infinite.
class DivergedError : public Error {
 public:
  using Error::Error;
};

/// One micro-batch: images [B, 3, H, W] float, labels [B, H, W] int64.
struct MicroBatch {
  torch::Tensor images;
  torch::Tensor labels;
};

/// Owns a model and its AdamW optimizer. The encoder and decoder form separate parameter
/// groups (encoder omitted when frozen), both with decoupled weight decay and poly-decayed lrs.
class Trainer {
 public:
  Trainer(SegmentationModel model, TrainSchedule schedule, bool freeze_encoder);

  /// One optimizer update at `step` from `micro_batches` (normally `accumulation()` of them).
  /// Each micro-batch loss is divided by the number of micro-batches before backward, so the
  /// update matches a single step on the concatenated batch. Returns the mean micro-batch loss.
  double accumulate_step(const std::vector<MicroBatch>& micro_batches, std::int64_t step);

  SegmentationModel& model() { return model_; }
  torch::optim::AdamW& optimizer() { return *optimizer_; }
  const TrainSchedule& schedule() const { return schedule_; }

  void save(const std::filesystem::path& path, std::int64_t next_step, const std::vector<LossPoint>& trace,
            double elapsed_s);
  /// Restores model/optimizer state; returns the step to continue from.
  std::int64_t load(const std::filesystem::path& path, std::vector<LossPoint>& trace, double& elapsed_s);

 private:
  SegmentationModel model_;
  TrainSchedule schedule_;
  bool freeze_;
  std::unique_ptr<torch::optim::AdamW> optimizer_;
};

struct TrainOptions {
  std::filesystem::path work_dir;   // checkpoint/resume files; empty disables them
  std::int64_t checkpoint_every = 0;  // steps between checkpoints; 0 = only at the end
  std::int64_t trace_every = 50;
  std::function<void(std::int64_t step, double loss)> on_step;
};

/// Builds the model for `config` (encoder resized to the crop geometry). Seeds torch first.
SegmentationModel build_model(const ExperimentConfig& config, const EncoderRegistry& registry);

/// Micro-batch for (seed, step, slot): sample index and augmentation drawn from sample_rng.
MicroBatch make_micro_batch(const SegmentationDataset& data, int crop, int size, std::uint64_t seed,
                            std::int64_t step, int slot);

/// Trains and evaluates one configuration. Divergence is recorded as a failed RunResult.
RunResult run_training(const ExperimentConfig& config, const EncoderRegistry& registry,
                       const TrainOptions& options = {});

}  // namespace segbench
