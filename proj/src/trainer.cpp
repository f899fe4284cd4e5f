#include "segbench/trainer.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "segbench/inference.hpp"

namespace segbench {
namespace {

torch::optim::AdamWOptions group_options(double lr, double wd) {
  return torch::optim::AdamWOptions(lr).weight_decay(wd).betas({0.9, 0.999}).eps(1e-8);
}

std::string run_id_for(const ExperimentConfig& cfg) {
  return cfg.fingerprint() + "-s" + std::to_string(cfg.seed);
}

}  // namespace

Trainer::Trainer(SegmentationModel model, TrainSchedule schedule, bool freeze_encoder)
    : model_(std::move(model)), schedule_(std::move(schedule)), freeze_(freeze_encoder) {
  schedule_.validate();
  set_trainable(model_, freeze_);
  std::vector<torch::optim::OptimizerParamGroup> groups;
  if (!freeze_) {
    groups.emplace_back(model_->encoder_parameters(),
                        std::make_unique<torch::optim::AdamWOptions>(group_options(schedule_.encoder_lr, schedule_.weight_decay)));
  }
  groups.emplace_back(model_->decoder_parameters(),
                      std::make_unique<torch::optim::AdamWOptions>(group_options(schedule_.decoder_lr, schedule_.weight_decay)));
  optimizer_ = std::make_unique<torch::optim::AdamW>(std::move(groups),
                                                     group_options(schedule_.decoder_lr, schedule_.weight_decay));
}

double Trainer::accumulate_step(const std::vector<MicroBatch>& micro_batches, std::int64_t step) {
  if (micro_batches.empty()) throw Error("accumulate_step: no micro-batches");
  model_->train();
  optimizer_->zero_grad();
  const double scale = 1.0 / static_cast<double>(micro_batches.size());
  double total = 0.0;
  for (const auto& mb : micro_batches) {
    auto loss = model_->loss(mb.images, mb.labels);
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
      optimizer_->zero_grad();
      throw DivergedError("non-finite loss at step " + std::to_string(step));
    }
    (loss * scale).backward();
    total += value;
  }
  auto& groups = optimizer_->param_groups();
  std::size_t g = 0;
  if (!freeze_) {
    static_cast<torch::optim::AdamWOptions&>(groups[g++].options())
        .lr(poly_lr(step, schedule_.total_steps, schedule_.encoder_lr, schedule_.poly_power));
  }
  static_cast<torch::optim::AdamWOptions&>(groups[g].options())
      .lr(poly_lr(step, schedule_.total_steps, schedule_.decoder_lr, schedule_.poly_power));
  optimizer_->step();
  return total * scale;
}

void Trainer::save(const std::filesystem::path& path, std::int64_t next_step, const std::vector<LossPoint>& trace,
                   double elapsed_s) {
  torch::serialize::OutputArchive archive;
  torch::serialize::OutputArchive model_archive;
  model_->save(model_archive);
  archive.write("model", model_archive);
  torch::serialize::OutputArchive optim_archive;
  optimizer_->save(optim_archive);
  archive.write("optimizer", optim_archive);
  archive.write("next_step", torch::tensor(next_step, torch::kInt64));
  archive.write("elapsed_s", torch::tensor(elapsed_s, torch::kFloat64));
  std::vector<std::int64_t> steps;
  std::vector<double> losses;
  for (const auto& p : trace) {
    steps.push_back(p.step);
    losses.push_back(p.loss);
  }
  archive.write("trace_steps", torch::tensor(steps, torch::kInt64));
  archive.write("trace_losses", torch::tensor(losses, torch::kFloat64));
  const auto tmp = path.string() + ".tmp";
  archive.save_to(tmp);
  std::filesystem::rename(tmp, path);
}

std::int64_t Trainer::load(const std::filesystem::path& path, std::vector<LossPoint>& trace, double& elapsed_s) {
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  torch::serialize::InputArchive model_archive;
  archive.read("model", model_archive);
  model_->load(model_archive);
  torch::serialize::InputArchive optim_archive;
  archive.read("optimizer", optim_archive);
  optimizer_->load(optim_archive);
  torch::Tensor next, elapsed, steps, losses;
  archive.read("next_step", next);
  archive.read("elapsed_s", elapsed);
  archive.read("trace_steps", steps);
  archive.read("trace_losses", losses);
  trace.clear();
  for (int64_t i = 0; i < steps.numel(); ++i) {
    trace.push_back({steps[i].item<std::int64_t>(), losses[i].item<double>()});
  }
  elapsed_s = elapsed.item<double>();
  return next.item<std::int64_t>();
}

SegmentationModel build_model(const ExperimentConfig& config, const EncoderRegistry& registry) {
  const EncoderSpec& spec = registry.get(config.model, config.variant);
  const DatasetSpec data = dataset_spec(config.train_dataset);
  const int crop = config.resolved_crop();
  torch::manual_seed(config.seed);
  ViTEncoder encoder = load_checkpoint(spec, {config.patch, crop / config.patch});
  MaskDecoderConfig mask_cfg;
  mask_cfg.num_queries = config.mask_queries;
  mask_cfg.layers = config.mask_layers;
  mask_cfg.hidden_dim = config.mask_hidden;
  mask_cfg.heads = std::min(8, std::max(1, config.mask_hidden / 32));
  mask_cfg.ffn_dim = config.mask_hidden * 8;
  return SegmentationModel(std::move(encoder), config.decoder, data.num_classes, mask_cfg);
}

MicroBatch make_micro_batch(const SegmentationDataset& data, int crop, int size, std::uint64_t seed,
                            std::int64_t step, int slot) {
  std::vector<torch::Tensor> images, labels;
  for (int i = 0; i < size; ++i) {
    auto rng = sample_rng(seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(slot * size + i));
    const std::size_t index = std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng);
    const SegmentationSample s = augment_train(data.get(index), crop, rng);
    images.push_back(image_to_tensor(s.image.ptr<std::uint8_t>(), s.image.rows, s.image.cols));
    cv::Mat lab = s.label.isContinuous() ? s.label : s.label.clone();
    labels.push_back(torch::from_blob(lab.ptr<std::uint8_t>(), {crop, crop}, torch::kUInt8).to(torch::kInt64));
  }
  return {torch::stack(images), torch::stack(labels)};
}

RunResult run_training(const ExperimentConfig& config, const EncoderRegistry& registry, const TrainOptions& options) {
  config.validate();
  RunResult result;
  result.run_id = run_id_for(config);
  result.fingerprint = config.fingerprint();
  result.setting = config.setting_label();
  result.config = config;
  result.seed = config.seed;

  const DatasetSpec train_spec = dataset_spec(config.train_dataset);
  const DatasetSpec eval_spec = dataset_spec(config.eval_dataset);
  const int crop = config.resolved_crop();
  const TrainSchedule schedule = config.schedule();

  const SegmentationDataset train_data = load_dataset(
      config.train_dataset, config.train_split.empty() ? train_spec.train_split : config.train_split, {},
      config.train_limit);
  const SegmentationDataset eval_data = load_dataset(
      config.eval_dataset, config.eval_split.empty() ? eval_spec.val_split : config.eval_split, {}, config.eval_limit);

  Trainer trainer(build_model(config, registry), schedule, config.freeze);
  result.trainable_params = count_trainable_params(*trainer.model());

  std::int64_t start = 0;
  double elapsed = 0.0;
  std::filesystem::path ckpt;
  if (!options.work_dir.empty()) {
    std::filesystem::create_directories(options.work_dir);
    ckpt = options.work_dir / (result.run_id + ".pt");
    if (std::filesystem::exists(ckpt)) start = trainer.load(ckpt, result.loss_trace, elapsed);
  }

  const int accumulation = schedule.accumulation();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    for (std::int64_t step = start; step < schedule.total_steps; ++step) {
      std::vector<MicroBatch> batches;
      for (int slot = 0; slot < accumulation; ++slot) {
        batches.push_back(make_micro_batch(train_data, crop, schedule.micro_batch, config.seed, step, slot));
      }
      const double loss = trainer.accumulate_step(batches, step);
      if (step % options.trace_every == 0 || step + 1 == schedule.total_steps) result.loss_trace.push_back({step, loss});
      if (options.on_step) options.on_step(step, loss);
      if (!ckpt.empty() && options.checkpoint_every > 0 && (step + 1) % options.checkpoint_every == 0) {
        const double so_far = elapsed + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        trainer.save(ckpt, step + 1, result.loss_trace, so_far);
      }
    }
  } catch (const DivergedError& e) {
    result.status = "failed";
    result.error = e.what();
    result.train_time_s = elapsed + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!ckpt.empty()) std::filesystem::remove(ckpt);
    return result;
  }
  result.train_time_s = elapsed + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.steps = schedule.total_steps;

  const ConfusionMatrix cm = evaluate(trainer.model(), eval_data, {crop, 0, nullptr});
  const MiouResult miou = compute_miou(cm);
  result.miou = miou.miou;
  result.per_class_iou = miou.per_class_iou;
  if (!ckpt.empty()) std::filesystem::remove(ckpt);
  return result;
}

}  // namespace segbench
