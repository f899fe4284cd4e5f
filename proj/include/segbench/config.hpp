#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "segbench/schedule.hpp"

namespace YAML {
class Node;
}

namespace segbench {

enum class DecoderKind { kLinear, kMask };

const char* to_string(DecoderKind kind);
DecoderKind parse_decoder(const std::string& s);

/// One cell of the settings matrix. Defaults form the benchmark's default cell:
/// end-to-end fine-tuning, linear decoder, ViT-B, 16x16 patches, ADE20K.
struct ExperimentConfig {
  std::string model = "toy-vit";
  std::string variant = "B";
  int patch = 16;
  DecoderKind decoder = DecoderKind::kLinear;
  bool freeze = false;
  std::string train_dataset = "ade20k";
  std::string eval_dataset = "ade20k";
  std::uint64_t seed = 0;

  // Overrides; zero / empty means "use the dataset or recipe default".
  int crop = 0;
  std::int64_t steps = 0;
  int effective_batch = 16;
  int micro_batch = 1;
  double encoder_lr = 1e-5;
  double decoder_lr = 1e-4;
  double weight_decay = 0.05;
  std::string train_split;
  std::string eval_split;
  int train_limit = 0;
  int eval_limit = 0;
  int mask_queries = 100;
  int mask_layers = 9;
  int mask_hidden = 256;
  std::vector<int> allowed_patches{16, 8};
  std::string setting;  // display name; derived from deviations when empty

  /// Checks every dimension value and lists valid choices on failure.
  void validate() const;

  int resolved_crop() const;
  std::int64_t resolved_steps() const;
  TrainSchedule schedule() const;

  /// Canonical text of every field except seed and setting name.
  std::string canonical() const;
  /// 16 hex digits of FNV-1a/64 over canonical().
  std::string fingerprint() const;
  /// "default", or the comma-joined deviations from the default cell.
  std::string setting_label() const;
};

ExperimentConfig default_config();

/// Applies the keys present in a YAML mapping onto `cfg`. Unknown keys are errors.
void apply_yaml(ExperimentConfig& cfg, const YAML::Node& node);

/// Reads a config file: an optional `defaults` block followed by top-level overrides.
ExperimentConfig load_config_file(const std::string& path);

/// models x settings x seeds, in file order (model-major, then setting, then seed).
struct ExperimentMatrix {
  std::vector<ExperimentConfig> cells;
};

ExperimentMatrix load_matrix_file(const std::string& path);

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);

}  // namespace segbench
