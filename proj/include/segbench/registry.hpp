#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace segbench {

/// Identity and geometry of a ViT-family encoder.
struct EncoderSpec {
  std::string name;
  std::string family;  // selects the checkpoint name-mapping table
  std::string variant = "B";
  int depth = 12;
  int width = 768;
  int heads = 12;
  int mlp_ratio = 4;
  int native_patch = 16;
  int native_grid = 14;
  bool has_class_token = true;
  bool layer_scale = false;  // per-channel residual scaling (ls1/ls2)
  bool pre_norm = false;     // LayerNorm before the first block (norm_pre)
  std::string checkpoint;  // "random" for built-in test encoders

  bool random_init() const { return checkpoint == "random"; }
  void validate() const;
};

/// Built-in toy encoders (random init, no archive):
///   toy-vit       B: depth 2, width 64;  L: depth 4, width 128
///   toy-vit-deep  B: depth 3, width 96;  L: depth 4, width 128
/// plus generic vit-b / vit-l random-init specs used for parameter accounting.
std::vector<EncoderSpec> builtin_encoders();

class EncoderRegistry {
 public:
  EncoderRegistry();  // built-ins only

  /// Adds entries from a YAML file (`models:` list of EncoderSpec fields).
  /// Relative checkpoint paths resolve against `weights_root`, else the file's directory.
  void load_file(const std::filesystem::path& path, const std::filesystem::path& weights_root = {});

  void add(EncoderSpec spec);
  bool contains(const std::string& name, const std::string& variant) const;
  /// Throws listing registered names when absent.
  const EncoderSpec& get(const std::string& name, const std::string& variant) const;
  std::vector<std::string> names() const;

 private:
  std::vector<EncoderSpec> specs_;
};

/// Registry with built-ins plus $SEGBENCH_REGISTRY (if set) or <data dir>/registry.yaml when present.
EncoderRegistry default_registry();

/// Directory holding shipped data files: $SEGBENCH_DATA_DIR or the compiled-in source data dir.
std::filesystem::path data_dir();

}  // namespace segbench
