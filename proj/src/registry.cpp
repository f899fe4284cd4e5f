#include "segbench/registry.hpp"

#include <algorithm>
#include <cstdlib>

#include <yaml-cpp/yaml.h>

#include "segbench/error.hpp"

#ifndef SEGBENCH_SOURCE_DATA_DIR
#define SEGBENCH_SOURCE_DATA_DIR "data"
#endif

namespace segbench {

void EncoderSpec::validate() const {
  if (name.empty()) throw Error("encoder spec without a name");
  if (depth < 1) throw Error(name + ": depth must be >= 1");
  if (width < 1 || heads < 1 || width % heads != 0) {
    throw Error(name + ": width " + std::to_string(width) + " not divisible by heads " + std::to_string(heads));
  }
  if (native_patch <= 0) throw Error(name + ": native_patch must be positive");
  if (native_grid <= 0) throw Error(name + ": native_grid must be positive");
  if (variant != "B" && variant != "L") throw Error(name + ": variant must be B or L");
}

std::vector<EncoderSpec> builtin_encoders() {
  auto toy = [](std::string name, std::string variant, int depth, int width) {
    EncoderSpec s;
    s.name = std::move(name);
    s.family = "native";
    s.variant = std::move(variant);
    s.depth = depth;
    s.width = width;
    s.heads = 4;
    s.native_patch = 8;
    s.native_grid = 8;
    s.checkpoint = "random";
    return s;
  };
  auto vit = [](std::string variant, int depth, int width, int heads) {
    EncoderSpec s;
    s.name = "vit";
    s.family = "native";
    s.variant = std::move(variant);
    s.depth = depth;
    s.width = width;
    s.heads = heads;
    s.native_patch = 16;
    s.native_grid = 14;
    s.checkpoint = "random";
    return s;
  };
  return {toy("toy-vit", "B", 2, 64),      toy("toy-vit", "L", 4, 128), toy("toy-vit-deep", "B", 3, 96),
          toy("toy-vit-deep", "L", 4, 128), vit("B", 12, 768, 12),       vit("L", 24, 1024, 16)};
}

EncoderRegistry::EncoderRegistry() {
  for (auto& s : builtin_encoders()) add(std::move(s));
}

void EncoderRegistry::add(EncoderSpec spec) {
  spec.validate();
  auto it = std::find_if(specs_.begin(), specs_.end(),
                         [&](const EncoderSpec& s) { return s.name == spec.name && s.variant == spec.variant; });
  if (it != specs_.end()) *it = std::move(spec);
  else specs_.push_back(std::move(spec));
}

void EncoderRegistry::load_file(const std::filesystem::path& path, const std::filesystem::path& weights_root) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw Error("cannot read registry '" + path.string() + "': " + e.what());
  }
  const auto base = weights_root.empty() ? path.parent_path() : weights_root;
  for (const auto& n : root["models"]) {
    EncoderSpec s;
    try {
      s.name = n["name"].as<std::string>();
      s.family = n["family"] ? n["family"].as<std::string>() : "native";
      s.variant = n["variant"] ? n["variant"].as<std::string>() : "B";
      s.depth = n["depth"].as<int>();
      s.width = n["width"].as<int>();
      s.heads = n["heads"].as<int>();
      if (n["mlp_ratio"]) s.mlp_ratio = n["mlp_ratio"].as<int>();
      s.native_patch = n["native_patch"].as<int>();
      s.native_grid = n["native_grid"].as<int>();
      if (n["class_token"]) s.has_class_token = n["class_token"].as<bool>();
      if (n["layer_scale"]) s.layer_scale = n["layer_scale"].as<bool>();
      if (n["pre_norm"]) s.pre_norm = n["pre_norm"].as<bool>();
      s.checkpoint = n["checkpoint"] ? n["checkpoint"].as<std::string>() : "random";
    } catch (const YAML::Exception& e) {
      throw Error("registry '" + path.string() + "': " + e.what());
    }
    if (!s.random_init() && std::filesystem::path(s.checkpoint).is_relative()) {
      s.checkpoint = (base / s.checkpoint).string();
    }
    add(std::move(s));
  }
}

bool EncoderRegistry::contains(const std::string& name, const std::string& variant) const {
  return std::any_of(specs_.begin(), specs_.end(),
                     [&](const EncoderSpec& s) { return s.name == name && s.variant == variant; });
}

const EncoderSpec& EncoderRegistry::get(const std::string& name, const std::string& variant) const {
  for (const auto& s : specs_) {
    if (s.name == name && s.variant == variant) return s;
  }
  std::string known;
  for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
  throw Error("unregistered model '" + name + "' (variant " + variant + "); registered: " + known);
}

std::vector<std::string> EncoderRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& s : specs_) {
    if (std::find(out.begin(), out.end(), s.name) == out.end()) out.push_back(s.name);
  }
  return out;
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("SEGBENCH_DATA_DIR")) return env;
  return SEGBENCH_SOURCE_DATA_DIR;
}

EncoderRegistry default_registry() {
  EncoderRegistry reg;
  std::filesystem::path weights;
  if (const char* w = std::getenv("SEGBENCH_WEIGHTS")) weights = w;
  if (const char* env = std::getenv("SEGBENCH_REGISTRY")) {
    reg.load_file(env, weights);
  } else if (auto p = data_dir() / "registry.yaml"; std::filesystem::exists(p)) {
    reg.load_file(p, weights);
  }
  return reg;
}

}  // namespace segbench
