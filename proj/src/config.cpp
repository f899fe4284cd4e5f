#include "segbench/config.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "segbench/datasets.hpp"
#include "segbench/error.hpp"

namespace segbench {
namespace {

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (int x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
  return out;
}

}  // namespace

const char* to_string(DecoderKind kind) { return kind == DecoderKind::kLinear ? "linear" : "mask"; }

DecoderKind parse_decoder(const std::string& s) {
  if (s == "linear") return DecoderKind::kLinear;
  if (s == "mask" || s == "mask2former") return DecoderKind::kMask;
  throw Error("invalid decoder '" + s + "' (valid: linear, mask)");
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

void ExperimentConfig::validate() const {
  if (model.empty()) throw Error("model name must not be empty");
  if (variant != "B" && variant != "L") throw Error("invalid variant '" + variant + "' (valid: B, L)");
  if (std::find(allowed_patches.begin(), allowed_patches.end(), patch) == allowed_patches.end()) {
    throw Error("invalid patch size " + std::to_string(patch) + " (valid: " + join_ints(allowed_patches) + ")");
  }
  const DatasetSpec train = dataset_spec(train_dataset);
  const DatasetSpec eval = dataset_spec(eval_dataset);
  if (train.num_classes != eval.num_classes) {
    throw Error("train dataset '" + train_dataset + "' and eval dataset '" + eval_dataset +
                "' have different class sets");
  }
  if (resolved_crop() % patch != 0) {
    throw Error("crop " + std::to_string(resolved_crop()) + " is not divisible by patch " + std::to_string(patch));
  }
  if (mask_queries < 1 || mask_layers < 1 || mask_hidden < 1) throw Error("mask decoder sizes must be positive");
  if (train_limit < 0 || eval_limit < 0) throw Error("sample limits must be non-negative");
  schedule().validate();
}

int ExperimentConfig::resolved_crop() const { return crop > 0 ? crop : dataset_spec(train_dataset).crop; }

std::int64_t ExperimentConfig::resolved_steps() const {
  return steps > 0 ? steps : dataset_spec(train_dataset).default_steps;
}

TrainSchedule ExperimentConfig::schedule() const {
  TrainSchedule s;
  s.total_steps = resolved_steps();
  s.effective_batch = effective_batch;
  s.micro_batch = micro_batch;
  s.encoder_lr = encoder_lr;
  s.decoder_lr = decoder_lr;
  s.weight_decay = weight_decay;
  s.seeds = {seed};
  return s;
}

std::string ExperimentConfig::canonical() const {
  char lr[128];
  std::ostringstream os;
  os << "model=" << model << ";variant=" << variant << ";patch=" << patch << ";decoder=" << to_string(decoder)
     << ";freeze=" << (freeze ? 1 : 0) << ";train=" << train_dataset << ";eval=" << eval_dataset
     << ";crop=" << resolved_crop() << ";steps=" << resolved_steps() << ";effective_batch=" << effective_batch
     << ";micro_batch=" << micro_batch;
  std::snprintf(lr, sizeof lr, ";encoder_lr=%.17g;decoder_lr=%.17g;wd=%.17g", encoder_lr, decoder_lr, weight_decay);
  os << lr << ";train_split=" << train_split << ";eval_split=" << eval_split << ";train_limit=" << train_limit
     << ";eval_limit=" << eval_limit;
  if (decoder == DecoderKind::kMask) {
    os << ";queries=" << mask_queries << ";layers=" << mask_layers << ";hidden=" << mask_hidden;
  }
  return os.str();
}

std::string ExperimentConfig::fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

std::string ExperimentConfig::setting_label() const {
  if (!setting.empty()) return setting;
  const ExperimentConfig base;
  std::vector<std::string> parts;
  if (freeze) parts.push_back("freeze");
  if (decoder != base.decoder) parts.push_back(std::string("decoder=") + to_string(decoder));
  if (variant != base.variant) parts.push_back("variant=" + variant);
  if (patch != base.patch) parts.push_back("patch=" + std::to_string(patch));
  if (train_dataset != base.train_dataset) parts.push_back("train=" + train_dataset);
  if (eval_dataset != base.eval_dataset) parts.push_back("eval=" + eval_dataset);
  if (parts.empty()) return "default";
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

void apply_yaml(ExperimentConfig& cfg, const YAML::Node& node) {
  if (!node || node.IsNull()) return;
  if (!node.IsMap()) throw Error("config block must be a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    try {
      if (key == "model") cfg.model = v.as<std::string>();
      else if (key == "variant") cfg.variant = v.as<std::string>();
      else if (key == "patch") cfg.patch = v.as<int>();
      else if (key == "decoder") cfg.decoder = parse_decoder(v.as<std::string>());
      else if (key == "freeze") cfg.freeze = v.as<bool>();
      else if (key == "dataset") cfg.train_dataset = cfg.eval_dataset = v.as<std::string>();
      else if (key == "train_dataset") cfg.train_dataset = v.as<std::string>();
      else if (key == "eval_dataset") cfg.eval_dataset = v.as<std::string>();
      else if (key == "seed") cfg.seed = v.as<std::uint64_t>();
      else if (key == "crop") cfg.crop = v.as<int>();
      else if (key == "steps") cfg.steps = v.as<std::int64_t>();
      else if (key == "effective_batch") cfg.effective_batch = v.as<int>();
      else if (key == "micro_batch") cfg.micro_batch = v.as<int>();
      else if (key == "encoder_lr") cfg.encoder_lr = v.as<double>();
      else if (key == "decoder_lr") cfg.decoder_lr = v.as<double>();
      else if (key == "weight_decay") cfg.weight_decay = v.as<double>();
      else if (key == "train_split") cfg.train_split = v.as<std::string>();
      else if (key == "eval_split") cfg.eval_split = v.as<std::string>();
      else if (key == "train_limit") cfg.train_limit = v.as<int>();
      else if (key == "eval_limit") cfg.eval_limit = v.as<int>();
      else if (key == "mask_queries") cfg.mask_queries = v.as<int>();
      else if (key == "mask_layers") cfg.mask_layers = v.as<int>();
      else if (key == "mask_hidden") cfg.mask_hidden = v.as<int>();
      else if (key == "allowed_patches") cfg.allowed_patches = v.as<std::vector<int>>();
      else if (key == "name" || key == "setting") cfg.setting = v.as<std::string>();
      else throw Error("unknown config key '" + key + "'");
    } catch (const YAML::Exception& e) {
      throw Error("config key '" + key + "': " + e.what());
    }
  }
}

ExperimentConfig load_config_file(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw Error("cannot read config '" + path + "': " + e.what());
  }
  ExperimentConfig cfg;
  if (!root.IsMap()) throw Error("config '" + path + "' must be a mapping");
  apply_yaml(cfg, root["defaults"]);
  YAML::Node rest(YAML::NodeType::Map);
  for (const auto& kv : root) {
    if (kv.first.as<std::string>() != "defaults") rest[kv.first] = kv.second;
  }
  apply_yaml(cfg, rest);
  return cfg;
}

ExperimentMatrix load_matrix_file(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw Error("cannot read matrix '" + path + "': " + e.what());
  }
  ExperimentConfig base;
  apply_yaml(base, root["defaults"]);
  if (!root["models"] || !root["models"].IsSequence()) throw Error("matrix '" + path + "' needs a 'models' list");
  std::vector<std::uint64_t> seeds{0, 1, 2};
  if (root["seeds"]) seeds = root["seeds"].as<std::vector<std::uint64_t>>();

  std::vector<YAML::Node> settings;
  if (root["settings"]) {
    for (const auto& s : root["settings"]) settings.push_back(s);
  } else {
    settings.emplace_back(YAML::NodeType::Map);
  }

  ExperimentMatrix m;
  for (const auto& model_node : root["models"]) {
    for (const auto& setting : settings) {
      for (std::uint64_t seed : seeds) {
        ExperimentConfig cfg = base;
        if (model_node.IsMap()) {
          apply_yaml(cfg, model_node);
        } else {
          cfg.model = model_node.as<std::string>();
        }
        apply_yaml(cfg, setting);
        cfg.seed = seed;
        cfg.validate();
        m.cells.push_back(cfg);
      }
    }
  }
  return m;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"model", c.model},
                     {"variant", c.variant},
                     {"patch", c.patch},
                     {"decoder", to_string(c.decoder)},
                     {"freeze", c.freeze},
                     {"train_dataset", c.train_dataset},
                     {"eval_dataset", c.eval_dataset},
                     {"seed", c.seed},
                     {"crop", c.crop},
                     {"steps", c.steps},
                     {"effective_batch", c.effective_batch},
                     {"micro_batch", c.micro_batch},
                     {"encoder_lr", c.encoder_lr},
                     {"decoder_lr", c.decoder_lr},
                     {"weight_decay", c.weight_decay},
                     {"train_split", c.train_split},
                     {"eval_split", c.eval_split},
                     {"train_limit", c.train_limit},
                     {"eval_limit", c.eval_limit},
                     {"mask_queries", c.mask_queries},
                     {"mask_layers", c.mask_layers},
                     {"mask_hidden", c.mask_hidden},
                     {"allowed_patches", c.allowed_patches},
                     {"setting", c.setting}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.model = j.at("model").get<std::string>();
  c.variant = j.at("variant").get<std::string>();
  c.patch = j.at("patch").get<int>();
  c.decoder = parse_decoder(j.at("decoder").get<std::string>());
  c.freeze = j.at("freeze").get<bool>();
  c.train_dataset = j.at("train_dataset").get<std::string>();
  c.eval_dataset = j.at("eval_dataset").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.crop = j.at("crop").get<int>();
  c.steps = j.at("steps").get<std::int64_t>();
  c.effective_batch = j.at("effective_batch").get<int>();
  c.micro_batch = j.at("micro_batch").get<int>();
  c.encoder_lr = j.at("encoder_lr").get<double>();
  c.decoder_lr = j.at("decoder_lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.train_split = j.at("train_split").get<std::string>();
  c.eval_split = j.at("eval_split").get<std::string>();
  c.train_limit = j.at("train_limit").get<int>();
  c.eval_limit = j.at("eval_limit").get<int>();
  c.mask_queries = j.at("mask_queries").get<int>();
  c.mask_layers = j.at("mask_layers").get<int>();
  c.mask_hidden = j.at("mask_hidden").get<int>();
  c.allowed_patches = j.at("allowed_patches").get<std::vector<int>>();
  c.setting = j.at("setting").get<std::string>();
}

}  // namespace segbench
