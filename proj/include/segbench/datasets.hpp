#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace segbench {

/// Static description of a benchmark dataset.
struct DatasetSpec {
  std::string name;
  int num_classes = 0;
  int crop = 0;
  std::uint8_t ignore_index = 255;
  std::string root;  // resolved at load time; empty for generated datasets
  std::string train_split;
  std::string val_split;
  std::vector<std::string> class_names;
  std::int64_t default_steps = 20000;
};

/// Known names: ade20k, voc, cityscapes, gta5, toy-shapes. Throws on anything else.
DatasetSpec dataset_spec(const std::string& name);
std::vector<std::string> dataset_names();

/// Raw Cityscapes label id (also used by GTA V annotations) to the 19-class train id, 255 otherwise.
std::uint8_t cityscapes_train_id(std::uint8_t label_id);

}  // namespace segbench
