#include "segbench/datasets.hpp"

#include <array>

#include "segbench/error.hpp"

namespace segbench {
namespace {

const std::vector<std::string> kCityscapesClasses = {
    "road",  "sidewalk",   "building", "wall",   "fence", "pole",  "traffic light",
    "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
    "truck", "bus", "train", "motorcycle", "bicycle"};

const std::vector<std::string> kVocClasses = {
    "background", "aeroplane", "bicycle", "bird",  "boat",        "bottle", "bus",
    "car",        "cat",       "chair",   "cow",   "diningtable", "dog",    "horse",
    "motorbike",  "person",    "pottedplant", "sheep", "sofa",    "train",  "tvmonitor"};

const std::vector<std::string> kToyClasses = {"background", "rectangle", "ellipse", "triangle"};

// Cityscapes labelId -> trainId (labels.py of the official scripts); ids absent here are ignored.
constexpr std::array<std::pair<int, int>, 19> kTrainIds = {{
    {7, 0},   {8, 1},   {11, 2},  {12, 3},  {13, 4},  {17, 5},  {19, 6},  {20, 7},  {21, 8},  {22, 9},
    {23, 10}, {24, 11}, {25, 12}, {26, 13}, {27, 14}, {28, 15}, {31, 16}, {32, 17}, {33, 18},
}};

std::vector<std::string> ade_class_names() {
  std::vector<std::string> names;
  for (int i = 0; i < 150; ++i) names.push_back("class_" + std::to_string(i));
  return names;
}

}  // namespace

std::vector<std::string> dataset_names() { return {"ade20k", "voc", "cityscapes", "gta5", "toy-shapes"}; }

DatasetSpec dataset_spec(const std::string& name) {
  DatasetSpec s;
  s.name = name;
  if (name == "ade20k") {
    s.num_classes = 150;
    s.crop = 512;
    s.train_split = "training";
    s.val_split = "validation";
    s.class_names = ade_class_names();
    s.default_steps = 40000;
  } else if (name == "voc") {
    s.num_classes = 21;
    s.crop = 512;
    s.train_split = "train";
    s.val_split = "val";
    s.class_names = kVocClasses;
  } else if (name == "cityscapes") {
    s.num_classes = 19;
    s.crop = 1024;
    s.train_split = "train";
    s.val_split = "val";
    s.class_names = kCityscapesClasses;
  } else if (name == "gta5") {
    s.num_classes = 19;
    s.crop = 1024;
    s.train_split = "train";
    s.val_split = "val";
    s.class_names = kCityscapesClasses;
  } else if (name == "toy-shapes") {
    s.num_classes = 4;
    s.crop = 64;
    s.train_split = "train";
    s.val_split = "val";
    s.class_names = kToyClasses;
    s.default_steps = 200;
  } else {
    std::string valid;
    for (const auto& n : dataset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw Error("unknown dataset '" + name + "' (valid: " + valid + ")");
  }
  return s;
}

std::uint8_t cityscapes_train_id(std::uint8_t label_id) {
  for (const auto& [id, train] : kTrainIds) {
    if (id == label_id) return static_cast<std::uint8_t>(train);
  }
  return 255;
}

}  // namespace segbench
