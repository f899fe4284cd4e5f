#include "segbench/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <png.h>
#include <yaml-cpp/yaml.h>

#include "segbench/error.hpp"

namespace segbench {
namespace fs = std::filesystem;
namespace {

struct FilePair {
  fs::path image;
  fs::path label;
  std::string id;
};

enum class LabelCoding { kAsIs, kReduceZero, kCityscapesIds };

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) throw Error("missing dataset directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing file: " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string strip_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0
             ? s.substr(0, s.size() - suffix.size())
             : s;
}

std::vector<FilePair> list_pairs(const std::string& name, const std::string& split, const fs::path& root) {
  std::vector<FilePair> pairs;
  if (name == "ade20k") {
    for (const auto& img : sorted_files(root / "images" / split, ".jpg")) {
      const std::string stem = img.stem().string();
      pairs.push_back({img, root / "annotations" / split / (stem + ".png"), stem});
    }
  } else if (name == "voc") {
    for (const auto& id : read_lines(root / "ImageSets" / "Segmentation" / (split + ".txt"))) {
      pairs.push_back({root / "JPEGImages" / (id + ".jpg"), root / "SegmentationClass" / (id + ".png"), id});
    }
  } else if (name == "cityscapes") {
    for (const auto& img : sorted_files(root / "leftImg8bit" / split, "_leftImg8bit.png")) {
      const std::string stem = strip_suffix(img.filename().string(), "_leftImg8bit.png");
      const std::string city = img.parent_path().filename().string();
      pairs.push_back({img, root / "gtFine" / split / city / (stem + "_gtFine_labelIds.png"), stem});
    }
  } else if (name == "gta5") {
    std::vector<std::string> ids;
    if (fs::exists(root / (split + ".txt"))) {
      ids = read_lines(root / (split + ".txt"));
    } else {
      for (const auto& img : sorted_files(root / "images", ".png")) ids.push_back(img.stem().string());
    }
    for (const auto& id : ids) pairs.push_back({root / "images" / (id + ".png"), root / "labels" / (id + ".png"), id});
  }
  return pairs;
}

LabelCoding coding_for(const std::string& name) {
  if (name == "ade20k") return LabelCoding::kReduceZero;
  if (name == "cityscapes" || name == "gta5") return LabelCoding::kCityscapesIds;
  return LabelCoding::kAsIs;
}

cv::Mat decode_label(const cv::Mat& raw, LabelCoding coding) {
  switch (coding) {
    case LabelCoding::kAsIs: return raw;
    case LabelCoding::kCityscapesIds: return map_labels(raw);
    case LabelCoding::kReduceZero: {
      cv::Mat lut(1, 256, CV_8U);
      for (int i = 0; i < 256; ++i) lut.at<std::uint8_t>(i) = i == 0 ? 255 : (i == 255 ? 255 : i - 1);
      cv::Mat out;
      cv::LUT(raw, lut, out);
      return out;
    }
  }
  return raw;
}

const char* standard_dir(const std::string& name) {
  if (name == "ade20k") return "ADEChallengeData2016";
  if (name == "voc") return "VOCdevkit/VOC2012";
  if (name == "cityscapes") return "cityscapes";
  if (name == "gta5") return "gta5";
  return "";
}

std::string env_key(const std::string& name) {
  std::string key = "SEGBENCH_";
  for (char c : name) key += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(c)) : '_';
  return key + "_ROOT";
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
std::uint32_t lo32(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
std::uint32_t hi32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

bool coin(std::mt19937_64& rng) { return std::bernoulli_distribution(0.5)(rng); }

void color_jitter(cv::Mat& rgb, std::mt19937_64& rng) {
  cv::Mat f;
  rgb.convertTo(f, CV_32FC3);
  if (coin(rng)) f += cv::Scalar::all(uniform(rng, -32.0, 32.0));
  if (coin(rng)) {
    const double alpha = uniform(rng, 0.5, 1.5);
    f = f * alpha;
  }
  if (coin(rng)) {
    const double alpha = uniform(rng, 0.5, 1.5);
    cv::Mat gray;
    cv::cvtColor(f, gray, cv::COLOR_RGB2GRAY);
    cv::Mat gray3;
    cv::cvtColor(gray, gray3, cv::COLOR_GRAY2RGB);
    f = f * alpha + gray3 * (1.0 - alpha);
  }
  cv::Mat clipped;
  f.convertTo(clipped, CV_8UC3);  // saturates to [0, 255]
  if (coin(rng)) {
    // OpenCV 8-bit hue spans [0, 180): 18 degrees = 9 units.
    const int shift = static_cast<int>(std::lround(uniform(rng, -9.0, 9.0)));
    cv::Mat hsv;
    cv::cvtColor(clipped, hsv, cv::COLOR_RGB2HSV);
    for (int y = 0; y < hsv.rows; ++y) {
      auto* row = hsv.ptr<cv::Vec3b>(y);
      for (int x = 0; x < hsv.cols; ++x) row[x][0] = static_cast<std::uint8_t>((row[x][0] + shift + 180) % 180);
    }
    cv::cvtColor(hsv, clipped, cv::COLOR_HSV2RGB);
  }
  rgb = clipped;
}

}  // namespace

SegmentationDataset::SegmentationDataset(DatasetSpec spec, std::string split, std::size_t size, Loader loader)
    : spec_(std::move(spec)), split_(std::move(split)), size_(size), loader_(std::move(loader)) {}

SegmentationSample SegmentationDataset::get(std::size_t index) const {
  if (index >= size_) throw Error("sample index " + std::to_string(index) + " out of range");
  return loader_(index);
}

fs::path dataset_root(const std::string& name) {
  if (const char* v = std::getenv(env_key(name).c_str())) return v;
  if (const char* file = std::getenv("SEGBENCH_DATASETS")) {
    try {
      auto node = YAML::LoadFile(file)[name];
      if (node) return node.as<std::string>();
    } catch (const YAML::Exception& e) {
      throw Error(std::string("cannot read dataset roots file '") + file + "': " + e.what());
    }
  }
  if (const char* base = std::getenv("SEGBENCH_DATA_ROOT")) return fs::path(base) / standard_dir(name);
  return {};
}

SegmentationSample make_toy_sample(const std::string& split, std::size_t index) {
  std::uint64_t split_key = 0;
  for (char c : split) split_key = split_key * 131 + static_cast<unsigned char>(c);
  std::seed_seq seq{0x70795eu, lo32(split_key), hi32(split_key), lo32(index), hi32(index)};
  std::mt19937_64 rng(seq);
  auto irand = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int h = irand(64, 128);
  const int w = irand(64, 128);
  SegmentationSample s;
  s.id = split + "_" + std::to_string(index);
  s.image = cv::Mat(h, w, CV_8UC3);
  std::normal_distribution<double> noise(128.0, 30.0);
  for (int y = 0; y < h; ++y) {
    auto* row = s.image.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) row[x][c] = cv::saturate_cast<std::uint8_t>(noise(rng));
    }
  }
  s.label = cv::Mat(h, w, CV_8UC1, cv::Scalar(0));

  const int shapes = irand(1, 3);
  for (int i = 0; i < shapes; ++i) {
    const int cls = irand(1, 3);
    const cv::Scalar color(irand(0, 255), irand(0, 255), irand(0, 255));
    const int sw = irand(w / 5, w / 2);
    const int sh = irand(h / 5, h / 2);
    const int cx = irand(sw / 2, w - 1 - sw / 2);
    const int cy = irand(sh / 2, h - 1 - sh / 2);
    const cv::Scalar id(cls);
    if (cls == 1) {
      const cv::Rect r(cx - sw / 2, cy - sh / 2, sw, sh);
      cv::rectangle(s.image, r, color, cv::FILLED);
      cv::rectangle(s.label, r, id, cv::FILLED);
    } else if (cls == 2) {
      cv::ellipse(s.image, {cx, cy}, {sw / 2, sh / 2}, 0, 0, 360, color, cv::FILLED);
      cv::ellipse(s.label, {cx, cy}, {sw / 2, sh / 2}, 0, 0, 360, id, cv::FILLED);
    } else {
      const std::vector<cv::Point> tri{{cx, cy - sh / 2}, {cx - sw / 2, cy + sh / 2}, {cx + sw / 2, cy + sh / 2}};
      cv::fillConvexPoly(s.image, tri, color);
      cv::fillConvexPoly(s.label, tri, id);
    }
  }
  return s;
}

SegmentationDataset load_dataset(const std::string& name, const std::string& split, const fs::path& root_arg,
                                 int limit) {
  DatasetSpec spec = dataset_spec(name);
  const std::string resolved_split = split.empty() ? spec.train_split : split;
  if (name == "toy-shapes") {
    const std::size_t size = limit > 0 ? static_cast<std::size_t>(limit) : (resolved_split == spec.train_split ? 64 : 16);
    return SegmentationDataset(spec, resolved_split, size,
                               [resolved_split](std::size_t i) { return make_toy_sample(resolved_split, i); });
  }
  const fs::path root = root_arg.empty() ? dataset_root(name) : root_arg;
  if (root.empty()) {
    throw Error("no root configured for dataset '" + name + "' (set " + env_key(name) +
                ", SEGBENCH_DATASETS or SEGBENCH_DATA_ROOT)");
  }
  spec.root = root.string();
  auto pairs = list_pairs(name, resolved_split, root);
  if (limit > 0 && pairs.size() > static_cast<std::size_t>(limit)) pairs.resize(limit);
  for (const auto& p : pairs) {
    if (!fs::exists(p.image)) throw Error("missing file: " + p.image.string());
    if (!fs::exists(p.label)) throw Error("missing file: " + p.label.string());
  }
  if (pairs.empty()) throw Error("dataset '" + name + "' split '" + resolved_split + "' under " + root.string() + " is empty");
  const LabelCoding coding = coding_for(name);
  const std::size_t size = pairs.size();
  return SegmentationDataset(spec, resolved_split, size, [pairs = std::move(pairs), coding](std::size_t i) {
    const FilePair& p = pairs[i];
    SegmentationSample s;
    s.id = p.id;
    cv::Mat bgr = cv::imread(p.image.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw Error("cannot decode image " + p.image.string());
    cv::cvtColor(bgr, s.image, cv::COLOR_BGR2RGB);
    s.label = decode_label(read_label_png(p.label), coding);
    if (s.label.size() != s.image.size()) throw Error("label size differs from image for " + p.id);
    return s;
  });
}

SegmentationSample augment_train(const SegmentationSample& sample, int crop, std::mt19937_64& rng) {
  SegmentationSample s{sample.image.clone(), sample.label.clone(), sample.id};
  if (coin(rng)) {
    cv::flip(s.image, s.image, 1);
    cv::flip(s.label, s.label, 1);
  }
  color_jitter(s.image, rng);

  const double scale = uniform(rng, 0.5, 2.0);
  const cv::Size size(std::max(1, static_cast<int>(std::lround(s.image.cols * scale))),
                      std::max(1, static_cast<int>(std::lround(s.image.rows * scale))));
  cv::resize(s.image, s.image, size, 0, 0, cv::INTER_LINEAR);
  cv::resize(s.label, s.label, size, 0, 0, cv::INTER_NEAREST);

  const int pad_h = std::max(0, crop - s.image.rows);
  const int pad_w = std::max(0, crop - s.image.cols);
  if (pad_h > 0 || pad_w > 0) {
    cv::copyMakeBorder(s.image, s.image, 0, pad_h, 0, pad_w, cv::BORDER_CONSTANT, cv::Scalar::all(0));
    cv::copyMakeBorder(s.label, s.label, 0, pad_h, 0, pad_w, cv::BORDER_CONSTANT, cv::Scalar(255));
  }
  const int y0 = std::uniform_int_distribution<int>(0, s.image.rows - crop)(rng);
  const int x0 = std::uniform_int_distribution<int>(0, s.image.cols - crop)(rng);
  const cv::Rect window(x0, y0, crop, crop);
  s.image = s.image(window).clone();
  s.label = s.label(window).clone();
  return s;
}

cv::Size eval_size(cv::Size original, int crop) {
  const int shortest = std::min(original.width, original.height);
  const double scale = static_cast<double>(crop) / shortest;
  const int w = original.width == shortest ? crop : static_cast<int>(std::lround(original.width * scale));
  const int h = original.height == shortest ? crop : static_cast<int>(std::lround(original.height * scale));
  return {w, h};
}

SegmentationSample prepare_eval(const SegmentationSample& sample, int crop) {
  SegmentationSample s{cv::Mat(), sample.label, sample.id};
  const cv::Size target = eval_size(sample.image.size(), crop);
  if (target == sample.image.size()) {
    s.image = sample.image.clone();
  } else {
    cv::resize(sample.image, s.image, target, 0, 0, cv::INTER_LINEAR);
  }
  return s;
}

cv::Mat map_labels(const cv::Mat& gta_label) {
  cv::Mat lut(1, 256, CV_8U);
  for (int i = 0; i < 256; ++i) lut.at<std::uint8_t>(i) = cityscapes_train_id(static_cast<std::uint8_t>(i));
  cv::Mat out;
  cv::LUT(gta_label, lut, out);
  return out;
}

cv::Mat read_label_png(const fs::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw Error("missing file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw Error("cannot decode label PNG " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw Error("label PNG " + path.string() + " is not single-channel (gray or palette)");
  }
  if (depth < 8) {
    if (color == PNG_COLOR_TYPE_GRAY) png_set_expand_gray_1_2_4_to_8(png);
    else png_set_packing(png);
  }
  if (depth == 16) png_set_strip_16(png);
  png_read_update_info(png, info);
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  cv::Mat out(h, w, CV_8UC1);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = out.ptr<std::uint8_t>(y);
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return out;
}

void write_label_png(const fs::path& path, const cv::Mat& label) {
  if (label.type() != CV_8UC1) throw Error("label must be CV_8UC1");
  if (!cv::imwrite(path.string(), label)) throw Error("cannot write " + path.string());
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t step, std::uint64_t slot) {
  std::seed_seq seq{lo32(seed), hi32(seed), lo32(step), hi32(step), lo32(slot), hi32(slot), 0x5e9bu};
  return std::mt19937_64(seq);
}

}  // namespace segbench
