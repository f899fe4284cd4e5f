#include "torch_doctest.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include <png.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "segbench/data.hpp"
#include "segbench/error.hpp"
#include "segbench/model.hpp"

using namespace segbench;
namespace fs = std::filesystem;

namespace {

std::set<int> values(const cv::Mat& m) {
  std::set<int> v;
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) v.insert(m.at<std::uint8_t>(y, x));
  return v;
}

bool same(const cv::Mat& a, const cv::Mat& b) {
  return a.size() == b.size() && a.type() == b.type() && cv::norm(a, b, cv::NORM_INF) == 0;
}

// Palette PNG whose index values differ from the palette colors.
void write_palette_png(const fs::path& path, const cv::Mat& indices) {
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  REQUIRE(fp != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, fp);
  png_set_IHDR(png, info, indices.cols, indices.rows, 8, PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> palette(256);
  for (int i = 0; i < 256; ++i) palette[i] = {static_cast<png_byte>(255 - i), static_cast<png_byte>(i * 7), 3};
  png_set_PLTE(png, info, palette.data(), 256);
  png_write_info(png, info);
  for (int y = 0; y < indices.rows; ++y) png_write_row(png, const_cast<png_bytep>(indices.ptr<std::uint8_t>(y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

TEST_CASE("toy samples are deterministic and well formed") {
  for (std::size_t i = 0; i < 20; ++i) {
    auto a = make_toy_sample("train", i);
    auto b = make_toy_sample("train", i);
    CHECK(same(a.image, b.image));
    CHECK(same(a.label, b.label));
    CHECK(a.image.rows >= 64);
    CHECK(a.image.rows <= 128);
    CHECK(a.image.cols >= 64);
    CHECK(a.image.cols <= 128);
    CHECK(a.label.size() == a.image.size());
    for (int v : values(a.label)) CHECK(v <= 3);
  }
  CHECK_FALSE(same(make_toy_sample("train", 0).label, make_toy_sample("val", 0).label));
  auto ds = load_dataset("toy-shapes", "train");
  CHECK(ds.size() == 64);
  CHECK(load_dataset("toy-shapes", "val").size() == 16);
  CHECK(load_dataset("toy-shapes", "train", {}, 4).size() == 4);
  CHECK_THROWS_AS(ds.get(64), Error);
}

TEST_CASE("augmentation is deterministic per (seed, step, slot) and keeps label ids") {
  const auto sample = make_toy_sample("train", 3);
  const auto original = values(sample.label);
  for (std::uint64_t step = 0; step < 30; ++step) {
    auto r1 = sample_rng(7, step, 1);
    auto r2 = sample_rng(7, step, 1);
    auto a = augment_train(sample, 64, r1);
    auto b = augment_train(sample, 64, r2);
    CHECK(same(a.image, b.image));
    CHECK(same(a.label, b.label));
    CHECK(a.image.rows == 64);
    CHECK(a.image.cols == 64);
    CHECK(a.label.rows == 64);
    for (int v : values(a.label)) CHECK((original.contains(v) || v == 255));
  }
  auto r1 = sample_rng(7, 0, 0), r2 = sample_rng(7, 0, 1), r3 = sample_rng(8, 0, 0);
  CHECK(r1() != r2());
  CHECK(sample_rng(7, 0, 0)() != r3());
}

TEST_CASE("augmentation pads small images with ignore") {
  SegmentationSample s{cv::Mat(10, 10, CV_8UC3, cv::Scalar(50, 60, 70)), cv::Mat(10, 10, CV_8UC1, cv::Scalar(1)), "x"};
  auto rng = sample_rng(0, 0, 0);
  auto out = augment_train(s, 64, rng);
  CHECK(out.image.size() == cv::Size(64, 64));
  CHECK(values(out.label).contains(255));
}

TEST_CASE("eval sizing keeps aspect and sets the shortest side to the crop") {
  CHECK(eval_size({1000, 500}, 512) == cv::Size(1024, 512));
  CHECK(eval_size({500, 1000}, 512) == cv::Size(512, 1024));
  CHECK(eval_size({2048, 1024}, 1024) == cv::Size(2048, 1024));
  SegmentationSample s{cv::Mat(500, 1000, CV_8UC3, cv::Scalar::all(9)), cv::Mat(500, 1000, CV_8UC1, cv::Scalar(2)), "x"};
  auto p = prepare_eval(s, 512);
  CHECK(p.image.size() == cv::Size(1024, 512));
  CHECK(p.label.size() == cv::Size(1000, 500));  // metrics run at the original resolution
}

TEST_CASE("gta/cityscapes label mapping") {
  cv::Mat raw(1, 6, CV_8UC1);
  const std::uint8_t ids[] = {7, 8, 26, 33, 0, 255};
  for (int i = 0; i < 6; ++i) raw.at<std::uint8_t>(0, i) = ids[i];
  cv::Mat m = map_labels(raw);
  CHECK(m.at<std::uint8_t>(0, 0) == 0);
  CHECK(m.at<std::uint8_t>(0, 1) == 1);
  CHECK(m.at<std::uint8_t>(0, 2) == 13);
  CHECK(m.at<std::uint8_t>(0, 3) == 18);
  CHECK(m.at<std::uint8_t>(0, 4) == 255);
  CHECK(m.at<std::uint8_t>(0, 5) == 255);
}

TEST_CASE("label pngs keep raw indices, including palette files") {
  const fs::path dir = fs::temp_directory_path() / "segbench_test_png";
  fs::create_directories(dir);
  cv::Mat lab(5, 7, CV_8UC1);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) lab.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>((y * 7 + x) % 22);
  lab.at<std::uint8_t>(0, 0) = 255;
  write_label_png(dir / "gray.png", lab);
  CHECK(same(read_label_png(dir / "gray.png"), lab));
  write_palette_png(dir / "pal.png", lab);
  CHECK(same(read_label_png(dir / "pal.png"), lab));
  CHECK_THROWS_WITH_AS(read_label_png(dir / "none.png"), doctest::Contains("missing file"), Error);
}

TEST_CASE("ade20k layout: zero label becomes ignore, others shift down") {
  const fs::path root = fs::temp_directory_path() / "segbench_test_ade";
  fs::remove_all(root);
  fs::create_directories(root / "images" / "validation");
  fs::create_directories(root / "annotations" / "validation");
  cv::Mat img(8, 8, CV_8UC3, cv::Scalar(10, 20, 30));
  cv::Mat lab(8, 8, CV_8UC1, cv::Scalar(0));
  lab.at<std::uint8_t>(0, 1) = 1;
  lab.at<std::uint8_t>(0, 2) = 150;
  cv::imwrite((root / "images" / "validation" / "a.jpg").string(), img);
  write_label_png(root / "annotations" / "validation" / "a.png", lab);
  auto ds = load_dataset("ade20k", "validation", root);
  REQUIRE(ds.size() == 1);
  auto s = ds.get(0);
  CHECK(s.label.at<std::uint8_t>(0, 0) == 255);
  CHECK(s.label.at<std::uint8_t>(0, 1) == 0);
  CHECK(s.label.at<std::uint8_t>(0, 2) == 149);
  // BGR on disk, RGB in memory
  CHECK(std::abs(s.image.at<cv::Vec3b>(4, 4)[0] - 30) <= 2);

  cv::imwrite((root / "images" / "validation" / "b.jpg").string(), img);
  CHECK_THROWS_WITH_AS(load_dataset("ade20k", "validation", root),
                       doctest::Contains((root / "annotations" / "validation" / "b.png").string().c_str()), Error);
}

TEST_CASE("dataset roots from environment") {
  ::setenv("SEGBENCH_VOC_ROOT", "/data/voc-here", 1);
  CHECK(dataset_root("voc") == fs::path("/data/voc-here"));
  ::unsetenv("SEGBENCH_VOC_ROOT");
  ::setenv("SEGBENCH_DATA_ROOT", "/data", 1);
  CHECK(dataset_root("voc") == fs::path("/data/VOCdevkit/VOC2012"));
  ::unsetenv("SEGBENCH_DATA_ROOT");
  CHECK_THROWS_AS(load_dataset("cityscapes", "val"), Error);
}

TEST_CASE("image normalization") {
  std::vector<std::uint8_t> px{124, 116, 104};  // close to the ImageNet mean
  auto t = image_to_tensor(px.data(), 1, 1);
  CHECK(has_shape(t, {3, 1, 1}));
  CHECK(t.abs().max().item<double>() < 0.02);
}
