#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "segbench/benchmark.hpp"
#include "segbench/config.hpp"
#include "segbench/datasets.hpp"
#include "segbench/error.hpp"
#include "segbench/registry.hpp"
#include "segbench/report.hpp"
#include "segbench/schedule.hpp"
#include "segbench/store.hpp"

using namespace segbench;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("segbench_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("poly lr endpoints and midpoint") {
  CHECK(poly_lr(0, 40000, 1e-4) == 1e-4);
  CHECK(poly_lr(40000, 40000, 1e-4) == 0.0);
  CHECK(std::fabs(poly_lr(20000, 40000, 1e-4) - 5.359e-5) <= 1e-8);
  CHECK(std::fabs(poly_lr(20000, 40000, 1e-4) - 1e-4 * std::pow(0.5, 0.9)) <= 1e-8);
  CHECK_THROWS_AS(poly_lr(-1, 10, 1e-4), Error);
  CHECK_THROWS_AS(poly_lr(11, 10, 1e-4), Error);
  double prev = 1.0;
  for (int s = 0; s <= 100; ++s) {
    const double lr = poly_lr(s, 100, 1.0);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("schedule validation") {
  TrainSchedule s;
  CHECK(s.accumulation() == 16);
  s.validate();
  s.micro_batch = 3;
  CHECK_THROWS_AS(s.validate(), Error);
  s.micro_batch = 4;
  CHECK(s.accumulation() == 4);
}

TEST_CASE("config validation lists choices") {
  ExperimentConfig c;
  c.patch = 12;
  try {
    c.validate();
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("16,8") != std::string::npos);
  }
  c.allowed_patches = {16, 8, 12};
  c.crop = 516;
  c.validate();
  c = ExperimentConfig{};
  c.variant = "H";
  CHECK_THROWS_AS(c.validate(), Error);
  c = ExperimentConfig{};
  c.train_dataset = "imagenet";
  try {
    c.validate();
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("cityscapes") != std::string::npos);
  }
  c = ExperimentConfig{};
  c.train_dataset = "gta5";  // 19 classes vs ade20k's 150
  CHECK_THROWS_AS(c.validate(), Error);
  c.eval_dataset = "cityscapes";
  c.validate();
  CHECK_THROWS_AS(parse_decoder("fpn"), Error);
  CHECK(parse_decoder("mask2former") == DecoderKind::kMask);
}

TEST_CASE("fingerprint stability") {
  ExperimentConfig a, b;
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint().size() == 16);
  b.seed = 2;
  b.setting = "renamed";
  CHECK(a.fingerprint() == b.fingerprint());
  b.decoder_lr = 1.0000000001e-4;
  CHECK(a.fingerprint() != b.fingerprint());
  // crop=0 resolves to the dataset default; same resolved config, same fingerprint
  ExperimentConfig c;
  c.crop = 512;
  c.steps = 40000;
  CHECK(c.fingerprint() == a.fingerprint());
}

TEST_CASE("fingerprints are injective over the benchmark matrix") {
  const std::vector<std::string> models{"eva02", "eva02-clip", "dinov2", "beit3", "siglip",
                                        "dfn", "deit3-in21k", "deit3-in1k", "mae", "sam", "toy-vit", "toy-vit-deep"};
  std::set<std::string> seen;
  std::size_t cells = 0;
  for (const auto& m : models) {
    std::vector<ExperimentConfig> settings(8);
    settings[1].freeze = true;
    settings[2].decoder = DecoderKind::kMask;
    settings[3].variant = "L";
    settings[4].patch = 8;
    settings[5].train_dataset = settings[5].eval_dataset = "voc";
    settings[6].train_dataset = settings[6].eval_dataset = "cityscapes";
    settings[7].train_dataset = "gta5";
    settings[7].eval_dataset = "cityscapes";
    for (auto& s : settings) {
      s.model = m;
      s.validate();
      seen.insert(s.fingerprint());
      ++cells;
    }
  }
  CHECK(seen.size() == cells);
}

TEST_CASE("setting labels") {
  ExperimentConfig c;
  CHECK(c.setting_label() == "default");
  c.freeze = true;
  c.patch = 8;
  CHECK(c.setting_label() == "freeze,patch=8");
  c.setting = "Linear probing";
  CHECK(c.setting_label() == "Linear probing");
}

TEST_CASE("config file with defaults block") {
  const auto dir = temp_dir("config");
  write(dir / "c.yaml", "defaults:\n  model: toy-vit\n  dataset: toy-shapes\n  steps: 10\nfreeze: true\nseed: 4\n");
  const auto c = load_config_file((dir / "c.yaml").string());
  CHECK(c.model == "toy-vit");
  CHECK(c.train_dataset == "toy-shapes");
  CHECK(c.eval_dataset == "toy-shapes");
  CHECK(c.freeze);
  CHECK(c.seed == 4);
  CHECK(c.resolved_steps() == 10);
  write(dir / "bad.yaml", "modle: x\n");
  CHECK_THROWS_AS(load_config_file((dir / "bad.yaml").string()), Error);
}

TEST_CASE("matrix expansion counts") {
  const auto dir = temp_dir("matrix");
  write(dir / "m.yaml",
        "defaults: {dataset: toy-shapes, steps: 5}\n"
        "models: [toy-vit, toy-vit-deep]\n"
        "settings:\n  - {decoder: linear}\n  - {decoder: mask, mask_queries: 8}\n");
  const auto m = load_matrix_file((dir / "m.yaml").string());
  CHECK(m.cells.size() == 12);
  std::set<std::pair<std::string, std::uint64_t>> keys;
  for (const auto& c : m.cells) keys.insert({c.fingerprint(), c.seed});
  CHECK(keys.size() == 12);
  CHECK(m.cells[0].model == "toy-vit");
  CHECK(m.cells[3].decoder == DecoderKind::kMask);
  write(dir / "bad.yaml", "models: [toy-vit]\nsettings: [{patch: 12}]\n");
  CHECK_THROWS_AS(load_matrix_file((dir / "bad.yaml").string()), Error);
}

TEST_CASE("store round trip preserves every field") {
  RunResult r;
  r.run_id = "abc-s1";
  r.config.model = "toy-vit";
  r.config.decoder = DecoderKind::kMask;
  r.config.freeze = true;
  r.config.encoder_lr = 1.0 / 3.0;
  r.config.allowed_patches = {16, 8, 4};
  r.fingerprint = r.config.fingerprint();
  r.setting = "freeze,decoder=mask";
  r.seed = 1;
  r.miou = 0.1 + 0.2;
  r.per_class_iou = {0.5, std::numeric_limits<double>::quiet_NaN(), 1e-300};
  r.train_time_s = 12.345678901234567;
  r.trainable_params = 123456789012;
  r.steps = 200;
  r.loss_trace = {{0, 1.5}, {50, 0.1 + 0.7}};
  const RunResult back = from_json_line(to_json_line(r));
  CHECK(back.run_id == r.run_id);
  CHECK(back.fingerprint == r.fingerprint);
  CHECK(back.config.fingerprint() == r.config.fingerprint());
  CHECK(back.config.allowed_patches == r.config.allowed_patches);
  CHECK(back.config.encoder_lr == r.config.encoder_lr);
  CHECK(back.setting == r.setting);
  CHECK(back.seed == 1);
  CHECK(back.status == "complete");
  CHECK(back.miou == r.miou);
  REQUIRE(back.per_class_iou.size() == 3);
  CHECK(back.per_class_iou[0] == 0.5);
  CHECK(std::isnan(back.per_class_iou[1]));
  CHECK(back.per_class_iou[2] == 1e-300);
  CHECK(back.train_time_s == r.train_time_s);
  CHECK(back.trainable_params == r.trainable_params);
  CHECK(back.steps == 200);
  CHECK(back.loss_trace == r.loss_trace);
  CHECK_THROWS_AS(from_json_line("{\"run_id\": 1"), Error);
}

TEST_CASE("store skips torn lines and finds complete runs") {
  const auto dir = temp_dir("store");
  ResultsStore store(dir / "r.jsonl");
  RunResult ok;
  ok.fingerprint = "f1";
  ok.seed = 0;
  RunResult failed = ok;
  failed.status = "failed";
  failed.seed = 1;
  store.append(ok);
  store.append(failed);
  {
    std::ofstream out(dir / "r.jsonl", std::ios::app);
    out << "{\"run_id\": \"torn";  // interrupted write, no newline
  }
  RunResult later = ok;
  later.seed = 2;
  store.append(later);
  const auto runs = store.load();
  CHECK(runs.size() == 3);
  CHECK(store.skipped_lines() == 1);
  CHECK(store.find_complete("f1", 0).has_value());
  CHECK_FALSE(store.find_complete("f1", 1).has_value());
  CHECK(store.find_complete("f1", 2).has_value());
  CHECK_FALSE(store.find_complete("f2", 0).has_value());
}

TEST_CASE("table from runs groups by setting") {
  std::vector<RunResult> runs;
  for (const char* model : {"a", "b"}) {
    for (std::uint64_t seed : {1, 0}) {
      RunResult r;
      r.config.model = model;
      r.setting = "default";
      r.seed = seed;
      r.miou = (model[0] == 'a' ? 0.5 : 0.4) + 0.01 * static_cast<double>(seed);
      r.train_time_s = 10;
      r.trainable_params = 2000000;
      runs.push_back(r);
    }
  }
  runs.back().status = "failed";
  const ScoreTable t = table_from_runs(runs);
  REQUIRE(t.settings.size() == 1);
  const auto& a = t.settings[0].models.at("a");
  CHECK(a.per_seed == std::vector<double>{50.0, 51.0});
  CHECK(a.mean == doctest::Approx(50.5));
  CHECK(t.settings[0].models.at("b").per_seed.size() == 1);
  CHECK(*t.settings[0].trainable_params == doctest::Approx(2.0));
}

TEST_CASE("datasets") {
  CHECK(dataset_spec("ade20k").num_classes == 150);
  CHECK(dataset_spec("voc").num_classes == 21);
  CHECK(dataset_spec("cityscapes").num_classes == 19);
  CHECK(dataset_spec("gta5").num_classes == 19);
  CHECK(dataset_spec("toy-shapes").num_classes == 4);
  CHECK(dataset_spec("cityscapes").crop == 1024);
  CHECK(dataset_spec("ade20k").crop == 512);
  CHECK(dataset_spec("ade20k").default_steps == 40000);
  CHECK_THROWS_AS(dataset_spec("coco"), Error);
  CHECK(cityscapes_train_id(7) == 0);    // road
  CHECK(cityscapes_train_id(26) == 13);  // car
  CHECK(cityscapes_train_id(33) == 18);  // bicycle
  CHECK(cityscapes_train_id(0) == 255);
  CHECK(cityscapes_train_id(34) == 255);
}

TEST_CASE("registry") {
  EncoderRegistry reg = default_registry();
  CHECK(reg.contains("toy-vit", "B"));
  CHECK(reg.get("toy-vit", "B").depth == 2);
  CHECK(reg.get("toy-vit", "B").width == 64);
  CHECK(reg.get("toy-vit", "B").random_init());
  CHECK(reg.contains("dinov2", "L"));
  CHECK(reg.get("dinov2", "B").layer_scale);
  CHECK_FALSE(reg.get("siglip", "B").has_class_token);
  for (const char* m : {"eva02", "eva02-clip", "dinov2", "beit3", "siglip", "dfn", "deit3-in21k", "deit3-in1k", "mae", "sam"}) {
    CHECK(reg.contains(m, "B"));
    CHECK(reg.contains(m, "L"));
  }
  try {
    reg.get("resnet50", "B");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("toy-vit") != std::string::npos);
  }
}

TEST_CASE("report is deterministic and flags deviations") {
  const auto a = temp_dir("report_a"), b = temp_dir("report_b");
  const ScoreTable table = bundled_fixture();
  const auto files_a = write_report(table, "default", a);
  const auto files_b = write_report(table, "default", b);
  REQUIRE(files_a.size() == files_b.size());
  for (std::size_t i = 0; i < files_a.size(); ++i) {
    CHECK(files_a[i].filename() == files_b[i].filename());
    CHECK(slurp(files_a[i]) == slurp(files_b[i]));
  }
  const std::string md = slurp(a / "report.md");
  CHECK(md.find("(!)") != std::string::npos);
  const std::string chart = slurp(a / "miou_default.svg");
  CHECK(chart.find("EVA-02: 53.9 ± 0.8") != std::string::npos);
  CHECK(fs::exists(a / "tau.svg"));
}

TEST_CASE("report placeholders and errors") {
  const auto dir = temp_dir("report_empty");
  write_report(ScoreTable{}, "default", dir);
  CHECK(slurp(dir / "report.md").find("_No runs recorded._") != std::string::npos);
  write(dir / "file", "x");
  CHECK_THROWS_AS(write_report(ScoreTable{}, "default", dir / "file" / "sub"), Error);
  CHECK(slug("GTA V->Cityscapes") == "gta-v-cityscapes");
}
