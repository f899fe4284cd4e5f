// Acceptance suite: one PASS/FAIL line per criterion. Arguments select criteria (default: all).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "oracles.hpp"
#include "segbench/analysis.hpp"
#include "segbench/benchmark.hpp"
#include "segbench/encoder.hpp"
#include "segbench/inference.hpp"
#include "segbench/metrics.hpp"
#include "segbench/schedule.hpp"
#include "segbench/trainer.hpp"

using namespace segbench;
namespace F = torch::nn::functional;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed sub-checks for one criterion.
struct Outcome {
  std::vector<std::string> failures;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

std::string num(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void fixture_tau(Outcome& out) {
  const auto t0 = Clock::now();
  const AnalysisReport r = analyze(bundled_fixture(), "default");
  const double secs = seconds_since(t0);
  auto tau_of = [&](const std::string& base, const std::string& setting) -> const AnalysisRow* {
    for (const auto& row : r.rows)
      if (row.baseline == base && row.setting == setting) return &row;
    return nullptr;
  };
  const std::vector<std::pair<std::string, double>> close{{"Mask2Former decoder", 0.87},
                                                          {"ViT-L", 0.87},
                                                          {"8x8 patch size", 0.78},
                                                          {"PASCAL VOC", 0.78},
                                                          {"GTA V->Cityscapes", 0.64}};
  for (const auto& [setting, want] : close) {
    const AnalysisRow* row = tau_of("default", setting);
    out.expect(row && std::fabs(row->tau.seed_means.tau - want) <= 0.005, setting + " tau");
  }
  struct Exact {
    std::string base, setting;
    double tau;
  };
  for (const Exact& e : {Exact{"default", "Linear probing", 19.0 / 45.0}, Exact{"default", "Cityscapes", 27.0 / 45.0},
                         Exact{"Cityscapes", "GTA V->Cityscapes", 31.0 / 45.0}}) {
    const AnalysisRow* row = tau_of(e.base, e.setting);
    out.expect(row && row->tau.seed_means.tau == e.tau, e.setting + " exact tau");
    out.expect(row && row->deviates_from_published, e.setting + " deviation flag");
  }
  std::size_t flagged = 0;
  for (const auto& row : r.rows) flagged += row.deviates_from_published;
  out.expect(flagged == 3, "exactly three flagged rows");
  out.expect(secs < 1.0, "runtime under 1 s");
  out.detail << r.rows.size() << " comparisons, " << flagged << " flagged, " << num(secs, "%.3f") << " s";
}

void metric_oracles(Outcome& out) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  int miou_bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + trial % 4;
    auto gt = oracle::labels(rng, 64 * 64, k, true);
    auto pred = oracle::labels(rng, 64 * 64, k, false);
    ConfusionMatrix cm(k);
    cm.accumulate(LabelView{pred, 64, 64}, LabelView{gt, 64, 64});
    miou_bad += compute_miou(cm).miou != oracle::miou(pred, gt, k);
  }
  int tau_bad = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + trial % 11;
    auto x = oracle::tied_scores(rng, n, 3 + trial % 5);
    auto y = oracle::tied_scores(rng, n, 3 + trial % 7);
    tau_bad += kendall_tau(x, y) != oracle::kendall_tau(x, y);
  }
  const double secs = seconds_since(t0);
  out.expect(miou_bad == 0, std::to_string(miou_bad) + " mIoU mismatches");
  out.expect(tau_bad == 0, std::to_string(tau_bad) + " Kendall mismatches");
  out.expect(secs < 30.0, "runtime under 30 s");
  out.detail << "200 mIoU + 500 Kendall cases, " << num(secs, "%.2f") << " s";
}

void stitching(Outcome& out) {
  torch::manual_seed(4);
  auto weights = torch::randn({5, 3});
  WindowPredictor net = [&](const torch::Tensor& w) { return torch::einsum("kc,chw->khw", {weights, w}).tanh(); };
  auto image = torch::randn({3, 64, 64});
  out.expect(torch::equal(sliding_window_logits(image, net, 64, 64, 64), net(image)), "single window bitwise");

  const int crop = 512, h = 512, w = 768, k = 3;
  auto big = torch::rand({3, h, w});
  std::vector<torch::Tensor> recorded;
  WindowPredictor stub = [&](const torch::Tensor& window) {
    const double scale = static_cast<double>(recorded.size() + 1);
    auto o = window.narrow(0, 0, 1).repeat({k, 1, 1}) * scale +
             torch::arange(k, torch::kFloat32).view({k, 1, 1}) * 10.0 * scale;
    recorded.push_back(o.clone());
    return o;
  };
  auto stitched = sliding_window_logits(big, stub, crop, h, w);
  out.expect(recorded.size() == 2, "two windows");
  if (recorded.size() != 2) return;
  // Hand-computed mean: window 0 covers x in [0, 512), window 1 covers [256, 768).
  auto expected = torch::zeros({k, h, w});
  auto count = torch::zeros({1, 1, w});
  expected.narrow(2, 0, crop).add_(recorded[0]);
  expected.narrow(2, 256, crop).add_(recorded[1]);
  count.narrow(2, 0, crop).add_(1);
  count.narrow(2, 256, crop).add_(1);
  const double err = (stitched - expected / count).abs().max().item<double>();
  out.expect(err <= 1e-6, "512x768 mean error " + num(err, "%.2e"));
  out.detail << "max abs error " << num(err, "%.2e");
}

torch::Tensor bilinear(const torch::Tensor& x, int to) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{to, to})
                               .mode(torch::kBilinear)
                               .align_corners(false)
                               .antialias(false));
}

void resize(Outcome& out) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> pick_p(4, 16), grow(0, 16), channels(1, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = pick_p(rng), q = p + grow(rng), c = channels(rng);
    torch::manual_seed(1000 + trial);
    PatchEmbedKernel kern{torch::randn({c, 3, p, p}, torch::kFloat64), p};
    const auto r = resize_patch_embedding(kern, q);
    auto x = torch::randn({1, 3, p, p}, torch::kFloat64);
    auto lhs = (r.weights * bilinear(x, q)).sum({1, 2, 3});
    auto rhs = (kern.weights * x).sum({1, 2, 3});
    const double scale = std::max(1.0, rhs.abs().max().item<double>());
    worst = std::max(worst, (lhs - rhs).abs().max().item<double>() / scale);
  }
  out.expect(worst <= 1e-5, "PI-resize inner products, worst " + num(worst, "%.2e"));

  torch::manual_seed(5);
  PositionalGrid g{torch::randn({14, 14, 8}), torch::randn({8})};
  out.expect(torch::equal(resize_positional_embedding(g, 14).grid, g.grid), "positional identity");
  PositionalGrid c{torch::full({7, 7, 3}, 0.25), std::nullopt};
  out.expect((resize_positional_embedding(c, 20).grid - 0.25).abs().max().item<double>() < 1e-6,
             "positional constant");
  const auto up = resize_positional_embedding(g, 32);
  bool corners = true;
  for (auto [a, b] : std::vector<std::pair<int, int>>{{0, 0}, {0, 31}, {31, 0}, {31, 31}}) {
    corners = corners && torch::allclose(up.grid[a][b], g.grid[a ? 13 : 0][b ? 13 : 0], 1e-5, 1e-6);
  }
  out.expect(corners, "positional corners");
  out.detail << "100 PI pairs, worst relative error " << num(worst, "%.2e");
}

EncoderSpec tiny_encoder() {
  EncoderSpec s;
  s.name = "tiny";
  s.family = "native";
  s.depth = 1;
  s.width = 16;
  s.heads = 2;
  s.native_patch = 8;
  s.native_grid = 4;
  s.checkpoint = "random";
  return s;
}

SegmentationModel tiny_model(std::uint64_t seed, torch::Dtype dtype) {
  torch::manual_seed(seed);
  SegmentationModel m(ViTEncoder(tiny_encoder(), EncoderGeometry{8, 4}), DecoderKind::kLinear, 3);
  m->to(dtype);
  return m;
}

TrainSchedule tiny_schedule(int effective, int micro, std::int64_t steps) {
  TrainSchedule s;
  s.total_steps = steps;
  s.effective_batch = effective;
  s.micro_batch = micro;
  s.encoder_lr = 1e-3;
  s.decoder_lr = 1e-2;
  return s;
}

std::vector<torch::Tensor> snapshot(const torch::nn::Module& m) {
  std::vector<torch::Tensor> v;
  for (const auto& p : m.parameters()) v.push_back(p.detach().clone());
  return v;
}

double max_rel_diff(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(a[i].abs().max().item<double>(), 1e-12);
    worst = std::max(worst, (a[i] - b[i]).abs().max().item<double>() / scale);
  }
  return worst;
}

void optimization(Outcome& out) {
  out.expect(poly_lr(0, 100, 1e-4) == 1e-4, "poly_lr at step 0");
  out.expect(poly_lr(100, 100, 1e-4) == 0.0, "poly_lr at the last step");
  out.expect(std::fabs(poly_lr(50, 100, 1e-4) - 1e-4 * std::pow(0.5, 0.9)) <= 1e-8, "poly_lr midpoint");

  Trainer accum(tiny_model(1, torch::kFloat64), tiny_schedule(16, 1, 10), false);
  Trainer full(tiny_model(1, torch::kFloat64), tiny_schedule(16, 16, 10), false);
  torch::manual_seed(9);
  double worst = 0.0;
  for (std::int64_t step = 0; step < 3; ++step) {
    MicroBatch big{torch::randn({16, 3, 32, 32}, torch::kFloat64), torch::randint(0, 3, {16, 32, 32}, torch::kInt64)};
    std::vector<MicroBatch> micro;
    for (int i = 0; i < 16; ++i) micro.push_back({big.images.narrow(0, i, 1), big.labels.narrow(0, i, 1)});
    accum.accumulate_step(micro, step);
    full.accumulate_step({big}, step);
    std::vector<torch::Tensor> g1, g2;
    for (const auto& p : accum.model()->parameters()) g1.push_back(p.grad().clone());
    for (const auto& p : full.model()->parameters()) g2.push_back(p.grad().clone());
    worst = std::max({worst, max_rel_diff(g2, g1), max_rel_diff(snapshot(*full.model()), snapshot(*accum.model()))});
  }
  out.expect(worst <= 1e-5, "16x1 accumulation, worst relative diff " + num(worst, "%.2e"));

  Trainer frozen(tiny_model(2, torch::kFloat32), tiny_schedule(1, 1, 1000), true);
  const auto before = snapshot(*frozen.model()->encoder);
  torch::manual_seed(1);
  for (std::int64_t step = 0; step < 1000; ++step) {
    frozen.accumulate_step({{torch::randn({1, 3, 32, 32}), torch::randint(0, 3, {1, 32, 32}, torch::kInt64)}}, step);
  }
  const auto after = snapshot(*frozen.model()->encoder);
  bool unchanged = before.size() == after.size();
  for (std::size_t i = 0; unchanged && i < before.size(); ++i) unchanged = torch::equal(before[i], after[i]);
  out.expect(unchanged, "frozen encoder bitwise unchanged");
  out.detail << "accumulation diff " << num(worst, "%.2e") << ", frozen encoder unchanged over 1000 steps";
}

ExperimentConfig toy_config() {
  ExperimentConfig c;
  c.model = "toy-vit";
  c.train_dataset = "toy-shapes";
  c.eval_dataset = "toy-shapes";
  c.encoder_lr = 5e-4;
  c.decoder_lr = 1e-3;
  c.weight_decay = 0.0;
  c.effective_batch = 8;
  c.allowed_patches = {16, 8, 4};
  return c;
}

void training(Outcome& out) {
  const EncoderRegistry registry;
  ExperimentConfig overfit = toy_config();
  overfit.patch = 4;
  overfit.crop = 96;
  overfit.steps = 2000;
  overfit.train_limit = 4;
  overfit.eval_split = "train";
  overfit.eval_limit = 4;
  const auto t0 = Clock::now();
  const RunResult r = run_training(overfit, registry);
  const double secs = seconds_since(t0);
  out.expect(r.complete(), "overfit run completed");
  out.expect(r.miou >= 0.95, "overfit mIoU " + num(100 * r.miou, "%.2f") + " >= 95");
  out.expect(secs < 600.0, "overfit under 10 min (" + num(secs, "%.0f") + " s)");

  double e2e = 0.0, probe = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ExperimentConfig c = toy_config();
    c.patch = 8;
    c.steps = 300;
    c.seed = seed;
    const RunResult full = run_training(c, registry);
    c.freeze = true;
    const RunResult lin = run_training(c, registry);
    out.expect(full.complete() && lin.complete(), "seed " + std::to_string(seed) + " runs completed");
    e2e += full.miou / 3.0;
    probe += lin.miou / 3.0;
  }
  out.expect(e2e - probe > 0.05, "end-to-end margin " + num(100 * (e2e - probe), "%.2f") + " > 5 points");
  out.detail << "overfit " << num(100 * r.miou, "%.2f") << " mIoU in " << num(secs, "%.0f") << " s; end-to-end "
             << num(100 * e2e, "%.2f") << " vs probe " << num(100 * probe, "%.2f");
}

void parameters(Outcome& out) {
  const EncoderRegistry reg;
  auto count = [&](DecoderKind kind, bool freeze) {
    ViTEncoder enc(reg.get("vit", "B"), EncoderGeometry{16, 32});
    SegmentationModel m(enc, kind, 150, MaskDecoderConfig{});
    set_trainable(m, freeze);
    return static_cast<double>(count_trainable_params(*m)) / 1e6;
  };
  const double base = count(DecoderKind::kLinear, false);
  const double probe = count(DecoderKind::kLinear, true);
  const double delta = count(DecoderKind::kMask, false) - base;
  out.expect(std::fabs(base / 86.6 - 1.0) <= 0.05, "ViT-B + linear " + num(base, "%.2f") + "M");
  out.expect(std::fabs(probe - 0.1) <= 0.05, "linear probing " + num(probe, "%.3f") + "M");
  out.expect(std::fabs(delta / 14.4 - 1.0) <= 0.2, "mask decoder delta " + num(delta, "%.2f") + "M");
  out.detail << "ViT-B+linear " << num(base, "%.2f") << "M, probe " << num(probe, "%.3f") << "M, mask delta +"
             << num(delta, "%.2f") << "M";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"fixture tau reproduction", fixture_tau}, {"metric oracles", metric_oracles},
      {"sliding-window stitching", stitching},   {"patch and positional resize", resize},
      {"optimization mechanics", optimization},  {"training sanity", training},
      {"parameter accounting", parameters}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  torch::set_num_threads(1);
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    Outcome out;
    try {
      criteria[i].second(out);
    } catch (const std::exception& e) {
      out.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = out.failures.empty();
    failed += !ok;
    std::printf("criterion %d %s: %s (%s)\n", id, criteria[i].first.c_str(), ok ? "PASS" : "FAIL",
                out.detail.str().c_str());
    for (const auto& f : out.failures) std::printf("  failed: %s\n", f.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
