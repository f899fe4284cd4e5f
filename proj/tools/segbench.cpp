#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "segbench/benchmark.hpp"
#include "segbench/config.hpp"
#include "segbench/data.hpp"
#include "segbench/datasets.hpp"
#include "segbench/error.hpp"
#include "segbench/registry.hpp"
#include "segbench/report.hpp"
#include "segbench/store.hpp"
#include "segbench/trainer.hpp"

using namespace segbench;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct RunFlags {
  std::string config_file;
  std::string decoder;
  std::string dataset;
  bool freeze = false;
  bool no_freeze = false;
};

// Every ExperimentConfig field gets a flag; values left unset keep the config-file/default value.
void add_config_flags(CLI::App* cmd, ExperimentConfig& cfg, RunFlags& flags) {
  cmd->add_option("--config", flags.config_file, "YAML config file (defaults block + overrides)");
  cmd->add_option("--model", cfg.model, "Encoder name from the registry");
  cmd->add_option("--variant", cfg.variant, "B or L");
  cmd->add_option("--patch", cfg.patch, "Patch size");
  cmd->add_option("--decoder", flags.decoder, "linear or mask");
  cmd->add_flag("--freeze", flags.freeze, "Linear probing: freeze the encoder");
  cmd->add_flag("--no-freeze", flags.no_freeze, "End-to-end fine-tuning");
  cmd->add_option("--dataset", flags.dataset, "Train and eval dataset");
  cmd->add_option("--train-dataset", cfg.train_dataset);
  cmd->add_option("--eval-dataset", cfg.eval_dataset);
  cmd->add_option("--seed", cfg.seed);
  cmd->add_option("--crop", cfg.crop, "Crop size (0 = dataset default)");
  cmd->add_option("--steps", cfg.steps, "Optimizer updates (0 = dataset default)");
  cmd->add_option("--effective-batch", cfg.effective_batch);
  cmd->add_option("--micro-batch", cfg.micro_batch);
  cmd->add_option("--encoder-lr", cfg.encoder_lr);
  cmd->add_option("--decoder-lr", cfg.decoder_lr);
  cmd->add_option("--weight-decay", cfg.weight_decay);
  cmd->add_option("--train-split", cfg.train_split);
  cmd->add_option("--eval-split", cfg.eval_split);
  cmd->add_option("--train-limit", cfg.train_limit, "Keep only the first N training samples");
  cmd->add_option("--eval-limit", cfg.eval_limit, "Keep only the first N evaluation samples");
  cmd->add_option("--mask-queries", cfg.mask_queries);
  cmd->add_option("--mask-layers", cfg.mask_layers);
  cmd->add_option("--mask-hidden", cfg.mask_hidden);
  cmd->add_option("--setting", cfg.setting, "Setting name used for grouping in analyze/report");
}

// Config file (or defaults) first, then only the flags given on the command line.
ExperimentConfig resolve_config(const ExperimentConfig& parsed, const RunFlags& flags, const CLI::App* cmd) {
  ExperimentConfig cfg = flags.config_file.empty() ? default_config() : load_config_file(flags.config_file);
  auto given = [&](const char* name) { return cmd->count(name) > 0; };
  if (given("--model")) cfg.model = parsed.model;
  if (given("--variant")) cfg.variant = parsed.variant;
  if (given("--patch")) cfg.patch = parsed.patch;
  if (!flags.decoder.empty()) cfg.decoder = parse_decoder(flags.decoder);
  if (flags.freeze) cfg.freeze = true;
  if (flags.no_freeze) cfg.freeze = false;
  if (!flags.dataset.empty()) cfg.train_dataset = cfg.eval_dataset = flags.dataset;
  if (given("--train-dataset")) cfg.train_dataset = parsed.train_dataset;
  if (given("--eval-dataset")) cfg.eval_dataset = parsed.eval_dataset;
  if (given("--seed")) cfg.seed = parsed.seed;
  if (given("--crop")) cfg.crop = parsed.crop;
  if (given("--steps")) cfg.steps = parsed.steps;
  if (given("--effective-batch")) cfg.effective_batch = parsed.effective_batch;
  if (given("--micro-batch")) cfg.micro_batch = parsed.micro_batch;
  if (given("--encoder-lr")) cfg.encoder_lr = parsed.encoder_lr;
  if (given("--decoder-lr")) cfg.decoder_lr = parsed.decoder_lr;
  if (given("--weight-decay")) cfg.weight_decay = parsed.weight_decay;
  if (given("--train-split")) cfg.train_split = parsed.train_split;
  if (given("--eval-split")) cfg.eval_split = parsed.eval_split;
  if (given("--train-limit")) cfg.train_limit = parsed.train_limit;
  if (given("--eval-limit")) cfg.eval_limit = parsed.eval_limit;
  if (given("--mask-queries")) cfg.mask_queries = parsed.mask_queries;
  if (given("--mask-layers")) cfg.mask_layers = parsed.mask_layers;
  if (given("--mask-hidden")) cfg.mask_hidden = parsed.mask_hidden;
  if (given("--setting")) cfg.setting = parsed.setting;
  return cfg;
}

void print_result(const RunResult& r) {
  if (r.complete()) {
    std::printf("%s seed=%llu setting=%s mIoU=%.2f train_time=%.1fs params=%lld\n", r.config.model.c_str(),
                static_cast<unsigned long long>(r.seed), r.setting.c_str(), 100.0 * r.miou, r.train_time_s,
                static_cast<long long>(r.trainable_params));
  } else {
    std::printf("%s seed=%llu setting=%s FAILED: %s\n", r.config.model.c_str(), static_cast<unsigned long long>(r.seed),
                r.setting.c_str(), r.error.c_str());
  }
  std::fflush(stdout);
}

// Runs one cell unless a complete record exists. Returns true when the cell ends complete.
bool run_cell(ExperimentConfig cfg, const EncoderRegistry& registry, ResultsStore& store, const TrainOptions& options,
              bool force) {
  if (cfg.setting.empty()) cfg.setting = cfg.setting_label();
  if (!force) {
    if (auto done = store.find_complete(cfg.fingerprint(), cfg.seed)) {
      std::printf("skip %s seed=%llu (complete, fingerprint %s)\n", cfg.model.c_str(),
                  static_cast<unsigned long long>(cfg.seed), done->fingerprint.c_str());
      return true;
    }
  }
  RunResult r = run_training(cfg, registry, options);
  r.setting = cfg.setting;
  store.append(r);
  print_result(r);
  return r.complete();
}

// Validation-first: every encoder is resolved and every dataset split is opened before training.
void preflight(const std::vector<ExperimentConfig>& cells, const EncoderRegistry& registry) {
  std::set<std::pair<std::string, std::string>> checked;
  for (const auto& cfg : cells) {
    cfg.validate();
    registry.get(cfg.model, cfg.variant);
    const DatasetSpec train = dataset_spec(cfg.train_dataset);
    const DatasetSpec eval = dataset_spec(cfg.eval_dataset);
    const std::pair<std::string, std::string> t{cfg.train_dataset, cfg.train_split.empty() ? train.train_split : cfg.train_split};
    const std::pair<std::string, std::string> e{cfg.eval_dataset, cfg.eval_split.empty() ? eval.val_split : cfg.eval_split};
    for (const auto& ds : {t, e}) {
      if (checked.insert(ds).second) load_dataset(ds.first, ds.second);
    }
  }
}

ScoreTable load_table(const std::string& fixture, const std::string& store_path) {
  if (!store_path.empty()) {
    ResultsStore store(store_path);
    auto runs = store.load();
    if (store.skipped_lines() > 0) {
      std::fprintf(stderr, "warning: skipped %zu unparsable line(s) in %s\n", store.skipped_lines(), store_path.c_str());
    }
    return table_from_runs(runs);
  }
  return fixture.empty() ? bundled_fixture() : load_fixture(fixture);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation fine-tuning benchmark harness"};
  app.require_subcommand(1);

  ExperimentConfig run_cfg;
  RunFlags run_flags;
  std::string store_path = "results/results.jsonl";
  std::string work_dir;
  std::int64_t checkpoint_every = 0;
  bool force = false;
  auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
  add_config_flags(run, run_cfg, run_flags);
  run->add_option("--store", store_path, "Results store (JSONL)");
  run->add_option("--work-dir", work_dir, "Checkpoint directory for resumable training");
  run->add_option("--checkpoint-every", checkpoint_every, "Steps between checkpoints");
  run->add_flag("--force", force, "Re-run even if a complete record exists");

  std::string matrix_file;
  int jobs = 1;
  auto* matrix = app.add_subcommand("matrix", "Run every (config, seed) cell of a matrix file");
  matrix->add_option("file", matrix_file, "Matrix YAML")->required()->check(CLI::ExistingFile);
  matrix->add_option("--store", store_path, "Results store (JSONL)");
  matrix->add_option("--work-dir", work_dir, "Checkpoint directory for resumable training");
  matrix->add_option("--checkpoint-every", checkpoint_every, "Steps between checkpoints");
  matrix->add_option("--jobs", jobs, "Parallel worker processes")->check(CLI::PositiveNumber);
  matrix->add_flag("--force", force, "Re-run cells that already have complete records");

  std::string fixture, analysis_store, baseline = "default", tsv_out;
  auto* analyze_cmd = app.add_subcommand("analyze", "Kendall tau, time ratios and parameter deltas vs a baseline");
  analyze_cmd->add_option("--fixture", fixture, "Score fixture YAML (default: bundled published scores)");
  analyze_cmd->add_option("--store", analysis_store, "Results store to analyze instead of a fixture");
  analyze_cmd->add_option("--baseline", baseline, "Baseline setting");
  analyze_cmd->add_option("--tsv", tsv_out, "Also write the table as TSV");

  std::string out_dir = "report";
  auto* report_cmd = app.add_subcommand("report", "Markdown report with SVG bar charts");
  report_cmd->add_option("--fixture", fixture, "Score fixture YAML (default: bundled published scores)");
  report_cmd->add_option("--store", analysis_store, "Results store to report instead of a fixture");
  report_cmd->add_option("--baseline", baseline, "Baseline setting");
  report_cmd->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    TrainOptions options;
    options.work_dir = work_dir;
    options.checkpoint_every = checkpoint_every;

    if (*run) {
      ExperimentConfig cfg;
      try {
        cfg = resolve_config(run_cfg, run_flags, run);
        cfg.validate();
        default_registry().get(cfg.model, cfg.variant);
      } catch (const Error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
      }
      ResultsStore store(store_path);
      return run_cell(cfg, default_registry(), store, options, force) ? 0 : kExitFailure;
    }

    if (*matrix) {
      const EncoderRegistry registry = default_registry();
      ExperimentMatrix m;
      try {
        m = load_matrix_file(matrix_file);
        preflight(m.cells, registry);
      } catch (const Error& e) {
        std::fprintf(stderr, "matrix error: %s\n", e.what());
        return kExitUsage;
      }
      std::printf("%zu cells\n", m.cells.size());
      ResultsStore store(store_path);
      if (jobs <= 1) {
        bool ok = true;
        for (const auto& cfg : m.cells) ok = run_cell(cfg, registry, store, options, force) && ok;
        return ok ? 0 : kExitFailure;
      }
      // Workers take cells round-robin; the store's file lock serializes their appends.
      std::vector<pid_t> workers;
      for (int w = 0; w < jobs; ++w) {
        const pid_t pid = fork();
        if (pid < 0) throw Error("fork failed");
        if (pid == 0) {
          torch::set_num_threads(1);
          ResultsStore worker_store(store_path);
          bool ok = true;
          for (std::size_t i = w; i < m.cells.size(); i += jobs) {
            try {
              ok = run_cell(m.cells[i], registry, worker_store, options, force) && ok;
            } catch (const std::exception& e) {
              std::fprintf(stderr, "cell %zu: %s\n", i, e.what());
              ok = false;
            }
          }
          std::fflush(stdout);
          _exit(ok ? 0 : kExitFailure);
        }
        workers.push_back(pid);
      }
      bool ok = true;
      for (pid_t pid : workers) {
        int status = 0;
        waitpid(pid, &status, 0);
        ok = ok && WIFEXITED(status) && WEXITSTATUS(status) == 0;
      }
      return ok ? 0 : kExitFailure;
    }

    if (*analyze_cmd) {
      const ScoreTable table = load_table(fixture, analysis_store);
      const AnalysisReport report = analyze(table, baseline);
      std::cout << format_text(report);
      if (!tsv_out.empty()) {
        std::ofstream out(tsv_out, std::ios::binary);
        if (!out) throw Error("cannot write '" + tsv_out + "'");
        out << format_tsv(report);
      }
      return 0;
    }

    if (*report_cmd) {
      const ScoreTable table = load_table(fixture, analysis_store);
      for (const auto& p : write_report(table, baseline, out_dir)) std::printf("wrote %s\n", p.string().c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return 0;
}
