#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "segbench/config.hpp"

namespace segbench {

struct LossPoint {
  std::int64_t step = 0;
  double loss = 0.0;
  bool operator==(const LossPoint&) const = default;
};

/// Persisted record of one training/evaluation run.
struct RunResult {
  std::string run_id;
  std::string fingerprint;
  std::string setting;
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::string status = "complete";  // "complete" or "failed"
  std::string error;
  double miou = 0.0;
  std::vector<double> per_class_iou;  // NaN marks classes absent from the eval split
  double train_time_s = 0.0;
  std::int64_t trainable_params = 0;
  std::int64_t steps = 0;
  std::vector<LossPoint> loss_trace;

  bool complete() const { return status == "complete"; }
};

std::string to_json_line(const RunResult& r);
/// Throws segbench::Error on malformed input.
RunResult from_json_line(const std::string& line);

/// Append-only line-delimited store keyed by (fingerprint, seed).
/// Lines that fail to parse (e.g. a torn final write) are skipped on load.
class ResultsStore {
 public:
  explicit ResultsStore(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }

  std::vector<RunResult> load() const;
  /// Latest complete record for (fingerprint, seed), if any.
  std::optional<RunResult> find_complete(const std::string& fingerprint, std::uint64_t seed) const;
  /// Serialized through an internal mutex; each record is one write of one full line.
  void append(const RunResult& r);
  std::size_t skipped_lines() const { return skipped_; }

 private:
  std::filesystem::path path_;
  mutable std::size_t skipped_ = 0;
  std::mutex write_mu_;
};

}  // namespace segbench
