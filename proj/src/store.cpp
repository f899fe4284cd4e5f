#include "segbench/store.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "segbench/error.hpp"

namespace segbench {

using nlohmann::json;

std::string to_json_line(const RunResult& r) {
  json iou = json::array();
  for (double v : r.per_class_iou) {
    if (std::isnan(v)) iou.push_back(nullptr);
    else iou.push_back(v);
  }
  json trace = json::array();
  for (const auto& p : r.loss_trace) trace.push_back({p.step, p.loss});
  json j{{"run_id", r.run_id},
         {"fingerprint", r.fingerprint},
         {"setting", r.setting},
         {"model", r.config.model},
         {"seed", r.seed},
         {"status", r.status},
         {"error", r.error},
         {"miou", r.miou},
         {"per_class_iou", iou},
         {"train_time_s", r.train_time_s},
         {"trainable_params", r.trainable_params},
         {"steps", r.steps},
         {"loss_trace", trace},
         {"config", r.config}};
  return j.dump();
}

RunResult from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    RunResult r;
    r.run_id = j.at("run_id").get<std::string>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.setting = j.at("setting").get<std::string>();
    r.config = j.at("config").get<ExperimentConfig>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.status = j.at("status").get<std::string>();
    r.error = j.at("error").get<std::string>();
    r.miou = j.at("miou").get<double>();
    for (const auto& v : j.at("per_class_iou")) {
      r.per_class_iou.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    }
    r.train_time_s = j.at("train_time_s").get<double>();
    r.trainable_params = j.at("trainable_params").get<std::int64_t>();
    r.steps = j.at("steps").get<std::int64_t>();
    for (const auto& p : j.at("loss_trace")) r.loss_trace.push_back({p.at(0).get<std::int64_t>(), p.at(1).get<double>()});
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed run record: ") + e.what());
  }
}

ResultsStore::ResultsStore(std::filesystem::path path) : path_(std::move(path)) {}

std::vector<RunResult> ResultsStore::load() const {
  std::vector<RunResult> out;
  skipped_ = 0;
  std::ifstream in(path_);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const Error&) {
      ++skipped_;
    }
  }
  return out;
}

std::optional<RunResult> ResultsStore::find_complete(const std::string& fingerprint, std::uint64_t seed) const {
  std::optional<RunResult> hit;
  for (auto& r : load()) {
    if (r.fingerprint == fingerprint && r.seed == seed && r.complete()) hit = std::move(r);
  }
  return hit;
}

void ResultsStore::append(const RunResult& r) {
  const std::string line = to_json_line(r);
  std::lock_guard lock(write_mu_);
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  // Matrix workers are separate processes; an advisory lock on a sidecar file serializes them.
  const std::string lock_path = path_.string() + ".lock";
  const int lock_fd = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
  if (lock_fd < 0) throw Error("cannot open lock file '" + lock_path + "'");
  ::flock(lock_fd, LOCK_EX);
  struct Unlock {
    int fd;
    ~Unlock() {
      ::flock(fd, LOCK_UN);
      ::close(fd);
    }
  } unlock{lock_fd};
  // A torn previous write leaves a line without '\n'; terminate it so this record stays parseable.
  bool needs_newline = false;
  if (std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0) {
    std::ifstream probe(path_, std::ios::binary);
    probe.seekg(-1, std::ios::end);
    needs_newline = probe.get() != '\n';
  }
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot open results store '" + path_.string() + "' for append");
  if (needs_newline) out << '\n';
  out << line << '\n';
  out.flush();
  if (!out) throw Error("write to results store '" + path_.string() + "' failed");
}

}  // namespace segbench
