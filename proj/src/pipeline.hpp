#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"

namespace clusdiff {

/// One CLI invocation: parsed config, destination, and the flag overrides.
struct StageRequest {
  KeyValues config;
  std::string out_dir;
  bool force = false;
  bool has_seed_override = false;
  uint64_t seed_override = 0;
};

/// What a stage hands back after writing its artifacts. `metrics` is the
/// deterministic key/value list that also lands in <out>/metrics.txt;
/// wall_seconds only ever appears in report.txt so reruns stay byte-identical.
struct StageReport {
  std::string stage;
  uint64_t seed = 0;
  uint32_t config_checksum = 0;
  std::vector<std::pair<std::string, std::string>> metrics;
  double wall_seconds = 0.0;
};

StageReport cmd_dataset_gen(const StageRequest& req);
StageReport cmd_features(const StageRequest& req);
StageReport cmd_cluster(const StageRequest& req);
StageReport cmd_train(const StageRequest& req);
StageReport cmd_generate(const StageRequest& req);
StageReport cmd_fid(const StageRequest& req);
StageReport cmd_lt(const StageRequest& req);

/// Dispatch by subcommand name (dataset-gen, features, cluster, train,
/// generate, fid, lt-run). Unknown names are config errors.
StageReport run_stage(const std::string& name, const StageRequest& req);

}  // namespace clusdiff
