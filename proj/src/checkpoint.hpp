#pragma once

#include <map>
#include <string>
#include <vector>

#include "nn.hpp"
#include "tensor.hpp"

namespace clusdiff {

/// Model checkpoint: a text manifest (kind tag, ordered config key/values,
/// optional label vocabulary) followed by named parameter tensors.
/// Header line "CDCK1"; parameters serialized in store order.
struct CheckpointMeta {
  std::string kind;  // "denoiser" | "codec" | "classifier"
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::string> vocab;

  std::string config_value(const std::string& key) const;  // Io error if absent
  int config_int(const std::string& key) const;
  double config_double(const std::string& key) const;
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const nn::ParamStore& params);

/// Reads manifest and parameters. Callers rebuild the architecture from the
/// meta, then install values via install_params.
CheckpointMeta load_checkpoint(const std::string& path,
                               std::map<std::string, Tensor>& out_params);

/// Copies each named tensor into the matching store parameter; missing or
/// shape-mismatched names are state errors.
void install_params(nn::ParamStore& store, const std::map<std::string, Tensor>& values);

}  // namespace clusdiff
