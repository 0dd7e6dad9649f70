#pragma once

#include <string>
#include <vector>

#include "conditioning.hpp"
#include "eval.hpp"
#include "tensor.hpp"

namespace clusdiff {

struct LTSample {
  Tensor image;
  int class_id = 0;
  int source_id = -1;       // id in the source dataset; -1 for synthetic
  bool synthetic = false;
  std::string sub_label;    // drawn sub-class label, synthetic samples only
};

struct LTDataset {
  std::vector<LTSample> samples;
  std::vector<std::string> class_names;

  std::vector<int> class_counts() const;
};

/// Imbalanced-training construction: per-class target counts plus a balanced
/// test quota. Classes with a count above head_threshold form the head set.
struct LongTailSpec {
  std::vector<int> train_counts;
  int test_per_class = 25;
  int head_threshold = 0;

  std::vector<int> head_classes() const;
};

struct LongTailSplit {
  LTDataset train;
  LTDataset test;
};

/// Subsample a balanced source into the spec'd imbalanced train set and a
/// balanced test set, disjoint by source id.
LongTailSplit make_longtail(const std::vector<Tensor>& images, const std::vector<int>& class_ids,
                            const std::vector<std::string>& class_names, const LongTailSpec& spec,
                            uint64_t seed);

/// Top every class up to `target` with conditionally generated images; real
/// samples are never touched and classes at or above target are returned
/// as-is. Synthetic samples carry their drawn sub-class label.
LTDataset balance_with_synthetic(const LTDataset& train, const Denoiser& model, const Codec& codec,
                                 const NoiseSchedule& sched, const SubClassDistribution& dist,
                                 int target, uint64_t seed);

/// Random over-sampling: duplicate uniformly chosen samples of each short
/// class until it reaches target.
LTDataset ros(const LTDataset& train, int target, uint64_t seed);

/// Random under-sampling: cut every class down to the minimum class count.
LTDataset rus(const LTDataset& train, uint64_t seed);

/// Train the small classifier on `train`, score on `test`.
LTMetrics train_and_eval(const LTDataset& train, const LTDataset& test,
                         const std::vector<int>& head_classes, int epochs, uint64_t seed);

}  // namespace clusdiff
