#include "ltharness.hpp"

#include <algorithm>
#include <set>

#include "error.hpp"
#include "features.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace clusdiff {

std::vector<int> LTDataset::class_counts() const {
  std::vector<int> counts(class_names.size(), 0);
  for (const LTSample& s : samples) {
    if (s.class_id < 0 || size_t(s.class_id) >= class_names.size())
      fail(ErrorKind::Data, "sample class id outside the name table");
    ++counts[size_t(s.class_id)];
  }
  return counts;
}

std::vector<int> LongTailSpec::head_classes() const {
  std::vector<int> out;
  for (size_t c = 0; c < train_counts.size(); ++c)
    if (train_counts[c] > head_threshold) out.push_back(int(c));
  return out;
}

namespace {

void check_spec(const LongTailSpec& spec, size_t classes) {
  if (spec.train_counts.size() != classes)
    fail(ErrorKind::Config, "spec covers " + std::to_string(spec.train_counts.size()) +
                                " classes, dataset has " + std::to_string(classes));
  for (int c : spec.train_counts)
    if (c < 1) fail(ErrorKind::Config, "per-class train count must be >= 1");
  if (spec.test_per_class < 1) fail(ErrorKind::Config, "test quota must be >= 1");
}

}  // namespace

LongTailSplit make_longtail(const std::vector<Tensor>& images, const std::vector<int>& class_ids,
                            const std::vector<std::string>& class_names, const LongTailSpec& spec,
                            uint64_t seed) {
  if (images.size() != class_ids.size())
    fail(ErrorKind::Data, "images/class ids size mismatch");
  check_spec(spec, class_names.size());

  std::vector<std::vector<int>> by_class(class_names.size());
  for (size_t i = 0; i < class_ids.size(); ++i) {
    int c = class_ids[i];
    if (c < 0 || size_t(c) >= class_names.size())
      fail(ErrorKind::Data, "class id outside the name table");
    by_class[size_t(c)].push_back(int(i));
  }

  LongTailSplit split;
  split.train.class_names = class_names;
  split.test.class_names = class_names;
  for (size_t c = 0; c < by_class.size(); ++c) {
    std::vector<int>& idx = by_class[c];
    const int need = spec.train_counts[c] + spec.test_per_class;
    if (int(idx.size()) < need)
      fail(ErrorKind::Data, "class \"" + class_names[c] + "\" has " + std::to_string(idx.size()) +
                                " samples, spec needs " + std::to_string(need));
    Rng rng(Rng::derive(seed, 0x17u), uint64_t(c));
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    for (int j = 0; j < spec.train_counts[c]; ++j) {
      int s = idx[size_t(j)];
      split.train.samples.push_back(LTSample{images[size_t(s)], int(c), s, false, ""});
    }
    for (int j = 0; j < spec.test_per_class; ++j) {
      int s = idx[size_t(spec.train_counts[c] + j)];
      split.test.samples.push_back(LTSample{images[size_t(s)], int(c), s, false, ""});
    }
  }
  return split;
}

LTDataset balance_with_synthetic(const LTDataset& train, const Denoiser& model, const Codec& codec,
                                 const NoiseSchedule& sched, const SubClassDistribution& dist,
                                 int target, uint64_t seed) {
  if (target < 1) fail(ErrorKind::Config, "target count must be >= 1");
  LTDataset out = train;
  std::vector<int> counts = train.class_counts();
  for (size_t c = 0; c < counts.size(); ++c) {
    const int missing = target - counts[c];
    if (missing <= 0) continue;
    GeneratedBatch batch = generate(train.class_names[c], missing, model, codec, sched, dist,
                                    Rng::derive(seed, 0xBA1u + c));
    for (int j = 0; j < missing; ++j)
      out.samples.push_back(LTSample{batch.images[size_t(j)], int(c), -1, true,
                                     format_label(batch.labels[size_t(j)])});
  }
  return out;
}

LTDataset ros(const LTDataset& train, int target, uint64_t seed) {
  if (target < 1) fail(ErrorKind::Config, "target count must be >= 1");
  std::vector<std::vector<int>> by_class(train.class_names.size());
  for (size_t i = 0; i < train.samples.size(); ++i)
    by_class[size_t(train.samples[i].class_id)].push_back(int(i));
  LTDataset out = train;
  for (size_t c = 0; c < by_class.size(); ++c) {
    const std::vector<int>& idx = by_class[c];
    if (idx.empty()) fail(ErrorKind::Data, "class \"" + train.class_names[c] + "\" is empty");
    Rng rng(Rng::derive(seed, 0x805u), uint64_t(c));
    for (int j = int(idx.size()); j < target; ++j)
      out.samples.push_back(train.samples[size_t(idx[size_t(rng.below(idx.size()))])]);
  }
  return out;
}

LTDataset rus(const LTDataset& train, uint64_t seed) {
  std::vector<std::vector<int>> by_class(train.class_names.size());
  for (size_t i = 0; i < train.samples.size(); ++i)
    by_class[size_t(train.samples[i].class_id)].push_back(int(i));
  size_t min_count = train.samples.size();
  for (size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty())
      fail(ErrorKind::Data, "class \"" + train.class_names[c] + "\" is empty");
    min_count = std::min(min_count, by_class[c].size());
  }
  LTDataset out;
  out.class_names = train.class_names;
  for (size_t c = 0; c < by_class.size(); ++c) {
    std::vector<int>& idx = by_class[c];
    Rng rng(Rng::derive(seed, 0x805u), uint64_t(c));
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    for (size_t j = 0; j < min_count; ++j)
      out.samples.push_back(train.samples[size_t(idx[j])]);
  }
  return out;
}

LTMetrics train_and_eval(const LTDataset& train, const LTDataset& test,
                         const std::vector<int>& head_classes, int epochs, uint64_t seed) {
  if (train.samples.empty() || test.samples.empty())
    fail(ErrorKind::Data, "train and test must both be nonempty");
  if (train.class_names != test.class_names)
    fail(ErrorKind::Data, "train/test class tables disagree");
  std::set<int> train_ids, test_ids;
  for (const LTSample& s : train.samples)
    if (!s.synthetic) train_ids.insert(s.source_id);
  for (const LTSample& s : test.samples) test_ids.insert(s.source_id);
  for (int id : test_ids)
    if (id != -1 && train_ids.count(id))
      fail(ErrorKind::Data, "train and test share source sample " + std::to_string(id));

  const Tensor& probe = train.samples[0].image;
  if (probe.rank() != 3 || probe.shape()[1] != probe.shape()[2])
    fail(ErrorKind::Data, "expected square [c,h,w] images");
  ExtractorConfig ec;
  ec.in_ch = probe.shape()[0];
  ec.img = probe.shape()[1];
  ec.c1 = 4;
  ec.c2 = 8;
  ec.d_f = 16;
  ec.classes = int(train.class_names.size());
  FeatureExtractor model(ec, Rng::derive(seed, 0x3Cu));

  std::vector<Tensor> images;
  std::vector<int> labels;
  images.reserve(train.samples.size());
  for (const LTSample& s : train.samples) {
    images.push_back(s.image);
    labels.push_back(s.class_id);
  }
  nn::Adam opt(2e-3);
  train_classifier(model, images, labels, epochs, 16, opt, Rng::derive(seed, 0x3Du));

  std::vector<int> preds(test.samples.size());
  std::vector<int> truth(test.samples.size());
  parallel_for(int64_t(test.samples.size()), [&](int64_t i) {
    preds[size_t(i)] = model.predict(test.samples[size_t(i)].image);
  });
  for (size_t i = 0; i < test.samples.size(); ++i) truth[i] = test.samples[i].class_id;
  return lt_accuracy(preds, truth, head_classes);
}

}  // namespace clusdiff
