#pragma once

#include <string>
#include <vector>

#include "apcluster.hpp"
#include "denoiser.hpp"
#include "latentcodec.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace clusdiff {

/// Canonical string form "class_clusterID". Class names may themselves
/// contain underscores, so the LAST underscore is the separator and the
/// cluster id is the trailing integer.
struct SubClassLabel {
  std::string class_name;
  int cluster_id = 1;  // >= 1

  bool operator==(const SubClassLabel& o) const {
    return class_name == o.class_name && cluster_id == o.cluster_id;
  }
};

std::string format_label(const SubClassLabel& l);
SubClassLabel parse_label(const std::string& s);

struct SubClassEntry {
  int cluster_id = 0;
  int count = 0;
  double probability = 0.0;
};

struct ClassDistribution {
  std::string class_name;
  int total = 0;
  std::vector<SubClassEntry> entries;  // ascending cluster_id
};

struct SubClassDistribution {
  std::vector<ClassDistribution> classes;

  bool has(const std::string& class_name) const;
  const ClassDistribution& at(const std::string& class_name) const;  // Vocabulary error
};

/// Latent training set: encoded samples with their sub-class labels and the
/// original class retained alongside.
struct LabeledLatentDataset {
  std::vector<Tensor> z;
  std::vector<SubClassLabel> labels;     // per sample
  std::vector<int> class_ids;            // per sample
  std::vector<std::string> class_names;  // per class id
};

/// Relabel every sample as "class_clusterID" using the per-class clustering
/// and encode it through the codec. Sizes must agree; cluster ids must be
/// assigned (>= 1) for every sample.
LabeledLatentDataset assign_subclasses(const std::vector<Tensor>& images,
                                       const std::vector<int>& class_ids,
                                       const std::vector<std::string>& class_names,
                                       const PerClassClusters& clusters,
                                       const Codec& codec);

/// Per-class sub-class frequencies; probability = count / class total.
SubClassDistribution empirical_distribution(const LabeledLatentDataset& ds);

/// Same, straight from labels; class order follows first appearance.
SubClassDistribution empirical_distribution(const std::vector<SubClassLabel>& labels);

/// The closed label set induced by a distribution, classes in order, cluster
/// ids ascending; this is the denoiser vocabulary.
std::vector<std::string> label_vocabulary(const SubClassDistribution& dist);

/// One categorical draw over the class's sub-classes.
SubClassLabel sample_label(const std::string& class_name, const SubClassDistribution& dist,
                           Rng& rng);

struct GeneratedBatch {
  std::vector<Tensor> images;        // decoded to image space
  std::vector<SubClassLabel> labels; // the label each image was conditioned on
};

/// Distribution-matched conditional generation: per image, draw a sub-class
/// label from the empirical distribution, run the reverse chain conditioned
/// on it, decode. Images are independent RNG streams keyed by request index,
/// so the batch is deterministic in (seed) and thread-count independent.
GeneratedBatch generate(const std::string& class_name, int n, const Denoiser& model,
                        const Codec& codec, const NoiseSchedule& sched,
                        const SubClassDistribution& dist, uint64_t seed);

void save_distribution(const std::string& path, const SubClassDistribution& dist);
SubClassDistribution load_distribution(const std::string& path);

}  // namespace clusdiff
