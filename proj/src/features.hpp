#pragma once

#include <string>
#include <vector>

#include "nn.hpp"
#include "tensor.hpp"

namespace clusdiff {

struct ExtractorConfig {
  int in_ch = 1;
  int img = 24;    // square, divisible by 8 (two strided convs + one pool)
  int c1 = 8;
  int c2 = 16;
  int d_f = 32;    // feature width (penultimate layer)
  int classes = 2;
};

/// Small conv classifier whose penultimate layer doubles as the feature
/// extractor for clustering: conv(s2) -> conv(s2) -> 2x2 average pool ->
/// flatten -> linear(d_f) [feature tap] -> silu -> linear(classes). The pool
/// keeps a coarse spatial grid so position information survives into the
/// features.
class FeatureExtractor {
 public:
  FeatureExtractor(const ExtractorConfig& cfg, uint64_t init_seed);

  ad::NodeP logits(nn::Leaves& l, const ad::NodeP& x) const;  // [1, classes]

  /// L2-normalized penultimate activations, shape [d_f].
  Tensor features(const Tensor& x) const;
  int predict(const Tensor& x) const;

  const ExtractorConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

  void save(const std::string& path) const;
  static FeatureExtractor load(const std::string& path);

 private:
  ad::NodeP trunk(nn::Leaves& l, const ad::NodeP& x) const;  // [1, d_f] pre-norm

  ExtractorConfig cfg_;
  nn::ParamStore ps_;
  nn::Conv2d conv1_, conv2_;
  nn::Linear feat_, head_;
};

struct ClassifierTrainStats {
  std::vector<double> step_loss;
  std::vector<double> epoch_loss;
  double accuracy = 0.0;  // final pass over the training set
};

ClassifierTrainStats train_classifier(FeatureExtractor& model, const std::vector<Tensor>& images,
                                      const std::vector<int>& labels, int epochs, int batch,
                                      nn::Adam& opt, uint64_t seed);

/// N x d_f feature rows with parallel sample ids and class labels.
struct FeatureMatrix {
  Tensor z;                         // [N, d_f], rows unit-norm
  std::vector<int> ids;             // defaults to 0..N-1
  std::vector<std::string> labels;  // defaults to empty strings
};

/// Row order follows input order regardless of thread count.
FeatureMatrix extract(const FeatureExtractor& model, const std::vector<Tensor>& images);

/// 1 - cos(a,b), in [0,2]; rank-1 inputs, zero vectors are numeric errors.
double cosine_distance(const Tensor& a, const Tensor& b);

void save_features(const std::string& path, const FeatureMatrix& fm);
FeatureMatrix load_features(const std::string& path);

}  // namespace clusdiff
