#pragma once

#include <string>
#include <vector>

#include "features.hpp"
#include "tensor.hpp"

namespace clusdiff {

/// Sample mean and ridge-regularized sample covariance (denominator N-1,
/// plus 1e-6 on the diagonal) of a feature set.
struct GaussianStats {
  Tensor mu;     // [d]
  Tensor sigma;  // [d,d], symmetric
  int n = 0;
};

inline constexpr double kCovRidge = 1e-6;

GaussianStats fit_gaussian(const Tensor& feats);  // [N,d], N >= 2
inline GaussianStats fit_gaussian(const FeatureMatrix& fm) { return fit_gaussian(fm.z); }

/// Symmetric PSD square root via Jacobi eigendecomposition; negative
/// eigenvalues (numerical residue) are clipped at zero.
Tensor matrix_sqrt_psd(const Tensor& S);

/// d^2 = |mu1-mu2|^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
/// Nonnegative; symmetric in its arguments to numerical precision.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct FidRow {
  std::string name;  // class name, or "pooled" for the last row
  double value = 0.0;
  int n_real = 0;
  int n_gen = 0;
};

struct FidReport {
  std::vector<FidRow> rows;  // one per class, then "pooled"
  uint32_t extractor_checksum = 0;
};

/// Per-class and pooled Fréchet distances between real and generated images
/// under one extractor. Class ids index class_names; every class needs at
/// least two samples on each side. The result is invariant to sample order.
FidReport fid_report(const std::vector<Tensor>& real_images,
                     const std::vector<int>& real_classes,
                     const std::vector<Tensor>& gen_images,
                     const std::vector<int>& gen_classes,
                     const std::vector<std::string>& class_names,
                     const FeatureExtractor& extractor);

/// Fraction of prototype rows with at least one generated row within the
/// cosine-distance threshold. Empty generated set gives 0.
double mode_recall(const Tensor& gen_feats, const Tensor& proto_feats, double threshold = 0.2);

/// Head/tail/overall accuracy in percent; per-class accuracies are
/// macro-averaged within each group and overall.
struct LTMetrics {
  double head = 0.0;
  double tail = 0.0;
  double overall = 0.0;
  std::vector<int> head_classes;  // ascending
};

LTMetrics lt_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                      const std::vector<int>& head_classes);

}  // namespace clusdiff
