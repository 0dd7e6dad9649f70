#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "checksum.hpp"
#include "error.hpp"

namespace clusdiff {

GaussianStats fit_gaussian(const Tensor& feats) {
  if (feats.rank() != 2)
    fail(ErrorKind::Shape, "feature matrix must be rank 2, got " + feats.shape_str());
  const int n = feats.shape()[0];
  const int d = feats.shape()[1];
  if (n < 2)
    fail(ErrorKind::Data, "need at least 2 samples to fit a gaussian, got " + std::to_string(n));
  GaussianStats g;
  g.n = n;
  g.mu = Tensor({d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) g.mu[j] += feats.at(i, j);
  for (int j = 0; j < d; ++j) g.mu[j] /= n;

  g.sigma = Tensor({d, d});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) {
      double da = feats.at(i, a) - g.mu[a];
      for (int b = a; b < d; ++b) g.sigma.at(a, b) += da * (feats.at(i, b) - g.mu[b]);
    }
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      double v = g.sigma.at(a, b) / (n - 1);
      g.sigma.at(a, b) = v;
      g.sigma.at(b, a) = v;  // symmetric by construction
    }
  for (int a = 0; a < d; ++a) g.sigma.at(a, a) += kCovRidge;
  g.sigma.require_finite("covariance");
  return g;
}

namespace {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: S = V diag(w) V^T.
void jacobi_eigh(const Tensor& S, std::vector<double>& w, Tensor& V) {
  const int d = S.shape()[0];
  Tensor A = S;
  V = Tensor({d, d});
  for (int i = 0; i < d; ++i) V.at(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += A.at(p, q) * A.at(p, q);
    if (off < 1e-26) break;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        double apq = A.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        double theta = (A.at(q, q) - A.at(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < d; ++k) {
          double akp = A.at(k, p), akq = A.at(k, q);
          A.at(k, p) = c * akp - s * akq;
          A.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          double apk = A.at(p, k), aqk = A.at(q, k);
          A.at(p, k) = c * apk - s * aqk;
          A.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < d; ++k) {
          double vkp = V.at(k, p), vkq = V.at(k, q);
          V.at(k, p) = c * vkp - s * vkq;
          V.at(k, q) = s * vkp + c * vkq;
        }
      }
  }
  w.assign(size_t(d), 0.0);
  for (int i = 0; i < d; ++i) w[size_t(i)] = A.at(i, i);
}

Tensor mm_square(const Tensor& A, const Tensor& B) {
  const int d = A.shape()[0];
  Tensor C({d, d});
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      double a = A.at(i, k);
      if (a == 0.0) continue;
      for (int j = 0; j < d; ++j) C.at(i, j) += a * B.at(k, j);
    }
  return C;
}

}  // namespace

Tensor matrix_sqrt_psd(const Tensor& S) {
  if (S.rank() != 2 || S.shape()[0] != S.shape()[1])
    fail(ErrorKind::Shape, "matrix square root needs a square matrix, got " + S.shape_str());
  const int d = S.shape()[0];
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (std::abs(S.at(i, j) - S.at(j, i)) > 1e-8)
        fail(ErrorKind::Numeric, "matrix is not symmetric at (" + std::to_string(i) + "," +
                                     std::to_string(j) + ")");
  std::vector<double> w;
  Tensor V;
  jacobi_eigh(S, w, V);
  for (double& x : w) x = x > 0.0 ? std::sqrt(x) : 0.0;  // clip residue
  // root = V diag(sqrt w) V^T, symmetrized against round-off
  Tensor R({d, d});
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += V.at(i, k) * w[size_t(k)] * V.at(j, k);
      R.at(i, j) = s;
      R.at(j, i) = s;
    }
  return R;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mu.rank() != 1 || b.mu.rank() != 1 || a.mu.shape() != b.mu.shape())
    fail(ErrorKind::Shape, "gaussian stats dimensions disagree: " + a.mu.shape_str() + " vs " +
                               b.mu.shape_str());
  const int d = a.mu.shape()[0];
  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    double diff = a.mu[i] - b.mu[i];
    mean_term += diff * diff;
  }
  Tensor s1h = matrix_sqrt_psd(a.sigma);
  Tensor inner = mm_square(mm_square(s1h, b.sigma), s1h);
  // exact symmetry of s1h * S2 * s1h holds analytically; enforce it bitwise
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      double v = 0.5 * (inner.at(i, j) + inner.at(j, i));
      inner.at(i, j) = v;
      inner.at(j, i) = v;
    }
  Tensor cross = matrix_sqrt_psd(inner);
  double tr = 0.0;
  for (int i = 0; i < d; ++i) tr += a.sigma.at(i, i) + b.sigma.at(i, i) - 2.0 * cross.at(i, i);
  double val = mean_term + tr;
  return val > 0.0 ? val : 0.0;  // clip numerical residue
}

namespace {

/// Lexicographic sort of the feature rows makes the downstream statistics a
/// pure function of the multiset, independent of sample order.
Tensor sorted_rows(const std::vector<const Tensor*>& rows, int d) {
  std::vector<const Tensor*> order = rows;
  std::sort(order.begin(), order.end(), [&](const Tensor* x, const Tensor* y) {
    for (int j = 0; j < d; ++j) {
      if ((*x)[j] < (*y)[j]) return true;
      if ((*x)[j] > (*y)[j]) return false;
    }
    return false;
  });
  Tensor out({int(order.size()), d});
  for (size_t i = 0; i < order.size(); ++i)
    for (int j = 0; j < d; ++j) out.at(int(i), j) = (*order[i])[j];
  return out;
}

}  // namespace

FidReport fid_report(const std::vector<Tensor>& real_images, const std::vector<int>& real_classes,
                     const std::vector<Tensor>& gen_images, const std::vector<int>& gen_classes,
                     const std::vector<std::string>& class_names,
                     const FeatureExtractor& extractor) {
  if (real_images.size() != real_classes.size() || gen_images.size() != gen_classes.size())
    fail(ErrorKind::Data, "image/class list size mismatch");
  if (class_names.empty()) fail(ErrorKind::Data, "no classes to compare");
  const int C = int(class_names.size());
  auto check_ids = [&](const std::vector<int>& ids, const char* which) {
    for (int c : ids)
      if (c < 0 || c >= C)
        fail(ErrorKind::Data, std::string(which) + " class id " + std::to_string(c) +
                                  " outside the name table");
  };
  check_ids(real_classes, "real");
  check_ids(gen_classes, "generated");

  FeatureMatrix fr = extract(extractor, real_images);
  FeatureMatrix fg = extract(extractor, gen_images);
  const int d = extractor.config().d_f;

  // Per-row views for regrouping.
  std::vector<Tensor> rrows(real_images.size()), grows(gen_images.size());
  for (size_t i = 0; i < rrows.size(); ++i) {
    rrows[i] = Tensor({d});
    for (int j = 0; j < d; ++j) rrows[i][j] = fr.z.at(int(i), j);
  }
  for (size_t i = 0; i < grows.size(); ++i) {
    grows[i] = Tensor({d});
    for (int j = 0; j < d; ++j) grows[i][j] = fg.z.at(int(i), j);
  }

  FidReport rep;
  rep.extractor_checksum = params_checksum(extractor.params());
  std::vector<const Tensor*> pool_r, pool_g;
  for (int c = 0; c < C; ++c) {
    std::vector<const Tensor*> rc, gc;
    for (size_t i = 0; i < rrows.size(); ++i)
      if (real_classes[i] == c) rc.push_back(&rrows[i]);
    for (size_t i = 0; i < grows.size(); ++i)
      if (gen_classes[i] == c) gc.push_back(&grows[i]);
    if (rc.size() < 2 || gc.size() < 2)
      fail(ErrorKind::Data, "class \"" + class_names[size_t(c)] +
                                "\" needs at least 2 real and 2 generated samples");
    GaussianStats sr = fit_gaussian(sorted_rows(rc, d));
    GaussianStats sg = fit_gaussian(sorted_rows(gc, d));
    rep.rows.push_back(FidRow{class_names[size_t(c)], frechet_distance(sr, sg), int(rc.size()),
                              int(gc.size())});
    pool_r.insert(pool_r.end(), rc.begin(), rc.end());
    pool_g.insert(pool_g.end(), gc.begin(), gc.end());
  }
  GaussianStats sr = fit_gaussian(sorted_rows(pool_r, d));
  GaussianStats sg = fit_gaussian(sorted_rows(pool_g, d));
  rep.rows.push_back(
      FidRow{"pooled", frechet_distance(sr, sg), int(pool_r.size()), int(pool_g.size())});
  return rep;
}

double mode_recall(const Tensor& gen_feats, const Tensor& proto_feats, double threshold) {
  if (proto_feats.rank() != 2 || gen_feats.rank() != 2)
    fail(ErrorKind::Shape, "mode_recall expects rank-2 feature matrices");
  if (proto_feats.shape()[0] < 1)
    fail(ErrorKind::Data, "mode_recall needs at least one prototype");
  const int d = proto_feats.shape()[1];
  const int ng = gen_feats.shape()[0];
  if (ng > 0 && gen_feats.shape()[1] != d)
    fail(ErrorKind::Shape, "prototype/generated feature widths disagree");
  const int np = proto_feats.shape()[0];
  if (ng == 0) return 0.0;
  Tensor p({d}), g({d});
  int hit = 0;
  for (int i = 0; i < np; ++i) {
    for (int j = 0; j < d; ++j) p[j] = proto_feats.at(i, j);
    bool covered = false;
    for (int k = 0; k < ng && !covered; ++k) {
      for (int j = 0; j < d; ++j) g[j] = gen_feats.at(k, j);
      covered = cosine_distance(p, g) <= threshold;
    }
    hit += covered ? 1 : 0;
  }
  return double(hit) / double(np);
}

LTMetrics lt_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                      const std::vector<int>& head_classes) {
  if (predictions.size() != labels.size())
    fail(ErrorKind::Data, "predictions/labels length mismatch");
  if (labels.empty()) fail(ErrorKind::Data, "no samples to score");
  std::map<int, std::pair<int, int>> per_class;  // class -> (correct, total)
  for (size_t i = 0; i < labels.size(); ++i) {
    auto& [correct, total] = per_class[labels[i]];
    ++total;
    correct += predictions[i] == labels[i] ? 1 : 0;
  }
  std::set<int> head(head_classes.begin(), head_classes.end());
  for (int h : head)
    if (!per_class.count(h))
      fail(ErrorKind::Config, "head class " + std::to_string(h) + " not present in the labels");

  double head_sum = 0.0, tail_sum = 0.0, all_sum = 0.0;
  int n_head = 0, n_tail = 0;
  for (const auto& [cls, ct] : per_class) {
    double acc = 100.0 * double(ct.first) / double(ct.second);
    all_sum += acc;
    if (head.count(cls)) {
      head_sum += acc;
      ++n_head;
    } else {
      tail_sum += acc;
      ++n_tail;
    }
  }
  LTMetrics m;
  m.head_classes.assign(head.begin(), head.end());
  m.head = n_head > 0 ? head_sum / n_head : 0.0;
  m.tail = n_tail > 0 ? tail_sum / n_tail : 0.0;
  m.overall = all_sum / double(per_class.size());
  return m;
}

}  // namespace clusdiff
