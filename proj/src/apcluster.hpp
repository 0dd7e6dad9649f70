#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace clusdiff {

struct APConfig {
  double damping = 0.5;  // [0.5, 1)
  int max_iter = 200;
  int window = 15;  // consecutive iterations with an unchanged exemplar set
};

/// Message state for one affinity-propagation run; both matrices start at
/// zero. ap_step advances one damped responsibility->availability sweep.
struct APState {
  Tensor R, A;  // [N,N]
  int iter = 0;
};

struct ClusterAssignment {
  std::vector<int> exemplar_of;  // per sample, index of its exemplar
  std::vector<int> exemplars;    // ascending
  bool converged = false;
  int iterations = 0;
};

/// s(i,j) = -(1 - cos(z_i, z_j)) off the diagonal, so that larger means more
/// similar; the diagonal holds the preference (median of off-diagonal values
/// unless given explicitly).
Tensor build_similarity(const Tensor& feats, std::optional<double> preference = std::nullopt);

/// r(i,j) = s(i,j) - max_{j' != j}[a(i,j') + s(i,j')], rows independent.
Tensor update_responsibility(const Tensor& S, const Tensor& A);

/// a(i,j) = min(0, r(j,j) + sum_{i' not in {i,j}} max(0, r(i',j))) off the
/// diagonal; a(j,j) = sum_{i' != j} max(0, r(i',j)).
Tensor update_availability(const Tensor& R);

/// lambda*old + (1-lambda)*fresh, elementwise.
Tensor damped_update(const Tensor& old_m, const Tensor& fresh, double lambda);

APState ap_init(int n);
void ap_step(const Tensor& S, APState& st, double damping);  // N >= 2
std::vector<int> ap_exemplars(const APState& st);            // {k : R(k,k)+A(k,k) > 0}

/// Full loop over a similarity matrix. Non-convergence is not an error: the
/// assignment is best-effort and the flag reports it. An empty exemplar set at
/// termination falls back to the sample with the largest R(k,k)+A(k,k).
ClusterAssignment ap_run(const Tensor& S, const APConfig& cfg);

/// build_similarity + ap_run.
ClusterAssignment cluster_features(const Tensor& feats, const APConfig& cfg);

/// Independent AP per class; cluster ids are renumbered 1..K_c within each
/// class in order of first appearance along the input order.
struct PerClassClusters {
  std::vector<int> cluster_id;    // per sample, 1..K_c of its class
  std::vector<int> exemplar;      // per sample, global sample index
  std::vector<int> k_per_class;   // indexed by class id
  std::vector<char> converged;    // per class
  std::vector<int> iterations;    // per class
};
PerClassClusters cluster_per_class(const Tensor& feats, const std::vector<int>& class_ids,
                                   const APConfig& cfg);

/// Assignment artifact: one record per sample plus the per-class summary.
struct AssignmentRecord {
  int id = 0;
  std::string class_name;
  int cluster_id = 0;
  int exemplar_id = 0;  // sample id of the exemplar
};
struct ClassSummary {
  std::string class_name;
  int k = 0;
  bool converged = false;
  int iterations = 0;
};
struct AssignmentFile {
  std::vector<AssignmentRecord> records;
  std::vector<ClassSummary> classes;
};

void save_assignments(const std::string& path, const AssignmentFile& af);
AssignmentFile load_assignments(const std::string& path);

}  // namespace clusdiff
