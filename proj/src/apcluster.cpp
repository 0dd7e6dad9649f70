#include "apcluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "error.hpp"
#include "parallel.hpp"

namespace clusdiff {

namespace {

void check_square(const Tensor& m, const char* what) {
  if (m.rank() != 2 || m.extent(0) != m.extent(1))
    fail(ErrorKind::Shape, std::string(what) + " must be a square matrix");
}

}  // namespace

Tensor build_similarity(const Tensor& feats, std::optional<double> preference) {
  if (feats.rank() != 2) fail(ErrorKind::Shape, "features must be [N,d]");
  const int n = feats.extent(0), d = feats.extent(1);
  if (n < 1) fail(ErrorKind::Data, "similarity needs at least one sample");

  std::vector<double> norm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += feats.at(i, j) * feats.at(i, j);
    if (s == 0.0) fail(ErrorKind::Numeric, "feature row " + std::to_string(i) + " has zero norm");
    norm[size_t(i)] = std::sqrt(s);
  }

  Tensor S = Tensor::zeros({n, n});
  parallel_for(n, [&](int64_t i) {
    for (int j = 0; j < n; ++j) {
      if (int(i) == j) continue;
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += feats.at(int(i), k) * feats.at(j, k);
      double cosv = dot / (norm[size_t(i)] * norm[size_t(j)]);
      S.at(int(i), j) = -(1.0 - cosv);
    }
  });

  double pref = 0.0;
  if (preference.has_value()) {
    pref = *preference;
  } else if (n > 1) {
    std::vector<double> off;
    off.reserve(size_t(n) * size_t(n - 1));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) off.push_back(S.at(i, j));
    std::sort(off.begin(), off.end());
    size_t m = off.size();
    pref = (m % 2 == 1) ? off[m / 2] : 0.5 * (off[m / 2 - 1] + off[m / 2]);
  }
  for (int i = 0; i < n; ++i) S.at(i, i) = pref;
  S.require_finite("similarity matrix");
  return S;
}

Tensor update_responsibility(const Tensor& S, const Tensor& A) {
  check_square(S, "similarity");
  if (!A.same_shape(S)) fail(ErrorKind::Shape, "availability shape mismatch");
  const int n = S.extent(0);
  if (n < 2) fail(ErrorKind::Shape, "responsibility update needs N >= 2");
  Tensor R = Tensor::zeros({n, n});
  parallel_for(n, [&](int64_t i) {
    double m1 = -std::numeric_limits<double>::infinity(), m2 = m1;
    int arg = -1;
    for (int j = 0; j < n; ++j) {
      double v = A.at(int(i), j) + S.at(int(i), j);
      if (v > m1) {
        m2 = m1;
        m1 = v;
        arg = j;
      } else if (v > m2) {
        m2 = v;
      }
    }
    for (int j = 0; j < n; ++j) R.at(int(i), j) = S.at(int(i), j) - (j == arg ? m2 : m1);
  });
  return R;
}

Tensor update_availability(const Tensor& R) {
  check_square(R, "responsibility");
  const int n = R.extent(0);
  Tensor A = Tensor::zeros({n, n});
  parallel_for(n, [&](int64_t j) {
    double pos = 0.0;
    for (int i = 0; i < n; ++i)
      if (i != int(j)) pos += std::max(0.0, R.at(i, int(j)));
    A.at(int(j), int(j)) = pos;
    double rjj = R.at(int(j), int(j));
    for (int i = 0; i < n; ++i) {
      if (i == int(j)) continue;
      A.at(i, int(j)) = std::min(0.0, rjj + pos - std::max(0.0, R.at(i, int(j))));
    }
  });
  return A;
}

Tensor damped_update(const Tensor& old_m, const Tensor& fresh, double lambda) {
  if (!old_m.same_shape(fresh)) fail(ErrorKind::Shape, "damped_update shape mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorKind::Config, "damping must be in [0,1]");
  Tensor out = old_m;
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = lambda * old_m[i] + (1.0 - lambda) * fresh[i];
  return out;
}

APState ap_init(int n) {
  if (n < 1) fail(ErrorKind::Data, "affinity propagation needs at least one sample");
  APState st;
  st.R = Tensor::zeros({n, n});
  st.A = Tensor::zeros({n, n});
  return st;
}

void ap_step(const Tensor& S, APState& st, double damping) {
  st.R = damped_update(st.R, update_responsibility(S, st.A), damping);
  st.A = damped_update(st.A, update_availability(st.R), damping);
  ++st.iter;
}

std::vector<int> ap_exemplars(const APState& st) {
  std::vector<int> ex;
  for (int k = 0; k < st.R.extent(0); ++k)
    if (st.R.at(k, k) + st.A.at(k, k) > 0.0) ex.push_back(k);
  return ex;
}

ClusterAssignment ap_run(const Tensor& S, const APConfig& cfg) {
  check_square(S, "similarity");
  S.require_finite("similarity matrix");
  if (!(cfg.damping >= 0.5 && cfg.damping < 1.0))
    fail(ErrorKind::Config, "damping must be in [0.5,1)");
  if (cfg.max_iter < 1) fail(ErrorKind::Config, "max_iter must be >= 1");
  if (cfg.window < 1 || cfg.window > cfg.max_iter)
    fail(ErrorKind::Config, "window must be in [1,max_iter]");
  const int n = S.extent(0);
  if (n < 1) fail(ErrorKind::Data, "affinity propagation needs at least one sample");

  ClusterAssignment out;
  if (n == 1) {
    out.exemplar_of = {0};
    out.exemplars = {0};
    out.converged = true;
    out.iterations = 0;
    return out;
  }

  APState st = ap_init(n);
  std::vector<int> prev;
  int unchanged = 0;
  bool converged = false;
  while (st.iter < cfg.max_iter) {
    ap_step(S, st, cfg.damping);
    std::vector<int> ex = ap_exemplars(st);
    // An empty set means no decision yet (messages still warming up under
    // damping), so only a stable non-empty exemplar set counts as converged.
    if (st.iter > 1 && !ex.empty() && ex == prev) {
      if (++unchanged >= cfg.window) {
        converged = true;
        prev = std::move(ex);
        break;
      }
    } else {
      unchanged = 0;
    }
    prev = std::move(ex);
  }

  out.converged = converged;
  out.iterations = st.iter;
  out.exemplars = prev;
  if (out.exemplars.empty()) {
    // best effort: promote the strongest self-message
    int arg = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
      double v = st.R.at(k, k) + st.A.at(k, k);
      if (v > best) {
        best = v;
        arg = k;
      }
    }
    out.exemplars = {arg};
  }

  out.exemplar_of.assign(static_cast<size_t>(n), -1);
  for (int k : out.exemplars) out.exemplar_of[size_t(k)] = k;
  for (int i = 0; i < n; ++i) {
    if (out.exemplar_of[size_t(i)] >= 0) continue;
    int arg = out.exemplars[0];
    double best = S.at(i, arg);
    for (int k : out.exemplars)
      if (S.at(i, k) > best) {
        best = S.at(i, k);
        arg = k;
      }
    out.exemplar_of[size_t(i)] = arg;
  }
  return out;
}

ClusterAssignment cluster_features(const Tensor& feats, const APConfig& cfg) {
  return ap_run(build_similarity(feats), cfg);
}

PerClassClusters cluster_per_class(const Tensor& feats, const std::vector<int>& class_ids,
                                   const APConfig& cfg) {
  if (feats.rank() != 2) fail(ErrorKind::Shape, "features must be [N,d]");
  const int n = feats.extent(0), d = feats.extent(1);
  if (n < 1) fail(ErrorKind::Data, "clustering needs at least one sample");
  if (class_ids.size() != size_t(n)) fail(ErrorKind::Data, "feature/class count mismatch");
  int C = 0;
  for (int c : class_ids) {
    if (c < 0) fail(ErrorKind::Data, "negative class id");
    C = std::max(C, c + 1);
  }

  PerClassClusters out;
  out.cluster_id.assign(size_t(n), 0);
  out.exemplar.assign(size_t(n), -1);
  out.k_per_class.assign(size_t(C), 0);
  out.converged.assign(size_t(C), 0);
  out.iterations.assign(size_t(C), 0);

  for (int c = 0; c < C; ++c) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (class_ids[size_t(i)] == c) members.push_back(i);
    if (members.empty())
      fail(ErrorKind::Data, "class " + std::to_string(c) + " has no samples");

    Tensor sub = Tensor::zeros({int(members.size()), d});
    for (size_t i = 0; i < members.size(); ++i)
      for (int j = 0; j < d; ++j) sub.at(int(i), j) = feats.at(members[i], j);

    ClusterAssignment ca = cluster_features(sub, cfg);
    out.converged[size_t(c)] = ca.converged ? 1 : 0;
    out.iterations[size_t(c)] = ca.iterations;
    out.k_per_class[size_t(c)] = int(ca.exemplars.size());

    std::map<int, int> renumber;  // local exemplar index -> 1..K_c
    for (size_t i = 0; i < members.size(); ++i) {
      int ex = ca.exemplar_of[i];
      if (!renumber.count(ex)) renumber[ex] = int(renumber.size()) + 1;
      out.cluster_id[size_t(members[i])] = renumber[ex];
      out.exemplar[size_t(members[i])] = members[size_t(ex)];
    }
  }
  return out;
}

void save_assignments(const std::string& path, const AssignmentFile& af) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  os << "CDAS1\n";
  os << "classes " << af.classes.size() << "\n";
  for (const auto& c : af.classes)
    os << c.class_name << " " << c.k << " " << (c.converged ? 1 : 0) << " " << c.iterations
       << "\n";
  os << "samples " << af.records.size() << "\n";
  for (const auto& r : af.records)
    os << r.id << " " << r.class_name << " " << r.cluster_id << " " << r.exemplar_id << "\n";
  if (!os) fail(ErrorKind::Io, "assignment write failed");
}

AssignmentFile load_assignments(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::MissingInput, "cannot open assignment file " + path);
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(is, line)) fail(ErrorKind::Io, "truncated assignment file " + path);
    return line;
  };
  if (next_line() != "CDAS1") fail(ErrorKind::Io, "not a CDAS1 assignment file: " + path);

  AssignmentFile af;
  std::string tag;
  size_t count = 0;
  {
    std::istringstream ss(next_line());
    if (!(ss >> tag >> count) || tag != "classes")
      fail(ErrorKind::Io, "bad class header in " + path);
  }
  for (size_t i = 0; i < count; ++i) {
    std::istringstream ss(next_line());
    ClassSummary cs;
    int conv = 0;
    if (!(ss >> cs.class_name >> cs.k >> conv >> cs.iterations))
      fail(ErrorKind::Io, "bad class summary in " + path);
    cs.converged = conv != 0;
    af.classes.push_back(std::move(cs));
  }
  {
    std::istringstream ss(next_line());
    if (!(ss >> tag >> count) || tag != "samples")
      fail(ErrorKind::Io, "bad sample header in " + path);
  }
  for (size_t i = 0; i < count; ++i) {
    std::istringstream ss(next_line());
    AssignmentRecord r;
    if (!(ss >> r.id >> r.class_name >> r.cluster_id >> r.exemplar_id))
      fail(ErrorKind::Io, "bad sample record in " + path);
    af.records.push_back(std::move(r));
  }
  return af;
}

}  // namespace clusdiff
