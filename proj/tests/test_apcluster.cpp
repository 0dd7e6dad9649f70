#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "apcluster.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "features.hpp"
#include "parallel.hpp"
#include "rng.hpp"

using namespace clusdiff;

namespace {

// Straight-loop affinity propagation, no shared-max shortcuts; used as an
// independent oracle for the vectorized implementation.
Tensor ref_responsibility(const Tensor& S, const Tensor& A) {
  int n = S.extent(0);
  Tensor R = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double m = -1e300;
      for (int jp = 0; jp < n; ++jp)
        if (jp != j) m = std::max(m, A.at(i, jp) + S.at(i, jp));
      R.at(i, j) = S.at(i, j) - m;
    }
  return R;
}

Tensor ref_availability(const Tensor& R) {
  int n = R.extent(0);
  Tensor A = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        double s = 0.0;
        for (int ip = 0; ip < n; ++ip)
          if (ip != j) s += std::max(0.0, R.at(ip, j));
        A.at(j, j) = s;
      } else {
        double s = R.at(j, j);
        for (int ip = 0; ip < n; ++ip)
          if (ip != i && ip != j) s += std::max(0.0, R.at(ip, j));
        A.at(i, j) = std::min(0.0, s);
      }
    }
  return A;
}

std::vector<int> ref_exemplars(const Tensor& R, const Tensor& A) {
  std::vector<int> ex;
  for (int k = 0; k < R.extent(0); ++k)
    if (R.at(k, k) + A.at(k, k) > 0.0) ex.push_back(k);
  return ex;
}

// Three angularly separated blobs in R^8.
Tensor blob_features(int per_blob, Rng& rng) {
  Tensor f = Tensor::zeros({3 * per_blob, 8});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < per_blob; ++i) {
      int row = c * per_blob + i;
      f.at(row, c) = 3.0;
      for (int j = 0; j < 8; ++j) f.at(row, j) += 0.2 * rng.normal();
    }
  return f;
}

double binom2(double m) { return m * (m - 1.0) / 2.0; }

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  REQUIRE(a.size() == b.size());
  std::map<int, int> ra, rb;
  for (int x : a)
    if (!ra.count(x)) ra[x] = int(ra.size());
  for (int x : b)
    if (!rb.count(x)) rb[x] = int(rb.size());
  std::vector<std::vector<double>> nij(ra.size(), std::vector<double>(rb.size(), 0.0));
  for (size_t i = 0; i < a.size(); ++i) nij[size_t(ra[a[i]])][size_t(rb[b[i]])] += 1.0;
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (size_t i = 0; i < nij.size(); ++i) {
    double rowsum = 0.0;
    for (size_t j = 0; j < nij[i].size(); ++j) {
      sum_ij += binom2(nij[i][j]);
      rowsum += nij[i][j];
    }
    sum_a += binom2(rowsum);
  }
  for (size_t j = 0; j < nij[0].size(); ++j) {
    double colsum = 0.0;
    for (size_t i = 0; i < nij.size(); ++i) colsum += nij[i][j];
    sum_b += binom2(colsum);
  }
  double total = binom2(double(a.size()));
  double expected = sum_a * sum_b / total;
  double maxi = 0.5 * (sum_a + sum_b);
  return (sum_ij - expected) / (maxi - expected);
}

}  // namespace

TEST_CASE("build_similarity maps cosine distance to negated similarity") {
  Tensor f = Tensor::zeros({3, 2});
  f.at(0, 0) = 1.0;               // e_x
  f.at(1, 0) = 2.0;               // parallel to e_x
  f.at(2, 1) = 1.0;               // orthogonal
  Tensor S = build_similarity(f, -0.7);
  CHECK(S.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(S.at(0, 2) == doctest::Approx(-1.0));
  CHECK(S.at(1, 2) == doctest::Approx(-1.0));
  for (int i = 0; i < 3; ++i) CHECK(S.at(i, i) == -0.7);

  Tensor g = Tensor::zeros({2, 2});
  g.at(0, 0) = 1.0;
  g.at(1, 0) = -1.0;  // opposite
  Tensor S2 = build_similarity(g);
  CHECK(S2.at(0, 1) == doctest::Approx(-2.0));
  CHECK(S2.at(0, 0) == doctest::Approx(-2.0));  // median of off-diagonals

  // median over a 3-point set with distinct distances
  Rng rng(5, 0);
  Tensor h = Tensor::zeros({3, 3});
  h.at(0, 0) = 1.0;
  h.at(1, 0) = 1.0;
  h.at(1, 1) = 1.0;
  h.at(2, 2) = 1.0;
  Tensor S3 = build_similarity(h);
  std::vector<double> off = {S3.at(0, 1), S3.at(0, 2), S3.at(1, 0),
                             S3.at(1, 2), S3.at(2, 0), S3.at(2, 1)};
  std::sort(off.begin(), off.end());
  double med = 0.5 * (off[2] + off[3]);
  CHECK(S3.at(0, 0) == doctest::Approx(med).epsilon(1e-12));

  CHECK_THROWS_AS(build_similarity(Tensor::zeros({2, 4})), Error);
  CHECK_THROWS_AS(build_similarity(Tensor::zeros({4})), Error);
}

TEST_CASE("responsibility update hand cases") {
  Tensor S({2, 2}, {-0.5, -0.2, -0.2, -0.5});
  Tensor A = Tensor::zeros({2, 2});
  Tensor R = update_responsibility(S, A);
  CHECK(R.at(0, 1) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(R.at(1, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(R.at(0, 0) == doctest::Approx(-0.3).epsilon(1e-12));

  // all-equal similarities give identically zero responsibilities
  Tensor Se = Tensor::full({4, 4}, -0.4);
  Tensor Re = update_responsibility(Se, Tensor::zeros({4, 4}));
  CHECK(Re.max_abs() == 0.0);

  // adding a constant to a row of S leaves that row of R unchanged
  Rng rng(7, 0);
  Tensor Sr = Tensor::uniform({5, 5}, rng, -2.0, 0.0);
  Tensor Ar = Tensor::uniform({5, 5}, rng, -1.0, 0.0);
  Tensor R1 = update_responsibility(Sr, Ar);
  Tensor Sshift = Sr;
  for (int j = 0; j < 5; ++j) Sshift.at(2, j) += 0.9;
  Tensor R2 = update_responsibility(Sshift, Ar);
  for (int j = 0; j < 5; ++j) CHECK(R2.at(2, j) == doctest::Approx(R1.at(2, j)).epsilon(1e-12));
}

TEST_CASE("availability update hand cases") {
  // N=2: off-diagonal availability is min(0, r of the other diagonal)
  Tensor Rpos({2, 2}, {-0.3, 0.3, 0.3, 0.3});
  Tensor A1 = update_availability(Rpos);
  CHECK(A1.at(0, 1) == 0.0);  // r(1,1)=0.3 clipped from above

  Tensor Rneg({2, 2}, {-0.3, 0.3, 0.3, -0.3});
  Tensor A2 = update_availability(Rneg);
  CHECK(A2.at(0, 1) == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(A2.at(1, 0) == doctest::Approx(-0.3).epsilon(1e-12));
  // self-availability sums the positive responsibilities of others
  CHECK(A2.at(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(A2.at(1, 1) == doctest::Approx(0.3).epsilon(1e-12));

  // all responsibilities <= 0: off-diagonal a = min(0, r(j,j)), diagonal 0
  Rng rng(9, 0);
  Tensor Rn = Tensor::uniform({4, 4}, rng, -1.5, 0.0);
  Tensor A3 = update_availability(Rn);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (i == j)
        CHECK(A3.at(i, i) == 0.0);
      else
        CHECK(A3.at(i, j) == doctest::Approx(std::min(0.0, Rn.at(j, j))).epsilon(1e-12));
    }
}

TEST_CASE("damped_update examples") {
  Tensor zero = Tensor::zeros({2, 2});
  Tensor two = Tensor::full({2, 2}, 2.0);
  CHECK(damped_update(zero, two, 0.5).at(0, 0) == 1.0);
  CHECK(damped_update(zero, two, 1.0) == zero);
  CHECK(damped_update(zero, two, 0.0) == two);
  CHECK_THROWS_AS(damped_update(zero, two, -0.1), Error);
  CHECK_THROWS_AS(damped_update(zero, two, 1.1), Error);
}

TEST_CASE("vectorized messages match the straight-loop oracle at every iteration") {
  for (int n : {2, 3, 5, 8, 12}) {
    for (uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(seed, uint64_t(n));
      Tensor f = Tensor::randn({n, 4}, rng);
      Tensor S = build_similarity(f);

      APState st = ap_init(n);
      Tensor Rr = Tensor::zeros({n, n});
      Tensor Ar = Tensor::zeros({n, n});
      for (int it = 0; it < 40; ++it) {
        ap_step(S, st, 0.5);
        Rr = damped_update(Rr, ref_responsibility(S, Ar), 0.5);
        Ar = damped_update(Ar, ref_availability(Rr), 0.5);
        double dr = 0.0, da = 0.0;
        for (int64_t i = 0; i < Rr.numel(); ++i) {
          dr = std::max(dr, std::fabs(Rr[i] - st.R[i]));
          da = std::max(da, std::fabs(Ar[i] - st.A[i]));
        }
        REQUIRE(dr < 1e-12);
        REQUIRE(da < 1e-12);
        REQUIRE(ap_exemplars(st) == ref_exemplars(Rr, Ar));
      }
    }
  }
}

TEST_CASE("ap_run degenerate and structured instances") {
  // single point
  Tensor one = Tensor::zeros({1, 3});
  one.at(0, 0) = 1.0;
  ClusterAssignment single = cluster_features(one, APConfig{});
  CHECK(single.exemplar_of == std::vector<int>{0});
  CHECK(single.exemplars == std::vector<int>{0});
  CHECK(single.converged);

  // invariants on a random instance
  Rng rng(12, 0);
  Tensor f = blob_features(10, rng);
  ClusterAssignment ca = cluster_features(f, APConfig{});
  std::set<int> exset(ca.exemplars.begin(), ca.exemplars.end());
  for (int k : ca.exemplars) CHECK(ca.exemplar_of[size_t(k)] == k);
  for (int e : ca.exemplar_of) CHECK(exset.count(e) == 1);

  // config validation
  APConfig bad;
  bad.damping = 0.4;
  CHECK_THROWS_AS(ap_run(build_similarity(f), bad), Error);
  bad = APConfig{};
  bad.window = 500;
  CHECK_THROWS_AS(ap_run(build_similarity(f), bad), Error);
}

TEST_CASE("three separated blobs are recovered across seeds") {
  int good = 0;
  std::vector<int> truth;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 10; ++i) truth.push_back(c);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed, 77);
    Tensor f = blob_features(10, rng);
    ClusterAssignment ca = cluster_features(f, APConfig{});
    if (adjusted_rand_index(truth, ca.exemplar_of) >= 0.95) ++good;
  }
  CHECK(good >= 19);
}

TEST_CASE("messages stay bounded under damping") {
  Rng rng(31, 0);
  const int n = 20;
  Tensor S = Tensor::uniform({n, n}, rng, -2.0, 0.0);
  for (int i = 0; i < n; ++i) S.at(i, i) = -1.0;
  double bound = S.max_abs() * n;
  APState st = ap_init(n);
  for (int it = 0; it < 200; ++it) {
    ap_step(S, st, 0.5);
    CHECK(st.R.max_abs() <= bound);
    CHECK(st.A.max_abs() <= bound);
  }
}

TEST_CASE("lower preference never yields more exemplars on the blob instance") {
  Rng rng(8, 0);
  Tensor f = blob_features(10, rng);
  std::vector<double> prefs = {-2.0, -1.0, -0.5, -0.25, -0.1};
  std::vector<size_t> counts;
  for (double p : prefs) {
    ClusterAssignment ca = ap_run(build_similarity(f, p), APConfig{});
    counts.push_back(ca.exemplars.size());
  }
  for (size_t i = 1; i < counts.size(); ++i) CHECK(counts[i - 1] <= counts[i]);
}

TEST_CASE("per-class clustering renumbers and recovers planted modes") {
  // degenerate classes: one sample, and identical features
  Tensor f = Tensor::zeros({4, 3});
  f.at(0, 0) = 1.0;                       // class 0, single sample
  for (int i = 1; i < 4; ++i) f.at(i, 1) = 1.0;  // class 1, identical rows
  PerClassClusters pc = cluster_per_class(f, {0, 1, 1, 1}, APConfig{});
  CHECK(pc.k_per_class == std::vector<int>{1, 1});
  CHECK(pc.cluster_id == std::vector<int>{1, 1, 1, 1});
  CHECK(pc.exemplar[0] == 0);
  for (int i = 1; i < 4; ++i) CHECK(pc.exemplar[size_t(i)] == pc.exemplar[1]);

  CHECK_THROWS_AS(cluster_per_class(f, {0, 2, 2, 2}, APConfig{}), Error);  // class 1 empty
  CHECK_THROWS_AS(cluster_per_class(f, {0, 1, 1}, APConfig{}), Error);

  // planted shapes modes; thread-count independence on one seed. Damping 0.9:
  // tight modes make near-duplicate rows whose messages oscillate at 0.5.
  APConfig apcfg;
  apcfg.damping = 0.9;
  int recovered = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    ShapesDataset ds = make_shapes_dataset(3, 3, 20, 300 + seed);
    ExtractorConfig cfg;
    cfg.classes = 3;
    FeatureExtractor model(cfg, seed);
    nn::Adam opt(2e-3);
    train_classifier(model, ds.images, ds.class_ids, 10, 16, opt, seed * 5 + 2);
    FeatureMatrix fm = extract(model, ds.images);
    PerClassClusters got = cluster_per_class(fm.z, ds.class_ids, apcfg);
    bool all3 = got.k_per_class == std::vector<int>{3, 3, 3};
    if (all3) {
      // planted agreement: cluster ids within a class should match mode ids
      int agree = 0, total = 0;
      for (int c = 0; c < 3; ++c) {
        std::vector<int> modes, clusters;
        for (size_t i = 0; i < ds.images.size(); ++i)
          if (ds.class_ids[i] == c) {
            modes.push_back(ds.mode_ids[i]);
            clusters.push_back(got.cluster_id[i]);
          }
        if (adjusted_rand_index(modes, clusters) >= 0.95) ++agree;
        ++total;
      }
      if (agree == total) ++recovered;
    }
    if (seed == 0) {
      set_thread_override(3);
      PerClassClusters again = cluster_per_class(fm.z, ds.class_ids, apcfg);
      set_thread_override(0);
      CHECK(again.cluster_id == got.cluster_id);
      CHECK(again.exemplar == got.exemplar);
    }
  }
  CHECK(recovered >= 4);
}

TEST_CASE("assignment files round trip") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "clusdiff_asg";
  fs::create_directories(dir);
  auto path = (dir / "clusters.cdas").string();

  AssignmentFile af;
  af.classes = {{"disk", 3, true, 37}, {"square", 2, false, 200}};
  af.records = {{0, "disk", 1, 0}, {1, "disk", 2, 4}, {2, "square", 1, 2}};
  save_assignments(path, af);
  AssignmentFile back = load_assignments(path);
  REQUIRE(back.classes.size() == 2);
  CHECK(back.classes[0].class_name == "disk");
  CHECK(back.classes[0].k == 3);
  CHECK(back.classes[0].converged);
  CHECK(back.classes[0].iterations == 37);
  CHECK(back.classes[1].converged == false);
  REQUIRE(back.records.size() == 3);
  CHECK(back.records[1].id == 1);
  CHECK(back.records[1].class_name == "disk");
  CHECK(back.records[1].cluster_id == 2);
  CHECK(back.records[1].exemplar_id == 4);

  CHECK_THROWS_AS(load_assignments((dir / "none.cdas").string()), Error);
  {
    std::ofstream os(path);
    os << "CDAS1\nclasses 1\n";
  }
  try {
    load_assignments(path);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
  fs::remove_all(dir);
}
