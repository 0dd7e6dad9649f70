#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "denoiser.hpp"
#include "diffusion.hpp"
#include "parallel.hpp"

using namespace clusdiff;
namespace ad = clusdiff::ad;

namespace {

UNetConfig tiny_cfg() {
  UNetConfig c;
  c.in_ch = 1;
  c.img = 8;
  c.base = 2;
  c.d_ctx = 4;
  c.d_time = 4;
  return c;
}

// Finite-difference check of d(loss)/d(theta) for every parameter scalar of
// a model, against the gradients produced by backward + harvest.
template <typename LossFn>
double model_grad_check(nn::ParamStore& ps, LossFn loss_fn, double eps = 1e-5) {
  nn::Leaves l(ps);
  auto loss = loss_fn(l);
  ad::backward(loss);
  std::vector<Tensor> sink(size_t(ps.count()));
  l.harvest(sink);

  double worst = 0.0;
  for (int id = 0; id < ps.count(); ++id) {
    Tensor& val = ps.at(id).value;
    for (int64_t i = 0; i < val.numel(); ++i) {
      double keep = val[i];
      val[i] = keep + eps;
      nn::Leaves lp(ps);
      double fp = loss_fn(lp)->val[0];
      val[i] = keep - eps;
      nn::Leaves lm(ps);
      double fm = loss_fn(lm)->val[0];
      val[i] = keep;
      double fd = (fp - fm) / (2.0 * eps);
      double a = sink[size_t(id)].numel() ? sink[size_t(id)][i] : 0.0;
      double rel = std::fabs(a - fd) / std::max(1e-3, std::fabs(a) + std::fabs(fd));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("attention_mix hand cases") {
  // 2-token case, d_a = 1: q=[1], k=[[0],[ln 3]], v=[[0],[1]]
  auto q = ad::constant(Tensor({1, 1}, {1.0}));
  auto k = ad::constant(Tensor({2, 1}, {0.0, std::log(3.0)}));
  auto v = ad::constant(Tensor({2, 1}, {0.0, 1.0}));
  auto out = attention_mix(q, k, v);
  CHECK(out->val[0] == doctest::Approx(0.75).epsilon(1e-12));

  // m=1: weight exactly 1 for every query, output independent of q
  auto k1 = ad::constant(Tensor({1, 2}, {0.3, -0.7}));
  auto v1 = ad::constant(Tensor({1, 3}, {1.0, 2.0, 3.0}));
  Rng rng(5, 0);
  auto qa = ad::constant(Tensor::randn({4, 2}, rng));
  auto qb = ad::constant(Tensor::randn({4, 2}, rng));
  auto oa = attention_mix(qa, k1, v1);
  auto ob = attention_mix(qb, k1, v1);
  CHECK(oa->val == ob->val);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) CHECK(oa->val.at(i, j) == doctest::Approx(v1->val[j]));

  // identical context rows: uniform attention 1/m
  auto kk = ad::constant(Tensor({3, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}));
  auto vv = ad::constant(Tensor({3, 1}, {0.0, 3.0, 6.0}));
  auto om = attention_mix(qa, kk, vv);
  for (int i = 0; i < 4; ++i) CHECK(om->val.at(i, 0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("embed_label basics") {
  Denoiser model(tiny_cfg(), {"disk_1", "disk_2", "square_1"}, 42);
  CHECK(model.params().at(model.params().find("label.emb.table")).value.shape() ==
        std::vector<int>{3, 4});
  Tensor a = model.embed_label("disk_2");
  Tensor b = model.embed_label("disk_2");
  CHECK(a == b);
  CHECK(a.shape() == std::vector<int>{1, 4});
  CHECK_THROWS_AS(model.embed_label("burger_1"), Error);
  try {
    model.embed_label("burger_1");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Vocabulary);
  }
}

TEST_CASE("denoise forward basics") {
  Denoiser model(tiny_cfg(), {"a_1", "a_2"}, 7);
  Rng rng(1, 0);
  Tensor x = Tensor::randn({1, 8, 8}, rng);

  Tensor e1 = model.denoise(x, 1, "a_1");
  CHECK(e1.same_shape(x));

  // purity: identical inputs give identical outputs
  CHECK(model.denoise(x, 1, "a_1") == e1);

  // changing t changes the output even untrained
  Tensor e2 = model.denoise(x, 7, "a_1");
  double diff = 0.0;
  for (int64_t i = 0; i < e1.numel(); ++i) diff = std::max(diff, std::fabs(e1[i] - e2[i]));
  CHECK(diff > 0.0);

  CHECK_THROWS_AS(model.denoise(Tensor::zeros({1, 4, 4}), 1, "a_1"), Error);
}

TEST_CASE("full conditional loss passes the finite-difference check") {
  UNetConfig cfg = tiny_cfg();
  cfg.img = 4;
  Denoiser model(cfg, {"a_1", "a_2"}, 3);
  Rng rng(2, 0);
  Tensor zt = Tensor::randn({1, 4, 4}, rng);
  Tensor eps = Tensor::randn({1, 4, 4}, rng);
  // the zero-initialized output conv has exactly-zero local gradients at
  // some scalars; nudge all params off their init symmetry first
  for (int id = 0; id < model.params().count(); ++id) {
    Tensor& v = model.params().at(id).value;
    for (int64_t i = 0; i < v.numel(); ++i) v[i] += 0.01 * ((i % 3) - 1.0);
  }
  auto loss_fn = [&](nn::Leaves& l) {
    return ad::mse(model.forward(l, ad::constant(zt), 3, 1), ad::constant(eps));
  };
  double err = model_grad_check(model.params(), loss_fn);
  CHECK(err < 1e-4);
}

TEST_CASE("training overfits one sample and keeps embedder gradients alive") {
  // embedder receives gradient on the very first step
  {
    Denoiser model(tiny_cfg(), {"a_1", "a_2"}, 11);
    Rng rng(4, 0);
    Tensor z0 = Tensor::randn({1, 8, 8}, rng);
    nn::Leaves l(model.params());
    auto pred = model.forward(l, ad::constant(z0), 1, 0);
    auto loss = ad::mse(pred, ad::constant(Tensor::zeros({1, 8, 8})));
    ad::backward(loss);
    std::vector<Tensor> sink(size_t(model.params().count()));
    l.harvest(sink);
    int emb_id = model.params().find("label.emb.table");
    REQUIRE(emb_id >= 0);
    REQUIRE(sink[size_t(emb_id)].numel() > 0);
    CHECK(sink[size_t(emb_id)].max_abs() > 0.0);
  }

  UNetConfig cfg = tiny_cfg();
  cfg.base = 4;
  cfg.d_time = 8;
  Denoiser model(cfg, {"a_1", "a_2"}, 11);
  Tensor x0 = Tensor::zeros({1, 8, 8});
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) x0.at(0, y, x) = 0.25;
  std::vector<Tensor> z = {x0};
  std::vector<int> rows = {0};
  auto sched = make_linear_schedule(100);
  nn::Adam opt(1e-2);
  auto stats = train_denoiser(model, z, rows, sched, 500, 1, opt, 99);
  for (double v : stats.step_loss) CHECK(std::isfinite(v));
  double tail = 0.0;
  for (size_t i = stats.step_loss.size() - 50; i < stats.step_loss.size(); ++i)
    tail += stats.step_loss[i];
  CHECK(tail / 50.0 < 0.1);
}

TEST_CASE("training errors") {
  Denoiser model(tiny_cfg(), {"a_1"}, 1);
  auto sched = make_linear_schedule(5);
  nn::Adam opt;
  std::vector<Tensor> empty;
  std::vector<int> none;
  CHECK_THROWS_AS(train_denoiser(model, empty, none, sched, 1, 1, opt, 0), Error);
  try {
    train_denoiser(model, empty, none, sched, 1, 1, opt, 0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
  }
  std::vector<Tensor> z = {Tensor::zeros({1, 8, 8})};
  std::vector<int> bad_rows = {5};
  CHECK_THROWS_AS(train_denoiser(model, z, bad_rows, sched, 1, 1, opt, 0), Error);
}

TEST_CASE("toy training: loss decreases and labels become distinguishable") {
  auto sched = make_linear_schedule(10);
  int decreasing = 0, distinguishable = 0, label_sensitive = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Denoiser model(tiny_cfg(), {"a_1", "a_2"}, seed);
    // two planted modes: bright top-left blob vs bright bottom-right blob
    Rng rng(seed, 1);
    std::vector<Tensor> z;
    std::vector<int> rows;
    for (int i = 0; i < 12; ++i) {
      Tensor img = Tensor::zeros({1, 8, 8});
      int mode = i % 2;
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          img.at(0, mode ? y + 4 : y, mode ? x + 4 : x) = 1.0 + 0.05 * rng.normal();
      z.push_back(img);
      rows.push_back(mode);
    }
    nn::Adam opt(2e-3);
    auto stats = train_denoiser(model, z, rows, sched, 20, 4, opt, seed * 31 + 7);
    if (stats.epoch_loss[19] < stats.epoch_loss[0]) ++decreasing;

    Tensor ea = model.embed_label("a_1");
    Tensor eb = model.embed_label("a_2");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t i = 0; i < ea.numel(); ++i) {
      dot += ea[i] * eb[i];
      na += ea[i] * ea[i];
      nb += eb[i] * eb[i];
    }
    if (dot / std::sqrt(na * nb) < 0.999) ++distinguishable;

    Tensor probe = Tensor::randn({1, 8, 8}, rng);
    Tensor pa = model.denoise(probe, 5, "a_1");
    Tensor pb = model.denoise(probe, 5, "a_2");
    double diff = 0.0;
    for (int64_t i = 0; i < pa.numel(); ++i) diff = std::max(diff, std::fabs(pa[i] - pb[i]));
    if (diff > 1e-3) ++label_sensitive;
  }
  CHECK(decreasing >= 4);
  CHECK(distinguishable >= 4);
  CHECK(label_sensitive >= 4);
}

TEST_CASE("checkpoint round trip preserves behavior exactly") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "clusdiff_ckpt";
  fs::create_directories(dir);
  auto path = (dir / "model.cdck").string();

  Denoiser model(tiny_cfg(), {"a_1", "a_2", "b_1"}, 123);
  model.save(path);
  Denoiser back = Denoiser::load(path);
  CHECK(back.vocab() == model.vocab());
  CHECK(back.config().base == model.config().base);
  Rng rng(6, 0);
  Tensor x = Tensor::randn({1, 8, 8}, rng);
  CHECK(back.denoise(x, 3, "b_1") == model.denoise(x, 3, "b_1"));
  fs::remove_all(dir);
}

TEST_CASE("train determinism: same seed same losses, thread-independent") {
  auto run = [](int threads) {
    set_thread_override(threads);
    Denoiser model(tiny_cfg(), {"a_1", "a_2"}, 5);
    Rng rng(8, 0);
    std::vector<Tensor> z;
    std::vector<int> rows;
    for (int i = 0; i < 6; ++i) {
      z.push_back(Tensor::randn({1, 8, 8}, rng));
      rows.push_back(i % 2);
    }
    auto sched = make_linear_schedule(10);
    nn::Adam opt;
    auto stats = train_denoiser(model, z, rows, sched, 3, 4, opt, 77);
    set_thread_override(0);
    std::vector<double> out = stats.step_loss;
    // final params too
    for (int id = 0; id < model.params().count(); ++id)
      for (int64_t i = 0; i < model.params().at(id).value.numel(); ++i)
        out.push_back(model.params().at(id).value[i]);
    return out;
  };
  auto a = run(1);
  auto b = run(1);
  auto c = run(4);
  CHECK(a == b);
  CHECK(a == c);
}
