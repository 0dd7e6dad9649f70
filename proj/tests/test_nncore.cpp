#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "autodiff.hpp"
#include "kernels.hpp"
#include "nn.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "tensor_io.hpp"

using namespace clusdiff;
namespace ad = clusdiff::ad;

TEST_CASE("tensor shape invariant") {
  Tensor t({2, 3}, std::vector<double>(6, 1.0));
  CHECK(t.numel() == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), Error);
  CHECK_THROWS_AS(Tensor({-1, 3}), Error);
  CHECK(Tensor({0, 3}).numel() == 0);  // empty matrices are legal
  CHECK_THROWS_AS(t.reshaped({4, 2}), Error);
  CHECK(t.reshaped({3, 2}).at(2, 1) == 1.0);
}

TEST_CASE("rng: identical (seed, stream, counter) yields identical draws") {
  Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng::at(1, 2, 3) == Rng::at(1, 2, 3));
  CHECK(Rng::at(1, 2, 3) != Rng::at(1, 2, 4));
  CHECK(Rng::at(1, 2, 3) != Rng::at(1, 3, 3));
  // uniform() stays in [0,1); normal() is finite and roughly centered
  Rng r(9, 0);
  double s = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    s += r.normal();
  }
  CHECK(std::fabs(s / 10000.0) < 0.05);
}

TEST_CASE("matmul examples") {
  // identity case
  Tensor I({2, 2}, {1, 0, 0, 1});
  Tensor B({2, 2}, {3, -1, 2, 5});
  Tensor out({2, 2});
  mm(I.data(), B.data(), out.data(), 2, 2, 2);
  CHECK(out == B);
  // zero case
  Tensor A({2, 2}, {1, 2, 3, 4});
  Tensor Z({2, 1}, {0, 0});
  Tensor out2({2, 1});
  mm(A.data(), Z.data(), out2.data(), 2, 2, 1);
  CHECK(out2 == Tensor({2, 1}, {0, 0}));
  // row-times-column
  Tensor r({1, 3}, {1, 2, 3});
  Tensor c({3, 1}, {1, 1, 1});
  Tensor out3({1, 1});
  mm(r.data(), c.data(), out3.data(), 1, 3, 1);
  CHECK(out3[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("matmul against triple-loop oracle") {
  Rng rng(11, 0);
  for (int trial = 0; trial < 5; ++trial) {
    int m = 1 + int(rng.below(6)), k = 1 + int(rng.below(6)), n = 1 + int(rng.below(6));
    Tensor a = Tensor::randn({m, k}, rng);
    Tensor b = Tensor::randn({k, n}, rng);
    Tensor got({m, n});
    mm(a.data(), b.data(), got.data(), m, k, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double want = 0.0;
        for (int p = 0; p < k; ++p) want += a.at(i, p) * b.at(p, j);
        CHECK(got.at(i, j) == doctest::Approx(want).epsilon(1e-12));
      }
  }
}

namespace {
// Direct 6-loop padded convolution, the reference for conv2d.
Tensor conv_reference(const Tensor& x, const Tensor& k, int stride) {
  int cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  int cout = k.extent(0);
  int oh = conv_out_extent(h, stride), ow = conv_out_extent(w, stride);
  Tensor out({cout, oh, ow});
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              int iy = oy * stride + ky - 1, ix = ox * stride + kx - 1;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += x.at(ci, iy, ix) * k.vec_data()[size_t(((co * cin + ci) * 3 + ky) * 3 + kx)];
            }
        out.at(co, oy, ox) = acc;
      }
  return out;
}
}  // namespace

TEST_CASE("conv2d examples") {
  Rng rng(3, 0);
  // center-one kernel reproduces the input
  Tensor x = Tensor::randn({2, 5, 5}, rng);
  Tensor k = Tensor::zeros({2, 2, 3, 3});
  for (int co = 0; co < 2; ++co) k.vec_data()[size_t(((co * 2 + co) * 3 + 1) * 3 + 1)] = 1.0;
  auto out = ad::conv2d(ad::constant(x), ad::constant(k), nullptr, 1);
  CHECK(out->val.same_shape(x));
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(out->val[i] == doctest::Approx(x[i]).epsilon(1e-12));

  // all-ones kernel on constant-1 5x5: interior sums 9
  Tensor ones = Tensor::full({1, 5, 5}, 1.0);
  Tensor k1 = Tensor::full({1, 1, 3, 3}, 1.0);
  auto out2 = ad::conv2d(ad::constant(ones), ad::constant(k1), nullptr, 1);
  for (int i = 1; i < 4; ++i)
    for (int j = 1; j < 4; ++j) CHECK(out2->val.at(0, i, j) == doctest::Approx(9.0));
  CHECK(out2->val.at(0, 0, 0) == doctest::Approx(4.0));  // corner sees 2x2

  // random case vs 6-loop reference, both strides
  for (int stride : {1, 2}) {
    Tensor xr = Tensor::randn({1, 4, 4}, rng);
    Tensor kr = Tensor::randn({1, 1, 3, 3}, rng);
    auto got = ad::conv2d(ad::constant(xr), ad::constant(kr), nullptr, stride);
    Tensor want = conv_reference(xr, kr, stride);
    REQUIRE(got->val.same_shape(want));
    for (int64_t i = 0; i < want.numel(); ++i)
      CHECK(got->val[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }

  // channel mismatch is a shape error
  CHECK_THROWS_AS(ad::conv2d(ad::constant(Tensor::zeros({2, 4, 4})),
                             ad::constant(Tensor::zeros({1, 3, 3, 3})), nullptr, 1),
                  Error);
}

TEST_CASE("conv2d odd extents with stride 2 round up") {
  Rng rng(5, 0);
  Tensor x = Tensor::randn({1, 5, 7}, rng);
  Tensor k = Tensor::randn({2, 1, 3, 3}, rng);
  auto got = ad::conv2d(ad::constant(x), ad::constant(k), nullptr, 2);
  CHECK(got->val.extent(1) == 3);
  CHECK(got->val.extent(2) == 4);
  Tensor want = conv_reference(x, k, 2);
  for (int64_t i = 0; i < want.numel(); ++i)
    CHECK(got->val[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("group_norm examples") {
  // constant input: degenerate variance hits the floor, output is zeros pre-affine
  Tensor x = Tensor::full({4, 3, 3}, 2.5);
  auto gain = ad::constant(Tensor::full({4}, 1.0));
  auto bias = ad::constant(Tensor::zeros({4}));
  auto y = ad::group_norm(ad::constant(x), gain, bias, 2);
  for (int64_t i = 0; i < y->val.numel(); ++i) CHECK(y->val[i] == doctest::Approx(0.0));

  // non-degenerate input: per-group mean 0, variance 1 within 1e-5
  Rng rng(17, 0);
  Tensor xr = Tensor::randn({4, 4, 4}, rng);
  auto yr = ad::group_norm(ad::constant(xr), gain, bias, 2);
  for (int g = 0; g < 2; ++g) {
    double mu = 0.0, var = 0.0;
    const double* base = yr->val.data() + g * 32;
    for (int i = 0; i < 32; ++i) mu += base[i];
    mu /= 32.0;
    for (int i = 0; i < 32; ++i) var += (base[i] - mu) * (base[i] - mu);
    var /= 32.0;
    CHECK(std::fabs(mu) < 1e-6);
    CHECK(std::fabs(var - 1.0) < 1e-5);
  }

  // groups must divide channels
  CHECK_THROWS_AS(ad::group_norm(ad::constant(Tensor::zeros({3, 2, 2})), gain, bias, 2), Error);
}

TEST_CASE("silu examples") {
  auto y0 = ad::silu(ad::constant(Tensor::vec({0.0})));
  CHECK(y0->val[0] == doctest::Approx(0.0));
  auto y1 = ad::silu(ad::constant(Tensor::vec({1.0})));
  CHECK(y1->val[0] == doctest::Approx(0.7310585).epsilon(1e-6));
}

TEST_CASE("softmax examples") {
  auto y = ad::softmax(ad::constant(Tensor::vec({0.0, 0.0})), 0);
  CHECK(y->val[0] == doctest::Approx(0.5));
  CHECK(y->val[1] == doctest::Approx(0.5));

  auto y2 = ad::softmax(ad::constant(Tensor::vec({0.0, std::log(3.0)})), 0);
  CHECK(y2->val[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y2->val[1] == doctest::Approx(0.75).epsilon(1e-12));

  // shift invariance and row sums along a middle axis
  Rng rng(23, 0);
  Tensor x = Tensor::randn({3, 4, 2}, rng);
  Tensor xs = x;
  for (int64_t i = 0; i < xs.numel(); ++i) xs[i] += 17.25;
  auto a = ad::softmax(ad::constant(x), 1);
  auto b = ad::softmax(ad::constant(xs), 1);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(a->val[i] == doctest::Approx(b->val[i]).epsilon(1e-9));
  for (int o = 0; o < 3; ++o)
    for (int in = 0; in < 2; ++in) {
      double s = 0.0;
      for (int j = 0; j < 4; ++j) s += a->val.at(o, j, in);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("sinusoidal_time_embed examples") {
  Tensor e0 = ad::sinusoidal_time_embed(0, 8);
  CHECK(e0.shape() == std::vector<int>{8});
  for (int i = 0; i < 4; ++i) {
    CHECK(e0[2 * i] == doctest::Approx(0.0));      // sin
    CHECK(e0[2 * i + 1] == doctest::Approx(1.0));  // cos
  }
  // frequencies span [1, 1e4]: first divisor 1, last 1e4
  Tensor e1 = ad::sinusoidal_time_embed(1, 8);
  CHECK(e1[0] == doctest::Approx(std::sin(1.0)));
  CHECK(e1[7] == doctest::Approx(std::cos(1e-4)));
  Tensor a = ad::sinusoidal_time_embed(1, 32), b = ad::sinusoidal_time_embed(2, 32);
  double mx = 0.0;
  for (int i = 0; i < 32; ++i) mx = std::max(mx, std::fabs(a[i] - b[i]));
  CHECK(mx > 1e-3);
  CHECK_THROWS_AS(ad::sinusoidal_time_embed(0, 7), Error);
}

TEST_CASE("grad_check: linear function is exact") {
  auto fn = [](const std::vector<ad::NodeP>& in) {
    return ad::sum_all(ad::scale(in[0], 3.0));
  };
  Rng rng(31, 0);
  double err = ad::grad_check(fn, {Tensor::randn({4, 4}, rng)});
  CHECK(err < 1e-10);
}

TEST_CASE("grad_check: softmax cross-entropy toy") {
  auto fn = [](const std::vector<ad::NodeP>& in) {
    return ad::cross_entropy_logits(in[0], 2);
  };
  Rng rng(37, 0);
  double err = ad::grad_check(fn, {Tensor::randn({5}, rng)});
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check: every layer < 1e-4 over 20 seeds") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed, 99);
    {  // conv with bias, both strides
      auto fn = [](const std::vector<ad::NodeP>& in) {
        return ad::mean_all(ad::conv2d(in[0], in[1], in[2], 1));
      };
      double err = ad::grad_check(fn, {Tensor::randn({2, 5, 5}, rng),
                                       Tensor::randn({3, 2, 3, 3}, rng),
                                       Tensor::randn({3}, rng)});
      CHECK(err < 1e-4);
      auto fn2 = [](const std::vector<ad::NodeP>& in) {
        return ad::mean_all(ad::conv2d(in[0], in[1], in[2], 2));
      };
      err = ad::grad_check(fn2, {Tensor::randn({2, 5, 5}, rng),
                                 Tensor::randn({3, 2, 3, 3}, rng),
                                 Tensor::randn({3}, rng)});
      CHECK(err < 1e-4);
    }
    {  // group_norm (offset input so the variance stays off the floor)
      auto fn = [](const std::vector<ad::NodeP>& in) {
        return ad::mse(ad::group_norm(in[0], in[1], in[2], 2), ad::constant(Tensor::full({4, 3, 3}, 0.3)));
      };
      double err = ad::grad_check(fn, {Tensor::randn({4, 3, 3}, rng),
                                       Tensor::randn({4}, rng),
                                       Tensor::randn({4}, rng)});
      CHECK(err < 1e-4);
    }
    {  // matmul + add_rows + silu + softmax chain
      auto fn = [](const std::vector<ad::NodeP>& in) {
        auto y = ad::silu(ad::add_rows(ad::matmul(in[0], in[1]), in[2]));
        return ad::sum_all(ad::mul(ad::softmax(y, 1), y));
      };
      double err = ad::grad_check(fn, {Tensor::randn({3, 4}, rng),
                                       Tensor::randn({4, 5}, rng),
                                       Tensor::randn({5}, rng)});
      CHECK(err < 1e-4);
    }
    {  // shape ops: upsample, avgpool, concat, transpose, add_channel, embed
      auto fn = [](const std::vector<ad::NodeP>& in) {
        auto up = ad::upsample2x(in[0]);                    // [2,4,4]
        auto down = ad::avgpool2(up);                        // [2,2,2]
        auto cat = ad::concat_ch(down, in[1]);               // [3,2,2]
        auto biased = ad::add_channel(cat, in[2]);           // + [3]
        auto flat = ad::reshape(biased, {3, 4});
        auto tr = ad::transpose2d(flat);                     // [4,3]
        auto e = ad::embed_row(in[3], 1);                    // [1,4]
        return ad::mean_all(ad::matmul(e, tr));
      };
      double err = ad::grad_check(fn, {Tensor::randn({2, 2, 2}, rng),
                                       Tensor::randn({1, 2, 2}, rng),
                                       Tensor::randn({3}, rng),
                                       Tensor::randn({3, 4}, rng)});
      CHECK(err < 1e-4);
    }
    {  // elementwise: add/sub/mul/scale/add_scalar/mse
      auto fn = [](const std::vector<ad::NodeP>& in) {
        auto y = ad::add(ad::mul(in[0], in[1]), ad::scale(ad::sub(in[0], in[1]), 0.5));
        return ad::mse(ad::add_scalar(y, 0.1), in[2]);
      };
      double err = ad::grad_check(fn, {Tensor::randn({2, 3}, rng),
                                       Tensor::randn({2, 3}, rng),
                                       Tensor::randn({2, 3}, rng)});
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("backward accumulates when a leaf is used twice") {
  Tensor x = Tensor::vec({2.0, -1.0});
  auto l = ad::leaf(x, 0);
  auto y = ad::sum_all(ad::mul(l, l));  // d/dx sum(x^2) = 2x
  ad::backward(y);
  CHECK(l->grad[0] == doctest::Approx(4.0));
  CHECK(l->grad[1] == doctest::Approx(-2.0));
}

TEST_CASE("adam examples") {
  using namespace clusdiff::nn;
  ParamStore ps;
  int id = ps.add("p", Tensor::vec({1.0}));

  SUBCASE("zero grads leave params unchanged") {
    Adam opt;
    opt.register_params(ps);
    opt.step(ps);
    CHECK(ps.at(id).value[0] == doctest::Approx(1.0));
  }
  SUBCASE("lr=0 leaves params unchanged") {
    Adam opt(0.0);
    opt.register_params(ps);
    ps.at(id).grad[0] = 123.0;
    opt.step(ps);
    CHECK(ps.at(id).value[0] == doctest::Approx(1.0));
    CHECK(ps.at(id).grad[0] == 0.0);  // grads zeroed by the step
  }
  SUBCASE("first step moves by ~ -lr*sign(g)") {
    Adam opt;  // lr 1e-3
    opt.register_params(ps);
    for (double g : {0.5, -2.0, 10.0}) {
      ParamStore store;
      int pid = store.add("p", Tensor::vec({1.0}));
      Adam o;
      o.register_params(store);
      store.at(pid).grad[0] = g;
      o.step(store);
      double delta = store.at(pid).value[0] - 1.0;
      double want = -1e-3 * (g > 0 ? 1.0 : -1.0);
      CHECK(std::fabs(delta - want) < 1e-6);
    }
  }
  SUBCASE("missing state is a state error") {
    Adam opt;
    opt.register_params(ps);
    ps.add("late", Tensor::vec({0.0}));
    CHECK_THROWS_AS(opt.step(ps), Error);
    try {
      opt.step(ps);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::State);
    }
  }
}

TEST_CASE("adam against a straight-line recurrence oracle") {
  using namespace clusdiff::nn;
  ParamStore ps;
  int id = ps.add("p", Tensor::vec({0.7}));
  Adam opt(1e-2);
  opt.register_params(ps);
  double p = 0.7, m = 0.0, v = 0.0;
  Rng rng(101, 0);
  for (int t = 1; t <= 25; ++t) {
    double g = rng.normal();
    ps.at(id).grad[0] = g;
    opt.step(ps);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mhat = m / (1.0 - std::pow(0.9, t));
    double vhat = v / (1.0 - std::pow(0.999, t));
    p -= 1e-2 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(ps.at(id).value[0] == doctest::Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("leaves harvest in deterministic id order") {
  using namespace clusdiff::nn;
  ParamStore ps;
  Rng rng(7, 0);
  Linear lin = Linear::create(ps, "lin", 3, 2, rng);
  Leaves l(ps);
  auto x = ad::constant(Tensor::randn({1, 3}, rng));
  auto loss = ad::mean_all(lin(l, x));
  ad::backward(loss);
  std::vector<Tensor> sink(size_t(ps.count()));
  l.harvest(sink);
  CHECK(sink[0].numel() == 6);  // weight grads present
  CHECK(sink[1].numel() == 2);
  accumulate_grads(ps, sink);
  CHECK(ps.at(1).grad[0] == doctest::Approx(0.5));  // d/db mean over 2 outputs
}

TEST_CASE("tensor file round trip") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "clusdiff_io_test";
  fs::create_directories(dir);
  Rng rng(13, 0);
  Tensor t = Tensor::randn({3, 2, 4}, rng);

  auto p64 = (dir / "a.cdtn").string();
  save_tensor(p64, t, Dtype::F64);
  Tensor back = load_tensor(p64);
  CHECK(back == t);  // f64 is bit-exact

  auto p32 = (dir / "b.cdtn").string();
  save_tensor(p32, t, Dtype::F32);
  Tensor back32 = load_tensor(p32);
  CHECK(back32.same_shape(t));
  for (int64_t i = 0; i < t.numel(); ++i)
    CHECK(back32[i] == doctest::Approx(t[i]).epsilon(1e-6));

  CHECK_THROWS_AS(load_tensor((dir / "missing.cdtn").string()), Error);
  try {
    load_tensor((dir / "missing.cdtn").string());
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingInput);
  }
  fs::remove_all(dir);
}

TEST_CASE("parallel_for matches serial execution and propagates errors") {
  std::vector<double> out(1000, 0.0);
  parallel_for(1000, [&](int64_t i) { out[size_t(i)] = double(i) * 1.5; });
  for (int i = 0; i < 1000; ++i) CHECK(out[size_t(i)] == double(i) * 1.5);
  CHECK_THROWS_AS(parallel_for(10, [&](int64_t i) {
    if (i == 7) fail(ErrorKind::Numeric, "boom");
  }), Error);
}
