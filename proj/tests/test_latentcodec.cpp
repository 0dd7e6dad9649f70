#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "error.hpp"
#include "latentcodec.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace clusdiff;

namespace {

// Toy blobs: a bright 4x4 square at one of two corners, small pixel noise.
Tensor blob_image(int mode, Rng& rng) {
  Tensor img = Tensor::zeros({1, 12, 12});
  int off = mode ? 6 : 2;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at(0, off + y, off + x) = 1.0;
  for (int64_t i = 0; i < img.numel(); ++i) img[i] += 0.02 * rng.normal();
  return img;
}

double recon_mse(const Codec& c, const Tensor& x) {
  Tensor r = c.decode(c.encode(x));
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) s += (r[i] - x[i]) * (r[i] - x[i]);
  return s / double(x.numel());
}

}  // namespace

TEST_CASE("identity codec is a bit-exact round trip") {
  Codec c = Codec::identity();
  CHECK(c.factor() == 1);
  Rng rng(1, 0);
  Tensor x = Tensor::randn({1, 24, 24}, rng);
  CHECK(c.encode(x) == x);
  CHECK(c.decode(c.encode(x)) == x);
  // any rank passes through
  Tensor v = Tensor::randn({7}, rng);
  CHECK(c.decode(c.encode(v)) == v);
}

TEST_CASE("conv codec halves the extents and rejects indivisible input") {
  CodecConfig cfg;
  Codec c = Codec::conv_ae(cfg, 3);
  CHECK(c.factor() == 2);
  Tensor x = Tensor::zeros({1, 24, 24});
  Tensor z = c.encode(x);
  REQUIRE(z.rank() == 3);
  CHECK(z.extent(0) == cfg.zch);
  CHECK(z.extent(1) == 12);
  CHECK(z.extent(2) == 12);
  CHECK(c.decode(z).same_shape(x));

  CHECK_THROWS_AS(c.encode(Tensor::zeros({1, 25, 24})), Error);
  CHECK_THROWS_AS(c.encode(Tensor::zeros({2, 24, 24})), Error);
  CHECK_THROWS_AS(c.decode(Tensor::zeros({3, 12, 12})), Error);
}

TEST_CASE("autoencoder training errors") {
  Codec id = Codec::identity();
  nn::Adam opt;
  std::vector<Tensor> data = {Tensor::zeros({1, 12, 12})};
  CHECK_THROWS_AS(train_autoencoder(id, data, 1, 1, opt, 0), Error);
  try {
    train_autoencoder(id, data, 1, 1, opt, 0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }

  Codec ae = Codec::conv_ae(CodecConfig{}, 0);
  std::vector<Tensor> empty;
  try {
    train_autoencoder(ae, empty, 1, 1, opt, 0);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
  }
}

TEST_CASE("constant-image dataset converges to tiny reconstruction error") {
  Codec c = Codec::conv_ae(CodecConfig{}, 7);
  std::vector<Tensor> data(8, Tensor::full({1, 12, 12}, 0.5));
  nn::Adam opt(1e-2);
  auto stats = train_autoencoder(c, data, 300, 8, opt, 42);
  for (double v : stats.step_loss) CHECK(std::isfinite(v));
  CHECK(stats.epoch_loss.back() < 1e-4);
  CHECK(recon_mse(c, data[0]) < 1e-4);
}

TEST_CASE("toy training reconstructs held-out samples") {
  Rng rng(11, 0);
  std::vector<Tensor> train, held;
  for (int i = 0; i < 24; ++i) train.push_back(blob_image(i % 2, rng));
  for (int i = 0; i < 8; ++i) held.push_back(blob_image(i % 2, rng));

  Codec c = Codec::conv_ae(CodecConfig{}, 5);
  nn::Adam opt(5e-3);
  auto stats = train_autoencoder(c, train, 80, 8, opt, 17);

  double mse = 0.0;
  for (const Tensor& x : held) mse += recon_mse(c, x);
  mse /= double(held.size());
  CHECK(mse < 0.01);

  // epoch-mean trace: non-increasing over 10-epoch windows, one violation allowed
  int violations = 0;
  for (size_t w = 10; w < stats.epoch_loss.size(); w += 10) {
    double prev = 0.0, cur = 0.0;
    for (size_t i = w - 10; i < w; ++i) prev += stats.epoch_loss[i];
    for (size_t i = w; i < std::min(w + 10, stats.epoch_loss.size()); ++i) cur += stats.epoch_loss[i];
    size_t m = std::min(w + 10, stats.epoch_loss.size()) - w;
    if (cur / double(m) > prev / 10.0) ++violations;
  }
  CHECK(violations <= 1);
}

TEST_CASE("autoencoder loss decreases across seeds") {
  int decreasing = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed, 3);
    std::vector<Tensor> data;
    for (int i = 0; i < 12; ++i) data.push_back(blob_image(i % 2, rng));
    Codec c = Codec::conv_ae(CodecConfig{}, seed);
    nn::Adam opt(5e-3);
    auto stats = train_autoencoder(c, data, 20, 4, opt, seed * 13 + 1);
    if (stats.epoch_loss[19] < stats.epoch_loss[0]) ++decreasing;
  }
  CHECK(decreasing >= 4);
}

TEST_CASE("codec checkpoints restore both variants exactly") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "clusdiff_codec";
  fs::create_directories(dir);

  Codec id = Codec::identity();
  auto idpath = (dir / "id.cdck").string();
  id.save(idpath);
  Codec id2 = Codec::load(idpath);
  CHECK(id2.variant() == CodecVariant::Identity);

  Codec ae = Codec::conv_ae(CodecConfig{}, 9);
  auto aepath = (dir / "ae.cdck").string();
  ae.save(aepath);
  Codec ae2 = Codec::load(aepath);
  CHECK(ae2.variant() == CodecVariant::ConvAe);
  Rng rng(2, 0);
  Tensor x = Tensor::randn({1, 12, 12}, rng);
  CHECK(ae2.encode(x) == ae.encode(x));
  CHECK(ae2.decode(ae.encode(x)) == ae.decode(ae.encode(x)));
  fs::remove_all(dir);
}
