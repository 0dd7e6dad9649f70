#include "latentcodec.hpp"

#include <algorithm>
#include <map>

#include "checkpoint.hpp"
#include "error.hpp"
#include "parallel.hpp"

namespace clusdiff {

Codec Codec::identity() {
  Codec c;
  c.variant_ = CodecVariant::Identity;
  return c;
}

Codec Codec::conv_ae(const CodecConfig& cfg, uint64_t init_seed) {
  if (cfg.in_ch < 1 || cfg.hidden < 1 || cfg.zch < 1)
    fail(ErrorKind::Config, "codec channel counts must be >= 1");
  Codec c;
  c.variant_ = CodecVariant::ConvAe;
  c.cfg_ = cfg;
  Rng rng(Rng::derive(init_seed, 0xAEu), 0);
  c.e1_ = nn::Conv2d::create(c.ps_, "enc.c1", cfg.in_ch, cfg.hidden, 1, rng);
  c.e2_ = nn::Conv2d::create(c.ps_, "enc.c2", cfg.hidden, cfg.zch, 2, rng);
  c.d1_ = nn::Conv2d::create(c.ps_, "dec.c1", cfg.zch, cfg.hidden, 1, rng);
  c.d2_ = nn::Conv2d::create(c.ps_, "dec.c2", cfg.hidden, cfg.hidden, 1, rng);
  c.d3_ = nn::Conv2d::create(c.ps_, "dec.c3", cfg.hidden, cfg.in_ch, 1, rng);
  return c;
}

namespace {

void check_image(const Tensor& x, int ch, int f, const char* what) {
  if (x.rank() != 3) fail(ErrorKind::Shape, std::string(what) + " must be rank 3");
  if (x.extent(0) != ch)
    fail(ErrorKind::Shape, std::string(what) + " has " + std::to_string(x.extent(0)) +
                               " channels, expected " + std::to_string(ch));
  if (x.extent(1) % f != 0 || x.extent(2) % f != 0)
    fail(ErrorKind::Shape, std::string(what) + " extents not divisible by the codec factor");
}

}  // namespace

Tensor Codec::encode(const Tensor& x) const {
  if (variant_ == CodecVariant::Identity) return x;
  check_image(x, cfg_.in_ch, 2, "encode input");
  nn::Leaves l(ps_, false);
  auto h = ad::silu(e1_(l, ad::constant(x)));
  return e2_(l, h)->val;
}

Tensor Codec::decode(const Tensor& z) const {
  if (variant_ == CodecVariant::Identity) return z;
  check_image(z, cfg_.zch, 1, "decode input");
  nn::Leaves l(ps_, false);
  auto h = ad::upsample2x(ad::silu(d1_(l, ad::constant(z))));
  h = ad::silu(d2_(l, h));
  return d3_(l, h)->val;
}

ad::NodeP Codec::autoencode(nn::Leaves& l, const ad::NodeP& x) const {
  if (variant_ == CodecVariant::Identity)
    fail(ErrorKind::Config, "identity codec has nothing to train");
  check_image(x->val, cfg_.in_ch, 2, "autoencode input");
  auto z = e2_(l, ad::silu(e1_(l, x)));
  auto h = ad::upsample2x(ad::silu(d1_(l, z)));
  h = ad::silu(d2_(l, h));
  return d3_(l, h);
}

void Codec::save(const std::string& path) const {
  CheckpointMeta meta;
  meta.kind = "codec";
  bool id = variant_ == CodecVariant::Identity;
  meta.config = {{"variant", id ? "identity" : "conv_ae"},
                 {"in_ch", std::to_string(cfg_.in_ch)},
                 {"hidden", std::to_string(cfg_.hidden)},
                 {"zch", std::to_string(cfg_.zch)}};
  save_checkpoint(path, meta, ps_);
}

Codec Codec::load(const std::string& path) {
  std::map<std::string, Tensor> values;
  CheckpointMeta meta = load_checkpoint(path, values);
  if (meta.kind != "codec")
    fail(ErrorKind::Io, "checkpoint kind '" + meta.kind + "' is not a codec");
  if (meta.config_value("variant") == "identity") return identity();
  CodecConfig cfg;
  cfg.in_ch = meta.config_int("in_ch");
  cfg.hidden = meta.config_int("hidden");
  cfg.zch = meta.config_int("zch");
  Codec c = conv_ae(cfg, 0);
  install_params(c.ps_, values);
  return c;
}

AeTrainStats train_autoencoder(Codec& codec, const std::vector<Tensor>& images,
                               int epochs, int batch, nn::Adam& opt, uint64_t seed) {
  if (codec.variant() == CodecVariant::Identity)
    fail(ErrorKind::Config, "identity codec has nothing to train");
  if (images.empty()) fail(ErrorKind::Data, "training dataset is empty");
  if (batch < 1) fail(ErrorKind::Config, "batch must be >= 1");
  if (epochs < 1) fail(ErrorKind::Config, "epochs must be >= 1");
  opt.register_params(codec.params());

  const int n = int(images.size());
  AeTrainStats stats;
  for (int e = 0; e < epochs; ++e) {
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[size_t(i)] = i;
    Rng shuffle_rng(Rng::derive(seed, 0xAE5u), uint64_t(e));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[size_t(i)], order[size_t(shuffle_rng.below(uint64_t(i) + 1))]);

    double epoch_sum = 0.0;
    int epoch_steps = 0;
    for (int start = 0; start < n; start += batch) {
      int bs = std::min(batch, n - start);
      std::vector<std::vector<Tensor>> sinks(static_cast<size_t>(bs));
      std::vector<double> losses(static_cast<size_t>(bs));
      parallel_for(bs, [&](int64_t bi) {
        const Tensor& x = images[size_t(order[size_t(start + int(bi))])];
        nn::Leaves l(codec.params());
        auto recon = codec.autoencode(l, ad::constant(x));
        auto loss = ad::mse(recon, ad::constant(x));
        losses[size_t(bi)] = loss->val[0];
        ad::backward(loss);
        sinks[size_t(bi)].assign(size_t(codec.params().count()), Tensor());
        l.harvest(sinks[size_t(bi)]);
      });
      double step_loss = 0.0;
      for (int bi = 0; bi < bs; ++bi) {
        if (!std::isfinite(losses[size_t(bi)]))
          fail(ErrorKind::Numeric, "non-finite reconstruction loss at epoch " +
                                       std::to_string(e + 1) + ", step " +
                                       std::to_string(epoch_steps + 1));
        step_loss += losses[size_t(bi)];
        nn::accumulate_grads(codec.params(), sinks[size_t(bi)], 1.0 / double(bs));
      }
      step_loss /= double(bs);
      opt.step(codec.params());
      stats.step_loss.push_back(step_loss);
      epoch_sum += step_loss;
      ++epoch_steps;
    }
    stats.epoch_loss.push_back(epoch_sum / double(epoch_steps));
  }
  return stats;
}

}  // namespace clusdiff
