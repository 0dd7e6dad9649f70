#include "denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "checkpoint.hpp"
#include "parallel.hpp"

namespace clusdiff {

int norm_groups_for(int channels) {
  for (int g : {8, 4, 2})
    if (channels % g == 0) return g;
  return 1;
}

ad::NodeP attention_mix(const ad::NodeP& q, const ad::NodeP& k, const ad::NodeP& v) {
  if (q->val.rank() != 2 || k->val.rank() != 2 || v->val.rank() != 2 ||
      q->val.extent(1) != k->val.extent(1) || k->val.extent(0) != v->val.extent(0))
    fail(ErrorKind::Shape, "attention_mix: q " + q->val.shape_str() + " k " + k->val.shape_str() +
                               " v " + v->val.shape_str());
  int d_a = q->val.extent(1);
  auto scores = ad::scale(ad::matmul(q, ad::transpose2d(k)), 1.0 / std::sqrt(double(d_a)));
  auto A = ad::softmax(scores, 1);
  return ad::matmul(A, v);
}

Denoiser::Res Denoiser::make_res(const std::string& name, int cin, int cout, Rng& rng) {
  Res r;
  r.n1 = nn::GroupNormLayer::create(ps_, name + ".n1", cin, norm_groups_for(cin));
  r.c1 = nn::Conv2d::create(ps_, name + ".c1", cin, cout, 1, rng);
  r.temb = nn::Linear::create(ps_, name + ".temb", cfg_.d_time, cout, rng);
  r.n2 = nn::GroupNormLayer::create(ps_, name + ".n2", cout, norm_groups_for(cout));
  r.c2 = nn::Conv2d::create(ps_, name + ".c2", cout, cout, 1, rng);
  r.has_skip = cin != cout;
  if (r.has_skip) r.skip = nn::Conv2d::create(ps_, name + ".skip", cin, cout, 1, rng);
  return r;
}

Denoiser::Attn Denoiser::make_attn(const std::string& name, int c, Rng& rng) {
  Attn a;
  a.d_a = c;
  a.wq = nn::Linear::create(ps_, name + ".wq", c, c, rng, false);
  a.wk = nn::Linear::create(ps_, name + ".wk", cfg_.d_ctx, c, rng, false);
  a.wv = nn::Linear::create(ps_, name + ".wv", cfg_.d_ctx, c, rng, false);
  a.wo = nn::Linear::create(ps_, name + ".wo", c, c, rng, false);
  return a;
}

Denoiser::Denoiser(const UNetConfig& cfg, std::vector<std::string> vocab, uint64_t init_seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  if (cfg_.img < 4 || cfg_.img % 4 != 0)
    fail(ErrorKind::Config, "image extent must be a positive multiple of 4");
  if (cfg_.base < 1 || cfg_.in_ch < 1) fail(ErrorKind::Config, "channel counts must be positive");
  if (cfg_.d_time < 2 || cfg_.d_time % 2 != 0) fail(ErrorKind::Config, "d_time must be even");
  if (cfg_.d_ctx < 1) fail(ErrorKind::Config, "d_ctx must be positive");
  if (vocab_.empty()) fail(ErrorKind::Vocabulary, "empty label vocabulary");
  for (int i = 0; i < int(vocab_.size()); ++i) {
    if (!row_.emplace(vocab_[size_t(i)], i).second)
      fail(ErrorKind::Vocabulary, "duplicate label: " + vocab_[size_t(i)]);
  }

  Rng rng(init_seed, 0);
  int B = cfg_.base;
  time1_ = nn::Linear::create(ps_, "time.l1", cfg_.d_time, cfg_.d_time, rng);
  time2_ = nn::Linear::create(ps_, "time.l2", cfg_.d_time, cfg_.d_time, rng);
  emb_ = nn::Embedding::create(ps_, "label.emb", int(vocab_.size()), cfg_.d_ctx, rng);
  ctx1_ = nn::Linear::create(ps_, "label.l1", cfg_.d_ctx, cfg_.d_ctx, rng);
  ctx2_ = nn::Linear::create(ps_, "label.l2", cfg_.d_ctx, cfg_.d_ctx, rng);

  stem_ = nn::Conv2d::create(ps_, "stem", cfg_.in_ch, B, 1, rng);
  enc0_ = make_res("enc0", B, B, rng);
  down0_ = nn::Conv2d::create(ps_, "down0", B, 2 * B, 2, rng);
  enc1_ = make_res("enc1", 2 * B, 2 * B, rng);
  down1_ = nn::Conv2d::create(ps_, "down1", 2 * B, 2 * B, 2, rng);
  mid1_ = make_res("mid1", 2 * B, 2 * B, rng);
  amid_ = make_attn("mid.attn", 2 * B, rng);
  mid2_ = make_res("mid2", 2 * B, 2 * B, rng);
  dec1_ = make_res("dec1", 4 * B, 2 * B, rng);
  adec1_ = make_attn("dec1.attn", 2 * B, rng);
  dec0_ = make_res("dec0", 3 * B, B, rng);
  adec0_ = make_attn("dec0.attn", B, rng);
  out_norm_ = nn::GroupNormLayer::create(ps_, "out.norm", B, norm_groups_for(B));
  out_conv_ = nn::Conv2d::create(ps_, "out.conv", B, cfg_.in_ch, 1, rng);
  // Damp (not zero) the output projection: an untrained model predicts
  // near-zero noise, but gradients still reach every upstream block and the
  // time embedding visibly affects the output from step one.
  for (int64_t i = 0; i < ps_.at(out_conv_.w).value.numel(); ++i)
    ps_.at(out_conv_.w).value[i] *= 0.1;
}

int Denoiser::row_of(const std::string& label) const {
  auto it = row_.find(label);
  if (it == row_.end()) fail(ErrorKind::Vocabulary, "unknown label: " + label);
  return it->second;
}

ad::NodeP Denoiser::context(nn::Leaves& l, int row) const {
  if (row < 0 || row >= int(vocab_.size())) fail(ErrorKind::Vocabulary, "label row out of range");
  auto e = emb_(l, row);
  return ctx2_(l, ad::silu(ctx1_(l, e)));
}

ad::NodeP Denoiser::res_forward(const Res& r, nn::Leaves& l, const ad::NodeP& x,
                                const ad::NodeP& temb) const {
  auto h = r.c1(l, ad::silu(r.n1(l, x)));
  int cout = h->val.extent(0);
  auto tvec = ad::reshape(r.temb(l, temb), {cout});
  h = ad::add_channel(h, tvec);
  h = r.c2(l, ad::silu(r.n2(l, h)));
  auto s = r.has_skip ? r.skip(l, x) : x;
  return ad::add(h, s);
}

ad::NodeP Denoiser::attn_forward(const Attn& a, nn::Leaves& l, const ad::NodeP& x,
                                 const ad::NodeP& ctx) const {
  int c = x->val.extent(0), h = x->val.extent(1), w = x->val.extent(2);
  auto tokens = ad::transpose2d(ad::reshape(x, {c, h * w}));  // [hw, c]
  auto q = a.wq(l, tokens);
  auto k = a.wk(l, ctx);
  auto v = a.wv(l, ctx);
  auto mixed = a.wo(l, attention_mix(q, k, v));               // [hw, c]
  auto spatial = ad::reshape(ad::transpose2d(mixed), {c, h, w});
  return ad::add(x, spatial);
}

ad::NodeP Denoiser::forward(nn::Leaves& l, const ad::NodeP& x, int t, int row) const {
  if (x->val.rank() != 3 || x->val.extent(0) != cfg_.in_ch ||
      x->val.extent(1) != cfg_.img || x->val.extent(2) != cfg_.img)
    fail(ErrorKind::Shape, "denoiser input wants [" + std::to_string(cfg_.in_ch) + "," +
                               std::to_string(cfg_.img) + "," + std::to_string(cfg_.img) +
                               "], got " + x->val.shape_str());
  auto tsin = ad::constant(ad::sinusoidal_time_embed(t, cfg_.d_time).reshaped({1, cfg_.d_time}));
  auto temb = time2_(l, ad::silu(time1_(l, tsin)));
  auto ctx = context(l, row);

  auto h0 = stem_(l, x);
  auto e0 = res_forward(enc0_, l, h0, temb);
  auto e1 = res_forward(enc1_, l, down0_(l, e0), temb);
  auto m = res_forward(mid1_, l, down1_(l, e1), temb);
  m = attn_forward(amid_, l, m, ctx);
  m = res_forward(mid2_, l, m, temb);
  auto u1 = res_forward(dec1_, l, ad::concat_ch(ad::upsample2x(m), e1), temb);
  u1 = attn_forward(adec1_, l, u1, ctx);
  auto u0 = res_forward(dec0_, l, ad::concat_ch(ad::upsample2x(u1), e0), temb);
  u0 = attn_forward(adec0_, l, u0, ctx);
  return out_conv_(l, ad::silu(out_norm_(l, u0)));
}

Tensor Denoiser::denoise_row(const Tensor& x_t, int t, int row) const {
  nn::Leaves l(ps_, false);
  return forward(l, ad::constant(x_t), t, row)->val;
}

Tensor Denoiser::denoise(const Tensor& x_t, int t, const std::string& label) const {
  return denoise_row(x_t, t, row_of(label));
}

Tensor Denoiser::embed_label(const std::string& label) const {
  nn::Leaves l(ps_, false);
  return context(l, row_of(label))->val;
}

void Denoiser::save(const std::string& path) const {
  CheckpointMeta meta;
  meta.kind = "denoiser";
  meta.config = {{"in_ch", std::to_string(cfg_.in_ch)},
                 {"img", std::to_string(cfg_.img)},
                 {"base", std::to_string(cfg_.base)},
                 {"d_ctx", std::to_string(cfg_.d_ctx)},
                 {"d_time", std::to_string(cfg_.d_time)}};
  meta.vocab = vocab_;
  save_checkpoint(path, meta, ps_);
}

Denoiser Denoiser::load(const std::string& path) {
  std::map<std::string, Tensor> values;
  CheckpointMeta meta = load_checkpoint(path, values);
  if (meta.kind != "denoiser") fail(ErrorKind::Io, path + " is a " + meta.kind + " checkpoint");
  UNetConfig cfg;
  cfg.in_ch = meta.config_int("in_ch");
  cfg.img = meta.config_int("img");
  cfg.base = meta.config_int("base");
  cfg.d_ctx = meta.config_int("d_ctx");
  cfg.d_time = meta.config_int("d_time");
  Denoiser model(cfg, meta.vocab, 0);
  install_params(model.ps_, values);
  return model;
}

TrainStats train_denoiser(Denoiser& model, const std::vector<Tensor>& z,
                          const std::vector<int>& rows, const NoiseSchedule& sched,
                          int epochs, int batch, nn::Adam& opt, uint64_t seed) {
  if (z.empty()) fail(ErrorKind::Data, "training dataset is empty");
  if (z.size() != rows.size()) fail(ErrorKind::Data, "sample/label count mismatch");
  int V = int(model.vocab().size());
  for (int r : rows)
    if (r < 0 || r >= V) fail(ErrorKind::Vocabulary, "label row out of vocabulary range");
  if (batch < 1) fail(ErrorKind::Config, "batch must be >= 1");
  if (epochs < 1) fail(ErrorKind::Config, "epochs must be >= 1");
  opt.register_params(model.params());

  const int n = int(z.size());
  TrainStats stats;
  for (int e = 0; e < epochs; ++e) {
    // deterministic per-epoch shuffle
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[size_t(i)] = i;
    Rng shuffle_rng(Rng::derive(seed, 0x5u), uint64_t(e));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[size_t(i)], order[size_t(shuffle_rng.below(uint64_t(i) + 1))]);

    double epoch_sum = 0.0;
    int epoch_steps = 0;
    for (int start = 0; start < n; start += batch) {
      int bs = std::min(batch, n - start);
      std::vector<std::vector<Tensor>> sinks(static_cast<size_t>(bs));
      std::vector<double> losses(static_cast<size_t>(bs));
      parallel_for(bs, [&](int64_t bi) {
        int idx = order[size_t(start + int(bi))];
        // per-sample noise stream: a pure function of (seed, epoch, position)
        uint64_t stream = (uint64_t(e) << 32) | uint64_t(start + int(bi));
        Rng srng(Rng::derive(seed, 0xD1u), stream);
        int t = 1 + int(srng.below(uint64_t(sched.T)));
        Tensor eps = Tensor::randn(z[size_t(idx)].shape(), srng);
        Tensor zt = forward_sample(z[size_t(idx)], t, eps, sched);
        nn::Leaves l(model.params());
        auto pred = model.forward(l, ad::constant(zt), t, rows[size_t(idx)]);
        auto loss = ad::mse(pred, ad::constant(eps));
        losses[size_t(bi)] = loss->val[0];
        ad::backward(loss);
        sinks[size_t(bi)].assign(size_t(model.params().count()), Tensor());
        l.harvest(sinks[size_t(bi)]);
      });
      double step_loss = 0.0;
      for (int bi = 0; bi < bs; ++bi) {
        if (!std::isfinite(losses[size_t(bi)]))
          fail(ErrorKind::Numeric, "non-finite loss at epoch " + std::to_string(e + 1) +
                                       ", step " + std::to_string(epoch_steps + 1) +
                                       " (loss=" + std::to_string(losses[size_t(bi)]) + ")");
        step_loss += losses[size_t(bi)];
        nn::accumulate_grads(model.params(), sinks[size_t(bi)], 1.0 / double(bs));
      }
      step_loss /= double(bs);
      opt.step(model.params());
      stats.step_loss.push_back(step_loss);
      epoch_sum += step_loss;
      ++epoch_steps;
    }
    stats.epoch_loss.push_back(epoch_sum / double(epoch_steps));
  }
  return stats;
}

}  // namespace clusdiff
