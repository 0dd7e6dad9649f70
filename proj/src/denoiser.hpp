#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "diffusion.hpp"
#include "nn.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace clusdiff {

struct UNetConfig {
  int in_ch = 1;
  int img = 24;     // square spatial extent; must be divisible by 4 (two downsamples)
  int base = 32;    // channel width at full resolution
  int d_ctx = 64;   // label context width
  int d_time = 64;  // time embedding width (even)
};

/// Largest of {8,4,2,1} dividing the channel count, so that every width
/// derived from base (1x, 2x, 3x, 4x) shares the same group size.
int norm_groups_for(int channels);

/// A.v where A = softmax(q k^T / sqrt(d_a)) over the key axis.
/// q [n,d_a], k [m,d_a], v [m,d_v] -> [n,d_v].
ad::NodeP attention_mix(const ad::NodeP& q, const ad::NodeP& k, const ad::NodeP& v);

/// Conditional denoising U-Net with a jointly trained label embedder.
/// Vocabulary is the closed set of sub-class labels; conditioning enters
/// through cross-attention at the bottleneck and each decoder resolution.
class Denoiser {
 public:
  Denoiser(const UNetConfig& cfg, std::vector<std::string> vocab, uint64_t init_seed);

  /// Graph-building forward pass. x is [in_ch, img, img].
  ad::NodeP forward(nn::Leaves& l, const ad::NodeP& x, int t, int row) const;
  /// Projected label context [1, d_ctx] for vocabulary row `row`.
  ad::NodeP context(nn::Leaves& l, int row) const;

  /// Pure inference wrappers (no gradient tracking).
  Tensor denoise(const Tensor& x_t, int t, const std::string& label) const;
  Tensor denoise_row(const Tensor& x_t, int t, int row) const;
  Tensor embed_label(const std::string& label) const;  // [1, d_ctx]

  int row_of(const std::string& label) const;  // Vocabulary error when unknown
  const std::vector<std::string>& vocab() const { return vocab_; }
  const UNetConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

  void save(const std::string& path) const;
  static Denoiser load(const std::string& path);

 private:
  struct Res {
    nn::GroupNormLayer n1, n2;
    nn::Conv2d c1, c2, skip;
    nn::Linear temb;
    bool has_skip = false;
  };
  struct Attn {
    nn::Linear wq, wk, wv, wo;
    int d_a = 0;
  };

  Res make_res(const std::string& name, int cin, int cout, Rng& rng);
  Attn make_attn(const std::string& name, int c, Rng& rng);
  ad::NodeP res_forward(const Res& r, nn::Leaves& l, const ad::NodeP& x,
                        const ad::NodeP& temb) const;
  ad::NodeP attn_forward(const Attn& a, nn::Leaves& l, const ad::NodeP& x,
                         const ad::NodeP& ctx) const;

  UNetConfig cfg_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> row_;
  nn::ParamStore ps_;

  nn::Linear time1_, time2_;
  nn::Embedding emb_;
  nn::Linear ctx1_, ctx2_;
  nn::Conv2d stem_, down0_, down1_, out_conv_;
  Res enc0_, enc1_, mid1_, mid2_, dec1_, dec0_;
  Attn amid_, adec1_, adec0_;
  nn::GroupNormLayer out_norm_;
};

struct TrainStats {
  std::vector<double> step_loss;   // one entry per optimizer step
  std::vector<double> epoch_loss;  // mean step loss per epoch
};

/// Joint training of the U-Net and the label embedder: per sample draw
/// t ~ U{1..T} and eps ~ N(0,I), form z_t, regress eps under MSE.
/// Deterministic for a given seed, independent of thread count.
TrainStats train_denoiser(Denoiser& model, const std::vector<Tensor>& z,
                          const std::vector<int>& rows, const NoiseSchedule& sched,
                          int epochs, int batch, nn::Adam& opt, uint64_t seed);

}  // namespace clusdiff
