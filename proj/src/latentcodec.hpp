#pragma once

#include <string>
#include <vector>

#include "nn.hpp"
#include "tensor.hpp"

namespace clusdiff {

enum class CodecVariant { Identity, ConvAe };

struct CodecConfig {
  int in_ch = 1;
  int hidden = 16;  // autoencoder trunk width
  int zch = 1;      // latent channel count
};

/// Image <-> latent mapping for the diffusion working space. The identity
/// variant passes tensors through bit-exact; the conv autoencoder halves the
/// spatial extents (factor 2) through a strided encoder and a nearest-upsample
/// decoder.
class Codec {
 public:
  static Codec identity();
  static Codec conv_ae(const CodecConfig& cfg, uint64_t init_seed);

  Tensor encode(const Tensor& x) const;
  Tensor decode(const Tensor& z) const;

  /// Graph-building decode(encode(x)) for training.
  ad::NodeP autoencode(nn::Leaves& l, const ad::NodeP& x) const;

  CodecVariant variant() const { return variant_; }
  int factor() const { return variant_ == CodecVariant::Identity ? 1 : 2; }
  const CodecConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

  void save(const std::string& path) const;
  static Codec load(const std::string& path);

 private:
  Codec() = default;

  CodecVariant variant_ = CodecVariant::Identity;
  CodecConfig cfg_;
  nn::ParamStore ps_;
  nn::Conv2d e1_, e2_;        // in -> hidden (s1), hidden -> zch (s2)
  nn::Conv2d d1_, d2_, d3_;   // zch -> hidden (s1), up, hidden -> hidden, hidden -> in
};

struct AeTrainStats {
  std::vector<double> step_loss;
  std::vector<double> epoch_loss;
};

/// Plain MSE reconstruction training. Batches run per-sample in parallel with
/// gradients merged in a fixed order, so results do not depend on the thread
/// count.
AeTrainStats train_autoencoder(Codec& codec, const std::vector<Tensor>& images,
                               int epochs, int batch, nn::Adam& opt, uint64_t seed);

}  // namespace clusdiff
