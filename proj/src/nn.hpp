#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace clusdiff::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape; zeroed between optimizer steps
};

/// Owns model parameters; the index into the store is the stable id
/// used by graph leaves and optimizer state.
class ParamStore {
 public:
  int add(const std::string& name, Tensor init);
  int count() const { return int(params_.size()); }
  Param& at(int id);
  const Param& at(int id) const;
  int find(const std::string& name) const;  // -1 when absent
  void zero_grads();
  int64_t total_scalars() const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> by_name_;
};

/// Per-graph cache of parameter leaf nodes. Build one per forward pass;
/// reusing the same leaf for repeated appearances makes its gradient
/// accumulate naturally during backward().
class Leaves {
 public:
  explicit Leaves(const ParamStore& store, bool track_grad = true)
      : store_(&store), nodes_(size_t(store.count())), track_grad_(track_grad) {}
  ad::NodeP operator[](int id);
  /// Add each used leaf's gradient into sink[id] (sized store.count(),
  /// empty tensors meaning "none yet"), in increasing id order.
  void harvest(std::vector<Tensor>& sink) const;

 private:
  const ParamStore* store_;
  std::vector<ad::NodeP> nodes_;
  bool track_grad_ = true;
};

/// Merge a harvested gradient buffer into the store's .grad fields.
void accumulate_grads(ParamStore& store, const std::vector<Tensor>& sink, double scale = 1.0);

// -- layers: thin structs of param ids, applied through a Leaves cache --

struct Conv2d {
  int w = -1, b = -1;  // b == -1 when biasless
  int stride = 1;
  static Conv2d create(ParamStore& ps, const std::string& prefix, int cin, int cout,
                       int stride, Rng& rng, bool bias = true);
  ad::NodeP operator()(Leaves& l, const ad::NodeP& x) const;
};

struct GroupNormLayer {
  int gain = -1, bias = -1;
  int groups = 1;
  static GroupNormLayer create(ParamStore& ps, const std::string& prefix, int channels, int groups);
  ad::NodeP operator()(Leaves& l, const ad::NodeP& x) const;
};

struct Linear {
  int w = -1, b = -1;
  static Linear create(ParamStore& ps, const std::string& prefix, int din, int dout,
                       Rng& rng, bool bias = true);
  ad::NodeP operator()(Leaves& l, const ad::NodeP& x) const;  // x[n,din] -> [n,dout]
};

struct Embedding {
  int table = -1;
  int rows = 0, dim = 0;
  static Embedding create(ParamStore& ps, const std::string& prefix, int rows, int dim, Rng& rng);
  ad::NodeP operator()(Leaves& l, int row) const;  // -> [1,dim]
};

/// Bias-corrected Adam over a ParamStore. State is keyed by param id and
/// must be registered before stepping; a grad for an unregistered id is a
/// state error. step() consumes and zeroes the store's gradients.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void register_params(const ParamStore& store);
  void step(ParamStore& store);
  int64_t steps() const { return t_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
  std::vector<char> known_;
};

}  // namespace clusdiff::nn
