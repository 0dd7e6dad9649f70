#include "nn.hpp"

#include <cmath>

namespace clusdiff::nn {

int ParamStore::add(const std::string& name, Tensor init) {
  if (by_name_.count(name)) fail(ErrorKind::State, "duplicate parameter name: " + name);
  int id = int(params_.size());
  Tensor grad = Tensor::zeros(init.shape());
  params_.push_back(Param{name, std::move(init), std::move(grad)});
  by_name_[name] = id;
  return id;
}

Param& ParamStore::at(int id) {
  if (id < 0 || id >= count()) fail(ErrorKind::Range, "param id out of range");
  return params_[size_t(id)];
}

const Param& ParamStore::at(int id) const {
  return const_cast<ParamStore*>(this)->at(id);
}

int ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0);
}

int64_t ParamStore::total_scalars() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

ad::NodeP Leaves::operator[](int id) {
  if (id < 0 || id >= store_->count()) fail(ErrorKind::Range, "leaf id out of range");
  auto& slot = nodes_[size_t(id)];
  if (!slot)
    slot = track_grad_ ? ad::leaf(store_->at(id).value, id) : ad::constant(store_->at(id).value);
  return slot;
}

void Leaves::harvest(std::vector<Tensor>& sink) const {
  if (int(sink.size()) != store_->count())
    fail(ErrorKind::Shape, "gradient sink sized for a different store");
  for (int id = 0; id < store_->count(); ++id) {
    const auto& slot = nodes_[size_t(id)];
    if (!slot || !slot->has_grad()) continue;
    Tensor& dst = sink[size_t(id)];
    if (dst.numel() == 0) dst = Tensor::zeros(slot->val.shape());
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += slot->grad[i];
  }
}

void accumulate_grads(ParamStore& store, const std::vector<Tensor>& sink, double scale) {
  if (int(sink.size()) != store.count())
    fail(ErrorKind::Shape, "gradient sink sized for a different store");
  for (int id = 0; id < store.count(); ++id) {
    const Tensor& g = sink[size_t(id)];
    if (g.numel() == 0) continue;
    Tensor& dst = store.at(id).grad;
    if (!dst.same_shape(g)) fail(ErrorKind::Shape, "gradient shape mismatch for " + store.at(id).name);
    for (int64_t i = 0; i < g.numel(); ++i) dst[i] += scale * g[i];
  }
}

Conv2d Conv2d::create(ParamStore& ps, const std::string& prefix, int cin, int cout,
                      int stride, Rng& rng, bool bias) {
  Conv2d c;
  c.stride = stride;
  double sd = std::sqrt(2.0 / (double(cin) * 9.0));
  Tensor w = Tensor::randn({cout, cin, 3, 3}, rng);
  for (int64_t i = 0; i < w.numel(); ++i) w[i] *= sd;
  c.w = ps.add(prefix + ".w", std::move(w));
  if (bias) c.b = ps.add(prefix + ".b", Tensor::zeros({cout}));
  return c;
}

ad::NodeP Conv2d::operator()(Leaves& l, const ad::NodeP& x) const {
  return ad::conv2d(x, l[w], b >= 0 ? l[b] : nullptr, stride);
}

GroupNormLayer GroupNormLayer::create(ParamStore& ps, const std::string& prefix,
                                      int channels, int groups) {
  GroupNormLayer g;
  g.groups = groups;
  g.gain = ps.add(prefix + ".gain", Tensor::full({channels}, 1.0));
  g.bias = ps.add(prefix + ".bias", Tensor::zeros({channels}));
  return g;
}

ad::NodeP GroupNormLayer::operator()(Leaves& l, const ad::NodeP& x) const {
  return ad::group_norm(x, l[gain], l[bias], groups);
}

Linear Linear::create(ParamStore& ps, const std::string& prefix, int din, int dout,
                      Rng& rng, bool bias) {
  Linear lin;
  double sd = std::sqrt(2.0 / double(din));
  Tensor w = Tensor::randn({din, dout}, rng);
  for (int64_t i = 0; i < w.numel(); ++i) w[i] *= sd;
  lin.w = ps.add(prefix + ".w", std::move(w));
  if (bias) lin.b = ps.add(prefix + ".b", Tensor::zeros({dout}));
  return lin;
}

ad::NodeP Linear::operator()(Leaves& l, const ad::NodeP& x) const {
  ad::NodeP y = ad::matmul(x, l[w]);
  if (b >= 0) y = ad::add_rows(y, l[b]);
  return y;
}

Embedding Embedding::create(ParamStore& ps, const std::string& prefix, int rows, int dim, Rng& rng) {
  Embedding e;
  e.rows = rows;
  e.dim = dim;
  Tensor t = Tensor::randn({rows, dim}, rng);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] *= 0.02;
  e.table = ps.add(prefix + ".table", std::move(t));
  return e;
}

ad::NodeP Embedding::operator()(Leaves& l, int row) const {
  return ad::embed_row(l[table], row);
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::register_params(const ParamStore& store) {
  for (int id = int(m_.size()); id < store.count(); ++id) {
    m_.push_back(Tensor::zeros(store.at(id).value.shape()));
    v_.push_back(Tensor::zeros(store.at(id).value.shape()));
    known_.push_back(1);
  }
}

void Adam::step(ParamStore& store) {
  if (store.count() > int(m_.size()))
    fail(ErrorKind::State, "optimizer has no state for some parameters; call register_params first");
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, double(t_));
  double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (int id = 0; id < store.count(); ++id) {
    Param& p = store.at(id);
    Tensor& m = m_[size_t(id)];
    Tensor& v = v_[size_t(id)];
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    p.grad.fill(0.0);
  }
}

}  // namespace clusdiff::nn
