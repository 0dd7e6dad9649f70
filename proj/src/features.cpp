#include "features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "checkpoint.hpp"
#include "error.hpp"
#include "parallel.hpp"

namespace clusdiff {

FeatureExtractor::FeatureExtractor(const ExtractorConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  if (cfg.img < 8 || cfg.img % 8 != 0)
    fail(ErrorKind::Config, "image extent must be a positive multiple of 8");
  if (cfg.in_ch < 1 || cfg.c1 < 1 || cfg.c2 < 1 || cfg.d_f < 1)
    fail(ErrorKind::Config, "extractor widths must be >= 1");
  if (cfg.classes < 2) fail(ErrorKind::Config, "classifier needs >= 2 classes");
  Rng rng(Rng::derive(init_seed, 0xFEu), 0);
  conv1_ = nn::Conv2d::create(ps_, "conv1", cfg.in_ch, cfg.c1, 2, rng);
  conv2_ = nn::Conv2d::create(ps_, "conv2", cfg.c1, cfg.c2, 2, rng);
  int cells = (cfg.img / 8) * (cfg.img / 8);
  feat_ = nn::Linear::create(ps_, "feat", cfg.c2 * cells, cfg.d_f, rng);
  head_ = nn::Linear::create(ps_, "head", cfg.d_f, cfg.classes, rng);
}

ad::NodeP FeatureExtractor::trunk(nn::Leaves& l, const ad::NodeP& x) const {
  if (x->val.rank() != 3 || x->val.extent(0) != cfg_.in_ch ||
      x->val.extent(1) != cfg_.img || x->val.extent(2) != cfg_.img)
    fail(ErrorKind::Shape, "input does not match the extractor's image config");
  auto h = ad::silu(conv2_(l, ad::silu(conv1_(l, x))));
  auto p = ad::avgpool2(h);  // [c2, img/8, img/8]
  int cells = (cfg_.img / 8) * (cfg_.img / 8);
  return feat_(l, ad::reshape(p, {1, cfg_.c2 * cells}));
}

ad::NodeP FeatureExtractor::logits(nn::Leaves& l, const ad::NodeP& x) const {
  return head_(l, ad::silu(trunk(l, x)));
}

Tensor FeatureExtractor::features(const Tensor& x) const {
  nn::Leaves l(ps_, false);
  Tensor row = trunk(l, ad::constant(x))->val;  // [1, d_f]
  Tensor out = Tensor::zeros({cfg_.d_f});
  double norm2 = 0.0;
  for (int i = 0; i < cfg_.d_f; ++i) {
    out[i] = row[i];
    norm2 += row[i] * row[i];
  }
  if (norm2 == 0.0) fail(ErrorKind::Numeric, "feature vector has zero norm");
  double inv = 1.0 / std::sqrt(norm2);
  for (int i = 0; i < cfg_.d_f; ++i) out[i] *= inv;
  return out;
}

int FeatureExtractor::predict(const Tensor& x) const {
  nn::Leaves l(ps_, false);
  Tensor lg = logits(l, ad::constant(x))->val;
  int best = 0;
  for (int k = 1; k < cfg_.classes; ++k)
    if (lg[k] > lg[best]) best = k;
  return best;
}

void FeatureExtractor::save(const std::string& path) const {
  CheckpointMeta meta;
  meta.kind = "classifier";
  meta.config = {{"in_ch", std::to_string(cfg_.in_ch)}, {"img", std::to_string(cfg_.img)},
                 {"c1", std::to_string(cfg_.c1)},       {"c2", std::to_string(cfg_.c2)},
                 {"d_f", std::to_string(cfg_.d_f)},     {"classes", std::to_string(cfg_.classes)}};
  save_checkpoint(path, meta, ps_);
}

FeatureExtractor FeatureExtractor::load(const std::string& path) {
  std::map<std::string, Tensor> values;
  CheckpointMeta meta = load_checkpoint(path, values);
  if (meta.kind != "classifier")
    fail(ErrorKind::Io, "checkpoint kind '" + meta.kind + "' is not a classifier");
  ExtractorConfig cfg;
  cfg.in_ch = meta.config_int("in_ch");
  cfg.img = meta.config_int("img");
  cfg.c1 = meta.config_int("c1");
  cfg.c2 = meta.config_int("c2");
  cfg.d_f = meta.config_int("d_f");
  cfg.classes = meta.config_int("classes");
  FeatureExtractor model(cfg, 0);
  install_params(model.ps_, values);
  return model;
}

ClassifierTrainStats train_classifier(FeatureExtractor& model, const std::vector<Tensor>& images,
                                      const std::vector<int>& labels, int epochs, int batch,
                                      nn::Adam& opt, uint64_t seed) {
  if (images.empty()) fail(ErrorKind::Data, "training dataset is empty");
  if (images.size() != labels.size()) fail(ErrorKind::Data, "sample/label count mismatch");
  const int K = model.config().classes;
  for (int y : labels)
    if (y < 0 || y >= K) fail(ErrorKind::Data, "class label out of range");
  if (std::set<int>(labels.begin(), labels.end()).size() < 2)
    fail(ErrorKind::Data, "dataset has a single class; nothing to classify");
  if (batch < 1) fail(ErrorKind::Config, "batch must be >= 1");
  if (epochs < 1) fail(ErrorKind::Config, "epochs must be >= 1");
  opt.register_params(model.params());

  const int n = int(images.size());
  ClassifierTrainStats stats;
  for (int e = 0; e < epochs; ++e) {
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[size_t(i)] = i;
    Rng shuffle_rng(Rng::derive(seed, 0xC15u), uint64_t(e));
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
        nn::Leaves l(model.params());
        auto lg = ad::reshape(model.logits(l, ad::constant(images[size_t(idx)])), {K});
        auto loss = ad::cross_entropy_logits(lg, labels[size_t(idx)]);
        losses[size_t(bi)] = loss->val[0];
        ad::backward(loss);
        sinks[size_t(bi)].assign(size_t(model.params().count()), Tensor());
        l.harvest(sinks[size_t(bi)]);
      });
      double step_loss = 0.0;
      for (int bi = 0; bi < bs; ++bi) {
        if (!std::isfinite(losses[size_t(bi)]))
          fail(ErrorKind::Numeric, "non-finite classifier loss at epoch " +
                                       std::to_string(e + 1) + ", step " +
                                       std::to_string(epoch_steps + 1));
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

  std::vector<int> hits(static_cast<size_t>(n), 0);
  parallel_for(n, [&](int64_t i) {
    hits[size_t(i)] = model.predict(images[size_t(i)]) == labels[size_t(i)] ? 1 : 0;
  });
  int correct = 0;
  for (int h : hits) correct += h;
  stats.accuracy = double(correct) / double(n);
  return stats;
}

FeatureMatrix extract(const FeatureExtractor& model, const std::vector<Tensor>& images) {
  const int n = int(images.size());
  const int d = model.config().d_f;
  FeatureMatrix fm;
  fm.z = Tensor::zeros({n, d});
  fm.ids.resize(size_t(n));
  fm.labels.assign(size_t(n), "");
  parallel_for(n, [&](int64_t i) {
    Tensor row = model.features(images[size_t(i)]);
    for (int j = 0; j < d; ++j) fm.z.at(int(i), j) = row[j];
    fm.ids[size_t(i)] = int(i);
  });
  return fm;
}

double cosine_distance(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.extent(0) != b.extent(0))
    fail(ErrorKind::Shape, "cosine_distance expects two equal-length vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::Numeric, "cosine_distance of a zero vector");
  double d = 1.0 - dot / std::sqrt(na * nb);
  return std::min(2.0, std::max(0.0, d));
}

namespace {

constexpr char kFeatMagic[4] = {'C', 'D', 'F', 'T'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail(ErrorKind::Io, "truncated feature file");
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

}  // namespace

void save_features(const std::string& path, const FeatureMatrix& fm) {
  if (fm.z.rank() != 2) fail(ErrorKind::Shape, "feature matrix must be rank 2");
  const int n = fm.z.extent(0), d = fm.z.extent(1);
  if (fm.ids.size() != size_t(n) || fm.labels.size() != size_t(n))
    fail(ErrorKind::Data, "feature row/id/label counts mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  os.write(kFeatMagic, 4);
  put_u32(os, uint32_t(n));
  put_u32(os, uint32_t(d));
  std::vector<float> row(size_t(fm.z.numel()));
  for (int64_t i = 0; i < fm.z.numel(); ++i) row[size_t(i)] = float(fm.z[i]);
  os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * 4));
  for (int i = 0; i < n; ++i) {
    put_u32(os, uint32_t(fm.ids[size_t(i)]));
    put_u32(os, uint32_t(fm.labels[size_t(i)].size()));
    os.write(fm.labels[size_t(i)].data(), std::streamsize(fm.labels[size_t(i)].size()));
  }
  if (!os) fail(ErrorKind::Io, "feature write failed");
}

FeatureMatrix load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::MissingInput, "cannot open feature file " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kFeatMagic, 4) != 0)
    fail(ErrorKind::Io, "not a CDFT feature file: " + path);
  int n = int(get_u32(is));
  int d = int(get_u32(is));
  if (n < 0 || d < 1 || int64_t(n) * d > (int64_t(1) << 31))
    fail(ErrorKind::Io, "unreasonable feature extents");
  FeatureMatrix fm;
  fm.z = Tensor::zeros({n, d});
  std::vector<float> row(size_t(int64_t(n) * d));
  is.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * 4));
  if (!is) fail(ErrorKind::Io, "truncated feature payload");
  for (int64_t i = 0; i < int64_t(n) * d; ++i) fm.z[i] = double(row[size_t(i)]);
  fm.ids.resize(size_t(n));
  fm.labels.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    fm.ids[size_t(i)] = int(get_u32(is));
    uint32_t len = get_u32(is);
    if (len > 4096) fail(ErrorKind::Io, "unreasonable label length");
    std::string s(len, '\0');
    is.read(s.data(), std::streamsize(len));
    if (!is) fail(ErrorKind::Io, "truncated label table");
    fm.labels[size_t(i)] = std::move(s);
  }
  // re-establish exact unit norms after the f32 round trip
  for (int i = 0; i < n; ++i) {
    double norm2 = 0.0;
    for (int j = 0; j < d; ++j) norm2 += fm.z.at(i, j) * fm.z.at(i, j);
    if (norm2 == 0.0) fail(ErrorKind::Io, "feature row " + std::to_string(i) + " has zero norm");
    double inv = 1.0 / std::sqrt(norm2);
    for (int j = 0; j < d; ++j) fm.z.at(i, j) *= inv;
  }
  return fm;
}

}  // namespace clusdiff
