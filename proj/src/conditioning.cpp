#include "conditioning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "error.hpp"
#include "parallel.hpp"

namespace clusdiff {

std::string format_label(const SubClassLabel& l) {
  if (l.class_name.empty())
    fail(ErrorKind::Data, "sub-class label needs a class name");
  if (l.cluster_id < 1)
    fail(ErrorKind::Data, "cluster id must be >= 1, got " + std::to_string(l.cluster_id));
  return l.class_name + "_" + std::to_string(l.cluster_id);
}

SubClassLabel parse_label(const std::string& s) {
  size_t us = s.rfind('_');
  if (us == std::string::npos || us == 0 || us + 1 == s.size())
    fail(ErrorKind::Data, "not a sub-class label: \"" + s + "\"");
  const std::string digits = s.substr(us + 1);
  for (char c : digits)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      fail(ErrorKind::Data, "cluster id is not an integer in \"" + s + "\"");
  long id = 0;
  try {
    id = std::stol(digits);
  } catch (const std::exception&) {
    fail(ErrorKind::Data, "cluster id out of range in \"" + s + "\"");
  }
  if (id < 1)
    fail(ErrorKind::Data, "cluster id must be >= 1 in \"" + s + "\"");
  return SubClassLabel{s.substr(0, us), static_cast<int>(id)};
}

bool SubClassDistribution::has(const std::string& class_name) const {
  for (const auto& c : classes)
    if (c.class_name == class_name) return true;
  return false;
}

const ClassDistribution& SubClassDistribution::at(const std::string& class_name) const {
  for (const auto& c : classes)
    if (c.class_name == class_name) return c;
  fail(ErrorKind::Vocabulary, "unknown class \"" + class_name + "\"");
}

LabeledLatentDataset assign_subclasses(const std::vector<Tensor>& images,
                                       const std::vector<int>& class_ids,
                                       const std::vector<std::string>& class_names,
                                       const PerClassClusters& clusters,
                                       const Codec& codec) {
  const size_t n = images.size();
  if (class_ids.size() != n)
    fail(ErrorKind::Data, "class ids/images size mismatch");
  if (clusters.cluster_id.size() != n)
    fail(ErrorKind::Data, "cluster assignment covers " +
                              std::to_string(clusters.cluster_id.size()) + " samples, dataset has " +
                              std::to_string(n));
  LabeledLatentDataset out;
  out.class_names = class_names;
  out.class_ids = class_ids;
  out.labels.resize(n);
  out.z.resize(n);
  for (size_t i = 0; i < n; ++i) {
    int c = class_ids[i];
    if (c < 0 || static_cast<size_t>(c) >= class_names.size())
      fail(ErrorKind::Data, "sample " + std::to_string(i) + " has class id " + std::to_string(c) +
                                " outside the name table");
    int k = clusters.cluster_id[i];
    if (k < 1)
      fail(ErrorKind::Data, "sample " + std::to_string(i) + " has no cluster assignment");
    out.labels[i] = SubClassLabel{class_names[static_cast<size_t>(c)], k};
  }
  parallel_for(static_cast<int64_t>(n), [&](int64_t i) {
    out.z[static_cast<size_t>(i)] = codec.encode(images[static_cast<size_t>(i)]);
  });
  return out;
}

SubClassDistribution empirical_distribution(const LabeledLatentDataset& ds) {
  if (ds.z.size() != ds.labels.size() || ds.z.size() != ds.class_ids.size())
    fail(ErrorKind::Data, "labeled dataset fields disagree on sample count");
  // class id -> cluster id -> count, keyed by ids so class order is the
  // name-table order and clusters come out ascending.
  std::vector<std::map<int, int>> counts(ds.class_names.size());
  for (size_t i = 0; i < ds.labels.size(); ++i) {
    int c = ds.class_ids[i];
    if (c < 0 || static_cast<size_t>(c) >= ds.class_names.size())
      fail(ErrorKind::Data, "class id outside the name table");
    ++counts[static_cast<size_t>(c)][ds.labels[i].cluster_id];
  }
  SubClassDistribution dist;
  for (size_t c = 0; c < counts.size(); ++c) {
    if (counts[c].empty())
      fail(ErrorKind::Data, "class \"" + ds.class_names[c] + "\" has no samples");
    ClassDistribution cd;
    cd.class_name = ds.class_names[c];
    for (const auto& [k, cnt] : counts[c]) cd.total += cnt;
    for (const auto& [k, cnt] : counts[c])
      cd.entries.push_back(SubClassEntry{k, cnt, double(cnt) / double(cd.total)});
    dist.classes.push_back(std::move(cd));
  }
  return dist;
}

SubClassDistribution empirical_distribution(const std::vector<SubClassLabel>& labels) {
  LabeledLatentDataset ds;
  ds.labels = labels;
  ds.z.resize(labels.size());
  ds.class_ids.reserve(labels.size());
  for (const SubClassLabel& l : labels) {
    auto it = std::find(ds.class_names.begin(), ds.class_names.end(), l.class_name);
    if (it == ds.class_names.end()) {
      ds.class_ids.push_back(int(ds.class_names.size()));
      ds.class_names.push_back(l.class_name);
    } else {
      ds.class_ids.push_back(int(it - ds.class_names.begin()));
    }
  }
  if (labels.empty()) fail(ErrorKind::Data, "no labels to tally");
  return empirical_distribution(ds);
}

std::vector<std::string> label_vocabulary(const SubClassDistribution& dist) {
  std::vector<std::string> vocab;
  for (const auto& c : dist.classes)
    for (const auto& e : c.entries)
      vocab.push_back(format_label(SubClassLabel{c.class_name, e.cluster_id}));
  return vocab;
}

SubClassLabel sample_label(const std::string& class_name, const SubClassDistribution& dist,
                           Rng& rng) {
  const ClassDistribution& cd = dist.at(class_name);
  if (cd.entries.empty())
    fail(ErrorKind::Data, "class \"" + class_name + "\" has no sub-classes");
  double u = rng.uniform();
  double acc = 0.0;
  for (const auto& e : cd.entries) {
    acc += e.probability;
    if (u < acc) return SubClassLabel{class_name, e.cluster_id};
  }
  // Round-off can leave acc a hair under 1; the tail bin takes the remainder.
  return SubClassLabel{class_name, cd.entries.back().cluster_id};
}

GeneratedBatch generate(const std::string& class_name, int n, const Denoiser& model,
                        const Codec& codec, const NoiseSchedule& sched,
                        const SubClassDistribution& dist, uint64_t seed) {
  if (n < 0) fail(ErrorKind::Data, "cannot generate a negative batch");
  const ClassDistribution& cd = dist.at(class_name);
  (void)cd;
  GeneratedBatch out;
  out.images.resize(static_cast<size_t>(n));
  out.labels.resize(static_cast<size_t>(n));
  // Labels are drawn per image, streamed by request index, so image i is the
  // same no matter how the batch is split.
  for (int i = 0; i < n; ++i) {
    Rng lrng(Rng::derive(seed, 0x1AB5Eu), static_cast<uint64_t>(i));
    out.labels[static_cast<size_t>(i)] = sample_label(class_name, dist, lrng);
  }
  const UNetConfig& mc = model.config();
  const std::vector<int> zshape{mc.in_ch, mc.img, mc.img};
  parallel_for(n, [&](int64_t i) {
    int row = model.row_of(format_label(out.labels[static_cast<size_t>(i)]));
    Rng nrng(Rng::derive(seed, 0x9015Eu), static_cast<uint64_t>(i));
    DenoiseFn fn = [&](const Tensor& x_t, int t) { return model.denoise_row(x_t, t, row); };
    Tensor z0 = sample_loop(fn, sched, nrng, zshape);
    out.images[static_cast<size_t>(i)] = codec.decode(z0);
  });
  return out;
}

static void check_name_plain(const std::string& s) {
  if (s.empty()) fail(ErrorKind::Data, "empty class name");
  for (char c : s)
    if (std::isspace(static_cast<unsigned char>(c)))
      fail(ErrorKind::Data, "class name \"" + s + "\" contains whitespace");
}

void save_distribution(const std::string& path, const SubClassDistribution& dist) {
  std::ostringstream os;
  os << "CDDS1\n";
  os << "classes " << dist.classes.size() << "\n";
  for (const auto& c : dist.classes) {
    check_name_plain(c.class_name);
    os << c.class_name << " " << c.entries.size() << " " << c.total << "\n";
    char buf[64];
    for (const auto& e : c.entries) {
      std::snprintf(buf, sizeof buf, "%.17g", e.probability);
      os << e.cluster_id << " " << e.count << " " << buf << "\n";
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  f << os.str();
  if (!f.flush()) fail(ErrorKind::Io, "short write to " + path);
}

SubClassDistribution load_distribution(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::MissingInput, "no distribution file at " + path);
  std::string magic;
  if (!(f >> magic) || magic != "CDDS1")
    fail(ErrorKind::Io, path + " is not a distribution file");
  std::string kw;
  size_t nclasses = 0;
  if (!(f >> kw >> nclasses) || kw != "classes")
    fail(ErrorKind::Io, "bad class count in " + path);
  SubClassDistribution dist;
  for (size_t c = 0; c < nclasses; ++c) {
    ClassDistribution cd;
    size_t k = 0;
    if (!(f >> cd.class_name >> k >> cd.total))
      fail(ErrorKind::Io, "truncated class header in " + path);
    if (k == 0 || cd.total <= 0)
      fail(ErrorKind::Io, "class \"" + cd.class_name + "\" in " + path + " is empty");
    int running = 0;
    int prev_id = 0;
    for (size_t j = 0; j < k; ++j) {
      SubClassEntry e;
      if (!(f >> e.cluster_id >> e.count >> e.probability))
        fail(ErrorKind::Io, "truncated entries in " + path);
      if (e.cluster_id <= prev_id)
        fail(ErrorKind::Io, "cluster ids not ascending in " + path);
      prev_id = e.cluster_id;
      if (e.count < 1) fail(ErrorKind::Io, "non-positive count in " + path);
      double want = double(e.count) / double(cd.total);
      if (std::abs(e.probability - want) > 1e-9)
        fail(ErrorKind::Io, "probability/count mismatch in " + path);
      running += e.count;
      cd.entries.push_back(e);
    }
    if (running != cd.total)
      fail(ErrorKind::Io, "counts do not add up for class \"" + cd.class_name + "\" in " + path);
    dist.classes.push_back(std::move(cd));
  }
  return dist;
}

}  // namespace clusdiff
