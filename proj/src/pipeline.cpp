#include "pipeline.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <unordered_map>

#include "apcluster.hpp"
#include "checksum.hpp"
#include "conditioning.hpp"
#include "dataset.hpp"
#include "denoiser.hpp"
#include "diffusion.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "features.hpp"
#include "latentcodec.hpp"
#include "ltharness.hpp"
#include "manifest.hpp"
#include "parallel.hpp"
#include "pngio.hpp"
#include "rng.hpp"

namespace fs = std::filesystem;

namespace clusdiff {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt_hex(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

uint64_t resolve_seed(const StageRequest& req) {
  if (req.has_seed_override) return req.seed_override;
  return req.config.get_u64("seed", 0);
}

void prepare_out(const StageRequest& req) {
  if (req.out_dir.empty()) fail(ErrorKind::Config, "an output directory is required (--out)");
  fs::path out(req.out_dir);
  std::error_code ec;
  if (fs::exists(out, ec)) {
    if (!fs::is_directory(out, ec))
      fail(ErrorKind::Config, "output path \"" + req.out_dir + "\" is not a directory");
    if (!req.force && fs::directory_iterator(out, ec) != fs::directory_iterator())
      fail(ErrorKind::State, "output directory \"" + req.out_dir +
                                 "\" already has files; pass --force to overwrite");
  }
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory \"" + req.out_dir + "\"");
}

void add(StageReport& rep, const std::string& key, const std::string& value) {
  rep.metrics.emplace_back(key, value);
}

/// metrics.txt is itself a parseable key=value file; report.txt adds the
/// config echo and wall time for humans.
void write_outputs(const StageRequest& req, const StageReport& rep) {
  {
    std::ofstream f(req.out_dir + "/metrics.txt");
    f << "stage = " << rep.stage << "\n";
    f << "config_checksum = " << fmt_hex(rep.config_checksum) << "\n";
    f << "seed = " << rep.seed << "\n";
    for (const auto& [k, v] : rep.metrics) f << k << " = " << v << "\n";
    if (!f) fail(ErrorKind::Io, "cannot write " + req.out_dir + "/metrics.txt");
  }
  {
    std::ofstream f(req.out_dir + "/report.txt");
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", rep.wall_seconds);
    f << "stage " << rep.stage << "\n"
      << "seed " << rep.seed << "\n"
      << "config_checksum " << fmt_hex(rep.config_checksum) << "\n"
      << "wall_seconds " << wall << "\n\n[config]\n"
      << req.config.canonical() << "\n[metrics]\n";
    for (const auto& [k, v] : rep.metrics) f << k << " = " << v << "\n";
    if (!f) fail(ErrorKind::Io, "cannot write " + req.out_dir + "/report.txt");
  }
}

class StageTimer {
 public:
  StageTimer() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

std::vector<int> class_ids_of(const Manifest& m, const std::vector<std::string>& table) {
  return m.class_ids(table);
}

/// First-appearance class table for a feature file's label column.
std::vector<int> label_ids(const std::vector<std::string>& labels,
                           std::vector<std::string>& table) {
  std::vector<int> ids;
  ids.reserve(labels.size());
  for (const std::string& l : labels) {
    if (l.empty()) fail(ErrorKind::Data, "features file has a sample without a class label");
    size_t c = 0;
    while (c < table.size() && table[c] != l) ++c;
    if (c == table.size()) table.push_back(l);
    ids.push_back(int(c));
  }
  return ids;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

StageReport cmd_dataset_gen(const StageRequest& req) {
  StageTimer timer;
  req.config.check_known({"seed", "classes", "modes", "per_mode"});
  int classes = int(req.config.get_int("classes", 3));
  int modes = int(req.config.get_int("modes", 3));
  int per_mode = int(req.config.get_int("per_mode", 50));
  if (classes < 1 || classes > kShapesMaxClasses)
    fail(ErrorKind::Config, "classes must be in 1.." + std::to_string(kShapesMaxClasses));
  if (modes < 1 || modes > kShapesMaxModes)
    fail(ErrorKind::Config, "modes must be in 1.." + std::to_string(kShapesMaxModes));
  if (per_mode < 1) fail(ErrorKind::Config, "per_mode must be at least 1");
  prepare_out(req);

  StageReport rep;
  rep.stage = "dataset-gen";
  rep.seed = resolve_seed(req);
  rep.config_checksum = req.config.checksum();

  ShapesDataset ds = make_shapes_dataset(classes, modes, per_mode, rep.seed);
  fs::create_directories(req.out_dir + "/images");
  Manifest m;
  m.root = req.out_dir;
  m.channels = 1;
  m.height = kShapesImg;
  m.width = kShapesImg;
  m.records.resize(ds.images.size());
  for (size_t i = 0; i < ds.images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "images/img_%05zu.png", i);
    ManifestRecord& r = m.records[i];
    r.id = int(i);
    r.rel_path = name;
    r.class_name = ds.class_names[size_t(ds.class_ids[i])];
    r.mode_id = ds.mode_ids[i];
    r.synthetic = false;
  }
  parallel_for(int64_t(ds.images.size()), [&](int64_t i) {
    write_png_gray(req.out_dir + "/" + m.records[size_t(i)].rel_path, ds.images[size_t(i)]);
  });
  save_manifest(req.out_dir + "/manifest.txt", m);

  add(rep, "samples", std::to_string(ds.images.size()));
  add(rep, "classes", std::to_string(classes));
  add(rep, "modes", std::to_string(modes));
  add(rep, "per_mode", std::to_string(per_mode));
  rep.wall_seconds = timer.seconds();
  write_outputs(req, rep);
  return rep;
}

StageReport cmd_features(const StageRequest& req) {
  StageTimer timer;
  req.config.check_known({"seed", "dataset", "epochs", "batch", "lr", "c1", "c2", "d_f"});
  std::string dataset = req.config.require_string("dataset");
  int epochs = int(req.config.get_int("epochs", 30));
  int batch = int(req.config.get_int("batch", 16));
  double lr = req.config.get_double("lr", 2e-3);
  if (epochs < 1 || batch < 1) fail(ErrorKind::Config, "epochs and batch must be at least 1");
  prepare_out(req);

  StageReport rep;
  rep.stage = "features";
  rep.seed = resolve_seed(req);
  rep.config_checksum = req.config.checksum();

  Manifest m = load_manifest(dataset);
  std::vector<Tensor> images = load_manifest_images(m);
  std::vector<std::string> table = m.class_table();
  std::vector<int> ids = class_ids_of(m, table);

  ExtractorConfig ec;
  ec.in_ch = m.channels;
  ec.img = m.height;
  if (m.height != m.width) fail(ErrorKind::Data, "extractor needs square images");
  ec.c1 = int(req.config.get_int("c1", 8));
  ec.c2 = int(req.config.get_int("c2", 16));
  ec.d_f = int(req.config.get_int("d_f", 32));
  ec.classes = int(table.size());
  FeatureExtractor fx(ec, Rng::derive(rep.seed, 0xFEA7u));
  nn::Adam opt(lr);
  ClassifierTrainStats stats =
      train_classifier(fx, images, ids, epochs, batch, opt, Rng::derive(rep.seed, 0x7EACu));
  fx.save(req.out_dir + "/extractor.ckpt");

  FeatureMatrix fm = extract(fx, images);
  fm.ids.resize(images.size());
  fm.labels.resize(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    fm.ids[i] = m.records[i].id;
    fm.labels[i] = m.records[i].class_name;
  }
  save_features(req.out_dir + "/features.cdft", fm);

  add(rep, "samples", std::to_string(images.size()));
  add(rep, "classes", std::to_string(table.size()));
  add(rep, "d_f", std::to_string(ec.d_f));
  add(rep, "epochs", std::to_string(epochs));
  add(rep, "train_accuracy", fmt(stats.accuracy));
  add(rep, "final_loss", fmt(stats.epoch_loss.back()));
  add(rep, "extractor_checksum", fmt_hex(params_checksum(fx.params())));
  rep.wall_seconds = timer.seconds();
  write_outputs(req, rep);
  return rep;
}

StageReport cmd_cluster(const StageRequest& req) {
  StageTimer timer;
  req.config.check_known({"seed", "features", "damping", "max_iter", "window"});
  std::string feat_path = req.config.require_string("features");
  APConfig cfg;
  cfg.damping = req.config.get_double("damping", 0.9);
  cfg.max_iter = int(req.config.get_int("max_iter", 200));
  cfg.window = int(req.config.get_int("window", 15));
  if (cfg.damping < 0.5 || cfg.damping >= 1.0)
    fail(ErrorKind::Config, "damping must be in [0.5, 1)");
  if (cfg.max_iter < 1 || cfg.window < 1)
    fail(ErrorKind::Config, "max_iter and window must be at least 1");
  prepare_out(req);

  StageReport rep;
  rep.stage = "cluster";
  rep.seed = resolve_seed(req);
  rep.config_checksum = req.config.checksum();

  FeatureMatrix fm = load_features(feat_path);
  std::vector<std::string> table;
  std::vector<int> ids = label_ids(fm.labels, table);
  PerClassClusters pcc = cluster_per_class(fm.z, ids, cfg);

  AssignmentFile af;
  af.records.resize(fm.labels.size());
  std::vector<SubClassLabel> labels(fm.labels.size());
  for (size_t i = 0; i < fm.labels.size(); ++i) {
    af.records[i] = AssignmentRecord{fm.ids[i], fm.labels[i], pcc.cluster_id[i],
                                     fm.ids[size_t(pcc.exemplar[i])]};
    labels[i] = SubClassLabel{fm.labels[i], pcc.cluster_id[i]};
  }
  for (size_t c = 0; c < table.size(); ++c)
    af.classes.push_back(ClassSummary{table[c], pcc.k_per_class[c], pcc.converged[c] != 0,
                                      pcc.iterations[c]});
  save_assignments(req.out_dir + "/assignments.txt", af);
  SubClassDistribution dist = empirical_distribution(labels);
  save_distribution(req.out_dir + "/distribution.txt", dist);

  int total_k = 0;
  for (int k : pcc.k_per_class) total_k += k;
  add(rep, "samples", std::to_string(fm.labels.size()));
  add(rep, "classes", std::to_string(table.size()));
  add(rep, "subclasses", std::to_string(total_k));
  for (size_t c = 0; c < table.size(); ++c) {
    add(rep, "k_" + table[c], std::to_string(pcc.k_per_class[c]));
    add(rep, "converged_" + table[c], pcc.converged[c] ? "1" : "0");
    add(rep, "iterations_" + table[c], std::to_string(pcc.iterations[c]));
  }
  rep.wall_seconds = timer.seconds();
  write_outputs(req, rep);
  return rep;
}

StageReport cmd_train(const StageRequest& req) {
  StageTimer timer;
  req.config.check_known({"seed", "dataset", "assignments", "codec", "hidden", "zch", "ae_epochs",
                          "ae_batch", "ae_lr", "timesteps", "epochs", "batch", "lr", "base",
                          "d_ctx", "d_time"});
  std::string dataset = req.config.require_string("dataset");
  std::string assign_path = req.config.require_string("assignments");
  std::string codec_kind = req.config.get_string("codec", "identity");
  int timesteps = int(req.config.get_int("timesteps", 200));
  int epochs = int(req.config.get_int("epochs", 30));
  int batch = int(req.config.get_int("batch", 16));
  double lr = req.config.get_double("lr", 2e-3);
  if (codec_kind != "identity" && codec_kind != "conv_ae")
    fail(ErrorKind::Config, "codec must be identity or conv_ae");
  if (timesteps < 1 || epochs < 1 || batch < 1)
    fail(ErrorKind::Config, "timesteps, epochs, and batch must be at least 1");
  prepare_out(req);

  StageReport rep;
  rep.stage = "train";
  rep.seed = resolve_seed(req);
  rep.config_checksum = req.config.checksum();

  Manifest m = load_manifest(dataset);
  std::vector<Tensor> images = load_manifest_images(m);
  AssignmentFile af = load_assignments(assign_path);
  std::unordered_map<int, const AssignmentRecord*> by_id;
  for (const AssignmentRecord& r : af.records) by_id[r.id] = &r;

  std::vector<SubClassLabel> labels(m.records.size());
  for (size_t i = 0; i < m.records.size(); ++i) {
    auto it = by_id.find(m.records[i].id);
    if (it == by_id.end())
      fail(ErrorKind::Data,
           "no cluster assignment for sample id " + std::to_string(m.records[i].id));
    if (it->second->class_name != m.records[i].class_name)
      fail(ErrorKind::Data, "assignment and manifest disagree on the class of sample id " +
                                std::to_string(m.records[i].id));
    labels[i] = SubClassLabel{it->second->class_name, it->second->cluster_id};
  }

  Codec codec = Codec::identity();
  double ae_loss = 0.0;
  if (codec_kind == "conv_ae") {
    CodecConfig cc;
    cc.in_ch = m.channels;
    cc.hidden = int(req.config.get_int("hidden", 16));
    cc.zch = int(req.config.get_int("zch", 1));
    codec = Codec::conv_ae(cc, Rng::derive(rep.seed, 0xC0DEu));
    nn::Adam ae_opt(req.config.get_double("ae_lr", 2e-3));
    AeTrainStats ast =
        train_autoencoder(codec, images, int(req.config.get_int("ae_epochs", 20)),
                          int(req.config.get_int("ae_batch", 16)), ae_opt,
                          Rng::derive(rep.seed, 0xAEu));
    ae_loss = ast.epoch_loss.back();
  }

  SubClassDistribution dist = empirical_distribution(labels);
  std::vector<std::string> vocab = label_vocabulary(dist);
  std::unordered_map<std::string, int> row_of;
  for (size_t r = 0; r < vocab.size(); ++r) row_of[vocab[r]] = int(r);
  std::vector<int> rows(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) rows[i] = row_of.at(format_label(labels[i]));

  std::vector<Tensor> z(images.size());
  parallel_for(int64_t(images.size()), [&](int64_t i) {
    z[size_t(i)] = codec.encode(images[size_t(i)]);
  });

  UNetConfig uc;
  uc.in_ch = z[0].shape()[0];
  uc.img = z[0].shape()[1];
  uc.base = int(req.config.get_int("base", 8));
  uc.d_ctx = int(req.config.get_int("d_ctx", 16));
  uc.d_time = int(req.config.get_int("d_time", 32));
  NoiseSchedule sched = make_linear_schedule(timesteps);
  Denoiser model(uc, vocab, Rng::derive(rep.seed, 0xD1Fu));
  nn::Adam opt(lr);
  TrainStats stats =
      train_denoiser(model, z, rows, sched, epochs, batch, opt, Rng::derive(rep.seed, 0x7124u));

  model.save(req.out_dir + "/model.ckpt");
  codec.save(req.out_dir + "/codec.ckpt");
  save_schedule(req.out_dir + "/schedule.bin", sched);

  add(rep, "samples", std::to_string(images.size()));
  add(rep, "vocabulary", std::to_string(vocab.size()));
  add(rep, "timesteps", std::to_string(timesteps));
  add(rep, "epochs", std::to_string(epochs));
  add(rep, "codec", codec_kind);
  if (codec_kind == "conv_ae") add(rep, "ae_loss", fmt(ae_loss));
  add(rep, "final_loss", fmt(stats.epoch_loss.back()));
  add(rep, "model_checksum", fmt_hex(params_checksum(model.params())));
  rep.wall_seconds = timer.seconds();
  write_outputs(req, rep);
  return rep;
}

StageReport cmd_generate(const StageRequest& req) {
  StageTimer timer;
  req.config.check_known({"seed", "model", "codec", "schedule", "distribution", "class", "n",
                          "sheet_cols", "sheet_scale"});
  std::string model_path = req.config.require_string("model");
  std::string codec_path = req.config.require_string("codec");
  std::string sched_path = req.config.require_string("schedule");
  std::string dist_path = req.config.require_string("distribution");
  std::string klass = req.config.get_string("class", "all");
  int n = int(req.config.get_int("n", 8));
  int sheet_cols = int(req.config.get_int("sheet_cols", 8));
  int sheet_scale = int(req.config.get_int("sheet_scale", 3));
  if (n < 1) fail(ErrorKind::Config, "n must be at least 1");
  prepare_out(req);

  StageReport rep;
  rep.stage = "generate";
  rep.seed = resolve_seed(req);
  rep.config_checksum = req.config.checksum();

  Denoiser model = Denoiser::load(model_path);
  Codec codec = Codec::load(codec_path);
  NoiseSchedule sched = load_schedule(sched_path);
  SubClassDistribution dist = load_distribution(dist_path);

  std::vector<std::string> classes;
  if (klass == "all") {
    for (const ClassDistribution& c : dist.classes) classes.push_back(c.class_name);
  } else {
    (void)dist.at(klass);  // vocabulary check
    classes.push_back(klass);
  }

  fs::create_directories(req.out_dir + "/images");
  Manifest m;
  m.root = req.out_dir;
  std::vector<Tensor> tiles;
  std::vector<std::string> captions;
  std::map<std::string, int> label_counts;
  std::ofstream labels_file(req.out_dir + "/labels.txt");
  for (size_t ci = 0; ci < classes.size(); ++ci) {
    GeneratedBatch batch = generate(classes[ci], n, model, codec, sched, dist,
                                    Rng::derive(rep.seed, 0x9E00u + uint64_t(ci)));
    for (int i = 0; i < n; ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "images/%s_%03d.png", classes[ci].c_str(), i);
      write_png_gray(req.out_dir + "/" + name, batch.images[size_t(i)]);
      ManifestRecord r;
      r.id = int(m.records.size());
      r.rel_path = name;
      r.class_name = classes[ci];
      r.mode_id = -1;
      r.synthetic = true;
      m.records.push_back(r);
      std::string label = format_label(batch.labels[size_t(i)]);
      labels_file << name << " " << label << "\n";
      ++label_counts[label];
      tiles.push_back(batch.images[size_t(i)]);
      captions.push_back(label);
    }
  }
  if (!labels_file) fail(ErrorKind::Io, "cannot write " + req.out_dir + "/labels.txt");
  labels_file.close();
  m.channels = tiles[0].shape()[0];
  m.height = tiles[0].shape()[1];
  m.width = tiles[0].shape()[2];
  save_manifest(req.out_dir + "/manifest.txt", m);
  write_png_gray(req.out_dir + "/sheet.png",
                 contact_sheet(tiles, captions, sheet_cols, sheet_scale));

  add(rep, "images", std::to_string(tiles.size()));
  add(rep, "classes", std::to_string(classes.size()));
  add(rep, "per_class", std::to_string(n));
  for (const auto& [label, count] : label_counts)
    add(rep, "count_" + label, std::to_string(count));
  rep.wall_seconds = timer.seconds();
  write_outputs(req, rep);
  return rep;
}

StageReport cmd_fid(const StageRequest& req) {
  StageTimer timer;
  req.config.check_known({"seed", "real", "gen", "extractor"});
  std::string real_path = req.config.require_string("real");
  std::string gen_path = req.config.require_string("gen");
  std::string fx_path = req.config.require_string("extractor");
  prepare_out(req);

  StageReport rep;
  rep.stage = "fid";
  rep.seed = resolve_seed(req);
  rep.config_checksum = req.config.checksum();

  Manifest real_m = load_manifest(real_path);
  Manifest gen_m = load_manifest(gen_path);
  std::vector<Tensor> real_images = load_manifest_images(real_m);
  std::vector<Tensor> gen_images = load_manifest_images(gen_m);
  FeatureExtractor fx = FeatureExtractor::load(fx_path);

  std::vector<std::string> table = real_m.class_table();
  FidReport fid = fid_report(real_images, class_ids_of(real_m, table), gen_images,
                             class_ids_of(gen_m, table), table, fx);

  {
    std::ofstream f(req.out_dir + "/fid.txt");
    f << "frechet report\n"
      << "config_checksum " << fmt_hex(rep.config_checksum) << "\n"
      << "extractor_checksum " << fmt_hex(fid.extractor_checksum) << "\n"
      << "name value n_real n_gen\n";
    for (const FidRow& row : fid.rows)
      f << row.name << " " << fmt(row.value) << " " << row.n_real << " " << row.n_gen << "\n";
    if (!f) fail(ErrorKind::Io, "cannot write " + req.out_dir + "/fid.txt");
  }

  add(rep, "extractor_checksum", fmt_hex(fid.extractor_checksum));
  for (const FidRow& row : fid.rows) add(rep, "frechet_" + row.name, fmt(row.value));
  add(rep, "n_real", std::to_string(real_images.size()));
  add(rep, "n_gen", std::to_string(gen_images.size()));
  rep.wall_seconds = timer.seconds();
  write_outputs(req, rep);
  return rep;
}

StageReport cmd_lt(const StageRequest& req) {
  StageTimer timer;
  req.config.check_known({"seed", "dataset", "counts", "test_per_class", "head_threshold",
                          "epochs", "methods", "target", "model", "codec", "schedule",
                          "distribution"});
  std::string dataset = req.config.require_string("dataset");
  std::string counts_text = req.config.require_string("counts");
  LongTailSpec spec;
  spec.test_per_class = int(req.config.get_int("test_per_class", 25));
  spec.head_threshold = int(req.config.get_int("head_threshold", 100));
  int epochs = int(req.config.get_int("epochs", 8));
  if (epochs < 1) fail(ErrorKind::Config, "epochs must be at least 1");
  std::vector<std::string> methods = split_csv(req.config.get_string("methods", "none,ros,rus,clusdiff"));
  for (const std::string& meth : methods)
    if (meth != "none" && meth != "ros" && meth != "rus" && meth != "clusdiff")
      fail(ErrorKind::Config, "unknown method \"" + meth + "\"");
  prepare_out(req);

  StageReport rep;
  rep.stage = "lt-run";
  rep.seed = resolve_seed(req);
  rep.config_checksum = req.config.checksum();

  Manifest m = load_manifest(dataset);
  std::vector<Tensor> images = load_manifest_images(m);
  std::vector<std::string> table = m.class_table();
  for (const std::string& part : split_csv(counts_text)) {
    try {
      spec.train_counts.push_back(std::stoi(part));
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "counts must be a comma-separated list of integers");
    }
  }
  if (spec.train_counts.size() != table.size())
    fail(ErrorKind::Config, "counts lists " + std::to_string(spec.train_counts.size()) +
                                " classes but the dataset has " + std::to_string(table.size()));
  int target = int(req.config.get_int("target", 0));
  if (target == 0)
    for (int c : spec.train_counts) target = std::max(target, c);

  LongTailSplit split =
      make_longtail(images, class_ids_of(m, table), table, spec, Rng::derive(rep.seed, 0x5717u));
  std::vector<int> head = spec.head_classes();

  bool wants_synth = false;
  for (const std::string& meth : methods) wants_synth = wants_synth || meth == "clusdiff";
  std::optional<Denoiser> model;
  Codec codec = Codec::identity();
  NoiseSchedule sched;
  SubClassDistribution dist;
  if (wants_synth) {
    model = Denoiser::load(req.config.require_string("model"));
    codec = Codec::load(req.config.require_string("codec"));
    sched = load_schedule(req.config.require_string("schedule"));
    dist = load_distribution(req.config.require_string("distribution"));
  }

  std::vector<std::pair<std::string, LTMetrics>> results;
  for (const std::string& meth : methods) {
    LTDataset train;
    if (meth == "none") {
      train = split.train;
    } else if (meth == "ros") {
      train = ros(split.train, target, Rng::derive(rep.seed, 0x305u));
    } else if (meth == "rus") {
      train = rus(split.train, Rng::derive(rep.seed, 0x325u));
    } else {
      train = balance_with_synthetic(split.train, *model, codec, sched, dist, target,
                                     Rng::derive(rep.seed, 0xC15u));
    }
    results.emplace_back(
        meth, train_and_eval(train, split.test, head, epochs, Rng::derive(rep.seed, 0x7EA7u)));
  }

  {
    std::ofstream f(req.out_dir + "/results.txt");
    char line[96];
    std::snprintf(line, sizeof line, "%-10s %6s %6s %8s\n", "method", "head", "tail", "overall");
    f << line;
    for (const auto& [meth, r] : results) {
      std::snprintf(line, sizeof line, "%-10s %6.1f %6.1f %8.1f\n", meth.c_str(), r.head, r.tail,
                    r.overall);
      f << line;
    }
    if (!f) fail(ErrorKind::Io, "cannot write " + req.out_dir + "/results.txt");
  }

  add(rep, "train_samples", std::to_string(split.train.samples.size()));
  add(rep, "test_samples", std::to_string(split.test.samples.size()));
  add(rep, "epochs", std::to_string(epochs));
  add(rep, "target", std::to_string(target));
  for (const auto& [meth, r] : results) {
    add(rep, meth + "_head", fmt(r.head));
    add(rep, meth + "_tail", fmt(r.tail));
    add(rep, meth + "_overall", fmt(r.overall));
  }
  rep.wall_seconds = timer.seconds();
  write_outputs(req, rep);
  return rep;
}

StageReport run_stage(const std::string& name, const StageRequest& req) {
  if (name == "dataset-gen") return cmd_dataset_gen(req);
  if (name == "features") return cmd_features(req);
  if (name == "cluster") return cmd_cluster(req);
  if (name == "train") return cmd_train(req);
  if (name == "generate") return cmd_generate(req);
  if (name == "fid") return cmd_fid(req);
  if (name == "lt-run") return cmd_lt(req);
  fail(ErrorKind::Config, "unknown subcommand \"" + name + "\"");
}

}  // namespace clusdiff
