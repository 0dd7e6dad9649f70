#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clusdiff/clusdiff.h"

namespace {

struct StageArgs {
  CLI::App* cmd = nullptr;
  CLI::Option* seed_opt = nullptr;
  std::string config_path;
  std::string out_dir;
  unsigned long long seed = 0;
  bool force = false;
};

int fail_with(clusdiff_status status) {
  std::fprintf(stderr, "clusdiff: %s error: %s\n", clusdiff_status_name(status),
               clusdiff_last_error());
  return clusdiff_exit_code(status);
}

int run_stage(const std::string& name, const StageArgs& args) {
  clusdiff_config* cfg = nullptr;
  clusdiff_status status =
      args.config_path.empty() ? clusdiff_config_parse_text("", &cfg)
                               : clusdiff_config_parse_file(args.config_path.c_str(), &cfg);
  if (status != CLUSDIFF_OK) return fail_with(status);

  const bool has_seed = args.seed_opt->count() > 0;
  clusdiff_report* rep = nullptr;
  status = clusdiff_run_stage(name.c_str(), cfg, args.out_dir.c_str(), args.force ? 1 : 0,
                              has_seed ? 1 : 0, args.seed, &rep);
  clusdiff_config_free(cfg);
  if (status != CLUSDIFF_OK) return fail_with(status);

  std::printf("%s: done in %.3f s (seed %llu, config %08x)\n", clusdiff_report_stage(rep),
              clusdiff_report_wall_seconds(rep), clusdiff_report_seed(rep),
              clusdiff_report_config_checksum(rep));
  for (size_t i = 0; i < clusdiff_report_metric_count(rep); ++i)
    std::printf("  %s = %s\n", clusdiff_report_metric_key(rep, i),
                clusdiff_report_metric_value(rep, i));
  std::printf("artifacts in %s\n", args.out_dir.c_str());
  clusdiff_report_free(rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clustering-conditioned diffusion pipeline"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"dataset-gen", "write the shapes dataset and its manifest"},
      {"features", "train the feature extractor and export features"},
      {"cluster", "split each class into sub-classes by affinity propagation"},
      {"train", "train the sub-class-conditioned denoiser"},
      {"generate", "sample images with sub-class labels drawn from the distribution"},
      {"fid", "Fréchet distances between a real and a generated set"},
      {"lt-run", "long-tailed classification with synthetic balancing"},
  };

  std::vector<StageArgs> args(stages.size());
  for (size_t i = 0; i < stages.size(); ++i) {
    StageArgs& a = args[i];
    a.cmd = app.add_subcommand(stages[i].first, stages[i].second);
    a.cmd->add_option("--config", a.config_path, "key=value configuration file");
    a.seed_opt = a.cmd->add_option("--seed", a.seed, "override the config's seed");
    a.cmd->add_option("--out", a.out_dir, "output directory for artifacts")->required();
    a.cmd->add_flag("--force", a.force, "allow writing into a non-empty output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit clean; bad usage is a validation failure
  }

  for (size_t i = 0; i < stages.size(); ++i)
    if (args[i].cmd->parsed()) return run_stage(stages[i].first, args[i]);
  return 2;
}
