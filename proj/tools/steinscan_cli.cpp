// steinscan: benchmark CLI for the stein_scanmatch library. All work happens
// behind the C API in libstein_scanmatch; this binary only assembles the run
// configuration and maps statuses to exit codes (0 ok, 1 solver error, 2
// IO/config error).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "stein_scanmatch.h"

namespace {

using nlohmann::json;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string mode;
  std::string noise;
  std::string propagation;
  int particles = -1;
  int threads = -1;
  long long seed = -1;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "run configuration JSON file");
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--seed", flags.seed, "random seed");
  cmd->add_option("--mode", flags.mode, "solver mode: svn|svgd")
      ->check(CLI::IsMember({"svn", "svgd"}));
  cmd->add_option("--particles", flags.particles, "particle count K");
  cmd->add_option("--noise", flags.noise, "filter noise: adaptive|fixed")
      ->check(CLI::IsMember({"adaptive", "fixed"}));
  cmd->add_option("--propagation", flags.propagation,
                  "filter propagation: imu|constant-velocity")
      ->check(CLI::IsMember({"imu", "constant-velocity"}));
  cmd->add_option("--threads", flags.threads, "worker threads (1 = serial)");
  cmd->add_flag("--quiet", flags.quiet, "suppress the report on stdout");
}

int load_config(const CommonFlags& flags, json& config) {
  config = json::object();
  if (!flags.config_path.empty()) {
    std::ifstream in(flags.config_path);
    if (!in) {
      std::cerr << "error: cannot open config '" << flags.config_path << "'\n";
      return 2;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    try {
      config = json::parse(buf.str());
    } catch (const json::exception& ex) {
      std::cerr << "error: config is not valid JSON: " << ex.what() << "\n";
      return 2;
    }
  }
  if (flags.seed >= 0) config["seed"] = flags.seed;
  if (flags.threads > 0) config["threads"] = flags.threads;
  if (!flags.out_dir.empty()) config["io"]["out_dir"] = flags.out_dir;
  if (!flags.mode.empty()) config["solver"]["mode"] = flags.mode;
  if (flags.particles > 0) config["solver"]["particles"] = flags.particles;
  if (!flags.noise.empty()) config["filter"]["noise"] = flags.noise;
  if (!flags.propagation.empty()) config["filter"]["propagation"] = flags.propagation;
  return 0;
}

int status_to_exit(sm_status status) {
  switch (status) {
    case SM_OK:
      return 0;
    case SM_ERR_IO:
    case SM_ERR_PARSE:
    case SM_ERR_CONFIG:
      return 2;
    default:
      return 1;
  }
}

using Runner = sm_status (*)(const char*, char**);

int run(Runner runner, const CommonFlags& flags, const json& config) {
  char* report = nullptr;
  const sm_status status = runner(config.dump().c_str(), &report);
  if (status != SM_OK) {
    std::cerr << "error (" << sm_status_name(status) << "): " << sm_last_error() << "\n";
    return status_to_exit(status);
  }
  if (!flags.quiet && report != nullptr) std::fputs(report, stdout);
  sm_string_free(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stein_scanmatch benchmark CLI"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sm_version()));

  CommonFlags flags;

  auto* align = app.add_subcommand("align", "align a source cloud onto a target cloud");
  std::string align_source, align_target;
  align->add_option("source", align_source, "source cloud path (omit when using a scene)");
  align->add_option("target", align_target, "target cloud path");
  add_common(align, flags);

  auto* fuse = app.add_subcommand("fuse", "run the error-state Kalman filter pipeline");
  std::string fuse_scan_dir, fuse_imu;
  fuse->add_option("scans", fuse_scan_dir, "directory of scan CSVs (omit when using a trajectory)");
  fuse->add_option("--imu", fuse_imu, "IMU CSV path");
  add_common(fuse, flags);

  auto* oracle = app.add_subcommand("oracle", "Monte-Carlo covariance consistency check");
  add_common(oracle, flags);

  auto* ablation = app.add_subcommand("ablation", "particle-count sweep");
  add_common(ablation, flags);

  auto* gen = app.add_subcommand("gen-scene", "generate a synthetic scene pair");
  add_common(gen, flags);

  CLI11_PARSE(app, argc, argv);

  json config;
  const int rc = load_config(flags, config);
  if (rc != 0) return rc;

  if (align->parsed()) {
    if (!align_source.empty()) config["io"]["source"] = align_source;
    if (!align_target.empty()) config["io"]["target"] = align_target;
    return run(&sm_run_align, flags, config);
  }
  if (fuse->parsed()) {
    if (!fuse_scan_dir.empty()) config["io"]["scan_dir"] = fuse_scan_dir;
    if (!fuse_imu.empty()) config["io"]["imu"] = fuse_imu;
    return run(&sm_run_fuse, flags, config);
  }
  if (oracle->parsed()) return run(&sm_run_oracle, flags, config);
  if (ablation->parsed()) return run(&sm_run_ablation, flags, config);
  if (gen->parsed()) return run(&sm_run_gen_scene, flags, config);
  return 2;
}
