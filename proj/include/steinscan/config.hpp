#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "steinscan/fusion.hpp"
#include "steinscan/oracle.hpp"
#include "steinscan/scenes.hpp"
#include "steinscan/solver.hpp"

namespace steinscan {

struct IoConfig {
  std::string out_dir = "out";
  std::string source;    // cloud path (align source)
  std::string target;    // cloud path (align target / fuse map)
  std::string scan_dir;  // directory of scan CSVs for fuse
  std::string imu;       // IMU CSV path
  double scan_rate = 1.0;  // assumed spacing of scan_dir files, Hz
};

struct AblationConfig {
  std::vector<int> particle_counts{1, 5, 10, 30};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int runs = 12;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  double voxel = 0.0;  // source/scan downsampling; 0 disables
  SolverConfig solver;
  FilterConfig filter;
  std::optional<SceneSpec> scene;
  std::optional<TrajectorySpec> trajectory;
  McConfig oracle;
  int estimator_runs = 40;
  AblationConfig ablation;
  IoConfig io;
};

// Strict parse: any unknown key is a config error naming the key path.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig parse_run_config_text(const std::string& text);

// The fully resolved configuration; every report embeds this echo.
nlohmann::json echo_config(const RunConfig& config);

}  // namespace steinscan
