#pragma once

#include <string>

#include <json.hpp>

#include "steinscan/config.hpp"
#include "steinscan/point_cloud.hpp"

namespace steinscan {

// Command-level entry points. Each writes its artifacts under io.out_dir and
// returns the report document (also written there). All outputs are
// deterministic functions of the configuration.
nlohmann::json run_align(const RunConfig& config);
nlohmann::json run_fuse(const RunConfig& config);
nlohmann::json run_oracle(const RunConfig& config);
nlohmann::json run_ablation(const RunConfig& config);
nlohmann::json run_gen_scene(const RunConfig& config);

// FNV-1a over the formatted coordinates; stable provenance tag for reports.
std::string cloud_hash_hex(const PointCloud& cloud);

}  // namespace steinscan
