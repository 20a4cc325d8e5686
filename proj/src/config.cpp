#include "steinscan/config.hpp"

#include <Eigen/Geometry>

#include "steinscan/errors.hpp"

namespace steinscan {

using nlohmann::json;

namespace {

std::string joined(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(ErrorCode::config, "expected object at '" + path + "'");
}

void expect_keys(const json& obj, const std::string& path,
                 std::initializer_list<const char*> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) fail(ErrorCode::config, "unknown key: " + joined(path, it.key()));
  }
}

double get_double(const json& obj, const std::string& path, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) fail(ErrorCode::config, joined(path, key) + " must be a number");
  return v.get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key, int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) fail(ErrorCode::config, joined(path, key) + " must be an integer");
  return v.get<int>();
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) fail(ErrorCode::config, joined(path, key) + " must be a boolean");
  return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& path, const char* key,
                       const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) fail(ErrorCode::config, joined(path, key) + " must be a string");
  return v.get<std::string>();
}

Vec6 get_vec6(const json& obj, const std::string& path, const char* key, const Vec6& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() != 6) {
    fail(ErrorCode::config, joined(path, key) + " must be an array of 6 numbers");
  }
  Vec6 out;
  for (int i = 0; i < 6; ++i) {
    if (!v[i].is_number()) fail(ErrorCode::config, joined(path, key) + " must hold numbers");
    out[i] = v[i].get<double>();
  }
  return out;
}

Vec3 get_vec3(const json& obj, const std::string& path, const char* key, const Vec3& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() != 3) {
    fail(ErrorCode::config, joined(path, key) + " must be an array of 3 numbers");
  }
  return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

SolverConfig parse_solver(const json& obj, const std::string& path) {
  expect_object(obj, path);
  expect_keys(obj, path,
              {"mode", "particles", "max_iterations", "early_stop_eps", "init_sigma",
               "kernel_bandwidth", "svgd_step_size", "prior_weight", "neighborhood_size",
               "max_corr_dist", "huber_delta", "noise_model", "karcher_refine"});
  SolverConfig cfg;
  const std::string mode = get_string(obj, path, "mode", "svn");
  if (mode == "svn") {
    cfg.mode = SolverMode::svn;
  } else if (mode == "svgd") {
    cfg.mode = SolverMode::svgd;
  } else {
    fail(ErrorCode::config, joined(path, "mode") + " must be 'svn' or 'svgd'");
  }
  cfg.particle_count = get_int(obj, path, "particles", cfg.particle_count);
  cfg.max_iterations = get_int(obj, path, "max_iterations", cfg.max_iterations);
  cfg.early_stop_eps = get_double(obj, path, "early_stop_eps", cfg.early_stop_eps);
  cfg.init_sigma = get_vec6(obj, path, "init_sigma", cfg.init_sigma);
  if (obj.contains("kernel_bandwidth")) {
    const json& v = obj.at("kernel_bandwidth");
    if (v.is_string() && v.get<std::string>() == "median") {
      cfg.bandwidth.median = true;
    } else if (v.is_number()) {
      cfg.bandwidth.median = false;
      cfg.bandwidth.fixed = v.get<double>();
    } else {
      fail(ErrorCode::config, joined(path, "kernel_bandwidth") + " must be 'median' or a number");
    }
  }
  cfg.svgd_step_size = get_double(obj, path, "svgd_step_size", cfg.svgd_step_size);
  const std::string prior = get_string(obj, path, "prior_weight", "off");
  if (prior == "off") {
    cfg.use_prior = false;
  } else if (prior == "gaussian") {
    cfg.use_prior = true;
  } else {
    fail(ErrorCode::config, joined(path, "prior_weight") + " must be 'off' or 'gaussian'");
  }
  cfg.neighborhood_size = get_int(obj, path, "neighborhood_size", cfg.neighborhood_size);
  cfg.robust.max_corr_dist = get_double(obj, path, "max_corr_dist", cfg.robust.max_corr_dist);
  if (obj.contains("huber_delta")) {
    const json& v = obj.at("huber_delta");
    if (v.is_string() && v.get<std::string>() == "none") {
      cfg.robust.huber_delta.reset();
    } else if (v.is_number()) {
      cfg.robust.huber_delta = v.get<double>();
    } else {
      fail(ErrorCode::config, joined(path, "huber_delta") + " must be 'none' or a number");
    }
  }
  if (obj.contains("noise_model")) {
    const json& v = obj.at("noise_model");
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s == "unit") {
        cfg.noise.kind = NoiseModel::Kind::unit;
      } else if (s == "adaptive") {
        cfg.noise.kind = NoiseModel::Kind::adaptive;
      } else {
        fail(ErrorCode::config,
             joined(path, "noise_model") + " must be 'unit', 'adaptive', or a sigma value");
      }
    } else if (v.is_number()) {
      cfg.noise.kind = NoiseModel::Kind::fixed;
      cfg.noise.sigma = v.get<double>();
    } else {
      fail(ErrorCode::config, joined(path, "noise_model") + " must be a string or number");
    }
  }
  cfg.karcher_refine = get_bool(obj, path, "karcher_refine", cfg.karcher_refine);
  return cfg;
}

FilterConfig parse_filter(const json& obj, const std::string& path) {
  expect_object(obj, path);
  expect_keys(obj, path,
              {"noise", "fixed_translation_var", "fixed_rotation_var", "propagation",
               "accel_noise", "gyro_noise", "accel_bias_rw", "gyro_bias_rw", "cv_accel_noise",
               "cv_gyro_noise", "init_position_std", "init_velocity_std", "init_attitude_std",
               "init_accel_bias_std", "init_gyro_bias_std", "gravity_align"});
  FilterConfig cfg;
  const std::string noise = get_string(obj, path, "noise", "adaptive");
  if (noise == "adaptive") {
    cfg.adaptive_noise = true;
  } else if (noise == "fixed") {
    cfg.adaptive_noise = false;
  } else {
    fail(ErrorCode::config, joined(path, "noise") + " must be 'adaptive' or 'fixed'");
  }
  cfg.fixed_translation_var =
      get_double(obj, path, "fixed_translation_var", cfg.fixed_translation_var);
  cfg.fixed_rotation_var = get_double(obj, path, "fixed_rotation_var", cfg.fixed_rotation_var);
  const std::string prop = get_string(obj, path, "propagation", "imu");
  if (prop == "imu") {
    cfg.propagation = Propagation::imu;
  } else if (prop == "constant-velocity") {
    cfg.propagation = Propagation::constant_velocity;
  } else {
    fail(ErrorCode::config, joined(path, "propagation") + " must be 'imu' or 'constant-velocity'");
  }
  cfg.imu.accel_density = get_double(obj, path, "accel_noise", cfg.imu.accel_density);
  cfg.imu.gyro_density = get_double(obj, path, "gyro_noise", cfg.imu.gyro_density);
  cfg.imu.accel_bias_rw = get_double(obj, path, "accel_bias_rw", cfg.imu.accel_bias_rw);
  cfg.imu.gyro_bias_rw = get_double(obj, path, "gyro_bias_rw", cfg.imu.gyro_bias_rw);
  cfg.cv_accel_density = get_double(obj, path, "cv_accel_noise", cfg.cv_accel_density);
  cfg.cv_gyro_density = get_double(obj, path, "cv_gyro_noise", cfg.cv_gyro_density);
  cfg.init_position_std = get_double(obj, path, "init_position_std", cfg.init_position_std);
  cfg.init_velocity_std = get_double(obj, path, "init_velocity_std", cfg.init_velocity_std);
  cfg.init_attitude_std = get_double(obj, path, "init_attitude_std", cfg.init_attitude_std);
  cfg.init_accel_bias_std = get_double(obj, path, "init_accel_bias_std", cfg.init_accel_bias_std);
  cfg.init_gyro_bias_std = get_double(obj, path, "init_gyro_bias_std", cfg.init_gyro_bias_std);
  cfg.gravity_align = get_bool(obj, path, "gravity_align", cfg.gravity_align);
  return cfg;
}

SceneSpec parse_scene(const json& obj, const std::string& path) {
  expect_object(obj, path);
  expect_keys(obj, path, {"kind", "extent", "density", "noise_sigma", "offset", "seed"});
  SceneSpec spec;
  if (!obj.contains("kind")) fail(ErrorCode::config, joined(path, "kind") + " is required");
  spec.kind = scene_kind_from_string(get_string(obj, path, "kind", "box"));
  spec.extent = get_double(obj, path, "extent", 0.0);
  if (obj.contains("density")) {
    const double density = get_double(obj, path, "density", 0.0);
    if (!(density > 0.0)) fail(ErrorCode::config, joined(path, "density") + " must be > 0");
    spec.density = density;
  }
  spec.noise_sigma = get_double(obj, path, "noise_sigma", spec.noise_sigma);
  spec.gt_offset = get_vec6(obj, path, "offset", spec.gt_offset);
  spec.seed = static_cast<std::uint64_t>(get_double(obj, path, "seed", 0.0));
  return spec;
}

Pose parse_pose_array(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 7) {
    fail(ErrorCode::config, where + " must be [x, y, z, qx, qy, qz, qw]");
  }
  Pose pose;
  pose.translation = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  Eigen::Quaterniond q(v[6].get<double>(), v[3].get<double>(), v[4].get<double>(),
                       v[5].get<double>());
  if (q.norm() < 1e-9) fail(ErrorCode::config, where + ": zero quaternion");
  q.normalize();
  pose.rotation = q.toRotationMatrix();
  return pose;
}

TrajectorySpec parse_trajectory(const json& obj, const std::string& path) {
  expect_object(obj, path);
  expect_keys(obj, path,
              {"waypoints", "duration", "scan_rate", "imu_rate", "scan_noise_sigma", "accel_noise",
               "gyro_noise", "accel_bias", "gyro_bias", "seed"});
  TrajectorySpec spec;
  if (!obj.contains("waypoints")) fail(ErrorCode::config, joined(path, "waypoints") + " required");
  const json& wps = obj.at("waypoints");
  if (!wps.is_array() || wps.empty()) {
    fail(ErrorCode::config, joined(path, "waypoints") + " must be a non-empty array");
  }
  for (std::size_t i = 0; i < wps.size(); ++i) {
    const std::string wpath = joined(path, "waypoints[" + std::to_string(i) + "]");
    expect_object(wps[i], wpath);
    expect_keys(wps[i], wpath, {"time", "pose"});
    Waypoint wp;
    wp.time = get_double(wps[i], wpath, "time", 0.0);
    if (!wps[i].contains("pose")) fail(ErrorCode::config, wpath + ".pose required");
    wp.pose = parse_pose_array(wps[i].at("pose"), wpath + ".pose");
    spec.waypoints.push_back(wp);
  }
  spec.duration = get_double(obj, path, "duration", spec.duration);
  spec.scan_rate = get_double(obj, path, "scan_rate", spec.scan_rate);
  spec.imu_rate = get_double(obj, path, "imu_rate", spec.imu_rate);
  spec.scan_noise_sigma = get_double(obj, path, "scan_noise_sigma", spec.scan_noise_sigma);
  spec.accel_noise_density = get_double(obj, path, "accel_noise", spec.accel_noise_density);
  spec.gyro_noise_density = get_double(obj, path, "gyro_noise", spec.gyro_noise_density);
  spec.accel_bias = get_vec3(obj, path, "accel_bias", spec.accel_bias);
  spec.gyro_bias = get_vec3(obj, path, "gyro_bias", spec.gyro_bias);
  spec.seed = static_cast<std::uint64_t>(get_double(obj, path, "seed", 0.0));
  return spec;
}

McConfig parse_oracle(const json& obj, const std::string& path) {
  expect_object(obj, path);
  expect_keys(obj, path,
              {"mc_samples", "init_sigma", "point_sigma", "quantile", "divergence_rms",
               "gn_max_iterations"});
  McConfig cfg;
  cfg.samples = get_int(obj, path, "mc_samples", cfg.samples);
  cfg.init_sigma = get_vec6(obj, path, "init_sigma", cfg.init_sigma);
  cfg.point_sigma = get_double(obj, path, "point_sigma", cfg.point_sigma);
  cfg.quantile = get_double(obj, path, "quantile", cfg.quantile);
  cfg.divergence_rms = get_double(obj, path, "divergence_rms", cfg.divergence_rms);
  cfg.gn_max_iterations = get_int(obj, path, "gn_max_iterations", cfg.gn_max_iterations);
  return cfg;
}

AblationConfig parse_ablation(const json& obj, const std::string& path) {
  expect_object(obj, path);
  expect_keys(obj, path, {"particle_counts", "seeds", "runs"});
  AblationConfig cfg;
  if (obj.contains("particle_counts")) {
    cfg.particle_counts.clear();
    for (const auto& v : obj.at("particle_counts")) cfg.particle_counts.push_back(v.get<int>());
  }
  if (obj.contains("seeds")) {
    cfg.seeds.clear();
    for (const auto& v : obj.at("seeds")) cfg.seeds.push_back(v.get<std::uint64_t>());
  }
  cfg.runs = get_int(obj, path, "runs", cfg.runs);
  return cfg;
}

IoConfig parse_io(const json& obj, const std::string& path) {
  expect_object(obj, path);
  expect_keys(obj, path, {"out_dir", "source", "target", "scan_dir", "imu", "scan_rate"});
  IoConfig cfg;
  cfg.out_dir = get_string(obj, path, "out_dir", cfg.out_dir);
  cfg.source = get_string(obj, path, "source", cfg.source);
  cfg.target = get_string(obj, path, "target", cfg.target);
  cfg.scan_dir = get_string(obj, path, "scan_dir", cfg.scan_dir);
  cfg.imu = get_string(obj, path, "imu", cfg.imu);
  cfg.scan_rate = get_double(obj, path, "scan_rate", cfg.scan_rate);
  return cfg;
}

json vec6_to_json(const Vec6& v) {
  json a = json::array();
  for (int i = 0; i < 6; ++i) a.push_back(v[i]);
  return a;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json pose_to_json(const Pose& pose) {
  Eigen::Quaterniond q(pose.rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return json::array({pose.translation.x(), pose.translation.y(), pose.translation.z(), q.x(),
                      q.y(), q.z(), q.w()});
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  expect_object(j, "");
  expect_keys(j, "",
              {"seed", "threads", "voxel", "solver", "filter", "scene", "trajectory", "oracle",
               "estimator_runs", "ablation", "io"});
  RunConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(get_double(j, "", "seed", 0.0));
  cfg.threads = get_int(j, "", "threads", 1);
  if (cfg.threads < 1) fail(ErrorCode::config, "threads must be >= 1");
  cfg.voxel = get_double(j, "", "voxel", 0.0);
  if (j.contains("solver")) cfg.solver = parse_solver(j.at("solver"), "solver");
  if (j.contains("filter")) cfg.filter = parse_filter(j.at("filter"), "filter");
  if (j.contains("scene")) cfg.scene = parse_scene(j.at("scene"), "scene");
  if (j.contains("trajectory")) cfg.trajectory = parse_trajectory(j.at("trajectory"), "trajectory");
  if (j.contains("oracle")) cfg.oracle = parse_oracle(j.at("oracle"), "oracle");
  cfg.estimator_runs = get_int(j, "", "estimator_runs", cfg.estimator_runs);
  if (j.contains("ablation")) cfg.ablation = parse_ablation(j.at("ablation"), "ablation");
  if (j.contains("io")) cfg.io = parse_io(j.at("io"), "io");
  cfg.solver.threads = cfg.threads;
  cfg.oracle.threads = cfg.threads;
  cfg.oracle.neighborhood_size = cfg.solver.neighborhood_size;
  cfg.oracle.robust = cfg.solver.robust;
  return cfg;
}

RunConfig parse_run_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    fail(ErrorCode::config, std::string("config is not valid JSON: ") + ex.what());
  }
  return parse_run_config(j);
}

json echo_config(const RunConfig& config) {
  json j;
  j["seed"] = config.seed;
  j["threads"] = config.threads;
  j["voxel"] = config.voxel;

  json solver;
  solver["mode"] = config.solver.mode == SolverMode::svn ? "svn" : "svgd";
  solver["particles"] = config.solver.particle_count;
  solver["max_iterations"] = config.solver.max_iterations;
  solver["early_stop_eps"] = config.solver.early_stop_eps;
  solver["init_sigma"] = vec6_to_json(config.solver.init_sigma);
  if (config.solver.bandwidth.median) {
    solver["kernel_bandwidth"] = "median";
  } else {
    solver["kernel_bandwidth"] = config.solver.bandwidth.fixed;
  }
  solver["svgd_step_size"] = config.solver.svgd_step_size;
  solver["prior_weight"] = config.solver.use_prior ? "gaussian" : "off";
  solver["neighborhood_size"] = config.solver.neighborhood_size;
  solver["max_corr_dist"] = config.solver.robust.max_corr_dist;
  if (config.solver.robust.huber_delta) {
    solver["huber_delta"] = *config.solver.robust.huber_delta;
  } else {
    solver["huber_delta"] = "none";
  }
  switch (config.solver.noise.kind) {
    case NoiseModel::Kind::unit: solver["noise_model"] = "unit"; break;
    case NoiseModel::Kind::adaptive: solver["noise_model"] = "adaptive"; break;
    case NoiseModel::Kind::fixed: solver["noise_model"] = config.solver.noise.sigma; break;
  }
  solver["karcher_refine"] = config.solver.karcher_refine;
  j["solver"] = solver;

  json filter;
  filter["noise"] = config.filter.adaptive_noise ? "adaptive" : "fixed";
  filter["fixed_translation_var"] = config.filter.fixed_translation_var;
  filter["fixed_rotation_var"] = config.filter.fixed_rotation_var;
  filter["propagation"] =
      config.filter.propagation == Propagation::imu ? "imu" : "constant-velocity";
  filter["accel_noise"] = config.filter.imu.accel_density;
  filter["gyro_noise"] = config.filter.imu.gyro_density;
  filter["accel_bias_rw"] = config.filter.imu.accel_bias_rw;
  filter["gyro_bias_rw"] = config.filter.imu.gyro_bias_rw;
  filter["cv_accel_noise"] = config.filter.cv_accel_density;
  filter["cv_gyro_noise"] = config.filter.cv_gyro_density;
  filter["init_position_std"] = config.filter.init_position_std;
  filter["init_velocity_std"] = config.filter.init_velocity_std;
  filter["init_attitude_std"] = config.filter.init_attitude_std;
  filter["init_accel_bias_std"] = config.filter.init_accel_bias_std;
  filter["init_gyro_bias_std"] = config.filter.init_gyro_bias_std;
  filter["gravity_align"] = config.filter.gravity_align;
  j["filter"] = filter;

  if (config.scene) {
    json scene;
    scene["kind"] = scene_kind_to_string(config.scene->kind);
    scene["extent"] = config.scene->extent;
    scene["density"] = config.scene->density;
    scene["noise_sigma"] = config.scene->noise_sigma;
    scene["offset"] = vec6_to_json(config.scene->gt_offset);
    scene["seed"] = config.scene->seed;
    j["scene"] = scene;
  }

  if (config.trajectory) {
    json traj;
    json wps = json::array();
    for (const Waypoint& wp : config.trajectory->waypoints) {
      wps.push_back({{"time", wp.time}, {"pose", pose_to_json(wp.pose)}});
    }
    traj["waypoints"] = wps;
    traj["duration"] = config.trajectory->duration;
    traj["scan_rate"] = config.trajectory->scan_rate;
    traj["imu_rate"] = config.trajectory->imu_rate;
    traj["scan_noise_sigma"] = config.trajectory->scan_noise_sigma;
    traj["accel_noise"] = config.trajectory->accel_noise_density;
    traj["gyro_noise"] = config.trajectory->gyro_noise_density;
    traj["accel_bias"] = vec3_to_json(config.trajectory->accel_bias);
    traj["gyro_bias"] = vec3_to_json(config.trajectory->gyro_bias);
    traj["seed"] = config.trajectory->seed;
    j["trajectory"] = traj;
  }

  json oracle;
  oracle["mc_samples"] = config.oracle.samples;
  oracle["init_sigma"] = vec6_to_json(config.oracle.init_sigma);
  oracle["point_sigma"] = config.oracle.point_sigma;
  oracle["quantile"] = config.oracle.quantile;
  oracle["divergence_rms"] = config.oracle.divergence_rms;
  oracle["gn_max_iterations"] = config.oracle.gn_max_iterations;
  j["oracle"] = oracle;
  j["estimator_runs"] = config.estimator_runs;

  json ablation;
  ablation["particle_counts"] = config.ablation.particle_counts;
  ablation["seeds"] = config.ablation.seeds;
  ablation["runs"] = config.ablation.runs;
  j["ablation"] = ablation;

  json io;
  io["out_dir"] = config.io.out_dir;
  io["source"] = config.io.source;
  io["target"] = config.io.target;
  io["scan_dir"] = config.io.scan_dir;
  io["imu"] = config.io.imu;
  io["scan_rate"] = config.io.scan_rate;
  j["io"] = io;
  return j;
}

}  // namespace steinscan
