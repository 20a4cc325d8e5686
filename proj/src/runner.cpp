#include "steinscan/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <Eigen/Geometry>

#include "steinscan/errors.hpp"
#include "steinscan/fusion.hpp"
#include "steinscan/io.hpp"
#include "steinscan/log.hpp"
#include "steinscan/oracle.hpp"
#include "steinscan/rng.hpp"
#include "steinscan/scenes.hpp"
#include "steinscan/solver.hpp"

namespace steinscan {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write '" + path.string() + "'");
  out << text;
}

fs::path ensure_out_dir(const RunConfig& config) {
  fs::path dir(config.io.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create output directory '" + dir.string() + "'");
  return dir;
}

json mat6_to_json(const Mat6& m) {
  json a = json::array();
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) a.push_back(m(r, c));
  }
  return a;
}

json vec6_to_json(const Vec6& v) {
  json a = json::array();
  for (int i = 0; i < 6; ++i) a.push_back(v[i]);
  return a;
}

PointCloud maybe_downsample(const PointCloud& cloud, double voxel) {
  return voxel > 0.0 ? voxel_downsample(cloud, voxel) : cloud;
}

struct AlignInputs {
  PointCloud source;
  PointCloud target;
  bool has_gt = false;
  Pose ground_truth;
};

AlignInputs align_inputs(const RunConfig& config) {
  AlignInputs in;
  if (config.scene) {
    const ScenePair pair = generate_pair(*config.scene);
    in.source = pair.source;
    in.target = pair.target;
    in.ground_truth = pair.ground_truth;
    in.has_gt = true;
  } else {
    if (config.io.source.empty() || config.io.target.empty()) {
      fail(ErrorCode::config, "align needs either a scene spec or io.source and io.target");
    }
    in.source = load_cloud(config.io.source);
    in.target = load_cloud(config.io.target);
  }
  in.source = maybe_downsample(in.source, config.voxel);
  return in;
}

SceneSpec oracle_scene(const RunConfig& config) {
  if (!config.scene) fail(ErrorCode::config, "oracle needs a scene spec");
  // The MC protocol injects its own sensor noise per sample; the base pair is
  // the clean geometry.
  SceneSpec spec = *config.scene;
  spec.noise_sigma = 0.0;
  return spec;
}

}  // namespace

std::string cloud_hash_hex(const PointCloud& cloud) {
  std::uint64_t h = 1469598103934665603ull;  // FNV offset basis
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const Vec3& p : cloud.points) {
    mix(format_double(p.x()));
    mix(format_double(p.y()));
    mix(format_double(p.z()));
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json run_align(const RunConfig& config) {
  const fs::path out_dir = ensure_out_dir(config);
  const AlignInputs in = align_inputs(config);

  PoseWithCovariance prior;
  if (config.solver.use_prior) {
    for (int i = 0; i < 6; ++i) {
      prior.covariance(i, i) =
          std::max(config.solver.init_sigma[i] * config.solver.init_sigma[i], 1e-10);
    }
  }

  SolveTrace trace;
  const PoseWithCovariance est =
      solve_icp(prior, in.source, in.target, config.solver, config.seed, &trace);

  // Per-iteration update-norm series.
  std::string csv = "# iteration,mean_update_norm,mean_update_sq,residual_sigma\n";
  for (std::size_t i = 0; i < trace.update_mean_norm.size(); ++i) {
    csv += std::to_string(i + 1) + "," + format_double(trace.update_mean_norm[i]) + "," +
           format_double(trace.update_mean_sq[i]) + "," +
           format_double(trace.residual_sigma[i]) + "\n";
  }
  const fs::path norms_path = out_dir / "align_update_norms.csv";
  write_text(norms_path, csv);

  json report;
  report["command"] = "align";
  report["config"] = echo_config(config);
  report["source_hash"] = cloud_hash_hex(in.source);
  report["target_hash"] = cloud_hash_hex(in.target);
  report["source_points"] = in.source.size();
  report["target_points"] = in.target.size();
  report["pose_tum"] = format_tum_line(0.0, est.pose);
  report["mean_twist"] = vec6_to_json(est.mean_twist);
  report["covariance"] = mat6_to_json(est.covariance);
  report["icp_covariance"] = mat6_to_json(est.icp_covariance);
  report["iterations"] = est.iterations;
  report["converged"] = est.converged;
  report["frozen_updates"] = trace.frozen_updates;
  report["files"] = {{"update_norms", norms_path.string()}};
  if (in.has_gt) {
    const Vec6 err = se3_log(est.pose.inverse().compose(in.ground_truth));
    report["ground_truth_tum"] = format_tum_line(0.0, in.ground_truth);
    report["translation_error"] = err.tail<3>().norm();
    report["rotation_error"] = err.head<3>().norm();
  }

  write_text(out_dir / "align_report.json", report.dump(2) + "\n");
  return report;
}

json run_gen_scene(const RunConfig& config) {
  if (!config.scene) fail(ErrorCode::config, "gen-scene needs a scene spec");
  const fs::path out_dir = ensure_out_dir(config);
  const ScenePair pair = generate_pair(*config.scene);

  const fs::path source_path = out_dir / "source.csv";
  const fs::path target_path = out_dir / "target.csv";
  const fs::path gt_path = out_dir / "ground_truth.txt";
  save_cloud_csv(pair.source, source_path.string());
  save_cloud_csv(pair.target, target_path.string());
  write_text(gt_path, format_tum_line(0.0, pair.ground_truth) + "\n");

  json report;
  report["command"] = "gen-scene";
  report["config"] = echo_config(config);
  report["source_points"] = pair.source.size();
  report["target_points"] = pair.target.size();
  report["source_hash"] = cloud_hash_hex(pair.source);
  report["target_hash"] = cloud_hash_hex(pair.target);
  report["ground_truth_tum"] = format_tum_line(0.0, pair.ground_truth);
  report["files"] = {{"source", source_path.string()},
                     {"target", target_path.string()},
                     {"ground_truth", gt_path.string()}};
  write_text(out_dir / "gen_scene_report.json", report.dump(2) + "\n");
  return report;
}

json run_oracle(const RunConfig& config) {
  const fs::path out_dir = ensure_out_dir(config);
  const SceneSpec spec = oracle_scene(config);
  ScenePair pair = generate_pair(spec);
  pair.source = maybe_downsample(pair.source, config.voxel);

  McConfig mc_cfg = config.oracle;
  mc_cfg.threads = config.threads;
  mc_cfg.neighborhood_size = config.solver.neighborhood_size;
  mc_cfg.robust = config.solver.robust;

  const McDistribution mc = mc_icp_distribution(pair.source, pair.target, pair.ground_truth,
                                                mc_cfg, Rng::derive(config.seed, 1));
  const ConsistencyReport rep =
      evaluate_consistency(pair.source, pair.target, pair.ground_truth, config.solver, mc_cfg, mc,
                           config.estimator_runs, config.seed);

  json report;
  report["command"] = "oracle";
  report["config"] = echo_config(config);
  report["seed"] = config.seed;
  report["scene_hash"] = cloud_hash_hex(pair.target);
  report["mc"] = {{"samples", config.oracle.samples},
                  {"kept", rep.mc_kept},
                  {"diverged", rep.mc_diverged},
                  {"mean", vec6_to_json(mc.mean)},
                  {"covariance", mat6_to_json(mc.covariance)},
                  {"covariance_unfiltered", mat6_to_json(mc.covariance_unfiltered)}};
  report["estimator_runs"] = rep.estimator_runs;
  report["kl_trans"] = rep.kl_trans;
  report["kl_rot"] = rep.kl_rot;
  report["nne_trans"] = rep.nne_trans;
  report["nne_rot"] = rep.nne_rot;
  report["cutoff_quantile"] = rep.cutoff_quantile;
  report["mean_error"] = vec6_to_json(rep.mean_error);
  report["mean_translation_error"] = rep.mean_translation_error_norm;
  report["mean_estimated_covariance"] = mat6_to_json(rep.mean_estimated_covariance);
  report["mean_iterations"] = rep.mean_iterations;

  write_text(out_dir / "oracle_report.json", report.dump(2) + "\n");
  return report;
}

json run_ablation(const RunConfig& config) {
  const fs::path out_dir = ensure_out_dir(config);
  const SceneSpec spec = oracle_scene(config);
  ScenePair pair = generate_pair(spec);
  pair.source = maybe_downsample(pair.source, config.voxel);

  McConfig mc_cfg = config.oracle;
  mc_cfg.threads = config.threads;
  mc_cfg.neighborhood_size = config.solver.neighborhood_size;
  mc_cfg.robust = config.solver.robust;

  const std::vector<AblationRow> rows =
      ablation_sweep(pair.source, pair.target, pair.ground_truth, config.ablation.particle_counts,
                     config.ablation.seeds, config.solver, mc_cfg, config.ablation.runs);

  json rows_json = json::array();
  std::string csv =
      "# particles,seed,translation_error,runtime_s,avg_iterations,kl_trans,kl_rot,nne_trans,"
      "nne_rot\n";
  for (const AblationRow& row : rows) {
    json r;
    r["particles"] = row.particle_count;
    r["seed"] = row.seed;
    r["translation_error"] = row.translation_error;
    r["runtime_s"] = row.runtime_s;
    r["avg_iterations"] = row.avg_iterations;
    if (row.metrics_available) {
      r["kl_trans"] = row.kl_trans;
      r["kl_rot"] = row.kl_rot;
      r["nne_trans"] = row.nne_trans;
      r["nne_rot"] = row.nne_rot;
    } else {
      r["kl_trans"] = nullptr;
      r["kl_rot"] = nullptr;
      r["nne_trans"] = nullptr;
      r["nne_rot"] = nullptr;
    }
    rows_json.push_back(r);

    csv += std::to_string(row.particle_count) + "," + std::to_string(row.seed) + "," +
           format_double(row.translation_error) + "," + format_double(row.runtime_s) + "," +
           format_double(row.avg_iterations) + ",";
    if (row.metrics_available) {
      csv += format_double(row.kl_trans) + "," + format_double(row.kl_rot) + "," +
             format_double(row.nne_trans) + "," + format_double(row.nne_rot);
    } else {
      csv += "-,-,-,-";
    }
    csv += "\n";
  }
  const fs::path csv_path = out_dir / "ablation.csv";
  write_text(csv_path, csv);

  json report;
  report["command"] = "ablation";
  report["config"] = echo_config(config);
  report["scene_hash"] = cloud_hash_hex(pair.target);
  report["rows"] = rows_json;
  report["files"] = {{"csv", csv_path.string()}};
  write_text(out_dir / "ablation_report.json", report.dump(2) + "\n");
  return report;
}

json run_fuse(const RunConfig& config) {
  const fs::path out_dir = ensure_out_dir(config);

  PointCloud map;
  std::vector<std::pair<double, PointCloud>> scans;
  std::vector<ImuSample> imu;
  std::vector<std::pair<double, Pose>> ground_truth;
  Pose initial_pose;
  Vec3 initial_velocity = Vec3::Zero();
  bool has_gt = false;

  if (config.trajectory) {
    if (!config.scene) fail(ErrorCode::config, "fuse with a trajectory needs a scene spec");
    TrajectoryData data = generate_trajectory(*config.trajectory, *config.scene);
    map = std::move(data.map);
    scans = std::move(data.scans);
    imu = std::move(data.imu);
    ground_truth = std::move(data.ground_truth);
    initial_pose = ground_truth.front().second;
    if (config.trajectory->waypoints.size() > 1) {
      const auto& wps = config.trajectory->waypoints;
      const double tau = wps[1].time - wps[0].time;
      const Vec6 xi = se3_log(wps[0].pose.inverse().compose(wps[1].pose));
      initial_velocity = initial_pose.rotation * (xi.tail<3>() / tau);
    }
    has_gt = true;
  } else {
    if (config.io.scan_dir.empty()) {
      fail(ErrorCode::config, "fuse needs either a trajectory spec or io.scan_dir");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(config.io.scan_dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorCode::io, "no scan files in '" + config.io.scan_dir + "'");
    for (std::size_t k = 0; k < files.size(); ++k) {
      scans.emplace_back(static_cast<double>(k) / config.io.scan_rate,
                         load_cloud(files[k].string()));
    }
    map = config.io.target.empty() ? scans.front().second : load_cloud(config.io.target);
    if (!config.io.imu.empty()) imu = load_imu_csv(config.io.imu);
  }

  if (config.voxel > 0.0) {
    for (auto& [t, scan] : scans) scan = voxel_downsample(scan, config.voxel);
  }

  const FusionResult result = run_fusion(map, scans, imu, config.solver, config.filter,
                                         initial_pose, initial_velocity, config.seed);

  std::vector<StampedPose> trajectory;
  for (std::size_t i = 0; i < result.times.size(); ++i) {
    trajectory.push_back({result.times[i], result.poses[i]});
  }
  const fs::path traj_path = out_dir / "trajectory.tum";
  const fs::path cov_path = out_dir / "covariances.csv";
  const fs::path gain_path = out_dir / "kalman_gains.csv";
  save_trajectory_tum(trajectory, traj_path.string());
  save_covariances_csv(result.times, result.pose_covariances, cov_path.string());

  std::string gains_csv = "# t,kalman_gain_fro\n";
  for (std::size_t i = 0; i < result.times.size(); ++i) {
    gains_csv += format_double(result.times[i]) + "," + format_double(result.gain_norms[i]) + "\n";
  }
  write_text(gain_path, gains_csv);

  json report;
  report["command"] = "fuse";
  report["config"] = echo_config(config);
  report["scans"] = result.times.size();
  report["map_points"] = map.size();
  report["map_hash"] = cloud_hash_hex(map);
  report["final_pose_tum"] = format_tum_line(result.times.back(), result.poses.back());
  double mean_gain = 0.0;
  for (double g : result.gain_norms) mean_gain += g;
  report["mean_kalman_gain"] = mean_gain / result.gain_norms.size();
  double mean_iters = 0.0;
  for (int it : result.solver_iterations) mean_iters += it;
  report["mean_solver_iterations"] = mean_iters / result.solver_iterations.size();
  report["files"] = {{"trajectory", traj_path.string()},
                     {"covariances", cov_path.string()},
                     {"kalman_gains", gain_path.string()}};

  if (has_gt) {
    std::vector<Vec3> err_trans, err_rot;
    std::vector<Mat3> cov_trans, cov_rot;
    double ape = 0.0;
    for (std::size_t i = 0; i < result.poses.size(); ++i) {
      const Vec6 err = se3_log(result.poses[i].inverse().compose(ground_truth[i].second));
      err_trans.push_back(err.tail<3>());
      err_rot.push_back(err.head<3>());
      cov_trans.push_back(result.pose_covariances[i].block<3, 3>(3, 3) +
                          1e-12 * Mat3::Identity());
      cov_rot.push_back(result.pose_covariances[i].block<3, 3>(0, 0) + 1e-12 * Mat3::Identity());
      ape += err.tail<3>().norm();
    }
    const Vec6 final_err =
        se3_log(result.poses.back().inverse().compose(ground_truth.back().second));
    report["final_translation_error"] = final_err.tail<3>().norm();
    report["final_rotation_error"] = final_err.head<3>().norm();
    report["mean_translation_error"] = ape / result.poses.size();
    report["nne_trans"] = nne(err_trans, cov_trans);
    report["nne_rot"] = nne(err_rot, cov_rot);

    std::vector<StampedPose> gt_traj;
    for (const auto& [t, pose] : ground_truth) gt_traj.push_back({t, pose});
    const fs::path gt_path = out_dir / "ground_truth.tum";
    save_trajectory_tum(gt_traj, gt_path.string());
    report["files"]["ground_truth"] = gt_path.string();
  }

  write_text(out_dir / "fuse_report.json", report.dump(2) + "\n");
  return report;
}

}  // namespace steinscan
