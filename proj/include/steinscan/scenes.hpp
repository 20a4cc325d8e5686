#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steinscan/fusion_types.hpp"
#include "steinscan/manifold.hpp"
#include "steinscan/point_cloud.hpp"

namespace steinscan {

// Synthetic geometries. The corridor is two parallel vertical walls 3 m apart
// running along +x (open ends), the canonical degenerate scene; its free axis
// is (1, 0, 0).
enum class SceneKind { corridor, plane, tunnel, box, blobs };

struct SceneSpec {
  SceneKind kind = SceneKind::box;
  double extent = 0.0;       // main dimension, meters; 0 picks the per-kind default
  double density = 0.0;      // points per m^2; 0 picks the per-kind default
  double noise_sigma = 0.01; // sensor noise applied to the source sample, meters
  Vec6 gt_offset = Vec6::Zero();  // ground-truth twist [rot; trans]
  std::uint64_t seed = 0;
};

SceneKind scene_kind_from_string(const std::string& name);
std::string scene_kind_to_string(SceneKind kind);

struct ScenePair {
  PointCloud source;
  PointCloud target;
  Pose ground_truth;
};

// Target is a clean sample of the geometry; the source is an independently
// resampled copy moved into the sensor frame by gt^{-1} plus i.i.d. noise, so
// solve_icp(source, target) should recover gt.
ScenePair generate_pair(const SceneSpec& spec);

// Deterministic surface sample of the geometry (used as the world map).
PointCloud sample_scene_surface(const SceneSpec& spec, std::uint64_t stream);

// Unsigned distance from a point to the scene's support surface. Not defined
// for blobs.
double surface_distance(const SceneSpec& spec, const Vec3& p);

struct Waypoint {
  double time = 0.0;
  Pose pose;
};

struct TrajectorySpec {
  std::vector<Waypoint> waypoints;
  double duration = 10.0;    // used when a single waypoint is given (static hold)
  double scan_rate = 2.0;    // Hz
  double imu_rate = 100.0;   // Hz
  double scan_noise_sigma = 0.01;
  double accel_noise_density = 0.02;
  double gyro_noise_density = 0.002;
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
  std::uint64_t seed = 0;
};

// Piecewise constant-twist (screw) interpolation between waypoints.
Pose interpolate_pose(const TrajectorySpec& spec, double time);

struct TrajectoryData {
  PointCloud map;                                   // world-frame scene sample
  std::vector<std::pair<double, PointCloud>> scans;  // sensor frame
  std::vector<ImuSample> imu;
  std::vector<std::pair<double, Pose>> ground_truth;  // at scan times
};

// Scans observe one fixed world sample from interpolated poses; the IMU is
// synthesized analytically from the constant-twist segments plus configured
// bias and white noise.
TrajectoryData generate_trajectory(const TrajectorySpec& traj, const SceneSpec& scene);

}  // namespace steinscan
