#include "steinscan/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "steinscan/errors.hpp"
#include "steinscan/rng.hpp"

namespace steinscan {

namespace {

constexpr double kCorridorWidth = 3.0;   // wall separation
constexpr double kCorridorHeight = 2.2;  // wall height
constexpr double kTunnelRadius = 2.0;
constexpr double kBlobSigma = 0.3;
constexpr int kBlobCount = 8;

double default_extent(SceneKind kind) {
  switch (kind) {
    case SceneKind::corridor: return 40.0;
    case SceneKind::plane: return 10.0;
    case SceneKind::tunnel: return 30.0;
    case SceneKind::box: return 3.0;
    case SceneKind::blobs: return 8.0;
  }
  return 10.0;
}

double default_density(SceneKind kind) {
  switch (kind) {
    case SceneKind::corridor: return 12.0;
    case SceneKind::plane: return 30.0;
    case SceneKind::tunnel: return 10.0;
    case SceneKind::box: return 120.0;
    case SceneKind::blobs: return 20.0;
  }
  return 20.0;
}

struct Resolved {
  SceneKind kind;
  double extent;
  double density;
};

Resolved resolve(const SceneSpec& spec) {
  Resolved r;
  r.kind = spec.kind;
  r.extent = spec.extent > 0.0 ? spec.extent : default_extent(spec.kind);
  r.density = spec.density > 0.0 ? spec.density : default_density(spec.kind);
  if (!(r.extent > 0.0)) fail(ErrorCode::config, "scene extent must be > 0");
  if (!(r.density > 0.0)) fail(ErrorCode::config, "scene density must be > 0");
  return r;
}

// Rectangular patch: origin + u*edge_u + v*edge_v, (u, v) in [0,1).
struct Patch {
  Vec3 origin;
  Vec3 edge_u;
  Vec3 edge_v;
  double area() const { return edge_u.cross(edge_v).norm(); }
};

std::vector<Patch> scene_patches(const Resolved& r) {
  std::vector<Patch> patches;
  const double e = r.extent;
  const double half = 0.5 * e;
  switch (r.kind) {
    case SceneKind::corridor: {
      // Two walls plus a floor, open ends: every direction except the
      // corridor axis is crisply constrained, reproducing the single
      // degenerate direction of a real corridor.
      const double hw = 0.5 * kCorridorWidth;
      patches.push_back({Vec3(-half, -hw, 0.0), Vec3(e, 0, 0), Vec3(0, 0, kCorridorHeight)});
      patches.push_back({Vec3(-half, hw, 0.0), Vec3(e, 0, 0), Vec3(0, 0, kCorridorHeight)});
      patches.push_back({Vec3(-half, -hw, 0.0), Vec3(e, 0, 0), Vec3(0, kCorridorWidth, 0)});
      break;
    }
    case SceneKind::plane:
      patches.push_back({Vec3(-half, -half, 0.0), Vec3(e, 0, 0), Vec3(0, e, 0)});
      break;
    case SceneKind::box: {
      const double h = half;
      patches.push_back({Vec3(-h, -h, -h), Vec3(e, 0, 0), Vec3(0, e, 0)});  // bottom
      patches.push_back({Vec3(-h, -h, h), Vec3(e, 0, 0), Vec3(0, e, 0)});   // top
      patches.push_back({Vec3(-h, -h, -h), Vec3(e, 0, 0), Vec3(0, 0, e)});  // y = -h
      patches.push_back({Vec3(-h, h, -h), Vec3(e, 0, 0), Vec3(0, 0, e)});   // y = +h
      patches.push_back({Vec3(-h, -h, -h), Vec3(0, e, 0), Vec3(0, 0, e)});  // x = -h
      patches.push_back({Vec3(h, -h, -h), Vec3(0, e, 0), Vec3(0, 0, e)});   // x = +h
      break;
    }
    case SceneKind::tunnel:
    case SceneKind::blobs:
      break;
  }
  return patches;
}

// Stratified (jittered-grid) sampling: one point per cell of side ~1/sqrt(rho)
// with uniform jitter. Evens out the coverage so no spurious density texture
// locks sliding directions.
void jittered_patch(PointCloud& cloud, Rng& rng, double len_u, double len_v, double density,
                    const std::function<Vec3(double, double)>& to_point) {
  const int nu = std::max(1, static_cast<int>(std::lround(len_u * std::sqrt(density))));
  const int nv = std::max(1, static_cast<int>(std::lround(len_v * std::sqrt(density))));
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      const double u = (i + rng.uniform()) / nu * len_u;
      const double v = (j + rng.uniform()) / nv * len_v;
      cloud.points.push_back(to_point(u, v));
    }
  }
}

PointCloud sample_surface(const Resolved& r, std::uint64_t stream_seed) {
  Rng rng(stream_seed);
  PointCloud cloud;

  if (r.kind == SceneKind::tunnel) {
    const double length = r.extent;
    const double circumference = 2.0 * M_PI * kTunnelRadius;
    jittered_patch(cloud, rng, length, circumference, r.density, [&](double u, double v) {
      const double a = v / kTunnelRadius;
      return Vec3(u - 0.5 * length, kTunnelRadius * std::cos(a),
                  kTunnelRadius * std::sin(a) + kTunnelRadius);
    });
    return cloud;
  }

  if (r.kind == SceneKind::blobs) {
    Rng center_rng(Rng::derive(stream_seed, 9000));
    std::vector<Vec3> centers;
    centers.reserve(kBlobCount);
    for (int i = 0; i < kBlobCount; ++i) {
      centers.emplace_back(center_rng.uniform(-0.5 * r.extent, 0.5 * r.extent),
                           center_rng.uniform(-0.5 * r.extent, 0.5 * r.extent),
                           center_rng.uniform(-0.5 * r.extent, 0.5 * r.extent));
    }
    const long n = std::lround(r.density * r.extent * r.extent);
    cloud.points.reserve(n);
    for (long i = 0; i < n; ++i) {
      const Vec3& c = centers[i % kBlobCount];
      cloud.points.emplace_back(c.x() + kBlobSigma * rng.normal(),
                                c.y() + kBlobSigma * rng.normal(),
                                c.z() + kBlobSigma * rng.normal());
    }
    return cloud;
  }

  for (const Patch& p : scene_patches(r)) {
    jittered_patch(cloud, rng, p.edge_u.norm(), p.edge_v.norm(), r.density,
                   [&](double u, double v) {
                     return Vec3(p.origin + (u / p.edge_u.norm()) * p.edge_u +
                                 (v / p.edge_v.norm()) * p.edge_v);
                   });
  }
  return cloud;
}

}  // namespace

SceneKind scene_kind_from_string(const std::string& name) {
  if (name == "corridor") return SceneKind::corridor;
  if (name == "plane") return SceneKind::plane;
  if (name == "tunnel") return SceneKind::tunnel;
  if (name == "box") return SceneKind::box;
  if (name == "blobs") return SceneKind::blobs;
  fail(ErrorCode::config, "unknown scene kind '" + name + "'");
}

std::string scene_kind_to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::corridor: return "corridor";
    case SceneKind::plane: return "plane";
    case SceneKind::tunnel: return "tunnel";
    case SceneKind::box: return "box";
    case SceneKind::blobs: return "blobs";
  }
  return "?";
}

PointCloud sample_scene_surface(const SceneSpec& spec, std::uint64_t stream) {
  return sample_surface(resolve(spec), Rng::derive(spec.seed, stream));
}

double surface_distance(const SceneSpec& spec, const Vec3& p) {
  const Resolved r = resolve(spec);
  if (r.kind == SceneKind::tunnel) {
    const Vec3 rel(0.0, p.y(), p.z() - kTunnelRadius);
    return std::abs(rel.norm() - kTunnelRadius);
  }
  if (r.kind == SceneKind::blobs) {
    fail(ErrorCode::invalid_argument, "blobs scene has no support surface");
  }
  double best = std::numeric_limits<double>::infinity();
  for (const Patch& patch : scene_patches(r)) {
    const Vec3 u = patch.edge_u.normalized();
    const Vec3 v = patch.edge_v.normalized();
    const Vec3 rel = p - patch.origin;
    const double du = std::clamp(rel.dot(u), 0.0, patch.edge_u.norm());
    const double dv = std::clamp(rel.dot(v), 0.0, patch.edge_v.norm());
    const Vec3 closest = patch.origin + du * u + dv * v;
    best = std::min(best, (p - closest).norm());
  }
  return best;
}

ScenePair generate_pair(const SceneSpec& spec) {
  const Resolved r = resolve(spec);
  ScenePair pair;
  pair.target = sample_scene_surface(spec, 1);
  pair.ground_truth = se3_exp(spec.gt_offset);

  // The corridor target plays the role of a map that extends beyond the scan:
  // the source covers only the central section, so the open ends stay outside
  // the overlap and the along-axis direction is genuinely unconstrained.
  const bool trim_ends = r.kind == SceneKind::corridor || r.kind == SceneKind::tunnel;
  const double x_limit = 0.5 * 0.75 * r.extent;

  const PointCloud fresh = sample_scene_surface(spec, 2);
  const Pose inv = pair.ground_truth.inverse();
  Rng noise_rng(Rng::derive(spec.seed, 4));
  pair.source.points.reserve(fresh.size());
  for (const Vec3& x : fresh.points) {
    if (trim_ends && std::abs(x.x()) > x_limit) continue;
    Vec3 p = inv.apply(x);
    if (spec.noise_sigma > 0.0) {
      p += spec.noise_sigma * Vec3(noise_rng.normal(), noise_rng.normal(), noise_rng.normal());
    }
    pair.source.points.push_back(p);
  }
  return pair;
}

Pose interpolate_pose(const TrajectorySpec& spec, double time) {
  if (spec.waypoints.empty()) fail(ErrorCode::config, "trajectory needs at least one waypoint");
  const auto& wps = spec.waypoints;
  if (wps.size() == 1 || time <= wps.front().time) return wps.front().pose;
  if (time >= wps.back().time) return wps.back().pose;
  std::size_t i = 0;
  while (i + 1 < wps.size() && wps[i + 1].time < time) ++i;
  const double tau = wps[i + 1].time - wps[i].time;
  const double s = (time - wps[i].time) / tau;
  const Vec6 xi = se3_log(wps[i].pose.inverse().compose(wps[i + 1].pose));
  return wps[i].pose.compose(se3_exp(s * xi));
}

TrajectoryData generate_trajectory(const TrajectorySpec& traj, const SceneSpec& scene) {
  if (traj.waypoints.empty()) fail(ErrorCode::config, "trajectory needs at least one waypoint");
  for (std::size_t i = 1; i < traj.waypoints.size(); ++i) {
    if (!(traj.waypoints[i].time > traj.waypoints[i - 1].time)) {
      fail(ErrorCode::config, "degenerate trajectory: repeated waypoint times");
    }
  }
  if (!(traj.scan_rate > 0.0) || !(traj.imu_rate > 0.0)) {
    fail(ErrorCode::config, "scan_rate and imu_rate must be > 0");
  }

  const double t0 = traj.waypoints.front().time;
  const double t_end =
      traj.waypoints.size() == 1 ? t0 + traj.duration : traj.waypoints.back().time;

  // Segment lookup for body rates.
  struct Segment {
    double t0, tau;
    Pose pose0;
    Vec6 xi;
  };
  std::vector<Segment> segments;
  if (traj.waypoints.size() == 1) {
    segments.push_back({t0, t_end - t0, traj.waypoints.front().pose, Vec6::Zero()});
  } else {
    for (std::size_t i = 0; i + 1 < traj.waypoints.size(); ++i) {
      const double tau = traj.waypoints[i + 1].time - traj.waypoints[i].time;
      const Vec6 xi =
          se3_log(traj.waypoints[i].pose.inverse().compose(traj.waypoints[i + 1].pose));
      segments.push_back({traj.waypoints[i].time, tau, traj.waypoints[i].pose, xi});
    }
  }
  auto segment_at = [&](double t) -> const Segment& {
    std::size_t i = 0;
    while (i + 1 < segments.size() && segments[i].t0 + segments[i].tau < t) ++i;
    return segments[i];
  };
  auto pose_at = [&](double t) -> Pose {
    const Segment& seg = segment_at(t);
    const double s = std::clamp((t - seg.t0) / seg.tau, 0.0, 1.0);
    return seg.pose0.compose(se3_exp(s * seg.xi));
  };

  TrajectoryData data;
  data.map = sample_scene_surface(scene, 3);

  const Vec3 gravity(0.0, 0.0, -9.81);

  // Scans: one fixed world sample viewed from the interpolated poses.
  const double scan_dt = 1.0 / traj.scan_rate;
  int scan_index = 0;
  for (double t = t0; t <= t_end + 1e-9; t += scan_dt) {
    const Pose pose = pose_at(t);
    const Pose inv = pose.inverse();
    PointCloud scan;
    scan.timestamp = t;
    scan.points.reserve(data.map.size());
    Rng noise_rng(Rng::derive(traj.seed, 100 + scan_index));
    for (const Vec3& x : data.map.points) {
      Vec3 p = inv.apply(x);
      if (traj.scan_noise_sigma > 0.0) {
        p += traj.scan_noise_sigma *
             Vec3(noise_rng.normal(), noise_rng.normal(), noise_rng.normal());
      }
      scan.points.push_back(p);
    }
    data.scans.emplace_back(t, std::move(scan));
    data.ground_truth.emplace_back(t, pose);
    ++scan_index;
  }

  // IMU: analytic rates from the constant-twist segments.
  Rng imu_rng(Rng::derive(traj.seed, 7));
  const double imu_dt = 1.0 / traj.imu_rate;
  const double accel_sigma = traj.accel_noise_density * std::sqrt(traj.imu_rate);
  const double gyro_sigma = traj.gyro_noise_density * std::sqrt(traj.imu_rate);
  for (double t = t0 + imu_dt; t <= t_end + 1e-9; t += imu_dt) {
    const Segment& seg = segment_at(t);
    const Vec3 omega_b = seg.tau > 0.0 ? Vec3(seg.xi.head<3>() / seg.tau) : Vec3::Zero();
    const Vec3 v_b = seg.tau > 0.0 ? Vec3(seg.xi.tail<3>() / seg.tau) : Vec3::Zero();
    const Pose pose = pose_at(t);

    ImuSample s;
    s.time = t;
    s.gyro = omega_b + traj.gyro_bias;
    s.accel = omega_b.cross(v_b) - pose.rotation.transpose() * gravity + traj.accel_bias;
    if (traj.accel_noise_density > 0.0) {
      s.accel += accel_sigma * Vec3(imu_rng.normal(), imu_rng.normal(), imu_rng.normal());
    }
    if (traj.gyro_noise_density > 0.0) {
      s.gyro += gyro_sigma * Vec3(imu_rng.normal(), imu_rng.normal(), imu_rng.normal());
    }
    data.imu.push_back(s);
  }

  return data;
}

}  // namespace steinscan
