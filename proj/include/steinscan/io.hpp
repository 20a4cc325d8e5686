#pragma once

#include <string>
#include <vector>

#include "steinscan/fusion_types.hpp"
#include "steinscan/manifold.hpp"
#include "steinscan/point_cloud.hpp"

namespace steinscan {

enum class CloudFormat { csv_xyz, ply_ascii, auto_detect };

// CSV-XYZ: one `x,y,z` row per point, optional `#` header lines.
// PLY: ASCII variant only; extra vertex properties are ignored.
PointCloud load_cloud(const std::string& path, CloudFormat format = CloudFormat::auto_detect);

// Coordinates printed at 9 significant digits; save/load/save round-trips to
// identical bytes.
void save_cloud_csv(const PointCloud& cloud, const std::string& path);

// IMU CSV: t,ax,ay,az,gx,gy,gz (seconds, m/s^2, rad/s).
std::vector<ImuSample> load_imu_csv(const std::string& path);
void save_imu_csv(const std::vector<ImuSample>& samples, const std::string& path);

struct StampedPose {
  double time = 0.0;
  Pose pose;
};

// TUM format: `t x y z qx qy qz qw`, quaternion sign canonicalized (qw >= 0).
std::string format_tum_line(double time, const Pose& pose);
void save_trajectory_tum(const std::vector<StampedPose>& trajectory, const std::string& path);
std::vector<StampedPose> load_trajectory_tum(const std::string& path);

// Sidecar of row-major 6x6 covariances, one `t,v00..v55` row per pose.
void save_covariances_csv(const std::vector<double>& times, const std::vector<Mat6>& covariances,
                          const std::string& path);

std::string format_double(double v);  // %.9g

}  // namespace steinscan
