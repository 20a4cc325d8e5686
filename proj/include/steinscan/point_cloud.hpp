#pragma once

#include <vector>

#include "steinscan/manifold.hpp"

namespace steinscan {

struct PointCloud {
  std::vector<Vec3> points;
  double timestamp = 0.0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

// One representative per occupied voxel: the point closest to the voxel cell
// center, ties broken by lower point index. Output ordered by ascending
// voxel key, which makes the result deterministic.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

}  // namespace steinscan
