#include "steinscan/point_cloud.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <map>

#include "steinscan/errors.hpp"

namespace steinscan {

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.timestamp = cloud.timestamp;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(pose.apply(p));
  return out;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0)) {
    fail(ErrorCode::invalid_argument, "voxel size must be positive");
  }

  using Key = std::array<std::int64_t, 3>;
  struct Best {
    std::size_t index;
    double dist2;
  };
  std::map<Key, Best> cells;

  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    Key key{static_cast<std::int64_t>(std::floor(p.x() / voxel)),
            static_cast<std::int64_t>(std::floor(p.y() / voxel)),
            static_cast<std::int64_t>(std::floor(p.z() / voxel))};
    const Vec3 center((key[0] + 0.5) * voxel, (key[1] + 0.5) * voxel,
                      (key[2] + 0.5) * voxel);
    const double d2 = (p - center).squaredNorm();
    auto it = cells.find(key);
    if (it == cells.end()) {
      cells.emplace(key, Best{i, d2});
    } else if (d2 < it->second.dist2) {
      it->second = Best{i, d2};
    }
  }

  PointCloud out;
  out.timestamp = cloud.timestamp;
  out.points.reserve(cells.size());
  for (const auto& [key, best] : cells) {
    out.points.push_back(cloud.points[best.index]);
  }
  return out;
}

}  // namespace steinscan
