#pragma once

#include <utility>
#include <vector>

#include "steinscan/kdtree.hpp"
#include "steinscan/manifold.hpp"
#include "steinscan/point_cloud.hpp"

namespace steinscan {

// Per-source-point target neighborhoods, built once per scan pair under the
// prior pose. The per-iteration correspondence search is then restricted to
// these neighborhoods.
struct SubTargetIndex {
  int m = 0;
  // neighborhoods[n] holds target indices sorted by ascending distance to the
  // prior-transformed source point n.
  std::vector<std::vector<int>> neighborhoods;
  // Distance to the m-th neighbor at build time: the radius within which the
  // restricted search can still contain the true nearest neighbor. Residuals
  // beyond it indicate the point outran its candidate set.
  std::vector<double> coverage_radius;
};

// For each source point, its m nearest target points under `prior` applied to
// the source. m clamps to the target size.
SubTargetIndex build_sub_targets(const PointCloud& source, const KdTree& target_tree,
                                 const Pose& prior, int m);

// Closest point within a restricted neighborhood (linear scan). Distance ties
// break by lower target index.
std::pair<int, Vec3> nearest_in_subtarget(const Vec3& p,
                                          const std::vector<int>& neighborhood,
                                          const PointCloud& target);

}  // namespace steinscan
