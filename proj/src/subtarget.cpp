#include "steinscan/subtarget.hpp"

#include <cmath>

#include "steinscan/errors.hpp"

namespace steinscan {

SubTargetIndex build_sub_targets(const PointCloud& source, const KdTree& target_tree,
                                 const Pose& prior, int m) {
  if (m < 1) {
    fail(ErrorCode::invalid_argument, "sub-target neighborhood size must be >= 1");
  }
  SubTargetIndex index;
  index.m = std::min<int>(m, static_cast<int>(target_tree.size()));
  index.neighborhoods.resize(source.size());
  index.coverage_radius.resize(source.size());

  std::vector<int> idx;
  std::vector<double> d2;
  for (std::size_t n = 0; n < source.size(); ++n) {
    target_tree.knn(prior.apply(source.points[n]), index.m, idx, d2);
    index.neighborhoods[n] = idx;
    index.coverage_radius[n] = std::sqrt(d2.back());
  }
  return index;
}

std::pair<int, Vec3> nearest_in_subtarget(const Vec3& p,
                                          const std::vector<int>& neighborhood,
                                          const PointCloud& target) {
  int best = -1;
  double best_d2 = 0.0;
  for (int idx : neighborhood) {
    const double d2 = (target.points[idx] - p).squaredNorm();
    if (best < 0 || d2 < best_d2 || (d2 == best_d2 && idx < best)) {
      best = idx;
      best_d2 = d2;
    }
  }
  if (best < 0) {
    fail(ErrorCode::invalid_argument, "empty sub-target neighborhood");
  }
  return {best, target.points[best]};
}

}  // namespace steinscan
