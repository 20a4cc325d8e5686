#pragma once

#include <optional>
#include <vector>

#include "steinscan/manifold.hpp"
#include "steinscan/point_cloud.hpp"

namespace steinscan {

// Per-point residual and derivatives of the point-to-point loss under the
// right-perturbation model. With e = R p + t - q:
//   J = [ -R [p]x , R ]   (3x6, rotation block first)
//   b = -J^T e,  H = J^T J
struct PointTerms {
  Vec3 residual = Vec3::Zero();
  Eigen::Matrix<double, 3, 6> jacobian = Eigen::Matrix<double, 3, 6>::Zero();
  Vec6 gradient = Vec6::Zero();
  Mat6 hessian = Mat6::Zero();
};

PointTerms point_terms(const Pose& pose, const Vec3& p_src, const Vec3& q_tgt);

struct Correspondence {
  int source = 0;
  int target = 0;
};

struct RobustConfig {
  // Huber IRLS weight min(1, delta/||e||); nullopt disables robustification.
  std::optional<double> huber_delta = 0.5;
  // Pairs with ||e|| beyond this are dropped before summation.
  double max_corr_dist = 2.0;
};

struct CloudTerms {
  double loss = 0.0;
  Vec6 gradient = Vec6::Zero();
  Mat6 hessian = Mat6::Zero();
  int matched = 0;
  // Sum of weighted squared residuals; used for residual-scale estimation.
  double weighted_sq_residual = 0.0;
};

// Summed loss/gradient/Hessian over correspondences. Fewer than 6 surviving
// matches is an under-constrained error.
CloudTerms cloud_terms(const Pose& pose, const PointCloud& source, const PointCloud& target,
                       const std::vector<Correspondence>& correspondences,
                       const RobustConfig& robust = RobustConfig{});

// Solves (H + damping I) dxi = b through a positive-definite factorization.
// Fails with a singular-system error when the damped minimum eigenvalue is
// below 1e-12.
Vec6 newton_step(const CloudTerms& terms, double damping);

}  // namespace steinscan
