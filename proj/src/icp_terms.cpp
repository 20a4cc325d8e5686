#include "steinscan/icp_terms.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "steinscan/errors.hpp"

namespace steinscan {

PointTerms point_terms(const Pose& pose, const Vec3& p_src, const Vec3& q_tgt) {
  PointTerms t;
  t.residual = pose.apply(p_src) - q_tgt;
  t.jacobian.block<3, 3>(0, 0) = -pose.rotation * hat(p_src);
  t.jacobian.block<3, 3>(0, 3) = pose.rotation;
  t.gradient = -t.jacobian.transpose() * t.residual;
  t.hessian = t.jacobian.transpose() * t.jacobian;
  return t;
}

CloudTerms cloud_terms(const Pose& pose, const PointCloud& source, const PointCloud& target,
                       const std::vector<Correspondence>& correspondences,
                       const RobustConfig& robust) {
  CloudTerms sum;
  for (const Correspondence& c : correspondences) {
    const PointTerms t = point_terms(pose, source.points[c.source], target.points[c.target]);
    const double r = t.residual.norm();
    if (r > robust.max_corr_dist) continue;

    if (robust.huber_delta && r > *robust.huber_delta) {
      const double delta = *robust.huber_delta;
      const double w = delta / r;
      sum.loss += delta * (2.0 * r - delta);
      sum.gradient += w * t.gradient;
      sum.hessian += w * t.hessian;
      sum.weighted_sq_residual += w * r * r;
    } else {
      sum.loss += r * r;
      sum.gradient += t.gradient;
      sum.hessian += t.hessian;
      sum.weighted_sq_residual += r * r;
    }
    ++sum.matched;
  }
  if (sum.matched < 6) {
    fail(ErrorCode::underconstrained,
         "under-constrained alignment: " + std::to_string(sum.matched) +
             " correspondences survive rejection (need 6)");
  }
  return sum;
}

Vec6 newton_step(const CloudTerms& terms, double damping) {
  const Mat6 a = terms.hessian + damping * Mat6::Identity();
  Eigen::SelfAdjointEigenSolver<Mat6> eig(a);
  if (eig.eigenvalues().minCoeff() < 1e-12) {
    fail(ErrorCode::singular, "singular normal equations in newton_step");
  }
  return Eigen::LLT<Mat6>(a).solve(terms.gradient);
}

}  // namespace steinscan
