#include "steinscan/manifold.hpp"

#include <cmath>

namespace steinscan {

Mat3 hat(const Vec3& v) {
  Mat3 m;
  // clang-format off
  m <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return m;
}

Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + w + 0.5 * w * w;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + s * w + c * w * w;
}

Vec3 so3_log(const Mat3& rotation) {
  const double trace = rotation.trace();
  const double cos_theta = std::min(1.0, std::max(-1.0, 0.5 * (trace - 1.0)));
  const double theta = std::acos(cos_theta);
  const Vec3 skew_part = vee(0.5 * (rotation - rotation.transpose()));

  if (theta < kSmallAngle) {
    return skew_part;
  }
  if (trace > -1.0 + 1e-6) {
    return (theta / std::sin(theta)) * skew_part;
  }

  // Near pi the Rodrigues inversion is singular. Recover the axis from the
  // symmetric part, (S - cos(theta) I) / (1 - cos(theta)) = n n^T, and the
  // angle from the skew norm where asin stays well conditioned.
  const double sin_theta = std::min(1.0, skew_part.norm());
  const double theta_near = M_PI - std::asin(sin_theta);
  const Mat3 sym = 0.5 * (rotation + rotation.transpose());
  const Mat3 nnt = (sym - cos_theta * Mat3::Identity()) / (1.0 - cos_theta);
  int k = 0;
  nnt.diagonal().maxCoeff(&k);
  Vec3 axis = nnt.col(k) / std::sqrt(nnt(k, k));
  axis.normalize();

  if (skew_part.norm() > 1e-10) {
    if (skew_part.dot(axis) < 0.0) axis = -axis;
  } else {
    // Exactly pi: both signs are valid logs; pick the one whose
    // largest-magnitude component is positive.
    int j = 0;
    axis.cwiseAbs().maxCoeff(&j);
    if (axis[j] < 0.0) axis = -axis;
  }
  return theta_near * axis;
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * w + (1.0 / 6.0) * w * w;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() + a * w + b * w * w;
}

Mat3 so3_left_jacobian_inv(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * w + (1.0 / 12.0) * w * w;
  }
  const double c =
      1.0 / (theta * theta) -
      (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * w + c * w * w;
}

bool is_rotation(const Mat3& m, double tol) {
  const double ortho = (m.transpose() * m - Mat3::Identity()).norm();
  return ortho <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

Pose Pose::normalized() const {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  return Pose{q.toRotationMatrix(), translation};
}

Pose se3_exp(const Vec6& xi) {
  const Vec3 omega = xi.head<3>();
  const Vec3 rho = xi.tail<3>();
  return Pose{so3_exp(omega), so3_left_jacobian(omega) * rho};
}

Vec6 se3_log(const Pose& pose) {
  const Vec3 omega = so3_log(pose.rotation);
  Vec6 xi;
  xi.head<3>() = omega;
  xi.tail<3>() = so3_left_jacobian_inv(omega) * pose.translation;
  return xi;
}

Pose pose_boxplus(const Pose& base, const Vec6& delta) {
  return base.compose(se3_exp(delta));
}

Mat6 adjoint(const Pose& pose) {
  Mat6 ad = Mat6::Zero();
  ad.block<3, 3>(0, 0) = pose.rotation;
  ad.block<3, 3>(3, 0) = hat(pose.translation) * pose.rotation;
  ad.block<3, 3>(3, 3) = pose.rotation;
  return ad;
}

}  // namespace steinscan
