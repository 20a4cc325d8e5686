#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace steinscan {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Twist layout used throughout: [rotation(axis-angle, rad); translation(m)].
// All 6x6 covariances, kernels, and filter interfaces follow this block order.
inline constexpr int kRotOffset = 0;
inline constexpr int kTransOffset = 3;

// Angle below which exp/log/left-Jacobian switch to Taylor fallbacks.
inline constexpr double kSmallAngle = 1e-8;

Mat3 hat(const Vec3& v);
Vec3 vee(const Mat3& m);

// Rodrigues rotation. Total on finite input; norms >= pi wrap naturally.
Mat3 so3_exp(const Vec3& omega);

// Principal axis-angle (norm < pi). Rotations near pi use the symmetric-part
// branch; at exactly pi the axis sign is canonicalized (largest-magnitude
// component positive).
Vec3 so3_log(const Mat3& rotation);

// Left Jacobian of SO(3) and its inverse.
Mat3 so3_left_jacobian(const Vec3& omega);
Mat3 so3_left_jacobian_inv(const Vec3& omega);

bool is_rotation(const Mat3& m, double tol = 1e-9);

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return Pose{}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  Pose compose(const Pose& other) const {
    return Pose{rotation * other.rotation, rotation * other.translation + translation};
  }

  Pose inverse() const {
    Mat3 rt = rotation.transpose();
    return Pose{rt, -(rt * translation)};
  }

  // Re-orthonormalizes the rotation; intended for long composition chains,
  // never called inside solver loops.
  Pose normalized() const;
};

Pose se3_exp(const Vec6& xi);
Vec6 se3_log(const Pose& pose);

// Right-multiplicative update: base * exp(delta).
Pose pose_boxplus(const Pose& base, const Vec6& delta);

// 6x6 adjoint in [rot; trans] order: [[R, 0], [[t]x R, R]].
Mat6 adjoint(const Pose& pose);

}  // namespace steinscan
