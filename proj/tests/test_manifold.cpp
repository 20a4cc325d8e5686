#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "steinscan/manifold.hpp"
#include "test_helpers.hpp"

using namespace steinscan;

TEST_CASE("so3_exp basics") {
  CHECK((so3_exp(Vec3::Zero()) - Mat3::Identity()).norm() == doctest::Approx(0.0));

  // Quarter turn about z maps (1,0,0) to (0,1,0).
  const Mat3 r = so3_exp(Vec3(0.0, 0.0, M_PI / 2.0));
  CHECK((r * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("so3_exp matches truncated power series") {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const Vec3 omega = testutil::random_unit(rng) * 0.3;
    const Mat3 r = so3_exp(omega);
    CHECK((r - testutil::so3_exp_series(omega)).norm() < 1e-12);
    CHECK(is_rotation(r, 1e-12));
  }
}

TEST_CASE("so3_log basics and round trips") {
  CHECK(so3_log(Mat3::Identity()).norm() == doctest::Approx(0.0));

  const Vec3 omega(0.1, -0.2, 0.05);
  CHECK((so3_log(so3_exp(omega)) - omega).norm() < 1e-10);

  // 180 degrees about z, sign canonicalized.
  const Vec3 log_pi = so3_log(so3_exp(Vec3(0.0, 0.0, M_PI)));
  CHECK((log_pi - Vec3(0.0, 0.0, M_PI)).norm() < 1e-9);
}

TEST_CASE("so3 log/exp round trip over the principal branch") {
  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 omega = testutil::random_omega(rng, M_PI - 0.01);
    CHECK((so3_log(so3_exp(omega)) - omega).norm() < 1e-9);
  }
}

TEST_CASE("so3_log near-pi branch") {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const Vec3 omega = testutil::random_unit(rng) * rng.uniform(M_PI - 1e-4, M_PI - 1e-9);
    const Mat3 r = so3_exp(omega);
    const Vec3 back = so3_log(r);
    CHECK((so3_exp(back) - r).norm() < 1e-9);
  }
}

TEST_CASE("se3_exp basics") {
  const Pose id = se3_exp(Vec6::Zero());
  CHECK((id.rotation - Mat3::Identity()).norm() == doctest::Approx(0.0));
  CHECK(id.translation.norm() == doctest::Approx(0.0));

  Vec6 pure_trans;
  pure_trans << 0, 0, 0, 1, 2, 3;
  const Pose t = se3_exp(pure_trans);
  CHECK((t.rotation - Mat3::Identity()).norm() < 1e-15);
  CHECK((t.translation - Vec3(1, 2, 3)).norm() < 1e-15);
}

TEST_CASE("se3_exp matches 4x4 matrix exponential series") {
  Rng rng(14);
  for (int i = 0; i < 50; ++i) {
    Vec6 xi;
    xi.head<3>() = testutil::random_omega(rng, 1.5);
    xi.tail<3>() = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const Pose pose = se3_exp(xi);
    const Eigen::Matrix4d m = testutil::se3_exp_series(xi);
    CHECK((pose.rotation - m.block<3, 3>(0, 0)).norm() < 1e-9);
    CHECK((pose.translation - m.block<3, 1>(0, 3)).norm() < 1e-9);
  }
}

TEST_CASE("se3 log/exp round trip") {
  Rng rng(15);
  for (int i = 0; i < 500; ++i) {
    Vec6 xi;
    xi.head<3>() = testutil::random_omega(rng, M_PI - 0.05);
    xi.tail<3>() = Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    CHECK((se3_log(se3_exp(xi)) - xi).norm() < 1e-9);
  }
}

TEST_CASE("pose_boxplus") {
  Rng rng(16);
  const Pose pose = testutil::random_pose(rng);
  CHECK((pose_boxplus(pose, Vec6::Zero()).rotation - pose.rotation).norm() < 1e-15);
  CHECK((pose_boxplus(pose, Vec6::Zero()).translation - pose.translation).norm() < 1e-15);

  Vec6 xi;
  xi << 0.1, -0.2, 0.3, 1.0, -0.5, 0.25;
  const Pose from_identity = pose_boxplus(Pose::identity(), xi);
  const Pose direct = se3_exp(xi);
  CHECK((from_identity.rotation - direct.rotation).norm() < 1e-15);
  CHECK((from_identity.translation - direct.translation).norm() < 1e-15);

  for (int i = 0; i < 100; ++i) {
    const Pose t = testutil::random_pose(rng);
    Vec6 a;
    a.head<3>() = testutil::random_omega(rng, 1.0);
    a.tail<3>() = Vec3(rng.normal(), rng.normal(), rng.normal());
    const Pose lhs = pose_boxplus(t, a);
    const Pose rhs = t.compose(se3_exp(a));
    CHECK((lhs.rotation - rhs.rotation).norm() < 1e-12);
    CHECK((lhs.translation - rhs.translation).norm() < 1e-12);
  }
}

TEST_CASE("right-perturbation consistency on points") {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const Pose t = testutil::random_pose(rng);
    Vec6 xi;
    xi.head<3>() = testutil::random_omega(rng, 1.0);
    xi.tail<3>() = Vec3(rng.normal(), rng.normal(), rng.normal());
    const Vec3 x(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4));
    const Vec3 lhs = pose_boxplus(t, xi).apply(x);
    const Vec3 rhs = t.apply(se3_exp(xi).apply(x));
    CHECK((lhs - rhs).norm() < 1e-12);
  }
}

TEST_CASE("adjoint structure and homomorphism") {
  CHECK((adjoint(Pose::identity()) - Mat6::Identity()).norm() == doctest::Approx(0.0));

  Rng rng(18);
  Pose pure_rot;
  pure_rot.rotation = so3_exp(testutil::random_omega(rng, 2.0));
  const Mat6 ad_r = adjoint(pure_rot);
  CHECK((ad_r.block<3, 3>(0, 0) - pure_rot.rotation).norm() < 1e-15);
  CHECK((ad_r.block<3, 3>(3, 3) - pure_rot.rotation).norm() < 1e-15);
  CHECK(ad_r.block<3, 3>(3, 0).norm() == doctest::Approx(0.0));
  CHECK(ad_r.block<3, 3>(0, 3).norm() == doctest::Approx(0.0));

  for (int i = 0; i < 200; ++i) {
    const Pose t1 = testutil::random_pose(rng);
    const Pose t2 = testutil::random_pose(rng);
    CHECK((adjoint(t1.compose(t2)) - adjoint(t1) * adjoint(t2)).norm() < 1e-10);
  }
}

TEST_CASE("adjoint maps exp between frames") {
  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    const Pose t = testutil::random_pose(rng);
    Vec6 xi;
    xi.head<3>() = testutil::random_omega(rng, 0.5);
    xi.tail<3>() = 0.5 * Vec3(rng.normal(), rng.normal(), rng.normal());
    const Pose lhs = se3_exp(adjoint(t) * xi);
    const Pose rhs = t.compose(se3_exp(xi)).compose(t.inverse());
    CHECK((lhs.rotation - rhs.rotation).norm() < 1e-9);
    CHECK((lhs.translation - rhs.translation).norm() < 1e-8);
  }
}

TEST_CASE("adjoint transport preserves symmetry and PSD") {
  Rng rng(20);
  for (int i = 0; i < 100; ++i) {
    Mat6 a;
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) a(r, c) = rng.normal();
    }
    const Mat6 psd = a * a.transpose();
    const Pose t = testutil::random_pose(rng);
    const Mat6 moved = adjoint(t) * psd * adjoint(t).transpose();
    CHECK((moved - moved.transpose()).norm() < 1e-9 * std::max(1.0, moved.norm()));
    Eigen::SelfAdjointEigenSolver<Mat6> eig(0.5 * (moved + moved.transpose()));
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, moved.norm()));
  }
}

TEST_CASE("group closure under long composition chains") {
  Rng rng(21);
  Pose acc = Pose::identity();
  for (int i = 0; i < 10000; ++i) {
    Vec6 xi;
    xi.head<3>() = testutil::random_omega(rng, 0.2);
    xi.tail<3>() = 0.1 * Vec3(rng.normal(), rng.normal(), rng.normal());
    acc = acc.compose(se3_exp(xi));
  }
  const Mat3 gram = acc.rotation.transpose() * acc.rotation;
  CHECK((gram - Mat3::Identity()).norm() < 1e-7);
  CHECK(is_rotation(acc.normalized().rotation, 1e-12));
}
