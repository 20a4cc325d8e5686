#include "steinscan/fusion.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "steinscan/errors.hpp"
#include "steinscan/log.hpp"
#include "steinscan/rng.hpp"

namespace steinscan {

Mat6x15 observation_matrix() {
  Mat6x15 c = Mat6x15::Zero();
  c.block<3, 3>(0, kErrPos) = Mat3::Identity();
  c.block<3, 3>(3, kErrAtt) = Mat3::Identity();
  return c;
}

Vec6 solver_to_measurement(const Vec6& twist) {
  Vec6 z;
  z.head<3>() = twist.tail<3>();  // dp
  z.tail<3>() = twist.head<3>();  // dtheta
  return z;
}

static Mat6 swap_blocks(const Mat6& cov) {
  Mat6 out;
  out.block<3, 3>(0, 0) = cov.block<3, 3>(3, 3);
  out.block<3, 3>(0, 3) = cov.block<3, 3>(3, 0);
  out.block<3, 3>(3, 0) = cov.block<3, 3>(0, 3);
  out.block<3, 3>(3, 3) = cov.block<3, 3>(0, 0);
  return out;
}

Mat6 solver_to_measurement_cov(const Mat6& cov) { return swap_blocks(cov); }
Mat6 measurement_to_solver_cov(const Mat6& cov) { return swap_blocks(cov); }

Ekf Ekf::init(const FilterConfig& config, const Pose& initial_pose, double time) {
  Ekf ekf;
  ekf.state.pose = initial_pose;
  ekf.state.time = time;
  ekf.gravity = config.gravity;
  ekf.covariance = Mat15::Zero();
  auto set_block = [&](int off, double std_dev) {
    ekf.covariance.block<3, 3>(off, off) = std_dev * std_dev * Mat3::Identity();
  };
  set_block(kErrPos, config.init_position_std);
  set_block(kErrVel, config.init_velocity_std);
  set_block(kErrAtt, config.init_attitude_std);
  set_block(kErrBa, config.init_accel_bias_std);
  set_block(kErrBg, config.init_gyro_bias_std);
  return ekf;
}

namespace {

// One mechanization step with zero-order-hold IMU readings over dt.
void imu_step(Ekf& ekf, const Vec3& accel_meas, const Vec3& gyro_meas, double dt,
              const ImuNoise& noise) {
  NavState& s = ekf.state;
  const Vec3 omega = gyro_meas - s.gyro_bias;
  const Vec3 accel = accel_meas - s.accel_bias;

  const Mat3 r_prev = s.pose.rotation;
  const Mat3 r_new = r_prev * so3_exp(omega * dt);
  const Vec3 a_world = 0.5 * (r_prev + r_new) * accel + ekf.gravity;

  s.pose.translation += s.velocity * dt + 0.5 * a_world * dt * dt;
  s.velocity += a_world * dt;
  s.pose.rotation = r_new;
  s.time += dt;

  const Mat3 a_t = so3_exp(-omega * dt);  // transports body-frame errors
  Mat15 f = Mat15::Identity();
  f.block<3, 3>(kErrPos, kErrPos) = a_t;
  f.block<3, 3>(kErrPos, kErrVel) = a_t * r_prev.transpose() * dt;
  f.block<3, 3>(kErrVel, kErrAtt) = -r_prev * hat(accel) * dt;
  f.block<3, 3>(kErrVel, kErrBa) = -r_prev * dt;
  f.block<3, 3>(kErrAtt, kErrAtt) = a_t;
  f.block<3, 3>(kErrAtt, kErrBg) = -Mat3::Identity() * dt;

  Mat15 q = Mat15::Zero();
  q.block<3, 3>(kErrVel, kErrVel) =
      noise.accel_density * noise.accel_density * dt * Mat3::Identity();
  q.block<3, 3>(kErrAtt, kErrAtt) =
      noise.gyro_density * noise.gyro_density * dt * Mat3::Identity();
  q.block<3, 3>(kErrBa, kErrBa) =
      noise.accel_bias_rw * noise.accel_bias_rw * dt * Mat3::Identity();
  q.block<3, 3>(kErrBg, kErrBg) =
      noise.gyro_bias_rw * noise.gyro_bias_rw * dt * Mat3::Identity();

  ekf.covariance = f * ekf.covariance * f.transpose() + q;
  ekf.covariance = 0.5 * (ekf.covariance + ekf.covariance.transpose()).eval();
}

}  // namespace

void Ekf::propagate_imu(const std::vector<ImuSample>& samples, std::size_t begin, std::size_t end,
                        double t_end, const ImuNoise& noise) {
  for (std::size_t i = begin; i < end; ++i) {
    const ImuSample& s = samples[i];
    if (s.time <= state.time) {
      fail(ErrorCode::invalid_argument, "IMU timestamps must strictly increase");
    }
    imu_step(*this, s.accel, s.gyro, s.time - state.time, noise);
  }
  // Coast on the last reading when the stream stops short of t_end.
  if (t_end > state.time + 1e-12) {
    const Vec3 accel = end > begin ? samples[end - 1].accel : Vec3(-gravity);
    const Vec3 gyro = end > begin ? samples[end - 1].gyro : Vec3::Zero();
    imu_step(*this, accel, gyro, t_end - state.time, noise);
  }
}

void Ekf::propagate_cv(double dt, const FilterConfig& config) {
  if (!(dt > 0.0)) fail(ErrorCode::invalid_argument, "constant-velocity dt must be > 0");
  state.pose.translation += state.velocity * dt;
  state.time += dt;

  Mat15 f = Mat15::Identity();
  f.block<3, 3>(kErrPos, kErrVel) = state.pose.rotation.transpose() * dt;

  Mat15 q = Mat15::Zero();
  q.block<3, 3>(kErrVel, kErrVel) =
      config.cv_accel_density * config.cv_accel_density * dt * Mat3::Identity();
  q.block<3, 3>(kErrAtt, kErrAtt) =
      config.cv_gyro_density * config.cv_gyro_density * dt * Mat3::Identity();

  covariance = f * covariance * f.transpose() + q;
  covariance = 0.5 * (covariance + covariance.transpose()).eval();
}

double Ekf::update(const Vec6& innovation_twist, const Mat6& meas_cov) {
  const Mat6x15 c = observation_matrix();
  const Vec6 z = solver_to_measurement(innovation_twist);
  const Mat6 r = solver_to_measurement_cov(meas_cov);

  const Mat6 s = c * covariance * c.transpose() + r;
  Eigen::LDLT<Mat6> ldlt(s);
  if (ldlt.info() != Eigen::Success) {
    fail(ErrorCode::singular, "innovation covariance is not invertible");
  }
  const Eigen::Matrix<double, 15, 6> gain =
      covariance * c.transpose() * ldlt.solve(Mat6::Identity());

  const Vec15 dx = gain * z;
  Vec6 pose_correction;
  pose_correction.head<3>() = dx.segment<3>(kErrAtt);
  pose_correction.tail<3>() = dx.segment<3>(kErrPos);
  state.pose = pose_boxplus(state.pose, pose_correction);
  state.velocity += dx.segment<3>(kErrVel);
  state.accel_bias += dx.segment<3>(kErrBa);
  state.gyro_bias += dx.segment<3>(kErrBg);

  // Joseph form keeps the covariance symmetric PSD for any gain.
  const Mat15 ikc = Mat15::Identity() - gain * c;
  covariance = ikc * covariance * ikc.transpose() + gain * r * gain.transpose();
  covariance = 0.5 * (covariance + covariance.transpose()).eval();
  return gain.norm();
}

Mat6 Ekf::pose_covariance_solver_order() const {
  const Mat6x15 c = observation_matrix();
  const Mat6 meas_order = c * covariance * c.transpose();
  return measurement_to_solver_cov(meas_order);
}

Mat6 defuse_measurement_covariance(const Mat6& posterior_cov, const Mat6& prior_cov) {
  const Mat6 posterior_info =
      Eigen::LDLT<Mat6>(posterior_cov + 1e-10 * Mat6::Identity()).solve(Mat6::Identity());
  const Mat6 prior_info =
      Eigen::LDLT<Mat6>(prior_cov + 1e-10 * Mat6::Identity()).solve(Mat6::Identity());
  Mat6 info = posterior_info - prior_info;
  info = 0.5 * (info + info.transpose()).eval();
  // Floor the information so near-cancelling directions map to a large but
  // finite measurement variance (gain -> 0).
  Eigen::SelfAdjointEigenSolver<Mat6> eig(info);
  const Vec6 lambda = eig.eigenvalues().cwiseMax(1e-6);
  const Mat6 cov = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() *
                   eig.eigenvectors().transpose();
  return 0.5 * (cov + cov.transpose());
}

FusionResult run_fusion(const PointCloud& map, const std::vector<std::pair<double, PointCloud>>& scans,
                        const std::vector<ImuSample>& imu, const SolverConfig& solver_config,
                        const FilterConfig& filter_config, const Pose& initial_pose,
                        const Vec3& initial_velocity, std::uint64_t seed) {
  if (scans.empty()) fail(ErrorCode::invalid_argument, "no scans to fuse");
  for (std::size_t i = 1; i < scans.size(); ++i) {
    if (scans[i].first <= scans[i - 1].first) {
      fail(ErrorCode::invalid_argument, "scan timestamps must strictly increase");
    }
  }

  const bool use_imu = filter_config.propagation == Propagation::imu;
  if (use_imu) {
    if (imu.empty()) fail(ErrorCode::config, "IMU propagation selected but no IMU stream given");
    const double lead = imu.size() > 1 ? 2.0 * (imu[1].time - imu[0].time) : 0.1;
    if (scans.front().first < imu.front().time - lead ||
        scans.back().first > imu.back().time + 1e-9) {
      fail(ErrorCode::invalid_argument, "scan timestamps fall outside the IMU span");
    }
  }

  Pose init = initial_pose;
  if (use_imu && filter_config.gravity_align) {
    Vec3 mean_acc = Vec3::Zero();
    const std::size_t n = std::min<std::size_t>(imu.size(), 50);
    for (std::size_t i = 0; i < n; ++i) mean_acc += imu[i].accel;
    mean_acc /= static_cast<double>(n);
    const Eigen::Quaterniond q =
        Eigen::Quaterniond::FromTwoVectors(mean_acc, -filter_config.gravity);
    init.rotation = q.toRotationMatrix();
  }

  const double t0 = scans.front().first;
  Ekf ekf = Ekf::init(filter_config, init, t0);
  ekf.state.velocity = initial_velocity;

  SolverConfig cfg = solver_config;
  cfg.use_prior = true;

  FusionResult result;
  std::size_t imu_cursor = 0;
  if (use_imu) {
    while (imu_cursor < imu.size() && imu[imu_cursor].time <= t0) ++imu_cursor;
  }

  for (std::size_t k = 0; k < scans.size(); ++k) {
    const double t_scan = scans[k].first;
    if (t_scan > ekf.state.time + 1e-12) {
      if (use_imu) {
        std::size_t end = imu_cursor;
        while (end < imu.size() && imu[end].time <= t_scan) ++end;
        ekf.propagate_imu(imu, imu_cursor, end, t_scan, filter_config.imu);
        imu_cursor = end;
      } else {
        ekf.propagate_cv(t_scan - ekf.state.time, filter_config);
      }
    }

    PoseWithCovariance prior;
    prior.pose = ekf.state.pose;
    prior.covariance = ekf.pose_covariance_solver_order();

    const PoseWithCovariance est =
        solve_icp(prior, scans[k].second, map, cfg, Rng::derive(seed, k));

    Mat6 meas_cov;
    if (filter_config.adaptive_noise) {
      meas_cov = defuse_measurement_covariance(est.icp_covariance, prior.covariance);
    } else {
      meas_cov = Mat6::Zero();
      meas_cov.block<3, 3>(0, 0) = filter_config.fixed_rotation_var * Mat3::Identity();
      meas_cov.block<3, 3>(3, 3) = filter_config.fixed_translation_var * Mat3::Identity();
    }

    const double gain_norm = ekf.update(est.mean_twist, meas_cov);

    result.times.push_back(t_scan);
    result.poses.push_back(ekf.state.pose);
    result.pose_covariances.push_back(ekf.pose_covariance_solver_order());
    result.gain_norms.push_back(gain_norm);
    result.solver_iterations.push_back(est.iterations);
    result.solver_converged.push_back(est.converged);
  }
  return result;
}

}  // namespace steinscan
