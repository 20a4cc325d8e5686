#pragma once

#include <cstdint>
#include <vector>

#include "steinscan/fusion_types.hpp"
#include "steinscan/manifold.hpp"
#include "steinscan/point_cloud.hpp"
#include "steinscan/solver.hpp"

namespace steinscan {

using Mat15 = Eigen::Matrix<double, 15, 15>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat6x15 = Eigen::Matrix<double, 6, 15>;

// Error-state layout: [dp(0:3), dv(3:6), dtheta(6:9), db_acc(9:12), db_gyro(12:15)].
// The pose error (dp, dtheta) is a right perturbation of the nominal pose, so
// corrections are injected with boxplus.
inline constexpr int kErrPos = 0;
inline constexpr int kErrVel = 3;
inline constexpr int kErrAtt = 6;
inline constexpr int kErrBa = 9;
inline constexpr int kErrBg = 12;

struct ImuNoise {
  double accel_density = 0.02;   // m/s^2 / sqrt(Hz)
  double gyro_density = 0.002;   // rad/s / sqrt(Hz)
  double accel_bias_rw = 1e-4;   // m/s^3 / sqrt(Hz)
  double gyro_bias_rw = 1e-5;    // rad/s^2 / sqrt(Hz)
};

enum class Propagation { imu, constant_velocity };

struct FilterConfig {
  Propagation propagation = Propagation::imu;
  ImuNoise imu;
  // Process noise densities for the constant-velocity model.
  double cv_accel_density = 0.5;
  double cv_gyro_density = 0.1;
  // Adaptive mode feeds the solver's particle covariance into the gain; fixed
  // mode substitutes the configured variances.
  bool adaptive_noise = true;
  double fixed_translation_var = 1e-4;  // m^2
  double fixed_rotation_var = 1e-5;     // rad^2
  double init_position_std = 0.01;
  double init_velocity_std = 0.05;
  double init_attitude_std = 0.005;
  double init_accel_bias_std = 0.01;
  double init_gyro_bias_std = 0.001;
  bool gravity_align = false;  // initial roll/pitch from early accel samples
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
};

// Observation matrix of the pose measurement: selects [dp, dtheta].
Mat6x15 observation_matrix();

// Measurement layout adapter: solver twists are [rot; trans], the filter
// observes [dp; dtheta].
Vec6 solver_to_measurement(const Vec6& twist);
Mat6 solver_to_measurement_cov(const Mat6& cov);
Mat6 measurement_to_solver_cov(const Mat6& cov);

struct Ekf {
  NavState state;
  Mat15 covariance = Mat15::Identity();
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);

  static Ekf init(const FilterConfig& config, const Pose& initial_pose, double time);

  // Discrete preintegration over time-ordered samples up to t_end; covariance
  // by first-order transition with additive process noise.
  void propagate_imu(const std::vector<ImuSample>& samples, std::size_t begin, std::size_t end,
                     double t_end, const ImuNoise& noise);

  void propagate_cv(double dt, const FilterConfig& config);

  // Innovation is the solver's mean perturbation twist with covariance
  // meas_cov (both in solver [rot; trans] order). Returns the Frobenius norm
  // of the Kalman gain.
  double update(const Vec6& innovation_twist, const Mat6& meas_cov);

  // 6x6 pose covariance block in solver [rot; trans] order.
  Mat6 pose_covariance_solver_order() const;
};

struct FusionResult {
  std::vector<double> times;
  std::vector<Pose> poses;
  std::vector<Mat6> pose_covariances;  // [rot; trans] order
  std::vector<double> gain_norms;
  std::vector<int> solver_iterations;
  std::vector<bool> solver_converged;
};

// The solver is fed the filter's pose prior, so its posterior covariance
// contains that prior's information. The measurement handed to the Kalman
// update is de-fused: posterior information minus the injected prior
// information (floored for numerical safety). Along unobserved directions the
// two cancel and the gain vanishes.
Mat6 defuse_measurement_covariance(const Mat6& posterior_cov, const Mat6& prior_cov);

// Aligns every scan (sensor frame) against a fixed map cloud (world frame):
// propagate to scan time, solve with the filter's pose prior, update.
FusionResult run_fusion(const PointCloud& map, const std::vector<std::pair<double, PointCloud>>& scans,
                        const std::vector<ImuSample>& imu, const SolverConfig& solver_config,
                        const FilterConfig& filter_config, const Pose& initial_pose,
                        const Vec3& initial_velocity, std::uint64_t seed);

}  // namespace steinscan
