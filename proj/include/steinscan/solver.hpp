#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "steinscan/icp_terms.hpp"
#include "steinscan/manifold.hpp"
#include "steinscan/point_cloud.hpp"

namespace steinscan {

enum class SolverMode { svn, svgd };

// Length scale of the RBF kernel coupling particles; either re-estimated per
// iteration from the median pairwise distance or pinned to a fixed value.
struct BandwidthConfig {
  bool median = true;
  double fixed = 1.0;
};

// Scale of the log-likelihood -L/(2 sigma^2). `adaptive` estimates the
// matching-noise floor from the residuals at the mean pose each iteration and
// tempers it by `temper`: matching noise between resampled scans is
// correlated across neighboring points, so the effective per-point
// information is discounted by temper^2. `unit` reproduces the raw
// gradient/Hessian form. Newton directions at K=1 are invariant to this
// scale; only the particle-coupling equilibrium feels it.
struct NoiseModel {
  enum class Kind { unit, fixed, adaptive } kind = Kind::adaptive;
  double sigma = 0.1;   // fixed mode
  double temper = 4.0;  // adaptive mode
};

struct SolverConfig {
  int particle_count = 30;
  // Per-axis std of the initial particle draw, [rot(rad); trans(m)]. The
  // rotation std is kept below the correspondence basin of long scenes
  // (lever arm times rotation must stay inside the sub-target neighborhoods).
  Vec6 init_sigma = (Vec6() << 0.01, 0.01, 0.01, 0.1, 0.1, 0.1).finished();
  int max_iterations = 100;
  // Early stop when the mean squared particle update falls below this.
  double early_stop_eps = 1e-6;
  BandwidthConfig bandwidth;
  SolverMode mode = SolverMode::svn;
  double svgd_step_size = 0.01;  // Adam learning rate, betas (0.9, 0.999)
  // When true, the log-prior gradient -prior_cov^{-1} xi is added to each
  // particle's gradient.
  bool use_prior = false;
  int neighborhood_size = 20;
  RobustConfig robust;
  NoiseModel noise;
  bool karcher_refine = false;
  int threads = 1;
};

// Relative spectrum floor applied before inverting Newton systems: curvature
// below this fraction of the largest eigenvalue is clamped, bounding steps
// along degenerate directions (standard eigenvalue degeneracy guard).
inline constexpr double kConditionFloor = 1e-2;

// Posterior pose and covariance, plus the raw perturbation statistics the
// fusion filter consumes. Covariances use the [rot; trans] twist order.
struct PoseWithCovariance {
  Pose pose;
  Mat6 covariance = Mat6::Zero();      // prior covariance + Ad Sigma_icp Ad^T
  Vec6 mean_twist = Vec6::Zero();      // mean particle perturbation
  Mat6 icp_covariance = Mat6::Zero();  // particle sample covariance
  int iterations = 0;
  bool converged = false;
};

// Optional per-iteration diagnostics.
struct SolveTrace {
  std::vector<double> update_mean_norm;  // (1/K) sum ||dxi_k||
  std::vector<double> update_mean_sq;    // (1/K) sum ||dxi_k||^2 (stop metric)
  std::vector<double> residual_sigma;    // estimated residual scale per iteration
  std::vector<Vec6> final_particles;
  int frozen_updates = 0;
  // Set before the call to capture the particle set after every iteration.
  bool record_history = false;
  std::vector<std::vector<Vec6>> particle_history;
};

struct ParticleSet {
  std::vector<Vec6> twists;
  int iteration = 0;
};

ParticleSet init_particles(const SolverConfig& config, std::uint64_t seed);

// k(a, b) = exp(-||a-b||^2 / h); optionally also the gradient w.r.t. `a`.
double rbf_kernel(const Vec6& a, const Vec6& b, double h, Vec6* grad_a = nullptr);

// h = med^2 / log(K+1) over the K(K-1)/2 pairwise distances (lower median),
// floored at 1e-6. Fewer than two particles returns the floor.
double median_bandwidth(const std::vector<Vec6>& particles);

// phi*(xi_k) = (1/K) sum_l [ k(xi_l, xi_k) g_l + grad_{xi_l} k(xi_l, xi_k) ].
std::vector<Vec6> svgd_direction(const std::vector<Vec6>& particles,
                                 const std::vector<Vec6>& gradients, double h);

// H~(xi_k) = (1/K) sum_l [ H_l k(xi_l, xi_k)^2 + (grad k)(grad k)^T ].
Mat6 svn_hessian(const std::vector<Vec6>& particles, const std::vector<Mat6>& hessians,
                 double h, int k);

PoseWithCovariance solve_icp(const PoseWithCovariance& prior, const PointCloud& source,
                             const PointCloud& target, const SolverConfig& config,
                             std::uint64_t seed, SolveTrace* trace = nullptr);

}  // namespace steinscan
