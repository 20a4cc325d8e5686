#pragma once

#include <cstdint>
#include <vector>

#include "steinscan/manifold.hpp"
#include "steinscan/point_cloud.hpp"
#include "steinscan/solver.hpp"

namespace steinscan {

struct McConfig {
  int samples = 1000;
  // Std of the initial-pose perturbation around ground truth, [rot; trans].
  Vec6 init_sigma = (Vec6() << 0.05, 0.05, 0.05, 0.1, 0.1, 0.1).finished();
  double point_sigma = 0.02;  // per-axis sensor noise added to the source, meters
  double quantile = 0.9;      // fraction of smallest-norm samples kept
  double divergence_rms = 0.5;  // samples with larger weighted RMS residual are flagged
  int gn_max_iterations = 60;
  double gn_eps = 1e-12;
  int neighborhood_size = 20;
  RobustConfig robust;
  int threads = 1;
};

// Pseudo-true ICP distribution: each sample perturbs the initial pose and the
// source points, then runs the deterministic Gauss-Newton path (K=1 solver)
// to convergence. Twists are relative to ground truth, in right-tangent
// [rot; trans] coordinates.
struct McDistribution {
  std::vector<Vec6> twists;  // converged, non-divergent samples
  Vec6 mean = Vec6::Zero();
  Mat6 covariance = Mat6::Zero();           // quantile-filtered
  Vec6 mean_unfiltered = Vec6::Zero();
  Mat6 covariance_unfiltered = Mat6::Zero();
  std::vector<int> kept;  // indices into `twists` after the quantile cut
  int diverged = 0;
};

McDistribution mc_icp_distribution(const PointCloud& source, const PointCloud& target,
                                   const Pose& ground_truth, const McConfig& config,
                                   std::uint64_t seed);

enum class TwistBlock { rotation, translation };

// KL(a || b) between two 3-D Gaussians; covariances regularized by +1e-12 I.
double gaussian_kl(const Vec3& mean_a, const Mat3& cov_a, const Vec3& mean_b, const Mat3& cov_b);
double gaussian_kl_block(const Vec6& mean_a, const Mat6& cov_a, const Vec6& mean_b,
                         const Mat6& cov_b, TwistBlock block);

// NNE = sqrt( (1/(3M)) sum_i e_i^T Sigma_i^{-1} e_i ); 1 for calibrated
// covariances.
double nne(const std::vector<Vec3>& errors, const std::vector<Mat3>& covariances);

struct ConsistencyReport {
  double kl_trans = 0.0;
  double kl_rot = 0.0;
  double nne_trans = 0.0;
  double nne_rot = 0.0;
  double cutoff_quantile = 0.9;
  int mc_kept = 0;
  int mc_diverged = 0;
  int estimator_runs = 0;
  Vec6 mc_mean = Vec6::Zero();
  Mat6 mc_covariance = Mat6::Zero();
  Vec6 mean_error = Vec6::Zero();
  double mean_translation_error_norm = 0.0;
  Mat6 mean_estimated_covariance = Mat6::Zero();
  double mean_iterations = 0.0;
  double mean_runtime_s = 0.0;
};

// Runs the estimator repeatedly under the MC perturbation protocol (prior =
// gt boxplus N(0, init_sigma), fresh source noise, Gaussian prior term on) and
// scores its pose/covariance output against the MC pseudo-truth. KL direction
// is KL(estimate || oracle), averaged over runs.
ConsistencyReport evaluate_consistency(const PointCloud& source, const PointCloud& target,
                                       const Pose& ground_truth, const SolverConfig& solver_config,
                                       const McConfig& mc_config, const McDistribution& mc,
                                       int runs, std::uint64_t seed);

struct AblationRow {
  int particle_count = 0;
  std::uint64_t seed = 0;
  double translation_error = 0.0;  // mean ||trans error|| over runs
  double runtime_s = 0.0;
  double avg_iterations = 0.0;
  bool metrics_available = false;  // false at K=1 (no spread, no covariance)
  double kl_trans = 0.0;
  double kl_rot = 0.0;
  double nne_trans = 0.0;
  double nne_rot = 0.0;
};

std::vector<AblationRow> ablation_sweep(const PointCloud& source, const PointCloud& target,
                                        const Pose& ground_truth,
                                        const std::vector<int>& particle_counts,
                                        const std::vector<std::uint64_t>& seeds,
                                        const SolverConfig& base_config, const McConfig& mc_config,
                                        int runs);

}  // namespace steinscan
