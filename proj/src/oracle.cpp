#include "steinscan/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "steinscan/errors.hpp"
#include "steinscan/parallel.hpp"
#include "steinscan/rng.hpp"

namespace steinscan {

namespace {

PointCloud perturb_points(const PointCloud& cloud, double sigma, Rng& rng) {
  PointCloud out;
  out.timestamp = cloud.timestamp;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) {
    out.points.emplace_back(p.x() + sigma * rng.normal(), p.y() + sigma * rng.normal(),
                            p.z() + sigma * rng.normal());
  }
  return out;
}

Vec6 draw_twist(const Vec6& sigma, Rng& rng) {
  Vec6 xi;
  for (int i = 0; i < 6; ++i) xi[i] = sigma[i] * rng.normal();
  return xi;
}

SolverConfig gn_config(const McConfig& config) {
  SolverConfig cfg;
  cfg.particle_count = 1;
  cfg.init_sigma = Vec6::Zero();
  cfg.max_iterations = config.gn_max_iterations;
  cfg.early_stop_eps = config.gn_eps;
  cfg.mode = SolverMode::svn;
  cfg.use_prior = false;
  cfg.neighborhood_size = config.neighborhood_size;
  cfg.robust = config.robust;
  cfg.threads = 1;
  return cfg;
}

Mat6 sample_covariance(const std::vector<Vec6>& twists, const std::vector<int>& subset,
                       Vec6* mean_out) {
  Vec6 mean = Vec6::Zero();
  for (int i : subset) mean += twists[i];
  mean /= std::max<std::size_t>(subset.size(), 1);
  Mat6 cov = Mat6::Zero();
  for (int i : subset) {
    const Vec6 d = twists[i] - mean;
    cov += d * d.transpose();
  }
  if (subset.size() > 1) cov /= static_cast<double>(subset.size() - 1);
  if (mean_out != nullptr) *mean_out = mean;
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

McDistribution mc_icp_distribution(const PointCloud& source, const PointCloud& target,
                                   const Pose& ground_truth, const McConfig& config,
                                   std::uint64_t seed) {
  if (config.samples < 2) fail(ErrorCode::config, "mc samples must be >= 2");
  if (!(config.quantile > 0.0 && config.quantile <= 1.0)) {
    fail(ErrorCode::config, "mc quantile must lie in (0, 1]");
  }

  const SolverConfig gn = gn_config(config);
  const Pose gt_inv = ground_truth.inverse();

  struct Sample {
    Vec6 twist;
    bool ok = false;
  };
  std::vector<Sample> samples(config.samples);

  parallel_for(config.samples, config.threads, [&](int s) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(s)));
    const Vec6 delta = draw_twist(config.init_sigma, rng);
    PoseWithCovariance prior;
    prior.pose = pose_boxplus(ground_truth, delta);
    const PointCloud noisy =
        config.point_sigma > 0.0 ? perturb_points(source, config.point_sigma, rng) : source;

    SolveTrace trace;
    try {
      const PoseWithCovariance est = solve_icp(prior, noisy, target, gn, 0, &trace);
      const double rms = trace.residual_sigma.empty() ? 0.0 : trace.residual_sigma.back();
      if (est.converged && rms <= config.divergence_rms) {
        samples[s].twist = se3_log(gt_inv.compose(est.pose));
        samples[s].ok = true;
      }
    } catch (const Error&) {
      samples[s].ok = false;
    }
  });

  McDistribution dist;
  for (const Sample& s : samples) {
    if (s.ok) {
      dist.twists.push_back(s.twist);
    } else {
      ++dist.diverged;
    }
  }
  if (static_cast<int>(dist.twists.size()) < 10) {
    fail(ErrorCode::invalid_argument,
         "mc_icp_distribution: only " + std::to_string(dist.twists.size()) +
             " samples converged (need 10)");
  }

  std::vector<int> all(dist.twists.size());
  std::iota(all.begin(), all.end(), 0);
  dist.covariance_unfiltered = sample_covariance(dist.twists, all, &dist.mean_unfiltered);

  // Quantile cut: drop the most atypical samples, ranked by Mahalanobis
  // distance under the unfiltered spread so every direction is trimmed
  // proportionally.
  const Mat6 whitener = dist.covariance_unfiltered + 1e-10 * Mat6::Identity();
  const Eigen::LDLT<Mat6> ldlt(whitener);
  auto maha = [&](int i) {
    const Vec6 d = dist.twists[i] - dist.mean_unfiltered;
    return d.dot(ldlt.solve(d));
  };
  std::vector<int> order = all;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double na = maha(a);
    const double nb = maha(b);
    if (na != nb) return na < nb;
    return a < b;
  });
  const std::size_t keep = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::floor(config.quantile * order.size())));
  order.resize(std::min(keep, order.size()));
  std::sort(order.begin(), order.end());
  dist.kept = order;
  dist.covariance = sample_covariance(dist.twists, dist.kept, &dist.mean);
  return dist;
}

double gaussian_kl(const Vec3& mean_a, const Mat3& cov_a, const Vec3& mean_b, const Mat3& cov_b) {
  const Mat3 a = cov_a + 1e-12 * Mat3::Identity();
  const Mat3 b = cov_b + 1e-12 * Mat3::Identity();
  Eigen::LLT<Mat3> llt_a(a);
  Eigen::LLT<Mat3> llt_b(b);
  if (llt_a.info() != Eigen::Success || llt_b.info() != Eigen::Success) {
    fail(ErrorCode::invalid_argument, "gaussian_kl: covariance not positive definite");
  }
  auto log_det = [](const Eigen::LLT<Mat3>& llt) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += std::log(llt.matrixL()(i, i));
    return 2.0 * s;
  };
  const Mat3 b_inv_a = llt_b.solve(a);
  const Vec3 dm = mean_b - mean_a;
  const double maha = dm.dot(llt_b.solve(dm));
  return 0.5 * (b_inv_a.trace() + maha - 3.0 + log_det(llt_b) - log_det(llt_a));
}

double gaussian_kl_block(const Vec6& mean_a, const Mat6& cov_a, const Vec6& mean_b,
                         const Mat6& cov_b, TwistBlock block) {
  const int off = block == TwistBlock::rotation ? 0 : 3;
  return gaussian_kl(mean_a.segment<3>(off), cov_a.block<3, 3>(off, off),
                     mean_b.segment<3>(off), cov_b.block<3, 3>(off, off));
}

double nne(const std::vector<Vec3>& errors, const std::vector<Mat3>& covariances) {
  if (errors.size() != covariances.size()) {
    fail(ErrorCode::invalid_argument, "nne: errors/covariances size mismatch");
  }
  if (errors.empty()) fail(ErrorCode::invalid_argument, "nne: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    Eigen::LLT<Mat3> llt(covariances[i]);
    if (llt.info() != Eigen::Success) {
      fail(ErrorCode::invalid_argument, "nne: covariance not positive definite");
    }
    acc += errors[i].dot(llt.solve(errors[i]));
  }
  return std::sqrt(acc / (3.0 * static_cast<double>(errors.size())));
}

ConsistencyReport evaluate_consistency(const PointCloud& source, const PointCloud& target,
                                       const Pose& ground_truth, const SolverConfig& solver_config,
                                       const McConfig& mc_config, const McDistribution& mc,
                                       int runs, std::uint64_t seed) {
  if (runs < 2) fail(ErrorCode::config, "estimator runs must be >= 2");

  SolverConfig cfg = solver_config;
  cfg.use_prior = true;
  // The estimator's declared initial spread matches the protocol's actual
  // perturbation, so flat-direction uncertainty is judged on equal footing.
  cfg.init_sigma = mc_config.init_sigma;

  Mat6 prior_cov = Mat6::Zero();
  for (int i = 0; i < 6; ++i) {
    prior_cov(i, i) = std::max(mc_config.init_sigma[i] * mc_config.init_sigma[i], 1e-10);
  }

  const Pose gt_inv = ground_truth.inverse();

  struct RunResult {
    Vec6 error;      // log(T_hat^{-1} gt)
    Vec6 est_mean;   // log(gt^{-1} T_hat)
    Mat6 est_cov;    // claimed particle covariance
    int iterations = 0;
    double runtime_s = 0.0;
  };
  std::vector<RunResult> results(runs);

  parallel_for(runs, cfg.threads, [&](int r) {
    Rng rng(Rng::derive(seed, 5000 + static_cast<std::uint64_t>(r)));
    const Vec6 delta = draw_twist(mc_config.init_sigma, rng);
    PoseWithCovariance prior;
    prior.pose = pose_boxplus(ground_truth, delta);
    prior.covariance = prior_cov;
    const PointCloud noisy =
        mc_config.point_sigma > 0.0 ? perturb_points(source, mc_config.point_sigma, rng) : source;

    const auto t_start = std::chrono::steady_clock::now();
    const PoseWithCovariance est =
        solve_icp(prior, noisy, target, cfg, Rng::derive(seed, 9000 + r));
    const auto t_stop = std::chrono::steady_clock::now();

    results[r].error = se3_log(est.pose.inverse().compose(ground_truth));
    results[r].est_mean = se3_log(gt_inv.compose(est.pose));
    results[r].est_cov = est.icp_covariance;
    results[r].iterations = est.iterations;
    results[r].runtime_s = std::chrono::duration<double>(t_stop - t_start).count();
  });

  ConsistencyReport report;
  report.cutoff_quantile = mc_config.quantile;
  report.mc_kept = static_cast<int>(mc.kept.size());
  report.mc_diverged = mc.diverged;
  report.estimator_runs = runs;
  report.mc_mean = mc.mean;
  report.mc_covariance = mc.covariance;

  std::vector<Vec3> err_trans, err_rot;
  std::vector<Mat3> cov_trans, cov_rot;
  double kl_t = 0.0, kl_r = 0.0;
  for (const RunResult& r : results) {
    err_trans.push_back(r.error.tail<3>());
    err_rot.push_back(r.error.head<3>());
    cov_trans.push_back(r.est_cov.block<3, 3>(3, 3) + 1e-12 * Mat3::Identity());
    cov_rot.push_back(r.est_cov.block<3, 3>(0, 0) + 1e-12 * Mat3::Identity());
    kl_t += gaussian_kl_block(r.est_mean, r.est_cov, mc.mean, mc.covariance,
                              TwistBlock::translation);
    kl_r += gaussian_kl_block(r.est_mean, r.est_cov, mc.mean, mc.covariance, TwistBlock::rotation);
    report.mean_error += r.error;
    report.mean_translation_error_norm += r.error.tail<3>().norm();
    report.mean_estimated_covariance += r.est_cov;
    report.mean_iterations += r.iterations;
    report.mean_runtime_s += r.runtime_s;
  }
  const double n = static_cast<double>(runs);
  report.kl_trans = kl_t / n;
  report.kl_rot = kl_r / n;
  report.nne_trans = nne(err_trans, cov_trans);
  report.nne_rot = nne(err_rot, cov_rot);
  report.mean_error /= n;
  report.mean_translation_error_norm /= n;
  report.mean_estimated_covariance /= n;
  report.mean_iterations /= n;
  report.mean_runtime_s /= n;
  return report;
}

std::vector<AblationRow> ablation_sweep(const PointCloud& source, const PointCloud& target,
                                        const Pose& ground_truth,
                                        const std::vector<int>& particle_counts,
                                        const std::vector<std::uint64_t>& seeds,
                                        const SolverConfig& base_config, const McConfig& mc_config,
                                        int runs) {
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds) {
    const McDistribution mc =
        mc_icp_distribution(source, target, ground_truth, mc_config, Rng::derive(seed, 1));
    for (int k : particle_counts) {
      SolverConfig cfg = base_config;
      cfg.particle_count = k;

      AblationRow row;
      row.particle_count = k;
      row.seed = seed;

      if (k <= 1) {
        // A single particle carries no spread: covariance metrics unavailable.
        SolverConfig gn = cfg;
        gn.init_sigma = Vec6::Zero();
        gn.use_prior = true;
        Mat6 prior_cov = Mat6::Zero();
        for (int i = 0; i < 6; ++i) {
          prior_cov(i, i) = std::max(mc_config.init_sigma[i] * mc_config.init_sigma[i], 1e-10);
        }
        double err = 0.0, iters = 0.0, runtime = 0.0;
        for (int r = 0; r < runs; ++r) {
          Rng rng(Rng::derive(seed, 5000 + static_cast<std::uint64_t>(r)));
          const Vec6 delta = draw_twist(mc_config.init_sigma, rng);
          PoseWithCovariance prior;
          prior.pose = pose_boxplus(ground_truth, delta);
          prior.covariance = prior_cov;
          const PointCloud noisy = mc_config.point_sigma > 0.0
                                       ? perturb_points(source, mc_config.point_sigma, rng)
                                       : source;
          const auto t0 = std::chrono::steady_clock::now();
          const PoseWithCovariance est =
              solve_icp(prior, noisy, target, gn, Rng::derive(seed, 9000 + r));
          const auto t1 = std::chrono::steady_clock::now();
          err += se3_log(est.pose.inverse().compose(ground_truth)).tail<3>().norm();
          iters += est.iterations;
          runtime += std::chrono::duration<double>(t1 - t0).count();
        }
        row.translation_error = err / runs;
        row.avg_iterations = iters / runs;
        row.runtime_s = runtime / runs;
        row.metrics_available = false;
      } else {
        const ConsistencyReport rep = evaluate_consistency(source, target, ground_truth, cfg,
                                                           mc_config, mc, runs, seed);
        row.translation_error = rep.mean_translation_error_norm;
        row.avg_iterations = rep.mean_iterations;
        row.runtime_s = rep.mean_runtime_s;
        row.metrics_available = true;
        row.kl_trans = rep.kl_trans;
        row.kl_rot = rep.kl_rot;
        row.nne_trans = rep.nne_trans;
        row.nne_rot = rep.nne_rot;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace steinscan
