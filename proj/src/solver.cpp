#include "steinscan/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "steinscan/errors.hpp"
#include "steinscan/kdtree.hpp"
#include "steinscan/log.hpp"
#include "steinscan/parallel.hpp"
#include "steinscan/rng.hpp"
#include "steinscan/subtarget.hpp"

namespace steinscan {

namespace {

void validate(const SolverConfig& config) {
  if (config.particle_count < 1) fail(ErrorCode::config, "particle_count must be >= 1");
  if (config.max_iterations < 1) fail(ErrorCode::config, "max_iterations must be >= 1");
  if (!(config.early_stop_eps > 0.0)) fail(ErrorCode::config, "early_stop_eps must be > 0");
  if (!config.bandwidth.median && !(config.bandwidth.fixed > 0.0)) {
    fail(ErrorCode::config, "fixed kernel bandwidth must be > 0");
  }
  if (!(config.svgd_step_size > 0.0)) fail(ErrorCode::config, "svgd_step_size must be > 0");
  if (config.neighborhood_size < 1) fail(ErrorCode::config, "neighborhood_size must be >= 1");
  for (int i = 0; i < 6; ++i) {
    if (!std::isfinite(config.init_sigma[i]) || config.init_sigma[i] < 0.0) {
      fail(ErrorCode::config, "init_sigma must be finite and non-negative");
    }
  }
}

struct AdamState {
  std::vector<Vec6> m;
  std::vector<Vec6> v;
};

Vec6 degeneracy_guarded_solve(const Mat6& ht, const Vec6& rhs, bool* frozen) {
  Eigen::SelfAdjointEigenSolver<Mat6> eig(ht);
  const double lambda_max = eig.eigenvalues().maxCoeff();
  if (!(lambda_max > 0.0) || !std::isfinite(lambda_max)) {
    *frozen = true;
    return Vec6::Zero();
  }
  const double floor_value = kConditionFloor * lambda_max;
  if (eig.eigenvalues().minCoeff() >= floor_value) {
    return Eigen::LLT<Mat6>(ht).solve(rhs);
  }
  const Vec6 lambda = eig.eigenvalues().cwiseMax(floor_value);
  return eig.eigenvectors() *
         (eig.eigenvectors().transpose() * rhs).cwiseQuotient(lambda);
}

}  // namespace

ParticleSet init_particles(const SolverConfig& config, std::uint64_t seed) {
  validate(config);
  Rng rng(seed);
  ParticleSet set;
  set.twists.resize(config.particle_count);
  for (Vec6& xi : set.twists) {
    for (int j = 0; j < 6; ++j) xi[j] = config.init_sigma[j] * rng.normal();
  }
  return set;
}

double rbf_kernel(const Vec6& a, const Vec6& b, double h, Vec6* grad_a) {
  const Vec6 diff = a - b;
  const double k = std::exp(-diff.squaredNorm() / h);
  if (grad_a != nullptr) *grad_a = (-2.0 / h) * diff * k;
  return k;
}

double median_bandwidth(const std::vector<Vec6>& particles) {
  constexpr double kFloor = 1e-6;
  const std::size_t n = particles.size();
  if (n < 2) return kFloor;

  std::vector<double> sq_dists;
  sq_dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      sq_dists.push_back((particles[i] - particles[j]).squaredNorm());
    }
  }
  const std::size_t mid = (sq_dists.size() - 1) / 2;
  std::nth_element(sq_dists.begin(), sq_dists.begin() + mid, sq_dists.end());
  const double med_sq = sq_dists[mid];
  return std::max(med_sq / std::log(static_cast<double>(n) + 1.0), kFloor);
}

std::vector<Vec6> svgd_direction(const std::vector<Vec6>& particles,
                                 const std::vector<Vec6>& gradients, double h) {
  const std::size_t k_count = particles.size();
  std::vector<Vec6> phi(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    Vec6 sum = Vec6::Zero();
    for (std::size_t l = 0; l < k_count; ++l) {
      Vec6 grad_k;
      const double kernel = rbf_kernel(particles[l], particles[k], h, &grad_k);
      sum += kernel * gradients[l] + grad_k;
    }
    phi[k] = sum / static_cast<double>(k_count);
  }
  return phi;
}

Mat6 svn_hessian(const std::vector<Vec6>& particles, const std::vector<Mat6>& hessians,
                 double h, int k) {
  const std::size_t k_count = particles.size();
  Mat6 sum = Mat6::Zero();
  for (std::size_t l = 0; l < k_count; ++l) {
    Vec6 grad_k;
    const double kernel = rbf_kernel(particles[l], particles[static_cast<std::size_t>(k)], h, &grad_k);
    sum += hessians[l] * (kernel * kernel) + grad_k * grad_k.transpose();
  }
  return sum / static_cast<double>(k_count);
}

PoseWithCovariance solve_icp(const PoseWithCovariance& prior, const PointCloud& source,
                             const PointCloud& target, const SolverConfig& config,
                             std::uint64_t seed, SolveTrace* trace) {
  validate(config);
  if (source.empty()) fail(ErrorCode::invalid_argument, "source cloud is empty");
  if (target.empty()) fail(ErrorCode::invalid_argument, "target cloud is empty");

  const int k_count = config.particle_count;
  ParticleSet particles = init_particles(config, seed);

  const KdTree tree(target);
  const SubTargetIndex sub =
      build_sub_targets(source, tree, prior.pose, config.neighborhood_size);

  Mat6 prior_information = Mat6::Zero();
  if (config.use_prior) {
    Eigen::LLT<Mat6> llt(prior.covariance);
    if (llt.info() != Eigen::Success) {
      fail(ErrorCode::config, "prior covariance must be positive definite when the prior term is on");
    }
    prior_information = llt.solve(Mat6::Identity());
  }

  AdamState adam;
  if (config.mode == SolverMode::svgd) {
    adam.m.assign(k_count, Vec6::Zero());
    adam.v.assign(k_count, Vec6::Zero());
  }

  std::vector<Vec6> gradients(k_count);
  std::vector<Mat6> hessians(k_count);
  std::vector<double> wsq(k_count, 0.0);
  std::vector<long> matched(k_count, 0);
  std::vector<Vec6> deltas(k_count, Vec6::Zero());
  std::vector<Vec6> prev_deltas(k_count, Vec6::Zero());
  std::vector<std::string> particle_errors(k_count);
  int frozen_updates = 0;
  double ratchet_sigma = std::numeric_limits<double>::infinity();

  // A correspondence is trusted only while its residual stays within the
  // neighborhood's coverage radius; beyond it the restricted search can no
  // longer contain the true nearest neighbor.
  auto reject_radius = [&](std::size_t n) {
    return std::min(config.robust.max_corr_dist, sub.coverage_radius[n]);
  };

  // Weighted squared residual and match count at an arbitrary pose; used for
  // the adaptive residual-scale estimate.
  auto residual_stats = [&](const Pose& pose, double& out_wsq, long& out_matched) {
    out_wsq = 0.0;
    out_matched = 0;
    for (std::size_t n = 0; n < source.size(); ++n) {
      const Vec3 p = pose.apply(source.points[n]);
      const auto [idx, q] = nearest_in_subtarget(p, sub.neighborhoods[n], target);
      const double r = (p - q).norm();
      if (r > reject_radius(n)) continue;
      double w = 1.0;
      if (config.robust.huber_delta && r > *config.robust.huber_delta) {
        w = *config.robust.huber_delta / r;
      }
      out_wsq += w * r * r;
      ++out_matched;
    }
  };

  PoseWithCovariance result;
  result.iterations = config.max_iterations;

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    // Phase 1: per-particle accumulation from the iteration-start snapshot.
    parallel_for(k_count, config.threads, [&](int k) {
      try {
        const Pose pose_k = prior.pose.compose(se3_exp(particles.twists[k]));
        CloudTerms terms;
        for (std::size_t n = 0; n < source.size(); ++n) {
          const Vec3 p = pose_k.apply(source.points[n]);
          const auto [idx, q] = nearest_in_subtarget(p, sub.neighborhoods[n], target);
          const Vec3 e = p - q;
          const double r = e.norm();
          if (r > reject_radius(n)) continue;

          const Mat3 rot_hat = -pose_k.rotation * hat(source.points[n]);
          Eigen::Matrix<double, 3, 6> jac;
          jac.block<3, 3>(0, 0) = rot_hat;
          jac.block<3, 3>(0, 3) = pose_k.rotation;

          double w = 1.0;
          if (config.robust.huber_delta && r > *config.robust.huber_delta) {
            w = *config.robust.huber_delta / r;
          }
          terms.gradient += w * (-jac.transpose() * e);
          terms.hessian += w * (jac.transpose() * jac);
          terms.weighted_sq_residual += w * r * r;
          ++terms.matched;
        }
        if (terms.matched < 6) {
          particle_errors[k] = "under-constrained alignment: particle " + std::to_string(k) +
                               " retains " + std::to_string(terms.matched) + " correspondences";
          return;
        }
        gradients[k] = terms.gradient;
        hessians[k] = terms.hessian;
        wsq[k] = terms.weighted_sq_residual;
        matched[k] = terms.matched;
        particle_errors[k].clear();
      } catch (const std::exception& ex) {
        particle_errors[k] = ex.what();
      }
    });
    for (int k = 0; k < k_count; ++k) {
      if (!particle_errors[k].empty()) fail(ErrorCode::underconstrained, particle_errors[k]);
    }

    if (trace != nullptr) {
      double pooled_wsq = 0.0;
      long pooled_matched = 0;
      for (int k = 0; k < k_count; ++k) {
        pooled_wsq += wsq[k];
        pooled_matched += matched[k];
      }
      trace->residual_sigma.push_back(
          std::sqrt(pooled_wsq / (3.0 * std::max<long>(pooled_matched, 1))));
    }

    double scale = 1.0;
    if (config.noise.kind == NoiseModel::Kind::adaptive) {
      Vec6 snapshot_mean = Vec6::Zero();
      for (const Vec6& xi : particles.twists) snapshot_mean += xi;
      snapshot_mean /= k_count;
      double mean_wsq = 0.0;
      long mean_matched = 0;
      residual_stats(prior.pose.compose(se3_exp(snapshot_mean)), mean_wsq, mean_matched);
      if (mean_matched < 6) {
        fail(ErrorCode::underconstrained, "under-constrained alignment at the mean pose");
      }
      // The matching-noise floor of a scan pair is static; ratcheting keeps a
      // transiently misaligned mean from re-inflating the scale.
      const double estimate = std::sqrt(
          std::max(mean_wsq / (3.0 * std::max<long>(mean_matched, 1)), 1e-8));
      ratchet_sigma = std::min(ratchet_sigma, estimate);
      const double sigma_model = config.noise.temper * ratchet_sigma;
      scale = 1.0 / (sigma_model * sigma_model);
    } else if (config.noise.kind == NoiseModel::Kind::fixed) {
      scale = 1.0 / std::max(config.noise.sigma * config.noise.sigma, 1e-12);
    }

    for (int k = 0; k < k_count; ++k) {
      gradients[k] *= scale;
      hessians[k] *= scale;
      if (config.use_prior) {
        // Gradient and curvature of the Gaussian log-prior; without the
        // curvature term, tight priors blow up the Newton step along
        // directions the likelihood leaves flat.
        gradients[k] -= prior_information * particles.twists[k];
        hessians[k] += prior_information;
      }
    }

    const double h = config.bandwidth.median ? median_bandwidth(particles.twists)
                                             : config.bandwidth.fixed;
    const std::vector<Vec6> phi = svgd_direction(particles.twists, gradients, h);

    // Phase 2: per-particle update directions from the same snapshot.
    std::vector<int> frozen(k_count, 0);
    parallel_for(k_count, config.threads, [&](int k) {
      if (config.mode == SolverMode::svn) {
        const Mat6 ht = svn_hessian(particles.twists, hessians, h, k);
        bool is_frozen = false;
        deltas[k] = degeneracy_guarded_solve(ht, phi[k], &is_frozen);
        if (is_frozen) frozen[k] = 1;
        // Oscillation damping: a step that strongly reverses the previous one
        // is halved, which breaks period-2 cycles across correspondence kinks.
        if (prev_deltas[k].dot(deltas[k]) <
            -0.5 * prev_deltas[k].norm() * deltas[k].norm()) {
          deltas[k] *= 0.5;
        }
        prev_deltas[k] = deltas[k];
      } else {
        constexpr double kBeta1 = 0.9;
        constexpr double kBeta2 = 0.999;
        constexpr double kEps = 1e-8;
        adam.m[k] = kBeta1 * adam.m[k] + (1.0 - kBeta1) * phi[k];
        adam.v[k] = kBeta2 * adam.v[k] +
                    (1.0 - kBeta2) * phi[k].cwiseProduct(phi[k]);
        const double c1 = 1.0 - std::pow(kBeta1, iter);
        const double c2 = 1.0 - std::pow(kBeta2, iter);
        const Vec6 m_hat = adam.m[k] / c1;
        const Vec6 v_hat = adam.v[k] / c2;
        deltas[k] = config.svgd_step_size *
                    m_hat.cwiseQuotient(v_hat.cwiseSqrt() + Vec6::Constant(kEps));
      }
    });

    for (int k = 0; k < k_count; ++k) frozen_updates += frozen[k];

    if (log_level() >= LogLevel::debug) {
      int arg_max = 0;
      double max_delta = 0.0;
      for (int k = 0; k < k_count; ++k) {
        if (deltas[k].norm() > max_delta) {
          max_delta = deltas[k].norm();
          arg_max = k;
        }
      }
      const Mat6 ht = svn_hessian(particles.twists, hessians, h, arg_max);
      Eigen::SelfAdjointEigenSolver<Mat6> eig(ht);
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "iter %d: h=%.3e scale=%.3e max|d|=%.3e (particle %d, cond=%.2e, |phi|=%.3e)",
                    iter, h, scale, max_delta, arg_max,
                    eig.eigenvalues().minCoeff() / eig.eigenvalues().maxCoeff(),
                    phi[arg_max].norm());
      log_debug(buf);
    }

    // Right-compose each update onto the particle's pose.
    parallel_for(k_count, config.threads, [&](int k) {
      particles.twists[k] = se3_log(se3_exp(particles.twists[k]).compose(se3_exp(deltas[k])));
    });
    particles.iteration = iter;

    double mean_sq = 0.0;
    double mean_norm = 0.0;
    for (int k = 0; k < k_count; ++k) {
      mean_sq += deltas[k].squaredNorm();
      mean_norm += deltas[k].norm();
    }
    mean_sq /= k_count;
    mean_norm /= k_count;
    if (trace != nullptr) {
      trace->update_mean_sq.push_back(mean_sq);
      trace->update_mean_norm.push_back(mean_norm);
      if (trace->record_history) trace->particle_history.push_back(particles.twists);
    }

    if (mean_sq < config.early_stop_eps) {
      result.converged = true;
      result.iterations = iter;
      break;
    }
    result.iterations = iter;
  }

  // Mean perturbation and particle covariance.
  Vec6 mean = Vec6::Zero();
  for (const Vec6& xi : particles.twists) mean += xi;
  mean /= k_count;

  if (config.karcher_refine && k_count > 1) {
    Vec6 mu = mean;
    for (int it = 0; it < 16; ++it) {
      Vec6 delta = Vec6::Zero();
      const Pose base = se3_exp(mu);
      for (const Vec6& xi : particles.twists) {
        delta += se3_log(base.inverse().compose(se3_exp(xi)));
      }
      delta /= k_count;
      mu = se3_log(base.compose(se3_exp(delta)));
      if (delta.norm() < 1e-12) break;
    }
    mean = mu;
  }

  Mat6 cov = Mat6::Zero();
  for (const Vec6& xi : particles.twists) {
    const Vec6 d = xi - mean;
    cov += d * d.transpose();
  }
  cov /= k_count;

  result.mean_twist = mean;
  result.icp_covariance = 0.5 * (cov + cov.transpose());
  result.pose = prior.pose.compose(se3_exp(mean));
  const Mat6 ad = adjoint(prior.pose);
  Mat6 total = prior.covariance + ad * result.icp_covariance * ad.transpose();
  result.covariance = 0.5 * (total + total.transpose());

  if (trace != nullptr) {
    trace->final_particles = particles.twists;
    trace->frozen_updates = frozen_updates;
  }
  if (frozen_updates > 0) {
    log_warn("solve_icp froze " + std::to_string(frozen_updates) +
             " particle updates on singular preconditioned Hessians");
  }
  return result;
}

}  // namespace steinscan
