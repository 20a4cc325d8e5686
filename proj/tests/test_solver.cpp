#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "steinscan/errors.hpp"
#include "steinscan/scenes.hpp"
#include "steinscan/solver.hpp"
#include "test_helpers.hpp"

using namespace steinscan;

namespace {

Vec6 rand_twist(Rng& rng, double rot = 0.2, double trans = 0.5) {
  Vec6 xi;
  xi.head<3>() = testutil::random_omega(rng, rot);
  xi.tail<3>() = trans * Vec3(rng.normal(), rng.normal(), rng.normal());
  return xi;
}

}  // namespace

TEST_CASE("init_particles") {
  SolverConfig cfg;
  cfg.particle_count = 1;
  cfg.init_sigma = Vec6::Zero();
  CHECK(init_particles(cfg, 9).twists[0].norm() == doctest::Approx(0.0));

  cfg.particle_count = 64;
  cfg.init_sigma = (Vec6() << 0.1, 0.1, 0.1, 0.1, 0.1, 0.1).finished();
  const ParticleSet a = init_particles(cfg, 42);
  const ParticleSet b = init_particles(cfg, 42);
  for (int k = 0; k < 64; ++k) CHECK((a.twists[k] - b.twists[k]).norm() == 0.0);

  // Law of large numbers: per-axis sample std within 3% at K = 10^4.
  cfg.particle_count = 10000;
  const ParticleSet big = init_particles(cfg, 7);
  for (int axis = 0; axis < 6; ++axis) {
    double mean = 0.0;
    for (const Vec6& xi : big.twists) mean += xi[axis];
    mean /= big.twists.size();
    double var = 0.0;
    for (const Vec6& xi : big.twists) var += (xi[axis] - mean) * (xi[axis] - mean);
    var /= big.twists.size();
    CHECK(std::sqrt(var) == doctest::Approx(0.1).epsilon(0.03));
  }
}

TEST_CASE("rbf kernel values and gradient") {
  Vec6 a = Vec6::Zero();
  Vec6 grad;
  CHECK(rbf_kernel(a, a, 1.0, &grad) == doctest::Approx(1.0));
  CHECK(grad.norm() == doctest::Approx(0.0));

  Vec6 b = Vec6::Zero();
  b[0] = 2.0;  // squared distance 4 == h
  CHECK(rbf_kernel(a, b, 4.0) == doctest::Approx(std::exp(-1.0)));

  Rng rng(41);
  for (int i = 0; i < 50; ++i) {
    const Vec6 x = rand_twist(rng);
    const Vec6 y = rand_twist(rng);
    const double h = rng.uniform(0.2, 3.0);
    rbf_kernel(x, y, h, &grad);
    Vec6 fd;
    const double step = 1e-7;
    for (int col = 0; col < 6; ++col) {
      Vec6 dx = Vec6::Zero();
      dx[col] = step;
      fd[col] = (rbf_kernel(x + dx, y, h) - rbf_kernel(x - dx, y, h)) / (2.0 * step);
    }
    CHECK((grad - fd).norm() < 1e-8);
  }
}

TEST_CASE("median bandwidth") {
  std::vector<Vec6> two(2, Vec6::Zero());
  two[1][0] = 0.5;  // distance d = 0.5
  CHECK(median_bandwidth(two) == doctest::Approx(0.25 / std::log(3.0)));

  std::vector<Vec6> same(5, Vec6::Ones());
  CHECK(median_bandwidth(same) == doctest::Approx(1e-6));

  std::vector<Vec6> one(1, Vec6::Zero());
  CHECK(median_bandwidth(one) == doctest::Approx(1e-6));

  // Brute-force oracle at K = 30: sort all pairwise squared distances and
  // take the lower median.
  Rng rng(42);
  std::vector<Vec6> particles;
  for (int i = 0; i < 30; ++i) particles.push_back(rand_twist(rng));
  std::vector<double> d2;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    for (std::size_t j = i + 1; j < particles.size(); ++j) {
      d2.push_back((particles[i] - particles[j]).squaredNorm());
    }
  }
  std::sort(d2.begin(), d2.end());
  const double want = d2[(d2.size() - 1) / 2] / std::log(31.0);
  CHECK(median_bandwidth(particles) == doctest::Approx(want));
}

TEST_CASE("svgd_direction against naive double loop") {
  Rng rng(43);

  // K = 1 degenerates to the bare gradient.
  std::vector<Vec6> single{rand_twist(rng)};
  std::vector<Vec6> single_grad{rand_twist(rng)};
  const auto phi1 = svgd_direction(single, single_grad, 0.7);
  CHECK((phi1[0] - single_grad[0]).norm() == doctest::Approx(0.0));

  // Two identical particles: repulsion vanishes, attraction averages.
  std::vector<Vec6> twins(2, single[0]);
  std::vector<Vec6> twin_grads{rand_twist(rng), rand_twist(rng)};
  const auto phi2 = svgd_direction(twins, twin_grads, 0.5);
  const Vec6 avg = 0.5 * (twin_grads[0] + twin_grads[1]);
  CHECK((phi2[0] - avg).norm() < 1e-15);
  CHECK((phi2[1] - avg).norm() < 1e-15);

  // K = 5 random set matches an independently written double loop.
  std::vector<Vec6> particles, grads;
  for (int i = 0; i < 5; ++i) {
    particles.push_back(rand_twist(rng));
    grads.push_back(rand_twist(rng));
  }
  const double h = 0.9;
  const auto phi = svgd_direction(particles, grads, h);
  for (int k = 0; k < 5; ++k) {
    Vec6 want = Vec6::Zero();
    for (int l = 0; l < 5; ++l) {
      const Vec6 diff = particles[l] - particles[k];
      const double kern = std::exp(-diff.squaredNorm() / h);
      want += kern * grads[l] + (-2.0 / h) * diff * kern;
    }
    want /= 5.0;
    CHECK((phi[k] - want).norm() < 1e-12);
  }
}

TEST_CASE("svn_hessian against naive double loop") {
  Rng rng(44);

  std::vector<Vec6> single{rand_twist(rng)};
  std::vector<Mat6> single_h{Mat6::Identity() * 3.0};
  CHECK((svn_hessian(single, single_h, 1.0, 0) - single_h[0]).norm() == doctest::Approx(0.0));

  // Coincident particles with identity Hessians.
  std::vector<Vec6> twins(3, single[0]);
  std::vector<Mat6> eye(3, Mat6::Identity());
  CHECK((svn_hessian(twins, eye, 0.4, 1) - Mat6::Identity()).norm() < 1e-15);

  std::vector<Vec6> particles;
  std::vector<Mat6> hessians;
  for (int i = 0; i < 5; ++i) {
    particles.push_back(rand_twist(rng));
    Mat6 a;
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) a(r, c) = rng.normal();
    }
    hessians.push_back(a * a.transpose());
  }
  const double h = 1.3;
  for (int k = 0; k < 5; ++k) {
    Mat6 want = Mat6::Zero();
    for (int l = 0; l < 5; ++l) {
      const Vec6 diff = particles[l] - particles[k];
      const double kern = std::exp(-diff.squaredNorm() / h);
      const Vec6 grad = (-2.0 / h) * diff * kern;
      want += hessians[l] * kern * kern + grad * grad.transpose();
    }
    want /= 5.0;
    const Mat6 got = svn_hessian(particles, hessians, h, k);
    CHECK((got - want).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat6> eig(got);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("solve_icp fixed point: identical clouds, zero prior error") {
  SceneSpec spec;
  spec.kind = SceneKind::box;
  spec.extent = 3.0;
  spec.density = 40.0;
  spec.noise_sigma = 0.0;
  spec.seed = 2;
  const PointCloud cloud = sample_scene_surface(spec, 1);

  SolverConfig cfg;
  cfg.particle_count = 1;
  cfg.init_sigma = Vec6::Zero();
  const PoseWithCovariance est = solve_icp(PoseWithCovariance{}, cloud, cloud, cfg, 0);
  CHECK(est.converged);
  CHECK(est.iterations == 1);
  CHECK(est.mean_twist.norm() == doctest::Approx(0.0));
  CHECK(est.icp_covariance.norm() == doctest::Approx(0.0));
}

TEST_CASE("solve_icp recovers a known offset on the box scene") {
  SceneSpec spec;
  spec.kind = SceneKind::box;
  spec.extent = 3.0;
  spec.density = 400.0;
  spec.noise_sigma = 0.0;
  spec.seed = 5;
  spec.gt_offset << 0.008, -0.008, 0.008, 0.04, 0.03, -0.03;
  const ScenePair pair = generate_pair(spec);

  SolverConfig cfg;
  cfg.particle_count = 30;
  cfg.neighborhood_size = 48;
  const PoseWithCovariance est = solve_icp(PoseWithCovariance{}, pair.source, pair.target, cfg, 3);
  const Vec6 err = se3_log(est.pose.inverse().compose(pair.ground_truth));
  CHECK(err.tail<3>().norm() < 1e-3);
  CHECK(err.head<3>().norm() < 1e-3);
  CHECK(est.iterations <= 30);
}

TEST_CASE("K=1 SVN reduces to standalone Gauss-Newton") {
  SceneSpec spec;
  spec.kind = SceneKind::box;
  spec.extent = 3.0;
  spec.density = 60.0;
  spec.noise_sigma = 0.005;
  spec.seed = 8;
  spec.gt_offset << 0.01, 0.02, -0.01, 0.05, -0.04, 0.03;
  const ScenePair pair = generate_pair(spec);

  SolverConfig cfg;
  cfg.particle_count = 1;
  cfg.init_sigma = Vec6::Zero();
  cfg.max_iterations = 25;
  cfg.early_stop_eps = 1e-14;

  SolveTrace trace;
  trace.record_history = true;
  solve_icp(PoseWithCovariance{}, pair.source, pair.target, cfg, 0, &trace);

  const auto oracle = testutil::gauss_newton_trajectory(Pose::identity(), pair.source,
                                                        pair.target, cfg.neighborhood_size,
                                                        cfg.max_iterations, cfg.early_stop_eps,
                                                        cfg.robust);

  REQUIRE(trace.particle_history.size() == oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    CHECK((trace.particle_history[i][0] - oracle[i]).norm() < 1e-10);
  }
}

TEST_CASE("early stop is sound and covariance matches a two-pass oracle") {
  SceneSpec spec;
  spec.kind = SceneKind::box;
  spec.extent = 3.0;
  spec.density = 60.0;
  spec.noise_sigma = 0.01;
  spec.seed = 12;
  spec.gt_offset << 0.0, 0.0, 0.02, 0.05, 0.0, -0.05;
  const ScenePair pair = generate_pair(spec);

  SolverConfig cfg;
  cfg.particle_count = 12;
  SolveTrace trace;
  const PoseWithCovariance est =
      solve_icp(PoseWithCovariance{}, pair.source, pair.target, cfg, 5, &trace);

  REQUIRE(static_cast<int>(trace.update_mean_sq.size()) == est.iterations);
  if (est.converged) {
    CHECK(trace.update_mean_sq.back() < cfg.early_stop_eps);
    for (std::size_t i = 0; i + 1 < trace.update_mean_sq.size(); ++i) {
      CHECK(trace.update_mean_sq[i] >= cfg.early_stop_eps);
    }
  }

  // Covariance equals the naive two-pass sample covariance of the particles.
  Vec6 mean = Vec6::Zero();
  for (const Vec6& xi : trace.final_particles) mean += xi;
  mean /= trace.final_particles.size();
  Mat6 cov = Mat6::Zero();
  for (const Vec6& xi : trace.final_particles) cov += (xi - mean) * (xi - mean).transpose();
  cov /= trace.final_particles.size();
  CHECK((est.icp_covariance - cov).norm() < 1e-14 * std::max(1.0, cov.norm()));
  CHECK((est.mean_twist - mean).norm() < 1e-14);

  // Repulsion keeps the particles spread apart.
  double min_pair = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < trace.final_particles.size(); ++i) {
    for (std::size_t j = i + 1; j < trace.final_particles.size(); ++j) {
      min_pair = std::min(min_pair,
                          (trace.final_particles[i] - trace.final_particles[j]).norm());
    }
  }
  CHECK(min_pair > 0.0);
}

TEST_CASE("corridor covariance is dominated by the corridor axis") {
  SceneSpec spec;
  spec.kind = SceneKind::corridor;
  spec.noise_sigma = 0.01;
  spec.seed = 21;
  spec.gt_offset << 0.0, 0.0, 0.01, 0.05, 0.02, 0.0;
  const ScenePair pair = generate_pair(spec);

  SolverConfig cfg;
  cfg.particle_count = 30;
  cfg.use_prior = true;
  PoseWithCovariance prior;
  for (int i = 0; i < 6; ++i) {
    prior.covariance(i, i) = std::max(cfg.init_sigma[i] * cfg.init_sigma[i], 1e-10);
  }
  const PoseWithCovariance est = solve_icp(prior, pair.source, pair.target, cfg, 1);

  const Mat3 trans_cov = est.icp_covariance.block<3, 3>(3, 3);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(trans_cov);
  const double lambda_max = eig.eigenvalues()[2];
  const double others = 0.5 * (eig.eigenvalues()[0] + eig.eigenvalues()[1]);
  CHECK(lambda_max >= 10.0 * others);
  const Vec3 dominant = eig.eigenvectors().col(2);
  CHECK(std::abs(dominant.dot(Vec3(1, 0, 0))) > std::cos(10.0 * M_PI / 180.0));
}

TEST_CASE("svn converges in fewer iterations than svgd on the corridor") {
  SceneSpec spec;
  spec.kind = SceneKind::corridor;
  spec.noise_sigma = 0.01;
  spec.seed = 31;
  spec.gt_offset << 0.0, 0.0, 0.01, 0.08, 0.02, 0.0;
  const ScenePair pair = generate_pair(spec);
  const PointCloud source = voxel_downsample(pair.source, 0.4);

  SolverConfig svn;
  svn.particle_count = 10;
  svn.mode = SolverMode::svn;
  SolverConfig svgd = svn;
  svgd.mode = SolverMode::svgd;

  const PoseWithCovariance a = solve_icp(PoseWithCovariance{}, source, pair.target, svn, 9);
  const PoseWithCovariance b = solve_icp(PoseWithCovariance{}, source, pair.target, svgd, 9);
  CHECK(a.iterations < b.iterations);
}

TEST_CASE("solve_icp is deterministic and thread-count invariant") {
  SceneSpec spec;
  spec.kind = SceneKind::blobs;
  spec.extent = 6.0;
  spec.noise_sigma = 0.01;
  spec.seed = 17;
  spec.gt_offset << 0.01, 0.0, -0.02, 0.05, 0.03, 0.0;
  const ScenePair pair = generate_pair(spec);

  SolverConfig cfg;
  cfg.particle_count = 8;
  cfg.max_iterations = 20;
  const PoseWithCovariance a = solve_icp(PoseWithCovariance{}, pair.source, pair.target, cfg, 77);
  const PoseWithCovariance b = solve_icp(PoseWithCovariance{}, pair.source, pair.target, cfg, 77);
  SolverConfig threaded = cfg;
  threaded.threads = 4;
  const PoseWithCovariance c =
      solve_icp(PoseWithCovariance{}, pair.source, pair.target, threaded, 77);

  CHECK((a.pose.translation - b.pose.translation).norm() == 0.0);
  CHECK((a.pose.rotation - b.pose.rotation).norm() == 0.0);
  CHECK((a.covariance - b.covariance).norm() == 0.0);
  CHECK((a.pose.translation - c.pose.translation).norm() == 0.0);
  CHECK((a.pose.rotation - c.pose.rotation).norm() == 0.0);
  CHECK((a.covariance - c.covariance).norm() == 0.0);
}

TEST_CASE("solver validates config and inputs") {
  SolverConfig bad;
  bad.particle_count = 0;
  PointCloud cloud;
  cloud.points.emplace_back(0, 0, 0);
  CHECK_THROWS_AS(solve_icp(PoseWithCovariance{}, cloud, cloud, bad, 0), Error);

  SolverConfig ok;
  PointCloud empty;
  CHECK_THROWS_AS(solve_icp(PoseWithCovariance{}, empty, cloud, ok, 0), Error);
  CHECK_THROWS_AS(solve_icp(PoseWithCovariance{}, cloud, empty, ok, 0), Error);
}
