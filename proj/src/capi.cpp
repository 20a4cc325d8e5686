#include "stein_scanmatch.h"

#include <cstring>
#include <new>
#include <string>

#include <Eigen/Geometry>
#include <json.hpp>

#include "steinscan/config.hpp"
#include "steinscan/errors.hpp"
#include "steinscan/io.hpp"
#include "steinscan/point_cloud.hpp"
#include "steinscan/runner.hpp"
#include "steinscan/solver.hpp"

namespace {

thread_local std::string g_last_error;

sm_status code_to_status(steinscan::ErrorCode code) {
  switch (code) {
    case steinscan::ErrorCode::invalid_argument: return SM_ERR_INVALID_ARGUMENT;
    case steinscan::ErrorCode::io: return SM_ERR_IO;
    case steinscan::ErrorCode::parse: return SM_ERR_PARSE;
    case steinscan::ErrorCode::underconstrained: return SM_ERR_UNDERCONSTRAINED;
    case steinscan::ErrorCode::singular: return SM_ERR_SINGULAR;
    case steinscan::ErrorCode::config: return SM_ERR_CONFIG;
  }
  return SM_ERR_INTERNAL;
}

template <typename Fn>
sm_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SM_OK;
  } catch (const steinscan::Error& ex) {
    g_last_error = ex.what();
    return code_to_status(ex.code());
  } catch (const std::exception& ex) {
    g_last_error = ex.what();
    return SM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SM_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

steinscan::Pose pose_from_c(const sm_pose* pose) {
  if (pose == nullptr) return steinscan::Pose::identity();
  steinscan::Pose out;
  out.translation =
      steinscan::Vec3(pose->translation[0], pose->translation[1], pose->translation[2]);
  Eigen::Quaterniond q(pose->quaternion[3], pose->quaternion[0], pose->quaternion[1],
                       pose->quaternion[2]);
  if (q.norm() < 1e-12) {
    steinscan::fail(steinscan::ErrorCode::invalid_argument, "zero quaternion in sm_pose");
  }
  q.normalize();
  out.rotation = q.toRotationMatrix();
  return out;
}

void pose_to_c(const steinscan::Pose& pose, sm_pose* out) {
  Eigen::Quaterniond q(pose.rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  for (int i = 0; i < 3; ++i) out->translation[i] = pose.translation[i];
  out->quaternion[0] = q.x();
  out->quaternion[1] = q.y();
  out->quaternion[2] = q.z();
  out->quaternion[3] = q.w();
}

using RunnerFn = nlohmann::json (*)(const steinscan::RunConfig&);

sm_status run_command(RunnerFn fn, const char* config_json, char** out_report_json) {
  return guarded([&] {
    if (config_json == nullptr || out_report_json == nullptr) {
      steinscan::fail(steinscan::ErrorCode::invalid_argument, "null argument");
    }
    const steinscan::RunConfig cfg = steinscan::parse_run_config_text(config_json);
    const nlohmann::json report = fn(cfg);
    *out_report_json = dup_string(report.dump(2) + "\n");
  });
}

}  // namespace

struct sm_cloud {
  steinscan::PointCloud cloud;
};

extern "C" {

const char* sm_version(void) { return "0.1.0"; }

const char* sm_status_name(sm_status status) {
  switch (status) {
    case SM_OK: return "ok";
    case SM_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case SM_ERR_IO: return "io_error";
    case SM_ERR_PARSE: return "parse_error";
    case SM_ERR_UNDERCONSTRAINED: return "underconstrained";
    case SM_ERR_SINGULAR: return "singular";
    case SM_ERR_CONFIG: return "config_error";
    case SM_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* sm_last_error(void) { return g_last_error.c_str(); }

sm_status sm_cloud_create(const double* xyz, size_t point_count, sm_cloud** out_cloud) {
  return guarded([&] {
    if (xyz == nullptr || out_cloud == nullptr) {
      steinscan::fail(steinscan::ErrorCode::invalid_argument, "null argument");
    }
    auto* handle = new sm_cloud;
    handle->cloud.points.reserve(point_count);
    for (size_t i = 0; i < point_count; ++i) {
      handle->cloud.points.emplace_back(xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]);
    }
    *out_cloud = handle;
  });
}

sm_status sm_cloud_load(const char* path, const char* format, sm_cloud** out_cloud) {
  return guarded([&] {
    if (path == nullptr || out_cloud == nullptr) {
      steinscan::fail(steinscan::ErrorCode::invalid_argument, "null argument");
    }
    steinscan::CloudFormat fmt = steinscan::CloudFormat::auto_detect;
    if (format != nullptr && std::strcmp(format, "auto") != 0) {
      if (std::strcmp(format, "csv-xyz") == 0) {
        fmt = steinscan::CloudFormat::csv_xyz;
      } else if (std::strcmp(format, "ply-ascii") == 0) {
        fmt = steinscan::CloudFormat::ply_ascii;
      } else {
        steinscan::fail(steinscan::ErrorCode::invalid_argument,
                        std::string("unknown cloud format '") + format + "'");
      }
    }
    auto* handle = new sm_cloud{steinscan::load_cloud(path, fmt)};
    *out_cloud = handle;
  });
}

sm_status sm_cloud_save_csv(const sm_cloud* cloud, const char* path) {
  return guarded([&] {
    if (cloud == nullptr || path == nullptr) {
      steinscan::fail(steinscan::ErrorCode::invalid_argument, "null argument");
    }
    steinscan::save_cloud_csv(cloud->cloud, path);
  });
}

size_t sm_cloud_size(const sm_cloud* cloud) {
  return cloud == nullptr ? 0 : cloud->cloud.size();
}

sm_status sm_cloud_points(const sm_cloud* cloud, double* xyz_out) {
  return guarded([&] {
    if (cloud == nullptr || xyz_out == nullptr) {
      steinscan::fail(steinscan::ErrorCode::invalid_argument, "null argument");
    }
    for (size_t i = 0; i < cloud->cloud.size(); ++i) {
      const steinscan::Vec3& p = cloud->cloud.points[i];
      xyz_out[3 * i] = p.x();
      xyz_out[3 * i + 1] = p.y();
      xyz_out[3 * i + 2] = p.z();
    }
  });
}

sm_status sm_cloud_voxel_downsample(const sm_cloud* cloud, double voxel, sm_cloud** out_cloud) {
  return guarded([&] {
    if (cloud == nullptr || out_cloud == nullptr) {
      steinscan::fail(steinscan::ErrorCode::invalid_argument, "null argument");
    }
    auto* handle = new sm_cloud{steinscan::voxel_downsample(cloud->cloud, voxel)};
    *out_cloud = handle;
  });
}

void sm_cloud_destroy(sm_cloud* cloud) { delete cloud; }

sm_status sm_align(const sm_cloud* source, const sm_cloud* target, const sm_pose* prior_pose,
                   const double* prior_covariance, const char* solver_config_json, uint64_t seed,
                   int threads, sm_align_result* out_result) {
  return guarded([&] {
    if (source == nullptr || target == nullptr || out_result == nullptr) {
      steinscan::fail(steinscan::ErrorCode::invalid_argument, "null argument");
    }
    steinscan::SolverConfig cfg;
    if (solver_config_json != nullptr) {
      nlohmann::json wrapper;
      try {
        wrapper["solver"] = nlohmann::json::parse(solver_config_json);
      } catch (const nlohmann::json::exception& ex) {
        steinscan::fail(steinscan::ErrorCode::config,
                        std::string("solver config is not valid JSON: ") + ex.what());
      }
      cfg = steinscan::parse_run_config(wrapper).solver;
    }
    cfg.threads = threads > 0 ? threads : 1;

    steinscan::PoseWithCovariance prior;
    prior.pose = pose_from_c(prior_pose);
    if (prior_covariance != nullptr) {
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) prior.covariance(r, c) = prior_covariance[6 * r + c];
      }
    }

    const steinscan::PoseWithCovariance est =
        steinscan::solve_icp(prior, source->cloud, target->cloud, cfg, seed);

    pose_to_c(est.pose, &out_result->pose);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) {
        out_result->covariance[6 * r + c] = est.covariance(r, c);
        out_result->icp_covariance[6 * r + c] = est.icp_covariance(r, c);
      }
    }
    for (int i = 0; i < 6; ++i) out_result->mean_twist[i] = est.mean_twist[i];
    out_result->iterations = est.iterations;
    out_result->converged = est.converged ? 1 : 0;
  });
}

sm_status sm_run_align(const char* config_json, char** out_report_json) {
  return run_command(&steinscan::run_align, config_json, out_report_json);
}

sm_status sm_run_fuse(const char* config_json, char** out_report_json) {
  return run_command(&steinscan::run_fuse, config_json, out_report_json);
}

sm_status sm_run_oracle(const char* config_json, char** out_report_json) {
  return run_command(&steinscan::run_oracle, config_json, out_report_json);
}

sm_status sm_run_ablation(const char* config_json, char** out_report_json) {
  return run_command(&steinscan::run_ablation, config_json, out_report_json);
}

sm_status sm_run_gen_scene(const char* config_json, char** out_report_json) {
  return run_command(&steinscan::run_gen_scene, config_json, out_report_json);
}

void sm_string_free(char* str) { delete[] str; }

}  // extern "C"
