#ifndef STEIN_SCANMATCH_H
#define STEIN_SCANMATCH_H

/* C interface to the stein_scanmatch library: point-cloud handling, the
 * SVN aligner with 6x6 covariance output, and the command-level runners
 * the CLI is built on. All handles are opaque; every fallible call returns an
 * sm_status and leaves a human-readable message in sm_last_error(). */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sm_status {
  SM_OK = 0,
  SM_ERR_INVALID_ARGUMENT = 1,
  SM_ERR_IO = 2,
  SM_ERR_PARSE = 3,
  SM_ERR_UNDERCONSTRAINED = 4,
  SM_ERR_SINGULAR = 5,
  SM_ERR_CONFIG = 6,
  SM_ERR_INTERNAL = 7
} sm_status;

const char* sm_version(void);
const char* sm_status_name(sm_status status);

/* Message describing the most recent failure on the calling thread. */
const char* sm_last_error(void);

typedef struct sm_cloud sm_cloud;

/* xyz is a packed array of 3*point_count doubles. */
sm_status sm_cloud_create(const double* xyz, size_t point_count, sm_cloud** out_cloud);

/* format: "csv-xyz", "ply-ascii", or NULL/"auto" to pick by extension. */
sm_status sm_cloud_load(const char* path, const char* format, sm_cloud** out_cloud);
sm_status sm_cloud_save_csv(const sm_cloud* cloud, const char* path);
size_t sm_cloud_size(const sm_cloud* cloud);

/* Copies 3*size doubles into xyz_out. */
sm_status sm_cloud_points(const sm_cloud* cloud, double* xyz_out);
sm_status sm_cloud_voxel_downsample(const sm_cloud* cloud, double voxel, sm_cloud** out_cloud);
void sm_cloud_destroy(sm_cloud* cloud);

/* Pose as translation plus unit quaternion (x, y, z, w). */
typedef struct sm_pose {
  double translation[3];
  double quaternion[4];
} sm_pose;

typedef struct sm_align_result {
  sm_pose pose;
  double covariance[36];     /* row-major 6x6, [rot; trans] block order */
  double icp_covariance[36]; /* particle sample covariance */
  double mean_twist[6];      /* [rot; trans] */
  int iterations;
  int converged;
} sm_align_result;

/* Aligns source onto target starting from prior_pose (NULL means identity).
 * prior_covariance is a row-major 6x6 in [rot; trans] order and may be NULL.
 * solver_config_json is the "solver" section of the run configuration or NULL
 * for defaults. */
sm_status sm_align(const sm_cloud* source, const sm_cloud* target, const sm_pose* prior_pose,
                   const double* prior_covariance, const char* solver_config_json, uint64_t seed,
                   int threads, sm_align_result* out_result);

/* Command-level runners. config_json is the full run-configuration document;
 * artifacts are written under io.out_dir and the JSON report is returned as a
 * heap string released with sm_string_free. */
sm_status sm_run_align(const char* config_json, char** out_report_json);
sm_status sm_run_fuse(const char* config_json, char** out_report_json);
sm_status sm_run_oracle(const char* config_json, char** out_report_json);
sm_status sm_run_ablation(const char* config_json, char** out_report_json);
sm_status sm_run_gen_scene(const char* config_json, char** out_report_json);

void sm_string_free(char* str);

#ifdef __cplusplus
}
#endif

#endif /* STEIN_SCANMATCH_H */
