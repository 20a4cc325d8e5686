#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// This suite exercises the shared library strictly through the C header.
#include "stein_scanmatch.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace {

// Random points on a box surface (tiny xorshift; grid-free so the alignment
// cost has a single clean basin).
std::vector<double> box_points(int count, double extent) {
  std::vector<double> xyz;
  xyz.reserve(3 * count);
  uint64_t state = 0x9E3779B97F4A7C15ull;
  auto next = [&state]() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return static_cast<double>(state >> 11) * 0x1.0p-53;
  };
  const double half = 0.5 * extent;
  for (int i = 0; i < count; ++i) {
    const double u = -half + extent * next();
    const double v = -half + extent * next();
    const int face = i % 6;
    const double faces[6][3] = {{u, v, -half}, {u, v, half},  {u, -half, v},
                                {u, half, v},  {-half, u, v}, {half, u, v}};
    xyz.push_back(faces[face][0]);
    xyz.push_back(faces[face][1]);
    xyz.push_back(faces[face][2]);
  }
  return xyz;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(sm_version() != nullptr);
  CHECK(std::strcmp(sm_status_name(SM_OK), "ok") == 0);
  CHECK(std::strcmp(sm_status_name(SM_ERR_CONFIG), "config_error") == 0);
}

TEST_CASE("cloud create, points, downsample, save, load") {
  const std::vector<double> xyz = {0, 0, 0, 1, 0, 0, 0.05, 0, 0};
  sm_cloud* cloud = nullptr;
  REQUIRE(sm_cloud_create(xyz.data(), 3, &cloud) == SM_OK);
  CHECK(sm_cloud_size(cloud) == 3);

  std::vector<double> back(9, -1.0);
  REQUIRE(sm_cloud_points(cloud, back.data()) == SM_OK);
  CHECK(back[3] == 1.0);

  sm_cloud* coarse = nullptr;
  REQUIRE(sm_cloud_voxel_downsample(cloud, 0.5, &coarse) == SM_OK);
  CHECK(sm_cloud_size(coarse) == 2);

  sm_cloud* bad = nullptr;
  CHECK(sm_cloud_voxel_downsample(cloud, 0.0, &bad) == SM_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(sm_last_error()) > 0);

  REQUIRE(sm_cloud_save_csv(cloud, "capi_cloud.csv") == SM_OK);
  sm_cloud* loaded = nullptr;
  REQUIRE(sm_cloud_load("capi_cloud.csv", "csv-xyz", &loaded) == SM_OK);
  CHECK(sm_cloud_size(loaded) == 3);

  sm_cloud* missing = nullptr;
  CHECK(sm_cloud_load("does_not_exist.csv", nullptr, &missing) == SM_ERR_IO);

  sm_cloud_destroy(cloud);
  sm_cloud_destroy(coarse);
  sm_cloud_destroy(loaded);
  std::remove("capi_cloud.csv");
}

TEST_CASE("sm_align recovers a pure translation") {
  const std::vector<double> target_xyz = box_points(900, 3.0);
  std::vector<double> source_xyz = target_xyz;
  // Shift the source by -t so the aligning pose is +t.
  const double t[3] = {0.08, -0.05, 0.03};
  for (std::size_t i = 0; i < source_xyz.size(); i += 3) {
    source_xyz[i] -= t[0];
    source_xyz[i + 1] -= t[1];
    source_xyz[i + 2] -= t[2];
  }

  sm_cloud* source = nullptr;
  sm_cloud* target = nullptr;
  REQUIRE(sm_cloud_create(source_xyz.data(), source_xyz.size() / 3, &source) == SM_OK);
  REQUIRE(sm_cloud_create(target_xyz.data(), target_xyz.size() / 3, &target) == SM_OK);

  sm_align_result result;
  REQUIRE(sm_align(source, target, nullptr, nullptr, "{\"particles\": 8}", 1, 1, &result) ==
          SM_OK);
  CHECK(std::abs(result.pose.translation[0] - t[0]) < 1e-3);
  CHECK(std::abs(result.pose.translation[1] - t[1]) < 1e-3);
  CHECK(std::abs(result.pose.translation[2] - t[2]) < 1e-3);
  CHECK(result.converged == 1);

  // Covariance buffers are filled and symmetric.
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) {
      CHECK(result.covariance[6 * r + c] == doctest::Approx(result.covariance[6 * c + r]));
    }
  }

  sm_align_result bad;
  CHECK(sm_align(source, target, nullptr, nullptr, "{\"particless\": 8}", 1, 1, &bad) ==
        SM_ERR_CONFIG);
  CHECK(std::string(sm_last_error()).find("particless") != std::string::npos);

  sm_cloud_destroy(source);
  sm_cloud_destroy(target);
}

TEST_CASE("run-level API: gen-scene then align") {
  const char* gen_cfg = R"({
    "seed": 2,
    "scene": {"kind": "box", "extent": 3.0, "density": 40.0, "noise_sigma": 0.0,
               "offset": [0, 0, 0.02, 0.05, 0.0, 0.0], "seed": 6},
    "io": {"out_dir": "capi_out"}
  })";
  char* report = nullptr;
  REQUIRE(sm_run_gen_scene(gen_cfg, &report) == SM_OK);
  REQUIRE(report != nullptr);
  CHECK(std::string(report).find("\"command\": \"gen-scene\"") != std::string::npos);
  sm_string_free(report);

  const char* align_cfg = R"({
    "seed": 2,
    "solver": {"particles": 8},
    "io": {"out_dir": "capi_out", "source": "capi_out/source.csv",
            "target": "capi_out/target.csv"}
  })";
  report = nullptr;
  REQUIRE(sm_run_align(align_cfg, &report) == SM_OK);
  const std::string text(report);
  CHECK(text.find("\"pose_tum\"") != std::string::npos);
  CHECK(text.find("\"covariance\"") != std::string::npos);
  sm_string_free(report);

  char* err_report = nullptr;
  CHECK(sm_run_align("{\"bogus\": 1}", &err_report) == SM_ERR_CONFIG);
  CHECK(sm_run_align("not json", &err_report) == SM_ERR_CONFIG);
  CHECK(sm_run_align(nullptr, &err_report) == SM_ERR_INVALID_ARGUMENT);

  std::filesystem::remove_all("capi_out");
}
