#pragma once

#include "steinscan/manifold.hpp"

namespace steinscan {

struct ImuSample {
  double time = 0.0;  // seconds; strictly increasing within a stream
  Vec3 accel = Vec3::Zero();  // specific force, body frame, m/s^2
  Vec3 gyro = Vec3::Zero();   // angular rate, body frame, rad/s
};

struct NavState {
  Pose pose;                        // body-to-world
  Vec3 velocity = Vec3::Zero();     // world frame, m/s
  Vec3 accel_bias = Vec3::Zero();   // m/s^2
  Vec3 gyro_bias = Vec3::Zero();    // rad/s
  double time = 0.0;
};

}  // namespace steinscan
