#pragma once

#include "csmsckf/geometry.hpp"

namespace csmsckf {

using Vec15 = Eigen::Matrix<double, 15, 1>;

/// Inertial navigation state x_I.
///
/// q is ^I q_L, p and v are the IMU position and velocity in the local odometry frame L.
struct ImuState {
  UnitQuatJPL q;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();

  // ^L T_I
  Pose pose() const { return {q, p}; }
  bool is_finite() const;
};

// Block offsets of the 15-dim IMU error state (dtheta, dp, dv, dbg, dba).
namespace imu_idx {
inline constexpr int kTheta = 0;
inline constexpr int kPos = 3;
inline constexpr int kVel = 6;
inline constexpr int kBg = 9;
inline constexpr int kBa = 12;
inline constexpr int kDim = 15;
}  // namespace imu_idx

struct ErrorState {
  Vec3 dtheta = Vec3::Zero();
  Vec3 dp = Vec3::Zero();
  Vec3 dv = Vec3::Zero();
  Vec3 dbg = Vec3::Zero();
  Vec3 dba = Vec3::Zero();

  static ErrorState from_vector(const Vec15& d);
  Vec15 to_vector() const;
};

// Local rotation perturbation (q <- dq(dtheta) (x) q), additive elsewhere.
ImuState retract(const ImuState& x, const ErrorState& delta);
// delta with retract(estimate, delta) == truth
ErrorState lift(const ImuState& estimate, const ImuState& truth);

}  // namespace csmsckf
