#pragma once

#include "csmsckf/block_covariance.hpp"
#include "csmsckf/error_state.hpp"

namespace csmsckf {

using Mat15 = Eigen::Matrix<double, 15, 15>;
using Mat15x12 = Eigen::Matrix<double, 15, 12>;
using Mat12 = Eigen::Matrix<double, 12, 12>;

inline const Vec3 kGravity{0.0, 0.0, -9.81};

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force
};

// Continuous-time densities: white noise (sigma_g, sigma_a) and bias random walk
// (sigma_bg, sigma_ba).
struct ImuNoise {
  double sigma_g = 1.7e-4;
  double sigma_a = 2.0e-3;
  double sigma_bg = 2.0e-5;
  double sigma_ba = 3.0e-3;

  void validate() const;
};

// Linear interpolation of two readings; used to split an interval at a camera time.
ImuSample interpolate(const ImuSample& a, const ImuSample& b, double t);
// Reading representing the interval [a.t, b.t]: the average of both ends.
ImuSample interval_sample(const ImuSample& a, const ImuSample& b);

/// One strapdown step with the reading held constant over dt.
///
/// Orientation is integrated exactly for the constant rate; the specific force is
/// rotated into L with the orientation at the middle of the interval:
///   q'  = dq(w dt) (x) q
///   a_L = R_mid^T (a_m - b_a) + g
///   v'  = v + a_L dt
///   p'  = p + v dt + a_L dt^2 / 2
ImuState propagate_state(const ImuState& x, const ImuSample& s, double dt,
                         const Vec3& gravity = kGravity);

struct PropagationJacobians {
  Mat15 phi;     // error-state transition
  Mat15x12 g;    // noise input, columns (n_g, n_a, n_wg, n_wa)
};

PropagationJacobians propagate_jacobians(const ImuState& x, const ImuSample& s, double dt,
                                         const Vec3& gravity = kGravity);

// Discrete noise covariance for one step of length dt. White-noise densities become
// sample variances sigma^2 / dt; the bias walk enters through G's dt factor, so the
// walk variance per step is sigma_b^2 dt.
Mat12 discrete_noise(const ImuNoise& noise, double dt);

// P_II <- Phi P_II Phi^T + G Q G^T, every cross block of the IMU rows <- Phi * block.
// The IMU state must occupy active indices [0, 15).
void propagate_covariance(BlockCovariance& P, const Mat15& phi, const Mat15& process_noise);
void propagate_covariance(BlockCovariance& P, const Mat15& phi, const Mat15x12& g,
                          const Mat12& q);

}  // namespace csmsckf
