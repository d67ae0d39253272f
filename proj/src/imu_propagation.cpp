#include "csmsckf/imu_propagation.hpp"

#include <cmath>
#include <stdexcept>

namespace csmsckf {

namespace {

void check_step(const ImuState& x, const ImuSample& s, double dt) {
  if (!(dt > 0.0) || dt > 0.1) {
    throw std::invalid_argument("imu propagation: dt must be in (0, 0.1] s");
  }
  if (!x.is_finite() || !s.gyro.allFinite() || !s.accel.allFinite()) {
    throw std::invalid_argument("imu propagation: non-finite input");
  }
}

}  // namespace

void ImuNoise::validate() const {
  if (!(sigma_g > 0.0) || !(sigma_a > 0.0) || !(sigma_bg > 0.0) || !(sigma_ba > 0.0)) {
    throw std::invalid_argument("ImuNoise: all densities must be strictly positive");
  }
}

ImuSample interpolate(const ImuSample& a, const ImuSample& b, double t) {
  const double span = b.t - a.t;
  const double lambda = span > 0.0 ? (t - a.t) / span : 0.0;
  ImuSample out;
  out.t = t;
  out.gyro = (1.0 - lambda) * a.gyro + lambda * b.gyro;
  out.accel = (1.0 - lambda) * a.accel + lambda * b.accel;
  return out;
}

ImuSample interval_sample(const ImuSample& a, const ImuSample& b) {
  ImuSample out;
  out.t = a.t;
  out.gyro = 0.5 * (a.gyro + b.gyro);
  out.accel = 0.5 * (a.accel + b.accel);
  return out;
}

ImuState propagate_state(const ImuState& x, const ImuSample& s, double dt, const Vec3& gravity) {
  check_step(x, s, dt);
  const Vec3 w = s.gyro - x.bg;
  const Vec3 a = s.accel - x.ba;

  const Mat3 R = x.q.to_rotation_matrix();
  const Mat3 R_mid = exp_so3(-0.5 * dt * w) * R;
  const Vec3 a_L = R_mid.transpose() * a + gravity;

  ImuState out = x;
  out.q = UnitQuatJPL::from_error_angle(w * dt) * x.q;
  out.v = x.v + a_L * dt;
  out.p = x.p + x.v * dt + 0.5 * a_L * dt * dt;
  return out;
}

PropagationJacobians propagate_jacobians(const ImuState& x, const ImuSample& s, double dt,
                                         const Vec3& gravity) {
  check_step(x, s, dt);
  (void)gravity;  // enters the mean only
  using namespace imu_idx;
  const Vec3 w = s.gyro - x.bg;
  const Vec3 a = s.accel - x.ba;

  const Mat3 R = x.q.to_rotation_matrix();
  const Mat3 dR = exp_so3(-dt * w);
  const Mat3 dR_half = exp_so3(-0.5 * dt * w);
  const Mat3 R_mid_T = (dR_half * R).transpose();

  // d(theta_{k+1}) / d(bg)
  const Mat3 theta_bg = -dR * right_jacobian_so3(-dt * w) * dt;
  // d(a_L) / d(theta_k), d(a_L) / d(bg), d(a_L) / d(ba)
  const Mat3 acc_theta = -R_mid_T * skew(a) * dR_half;
  const Mat3 acc_bg = R_mid_T * skew(a) * dR_half * right_jacobian_so3(-0.5 * dt * w) * (0.5 * dt);
  const Mat3 acc_ba = -R_mid_T;

  const double dt2 = 0.5 * dt * dt;
  const Mat3 I = Mat3::Identity();

  PropagationJacobians J;
  J.phi.setIdentity();
  J.phi.block<3, 3>(kTheta, kTheta) = dR;
  J.phi.block<3, 3>(kTheta, kBg) = theta_bg;

  J.phi.block<3, 3>(kPos, kTheta) = dt2 * acc_theta;
  J.phi.block<3, 3>(kPos, kVel) = dt * I;
  J.phi.block<3, 3>(kPos, kBg) = dt2 * acc_bg;
  J.phi.block<3, 3>(kPos, kBa) = dt2 * acc_ba;

  J.phi.block<3, 3>(kVel, kTheta) = dt * acc_theta;
  J.phi.block<3, 3>(kVel, kBg) = dt * acc_bg;
  J.phi.block<3, 3>(kVel, kBa) = dt * acc_ba;

  // Measurement noise enters exactly like the bias errors; walk noise drives the biases.
  J.g.setZero();
  J.g.block<3, 3>(kTheta, 0) = theta_bg;
  J.g.block<3, 3>(kPos, 0) = dt2 * acc_bg;
  J.g.block<3, 3>(kVel, 0) = dt * acc_bg;
  J.g.block<3, 3>(kPos, 3) = dt2 * acc_ba;
  J.g.block<3, 3>(kVel, 3) = dt * acc_ba;
  J.g.block<3, 3>(kBg, 6) = dt * I;
  J.g.block<3, 3>(kBa, 9) = dt * I;
  return J;
}

Mat12 discrete_noise(const ImuNoise& noise, double dt) {
  Mat12 q = Mat12::Zero();
  q.block<3, 3>(0, 0).diagonal().setConstant(noise.sigma_g * noise.sigma_g / dt);
  q.block<3, 3>(3, 3).diagonal().setConstant(noise.sigma_a * noise.sigma_a / dt);
  q.block<3, 3>(6, 6).diagonal().setConstant(noise.sigma_bg * noise.sigma_bg / dt);
  q.block<3, 3>(9, 9).diagonal().setConstant(noise.sigma_ba * noise.sigma_ba / dt);
  return q;
}

void propagate_covariance(BlockCovariance& P, const Mat15& phi, const Mat15& process_noise) {
  constexpr int k = imu_idx::kDim;
  const int a = P.active_dim();
  if (a < k) {
    throw std::invalid_argument("propagate_covariance: IMU block missing");
  }
  auto& aa = P.aa();
  const Mat15 p_ii = aa.topLeftCorner<k, k>();
  const Mat15 p_new = phi * p_ii * phi.transpose() + process_noise;

  if (a > k) {
    const Eigen::MatrixXd cross = phi * aa.topRightCorner(k, a - k);
    aa.topRightCorner(k, a - k) = cross;
    aa.bottomLeftCorner(a - k, k) = cross.transpose();
  }
  aa.topLeftCorner<k, k>() = p_new;
  if (P.nuisance_dim() > 0) {
    P.an().topRows(k) = (phi * P.an().topRows(k)).eval();
  }
  P.symmetrize();
  if (!P.all_finite()) {
    throw std::runtime_error("propagate_covariance: non-finite covariance");
  }
}

void propagate_covariance(BlockCovariance& P, const Mat15& phi, const Mat15x12& g,
                          const Mat12& q) {
  propagate_covariance(P, phi, Mat15(g * q * g.transpose()));
}

}  // namespace csmsckf
