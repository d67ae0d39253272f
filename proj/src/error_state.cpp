#include "csmsckf/error_state.hpp"

namespace csmsckf {

bool ImuState::is_finite() const {
  return q.coeffs().allFinite() && p.allFinite() && v.allFinite() && bg.allFinite() &&
         ba.allFinite();
}

ErrorState ErrorState::from_vector(const Vec15& d) {
  ErrorState e;
  e.dtheta = d.segment<3>(imu_idx::kTheta);
  e.dp = d.segment<3>(imu_idx::kPos);
  e.dv = d.segment<3>(imu_idx::kVel);
  e.dbg = d.segment<3>(imu_idx::kBg);
  e.dba = d.segment<3>(imu_idx::kBa);
  return e;
}

Vec15 ErrorState::to_vector() const {
  Vec15 d;
  d << dtheta, dp, dv, dbg, dba;
  return d;
}

ImuState retract(const ImuState& x, const ErrorState& delta) {
  ImuState out = x;
  if (!delta.dtheta.isZero(0.0)) {
    out.q = UnitQuatJPL::from_error_angle(delta.dtheta) * x.q;
  }
  out.p = x.p + delta.dp;
  out.v = x.v + delta.dv;
  out.bg = x.bg + delta.dbg;
  out.ba = x.ba + delta.dba;
  return out;
}

ErrorState lift(const ImuState& estimate, const ImuState& truth) {
  ErrorState e;
  e.dtheta = -log_so3(truth.q.to_rotation_matrix() * estimate.q.to_rotation_matrix().transpose());
  e.dp = truth.p - estimate.p;
  e.dv = truth.v - estimate.v;
  e.dbg = truth.bg - estimate.bg;
  e.dba = truth.ba - estimate.ba;
  return e;
}

}  // namespace csmsckf
