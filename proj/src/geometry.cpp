#include "csmsckf/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace csmsckf {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 exp_so3(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 W = skew(w);
  if (theta < 1e-7) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  return Mat3::Identity() + std::sin(theta) / theta * W +
         (1.0 - std::cos(theta)) / (theta * theta) * W * W;
}

Vec3 log_so3(const Mat3& R) {
  // Eigen's angle-axis extraction is stable near 0 and pi.
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

Mat3 right_jacobian_so3(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 W = skew(w);
  if (theta < 1e-7) {
    return Mat3::Identity() - 0.5 * W + W * W / 6.0;
  }
  const double t2 = theta * theta;
  return Mat3::Identity() - (1.0 - std::cos(theta)) / t2 * W +
         (theta - std::sin(theta)) / (t2 * theta) * W * W;
}

UnitQuatJPL::UnitQuatJPL(double x, double y, double z, double w) {
  const double n = std::sqrt(x * x + y * y + z * z + w * w);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("UnitQuatJPL: zero or non-finite quaternion");
  }
  // Keep w >= 0 so equal rotations compare equal component-wise.
  const double s = (w < 0.0 ? -1.0 : 1.0) / n;
  x_ = x * s;
  y_ = y * s;
  z_ = z * s;
  w_ = w * s;
}

UnitQuatJPL UnitQuatJPL::from_error_angle(const Vec3& theta) {
  const double angle = theta.norm();
  if (angle < 1e-12) {
    return {0.5 * theta.x(), 0.5 * theta.y(), 0.5 * theta.z(), 1.0};
  }
  const Vec3 v = std::sin(0.5 * angle) / angle * theta;
  return {v.x(), v.y(), v.z(), std::cos(0.5 * angle)};
}

UnitQuatJPL UnitQuatJPL::from_rotation_matrix(const Mat3& R) {
  // A JPL quaternion and the Hamilton quaternion with the same components describe
  // transposed matrices.
  const Eigen::Quaterniond h(Mat3(R.transpose()));
  return {h.x(), h.y(), h.z(), h.w()};
}

UnitQuatJPL UnitQuatJPL::operator*(const UnitQuatJPL& rhs) const {
  const Vec3 v1 = vec();
  const Vec3 v2 = rhs.vec();
  const Vec3 v = w_ * v2 + rhs.w_ * v1 - v1.cross(v2);
  const double w = w_ * rhs.w_ - v1.dot(v2);
  return {v.x(), v.y(), v.z(), w};
}

Mat3 UnitQuatJPL::to_rotation_matrix() const {
  const Vec3 v = vec();
  return (2.0 * w_ * w_ - 1.0) * Mat3::Identity() - 2.0 * w_ * skew(v) +
         2.0 * v * v.transpose();
}

Mat3 quat_to_rot(const UnitQuatJPL& q) { return q.to_rotation_matrix(); }

Vec3 Pose::transform(const Vec3& p_B) const {
  return rotation_matrix().transpose() * p_B + translation;
}

Vec3 Pose::inverse_transform(const Vec3& p_A) const {
  return rotation_matrix() * (p_A - translation);
}

Pose pose_compose(const Pose& a_T_b, const Pose& b_T_c) {
  Pose out;
  out.rotation = b_T_c.rotation * a_T_b.rotation;
  out.translation = a_T_b.transform(b_T_c.translation);
  return out;
}

Pose pose_inverse(const Pose& a_T_b) {
  Pose out;
  out.rotation = a_T_b.rotation.inverse();
  out.translation = -(a_T_b.rotation_matrix() * a_T_b.translation);
  return out;
}

Pose pose_retract(const Pose& pose, const Vec6& delta) {
  Pose out = pose;
  if (!delta.head<3>().isZero(0.0)) {
    out.rotation = UnitQuatJPL::from_error_angle(delta.head<3>()) * pose.rotation;
  }
  out.translation = pose.translation + delta.tail<3>();
  return out;
}

Vec6 pose_lift(const Pose& estimate, const Pose& truth) {
  Vec6 d;
  // R_true = exp(-dtheta) R_est
  d.head<3>() = -log_so3(truth.rotation_matrix() * estimate.rotation_matrix().transpose());
  d.tail<3>() = truth.translation - estimate.translation;
  return d;
}

double rotation_angle_between(const UnitQuatJPL& a, const UnitQuatJPL& b) {
  return log_so3(a.to_rotation_matrix() * b.to_rotation_matrix().transpose()).norm();
}

void PinholeCamera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("PinholeCamera: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("PinholeCamera: image size must be positive");
  }
}

bool PinholeCamera::in_image(const Vec2& uv, double margin) const {
  return uv.x() >= margin && uv.y() >= margin && uv.x() <= width - margin &&
         uv.y() <= height - margin;
}

Vec3 PinholeCamera::unproject(const Vec2& uv) const {
  return {(uv.x() - cx) / fx, (uv.y() - cy) / fy, 1.0};
}

std::optional<Vec2> project(const PinholeCamera& cam, const Vec3& p_C) {
  if (!(p_C.z() > PinholeCamera::kMinDepth)) {
    return std::nullopt;
  }
  return Vec2(cam.fx * p_C.x() / p_C.z() + cam.cx, cam.fy * p_C.y() / p_C.z() + cam.cy);
}

Mat23 projection_jacobian(const PinholeCamera& cam, const Vec3& p_C) {
  const double iz = 1.0 / p_C.z();
  const double iz2 = iz * iz;
  Mat23 J;
  J << cam.fx * iz, 0.0, -cam.fx * p_C.x() * iz2,
       0.0, cam.fy * iz, -cam.fy * p_C.y() * iz2;
  return J;
}

}  // namespace csmsckf
