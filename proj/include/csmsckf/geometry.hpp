#pragma once

#include <optional>

#include <Eigen/Dense>

namespace csmsckf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat23 = Eigen::Matrix<double, 2, 3>;

Mat3 skew(const Vec3& v);

// Exp/Log on SO(3) in the usual (Hamilton, active) sense: exp_so3(w) rotates by |w| about w.
Mat3 exp_so3(const Vec3& w);
Vec3 log_so3(const Mat3& R);
// Right Jacobian Jr(w): exp_so3(w + d) ~= exp_so3(w) * exp_so3(Jr(w) d).
Mat3 right_jacobian_so3(const Vec3& w);

/// Unit quaternion in JPL convention, stored (x, y, z, w) with w the scalar part.
///
/// For q = [v, w] the rotation matrix is R(q) = (2w^2 - 1) I - 2 w [v]x + 2 v v^T.
/// When q encodes ^B q_A, R(q) maps vectors expressed in A into B.
/// The product is the JPL one, so that R(q1 (x) q2) = R(q1) R(q2):
///   (q1 (x) q2).v = w1 v2 + w2 v1 - v1 x v2
///   (q1 (x) q2).w = w1 w2 - v1 . v2
/// Every operation returns a normalized quaternion.
class UnitQuatJPL {
 public:
  UnitQuatJPL() = default;
  UnitQuatJPL(double x, double y, double z, double w);

  static UnitQuatJPL identity() { return {}; }
  // Quaternion whose rotation matrix is exp_so3(-theta). This is the small-angle error
  // quaternion dq = [theta/2, 1] of the JPL error-state literature, in exact form.
  static UnitQuatJPL from_error_angle(const Vec3& theta);
  static UnitQuatJPL from_rotation_matrix(const Mat3& R);

  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  double w() const { return w_; }
  Vec3 vec() const { return {x_, y_, z_}; }
  Eigen::Vector4d coeffs() const { return {x_, y_, z_, w_}; }

  UnitQuatJPL inverse() const { return {-x_, -y_, -z_, w_}; }
  UnitQuatJPL operator*(const UnitQuatJPL& rhs) const;
  Mat3 to_rotation_matrix() const;

  bool operator==(const UnitQuatJPL&) const = default;

 private:
  double x_ = 0.0, y_ = 0.0, z_ = 0.0, w_ = 1.0;
};

Mat3 quat_to_rot(const UnitQuatJPL& q);

/// Rigid transform ^A T_B.
///
/// `rotation` is ^B q_A (so rotation_matrix() is ^B R_A), `translation` is ^A p_B, the
/// origin of B expressed in A. A point expressed in B maps into A as
///   p_A = ^B R_A^T p_B + ^A p_B.
/// The error state of a pose is (dtheta, dp) with dtheta a rotation error local to B
/// (^B R_A,true = exp_so3(-dtheta) ^B R_A) and dp additive in A.
struct Pose {
  UnitQuatJPL rotation;
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Mat3 rotation_matrix() const { return rotation.to_rotation_matrix(); }
  // p_A from p_B
  Vec3 transform(const Vec3& p_B) const;
  // p_B from p_A
  Vec3 inverse_transform(const Vec3& p_A) const;

  bool operator==(const Pose&) const = default;
};

// ^A T_B (x) ^B T_C = ^A T_C
Pose pose_compose(const Pose& a_T_b, const Pose& b_T_c);
Pose pose_inverse(const Pose& a_T_b);
Pose pose_retract(const Pose& pose, const Vec6& delta);
// delta such that pose_retract(estimate, delta) == truth
Vec6 pose_lift(const Pose& estimate, const Pose& truth);
double rotation_angle_between(const UnitQuatJPL& a, const UnitQuatJPL& b);

/// Ideal pinhole camera rigidly attached to the IMU.
///
/// `extrinsic` is ^I T_C: the camera frame expressed in the IMU frame.
struct PinholeCamera {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  Pose extrinsic;

  static constexpr double kMinDepth = 1e-6;

  void validate() const;
  bool in_image(const Vec2& uv, double margin = 0.0) const;
  // Normalized bearing (x/z, y/z, 1) for a pixel.
  Vec3 unproject(const Vec2& uv) const;
};

// Rejects points with z <= kMinDepth.
std::optional<Vec2> project(const PinholeCamera& cam, const Vec3& p_C);
// d(u,v)/d(p_C); valid for z > 0.
Mat23 projection_jacobian(const PinholeCamera& cam, const Vec3& p_C);

}  // namespace csmsckf
