#pragma once

#include <optional>
#include <span>
#include <vector>

#include "csmsckf/block_covariance.hpp"
#include "csmsckf/error_state.hpp"
#include "csmsckf/map.hpp"

namespace csmsckf {

// ^L T_I at a past camera time
struct Clone {
  double t = 0.0;
  Pose pose;
};

// ^G T_kf held in the nuisance part
struct KeyframeState {
  int id = -1;
  Pose pose;
};

/// x = [x_A; x_N] with x_A = [x_I, x_C, x_t] and x_N = x_KF.
struct StateVector {
  ImuState imu;
  std::vector<Clone> clones;
  std::optional<Pose> rel_transform;  // ^G T_L
  std::vector<KeyframeState> keyframes;
};

// Used by init_rel_transform when no prior is supplied: diag(1 rad^2 x3, 10 m^2 x3).
Mat6 default_rel_transform_prior();

/// Mean and covariance of one filter instance, with the bookkeeping that keeps the
/// block layout of the covariance in step with the state vector:
///
///   active:   [ IMU (15) | clone_0 .. clone_{c-1} (6 each) | x_t (6, optional) ]
///   nuisance: [ kf_0 .. kf_{m-1} (6 each) ]
///
/// Single-threaded mutation only; separate instances are independent.
class FilterState {
 public:
  FilterState(const ImuState& imu, const Eigen::Matrix<double, 15, 15>& imu_cov,
              int max_clones = 11);

  const StateVector& x() const { return x_; }
  const BlockCovariance& cov() const { return cov_; }
  BlockCovariance& cov() { return cov_; }
  ImuState& imu() { return x_.imu; }

  int max_clones() const { return max_clones_; }
  int num_clones() const { return static_cast<int>(x_.clones.size()); }
  bool has_rel_transform() const { return x_.rel_transform.has_value(); }
  int active_dim() const { return cov_.active_dim(); }
  int nuisance_dim() const { return cov_.nuisance_dim(); }

  int clone_offset(std::size_t index) const { return 15 + 6 * static_cast<int>(index); }
  int rel_transform_offset() const;
  // Offset inside the nuisance block.
  int keyframe_offset(std::size_t index) const { return 6 * static_cast<int>(index); }

  std::optional<std::size_t> clone_index(double t) const;
  std::optional<std::size_t> keyframe_index(int id) const;

  // Stochastic cloning of the current IMU pose.
  void augment_clone(double t);
  // Plain deletion of the clone's rows and columns.
  void marginalize_clone(double t);
  void init_rel_transform(const Pose& g_T_l, const Mat6& prior = default_rel_transform_prior());
  // Replaces the x_t mean; covariance untouched.
  void reset_rel_transform_mean(const Pose& g_T_l);
  // Appends unseen keyframes to x_N with their stored covariance and no correlation.
  // Already-present ids are skipped with a warning. Returns the ids actually added.
  std::vector<int> augment_keyframes(std::span<const MapKeyframe> kfs);

  // x_A <- x_A (+) dx, laid out like the active covariance block.
  void correct_active(const Eigen::VectorXd& dx);
  // Only the full-EKF comparator ever calls this.
  void correct_nuisance(const Eigen::VectorXd& dx);

  // Verifies that covariance dimensions match the state layout; throws on mismatch.
  void audit() const;

 private:
  StateVector x_;
  BlockCovariance cov_;
  int max_clones_;
};

}  // namespace csmsckf
