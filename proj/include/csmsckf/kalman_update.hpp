#pragma once

#include <vector>

#include "csmsckf/filter_state.hpp"

namespace csmsckf {

/// r = H_A dx_A + H_N dx_N + n,  n ~ N(0, R).
///
/// H_N is stored compactly: column block k (6 wide) belongs to the keyframe at
/// state index keyframe_slots[k]. Every other nuisance column is zero, which is what
/// keeps the Schmidt update linear in the nuisance dimension.
struct LinearizedMeasurement {
  Eigen::VectorXd r;
  Eigen::MatrixXd h_active;
  Eigen::MatrixXd h_nuisance;
  std::vector<int> keyframe_slots;
  Eigen::MatrixXd noise;

  int rows() const { return static_cast<int>(r.size()); }
  bool empty() const { return r.size() == 0; }
  // Dense H over the full state, for tests.
  Eigen::MatrixXd dense_h(int nuisance_dim) const;
};

// Global measurements after landmark marginalization (r*, H*_A, H*_N, R*).
using GlobalResidual = LinearizedMeasurement;

// Stacks rows; nuisance slots are merged in first-seen order.
LinearizedMeasurement stack_measurements(const std::vector<LinearizedMeasurement>& parts);

// QR-compresses H to at most rank rows when rows exceed columns. Needs R = sigma^2 I.
void compress_measurement(LinearizedMeasurement& m);

// S = H P H^T + R using only the nonzero nuisance columns.
Eigen::MatrixXd innovation_covariance(const BlockCovariance& P, const LinearizedMeasurement& m);

// chi^2_{0.95}(dof)
double chi2_threshold(int dof);
// Accept iff r^T S^-1 r < chi^2_{0.95}(rows). Singular S rejects.
bool chi2_gate(const LinearizedMeasurement& m, const BlockCovariance& P);
bool chi2_gate(const Eigen::VectorXd& r, const Eigen::MatrixXd& H, const Eigen::MatrixXd& P,
               const Eigen::MatrixXd& R);

enum class UpdateStatus { kApplied, kEmpty, kIllConditioned };

/// Schmidt-EKF update (K_N = 0):
///   K_A   = (P_AA H_A^T + P_AN H_N^T) S^-1
///   x_A  <- x_A (+) K_A r            x_N unchanged
///   P_AA <- P_AA - K_A S K_A^T
///   P_AN <- P_AN - K_A (H_A P_AN + H_N P_NN)
///   P_NN unchanged
/// Skipped when S is not positive definite or its condition number exceeds 1e12.
UpdateStatus schmidt_update(FilterState& state, const LinearizedMeasurement& m);

/// Standard EKF update over the whole state, nuisance part included: the O(n^2)
/// reference the Schmidt update is compared against. With no nuisance part it performs
/// the same arithmetic as schmidt_update.
UpdateStatus ekf_update(FilterState& state, const LinearizedMeasurement& m);

}  // namespace csmsckf
