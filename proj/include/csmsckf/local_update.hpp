#pragma once

#include <optional>
#include <vector>

#include "csmsckf/kalman_update.hpp"

namespace csmsckf {

struct FeatureObservation {
  double t = 0.0;  // clone timestamp
  Vec2 uv = Vec2::Zero();
};

struct FeatureTrack {
  int id = -1;
  std::vector<FeatureObservation> obs;
};

struct TriangulationOptions {
  double max_condition = 1e6;
  double min_depth = 0.1;
  double max_depth = 200.0;
  int gauss_newton_steps = 3;
};

/// Multi-view triangulation from camera poses ^W T_C and pixels.
///
/// Linear least squares on the bearing constraints sum_i (I - b_i b_i^T)(p - c_i) = 0,
/// followed by Gauss-Newton on pixel reprojection error. Returns the point in W, or
/// nothing if the normal matrix is ill-conditioned or any depth leaves the allowed range.
std::optional<Vec3> triangulate_points(const std::vector<Pose>& w_T_c,
                                       const std::vector<Vec2>& uv, const PinholeCamera& cam,
                                       const TriangulationOptions& opts = {});

// Triangulates a track against the clones in `state`; the result is in L.
std::optional<Vec3> triangulate(const FeatureTrack& track, const FilterState& state,
                                const PinholeCamera& cam, const TriangulationOptions& opts = {});

struct FeatureLinearization {
  Eigen::VectorXd r;    // 2 n_obs
  Eigen::MatrixXd h_x;  // 2 n_obs x active_dim, nonzero on observing clones only
  Eigen::MatrixXd h_f;  // 2 n_obs x 3
};

/// r = z - h(x, f) for every observation of the track, with analytic Jacobians.
/// For clone j with pose ^L T_Ij and p_I = ^Ij R_L (f - ^L p_Ij):
///   d p_C / d dtheta_j = ^C R_I [p_I]x
///   d p_C / d dp_j     = -^C R_I ^Ij R_L
///   d p_C / d f        =  ^C R_I ^Ij R_L
/// Returns nothing if the point falls behind any observing camera.
std::optional<FeatureLinearization> local_residual_jacobian(const FeatureTrack& track,
                                                            const Vec3& f_L,
                                                            const FilterState& state,
                                                            const PinholeCamera& cam);

struct ProjectedResidual {
  Eigen::VectorXd r;
  Eigen::MatrixXd h_x;
  bool degenerate = false;  // H_f had rank < 3
};

/// Left null-space projection: N^T r and N^T H_x with N an orthonormal basis of the
/// complement of range(H_f). Rank-deficient H_f is handled by projecting against its
/// actual column space.
ProjectedResidual nullspace_project(const Eigen::VectorXd& r, const Eigen::MatrixXd& h_x,
                                    const Eigen::MatrixXd& h_f);

struct LocalUpdateOptions {
  double sigma_px = 1.0;
  int max_rows = 1500;
  bool chi2_gating = true;
  TriangulationOptions triangulation;
};

struct LocalUpdateStats {
  int tracks = 0;
  int used = 0;
  int rejected_triangulation = 0;
  int rejected_gate = 0;
  int dropped_row_cap = 0;
  int rows = 0;
  UpdateStatus status = UpdateStatus::kEmpty;
};

/// One MSCKF update from a batch of finished tracks. Observations at timestamps that are
/// not clones are ignored. Nuisance columns are identically zero, so the update goes
/// through the Schmidt kernel with exact results.
LocalUpdateStats local_update(FilterState& state, const std::vector<FeatureTrack>& tracks,
                              const PinholeCamera& cam, const LocalUpdateOptions& opts = {});

}  // namespace csmsckf
