#pragma once

#include <functional>
#include <random>
#include <vector>

#include "csmsckf/global_localization.hpp"
#include "csmsckf/kalman_update.hpp"
#include "csmsckf/local_update.hpp"

namespace csmsckf::testing {

using Rng = std::mt19937_64;

double randn(Rng& rng);
Eigen::VectorXd randn_vec(int n, Rng& rng);
Eigen::MatrixXd randn_mat(int rows, int cols, Rng& rng);
// A A^T / n + eps I, scaled
Eigen::MatrixXd random_spd(int n, Rng& rng, double scale = 1.0, double eps = 1e-3);
Mat3 random_rotation(Rng& rng, double max_angle = 3.14);
Pose random_pose(Rng& rng, double rot_sigma = 1.0, double trans_sigma = 1.0);
ImuState random_imu_state(Rng& rng);

// Relative error ||a - b|| / max(||b||, floor)
double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-6);

/// Central differences of a vector function of an n-dim increment.
Eigen::MatrixXd numerical_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   int n, double eps = 1e-6);

/// Small self-consistent global scene: a query clone, x_t, `num_kf` map keyframes in
/// the nuisance state and landmarks anchored in keyframe 0 observed by every keyframe.
/// With noise == 0 the state and map are exact.
struct GlobalScene {
  PinholeCamera cam;
  KeyframeMap map;
  FilterState state{ImuState{}, Eigen::Matrix<double, 15, 15>::Identity()};
  MatchSet match;
  Pose true_g_T_l;
  std::vector<Pose> true_kf_poses;
  std::vector<Vec3> true_points_G;
};
GlobalScene make_global_scene(Rng& rng, int num_kf, int num_landmarks, double pixel_noise = 0.0,
                              int clones = 3, bool with_rel_transform = true);

/// Local scene: a window of clones and one feature seen by every clone.
struct LocalScene {
  PinholeCamera cam;
  FilterState state{ImuState{}, Eigen::Matrix<double, 15, 15>::Identity()};
  FeatureTrack track;
  Vec3 p_L = Vec3::Zero();
};
LocalScene make_local_scene(Rng& rng, int clones, double pixel_noise = 0.0);

// Copy of `state` with active/nuisance corrections applied.
FilterState perturbed(const FilterState& state, const Eigen::VectorXd& d_active,
                      const Eigen::VectorXd& d_nuisance);

// Random PD joint covariance written into the state's blocks.
void randomize_covariance(FilterState& state, Rng& rng, double scale = 1e-2);

/// Landmark-in-state oracle: f joins the state with a flat prior (zero information), the
/// stacked rows r = H_x dx + H_f df + n are fused in information form and f is
/// marginalized out again. Returns the posterior correction and covariance of x.
struct MarginalizedPosterior {
  Eigen::VectorXd dx;
  Eigen::MatrixXd P;
};
MarginalizedPosterior landmark_oracle(const Eigen::MatrixXd& P, const Eigen::MatrixXd& h_x,
                                      const Eigen::MatrixXd& h_f, const Eigen::VectorXd& r,
                                      double sigma_px);

// Copy of `map` with landmark `lm_id` moved by d in its anchor frame.
KeyframeMap with_landmark_offset(const KeyframeMap& map, int lm_id, const Vec3& d);

// Compact nuisance Jacobian scattered into the full nuisance width.
Eigen::MatrixXd dense_nuisance(const LandmarkLinearization& lin, int nuisance_dim);

// Active and nuisance corrections that map `before` onto `after`.
Eigen::VectorXd active_lift(const FilterState& before, const FilterState& after);
Eigen::VectorXd nuisance_lift(const FilterState& before, const FilterState& after);

}  // namespace csmsckf::testing
