#pragma once

#include <optional>
#include <vector>

#include "csmsckf/epnp.hpp"
#include "csmsckf/kalman_update.hpp"
#include "csmsckf/local_update.hpp"

namespace csmsckf {

/// One map landmark seen in the query image. `kf_obs` holds the landmark's 2D positions
/// in the matched keyframes, the anchor's own observation included.
struct LandmarkMatch {
  int landmark_id = -1;
  Vec2 uv = Vec2::Zero();
  std::vector<KeyframeObservation> kf_obs;
};

struct MatchSet {
  double t = 0.0;  // query image time; a clone must exist at t
  std::vector<int> keyframe_ids;
  std::vector<LandmarkMatch> pairs;
};

struct GlobalOptions {
  double sigma_px = 1.0;
  // Treat keyframe poses and landmarks as exact: no keyframe augmentation, query rows
  // only, no landmark marginalization.
  bool map_as_constant = false;
  bool relinearize = false;
  double relin_threshold_px = 20.0;
  // Move the x_t mean onto the re-linearization point instead of only evaluating there.
  bool relin_shift_mean = false;
  int max_keyframes = 3;
  bool chi2_gating = true;
  // Full EKF over the nuisance block instead of the Schmidt update (reference only).
  bool full_ekf = false;
  Mat6 rel_transform_prior = default_rel_transform_prior();
  PnPOptions pnp;
};

// Query-camera pose ^L T_C at the clone stamped t.
Pose local_camera_pose(const FilterState& state, double t, const PinholeCamera& cam);

/// EPnP of a match against the map, with all landmarks expressed in the frame of the
/// first matched keyframe. On success returns ^G T_C of the query camera.
std::optional<PnPResult> solve_match_pnp(const MatchSet& match, const KeyframeMap& map,
                                         const PinholeCamera& cam, const PnPOptions& opts = {});

/// ^G T_L = ^G T_kf (x) ^kf T_C (x) (^L T_C)^-1, then x_t is appended with `prior`.
/// Returns false (state untouched) when EPnP fails. Throws std::logic_error if x_t
/// already exists.
bool initialize_global(FilterState& state, const MatchSet& match, const KeyframeMap& map,
                       const PinholeCamera& cam, const GlobalOptions& opts = {});

// Mean query-image reprojection error of the matched landmarks through the current
// estimates of the clone, x_t and the keyframe poses. Landmarks behind the camera are
// skipped; returns +inf if none is usable.
double match_reprojection_error(const FilterState& state, const MatchSet& match,
                                const KeyframeMap& map, const PinholeCamera& cam,
                                const std::optional<Pose>& x_t_point = std::nullopt);

struct RelinearizationDecision {
  double reprojection_px = 0.0;
  std::optional<Pose> point;  // new linearization point for x_t, if triggered
};

/// If the current reprojection error exceeds the threshold, a fresh EPnP solution gives
/// a new evaluation point for x_t. The state itself is left alone.
RelinearizationDecision relinearize(const FilterState& state, const MatchSet& match,
                                    const KeyframeMap& map, const PinholeCamera& cam,
                                    double threshold_px, const PnPOptions& pnp = {});

/// Raw rows of one landmark before marginalization: the query image first, then the
/// anchor keyframe, then every other observing keyframe present in the state.
///
/// With p_G = ^G T_kf p_f, p_L = (^G T_L)^-1 p_G, the query row blocks are
///   d p_L / d dtheta_t = [p_L]x          d p_L / d dp_t  = -^L R_G
///   d p_G / d dtheta_kf = -^G R_kf [p_f]x   d p_G / d dp_kf = I    d p_G / d p_f = ^G R_kf
/// chained through the clone and the camera extrinsic. Keyframe rows use the same
/// keyframe-pose blocks with the anchor, and d p_kf2 / d dtheta_kf2 = [p_kf2]x,
/// d p_kf2 / d dp_kf2 = -^kf2 R_G for a second keyframe.
struct LandmarkLinearization {
  Eigen::VectorXd r;
  Eigen::MatrixXd h_active;
  Eigen::MatrixXd h_nuisance;  // compact, see keyframe_slots
  std::vector<int> keyframe_slots;
  Eigen::MatrixXd h_f;
  int frames = 0;  // query + keyframes; rows == 2 * frames
};

/// `x_t_point` overrides the evaluation point of x_t; the residual is then corrected
/// to first order so it stays an error against the filter's own x_t estimate:
///   r = z - h(x_bar) - H_t (x_hat - x_bar).
/// With `map_as_constant`, only the query rows are built, keyframe poses come from the
/// map and no nuisance or landmark columns are produced.
std::optional<LandmarkLinearization> linearize_landmark(
    const FilterState& state, const MatchSet& match, const LandmarkMatch& pair,
    const KeyframeMap& map, const PinholeCamera& cam, bool map_as_constant = false,
    const std::optional<Pose>& x_t_point = std::nullopt);

struct GlobalResidualStats {
  int landmarks = 0;
  int used = 0;
  int dropped = 0;  // behind a camera or missing keyframes
  int gated = 0;
};

/// Stacked global measurement after per-landmark left null-space projection (or, for a
/// constant map, the raw query rows). Each landmark is chi^2-gated against the full
/// covariance when opts.chi2_gating is set.
GlobalResidual build_global_residual(const FilterState& state, const MatchSet& match,
                                     const KeyframeMap& map, const PinholeCamera& cam,
                                     const GlobalOptions& opts,
                                     const std::optional<Pose>& x_t_point = std::nullopt,
                                     GlobalResidualStats* stats = nullptr);

struct GlobalUpdateStats {
  bool initialized = false;  // x_t was created by this call
  bool relinearized = false;
  double reprojection_px = 0.0;
  int keyframes_added = 0;
  GlobalResidualStats residual;
  int rows = 0;
  UpdateStatus status = UpdateStatus::kEmpty;
};

/// Full map-based update for one match: initialization on first use, keyframe
/// augmentation, optional re-linearization, residual construction and the Schmidt (or
/// reference full-EKF) update.
GlobalUpdateStats global_update(FilterState& state, const MatchSet& match,
                                const KeyframeMap& map, const PinholeCamera& cam,
                                const GlobalOptions& opts);

}  // namespace csmsckf
