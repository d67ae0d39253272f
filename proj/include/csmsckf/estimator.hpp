#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csmsckf/global_localization.hpp"
#include "csmsckf/imu_propagation.hpp"
#include "csmsckf/local_update.hpp"
#include "csmsckf/simulator.hpp"

namespace csmsckf {

enum class Mode { kOdometry, kSingleMatch, kMultiMatch, kMapConstant };

std::string to_string(Mode mode);
// Accepts odometry | sm | mm | mapconst (case-insensitive).
Mode mode_from_string(const std::string& name);

struct EstimatorConfig {
  Mode mode = Mode::kMultiMatch;
  bool relinearize = true;
  double relin_threshold_px = 20.0;
  // x_t error is taken against the re-linearization point (its mean moves there);
  // false evaluates residual and Jacobians there but keeps the prior mean.
  bool relin_shift_mean = false;
  int max_clones = 11;
  ImuNoise imu_noise;
  double sigma_px = 1.0;
  int max_rows = 1500;
  bool chi2_gating = true;
  int max_keyframes = 3;  // matched keyframes per update in MM mode
  Mat6 rel_transform_prior = default_rel_transform_prior();
  // Initial standard deviations of the IMU error state.
  double init_sigma_theta = 1e-3;
  double init_sigma_p = 1e-3;
  double init_sigma_v = 0.05;
  double init_sigma_bg = 1e-3;
  double init_sigma_ba = 2e-2;
  bool full_ekf = false;

  Mat15 initial_covariance() const;
  void validate() const;
};

// Filter output after one camera frame.
struct FrameEstimate {
  double t = 0.0;
  ImuState imu;                    // in L
  std::optional<Pose> g_T_l;       // x_t, once initialized
  Vec3 p_global = Vec3::Zero();    // ^G p_I
  Mat3 p_global_cov = Mat3::Zero();
  Mat6 x_t_cov = Mat6::Zero();
  bool global_valid = false;       // p_global uses the estimated x_t
  bool match_used = false;
  bool relinearized = false;
};

struct UpdateTiming {
  std::vector<double> local_ms;
  std::vector<double> global_ms;
};

/// The filter loop: strapdown propagation between camera frames, stochastic cloning,
/// MSCKF updates from finished tracks, map-based updates according to the mode, and
/// sliding-window maintenance.
///
/// The window holds max_clones clones between frames and briefly max_clones + 1 while a
/// frame is processed; the oldest clone is dropped after the frame's updates, once the
/// tracks that reach back to it have been used.
class Estimator {
 public:
  Estimator(const EstimatorConfig& cfg, const PinholeCamera& cam, const KeyframeMap* map);

  void initialize(double t0, const ImuState& x0, const Mat15& P0);
  void add_imu(const ImuSample& s);
  FrameEstimate process_frame(const FeatureFrame& frame, const MatchSet* match);

  const FilterState& state() const { return *state_; }
  bool initialized() const { return state_.has_value(); }
  const UpdateTiming& timing() const { return timing_; }
  // Frame offset used for global output before x_t exists (odometry mode: always).
  void set_reference_offset(const Pose& g_T_l) { reference_offset_ = g_T_l; }
  // Switches re-linearization for subsequent map updates (A/B runs from a shared state).
  void set_relinearize(bool on) {
    cfg_.relinearize = on;
    global_opts_.relinearize = on;
  }

 private:
  void propagate_to(double t);
  FrameEstimate snapshot(double t) const;

  EstimatorConfig cfg_;
  PinholeCamera cam_;
  const KeyframeMap* map_;
  GlobalOptions global_opts_;
  LocalUpdateOptions local_opts_;
  std::optional<FilterState> state_;
  double t_ = 0.0;
  std::vector<ImuSample> imu_;
  std::size_t cursor_ = 0;
  std::map<int, FeatureTrack> tracks_;
  Pose reference_offset_;
  UpdateTiming timing_;
};

}  // namespace csmsckf
