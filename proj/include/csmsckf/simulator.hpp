#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "csmsckf/global_localization.hpp"
#include "csmsckf/imu_propagation.hpp"
#include "csmsckf/map.hpp"

namespace csmsckf {

/// Body state at one instant. The body frame is the IMU frame (x forward, y left, z up).
struct TrajectorySample {
  double t = 0.0;
  Mat3 R_GI = Mat3::Identity();  // body-to-world
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  Vec3 omega = Vec3::Zero();  // body frame

  // ^G T_I in the library's pose convention.
  Pose pose() const;
};

class Trajectory {
 public:
  virtual ~Trajectory() = default;
  virtual TrajectorySample sample(double t) const = 0;
  virtual double duration() const = 0;
};

/// Attitude that keeps body x along the velocity with zero roll: R_GI = Rz(yaw) Ry(b),
/// b = -atan2(v_z, |v_xy|). The body rate follows in closed form from v and a.
void heading_attitude(const Vec3& v, const Vec3& a, Mat3& R_GI, Vec3& omega);

class StaticTrajectory : public Trajectory {
 public:
  StaticTrajectory(const Pose& g_T_i, double duration) : pose_(g_T_i), duration_(duration) {}
  TrajectorySample sample(double t) const override;
  double duration() const override { return duration_; }

 private:
  Pose pose_;
  double duration_;
};

// Horizontal circle at constant speed, counter-clockwise, starting at (radius, 0, height).
class CircleTrajectory : public Trajectory {
 public:
  CircleTrajectory(double radius, double speed, double height, double duration);
  TrajectorySample sample(double t) const override;
  double duration() const override { return duration_; }

 private:
  double radius_, speed_, height_, duration_;
};

/// Closed uniform cubic B-spline through cyclic control points, one segment per
/// `segment_duration` seconds; C2 in position, so attitude and body rate are smooth.
/// Covers exactly one lap.
class SplineTrajectory : public Trajectory {
 public:
  SplineTrajectory(std::vector<Vec3> control_points, double segment_duration);
  TrajectorySample sample(double t) const override;
  double duration() const override;
  // Path length of one lap, by numerical integration.
  double length() const;

 private:
  void evaluate(double t, Vec3& p, Vec3& v, Vec3& a) const;
  std::vector<Vec3> ctrl_;
  double seg_dt_;
};

struct TrajectoryConfig {
  std::string type = "loop";  // loop | circle | static | waypoints
  double speed = 5.0;
  double radius = 200.0;       // loop and circle
  double height = 1.5;
  double static_duration = 60.0;
  std::string waypoint_file;   // x y z per line (comma or space separated), closed loop
};

struct MapSimConfig {
  double sigma_p2 = 0.01;      // per-axis position variance, m^2
  double sigma_o2 = 0.00025;   // per-axis orientation variance, rad^2
  double keyframe_period = 0.5;  // s along the second pass
  double lateral_offset = 0.5;   // m, along body y
  int landmarks_per_keyframe = 40;
  double min_depth = 4.0;
  double max_depth = 25.0;
  int covisible_keyframes = 4;  // landmarks are looked for in +-this many keyframes
};

struct MatchSimConfig {
  double period = 2.0;       // s between match attempts
  double dropout = 0.3;
  double dry_spell_start = 0.0;
  double dry_spell_duration = 0.0;  // 0 disables
  int keyframes = 3;         // 1 gives single-keyframe matches
  int pairs_per_keyframe = 20;
  int min_pairs = 8;
  double max_keyframe_distance = 6.0;  // m
};

struct FeatureSimConfig {
  double points_per_meter = 2.0;
  double min_lateral = 3.0;
  double max_lateral = 15.0;
  double min_height = -1.0;
  double max_height = 6.0;
  double max_depth = 40.0;
  double image_margin = 5.0;
  int max_track_length = 11;
};

struct SimConfig {
  std::uint64_t seed = 1;
  TrajectoryConfig trajectory;
  double imu_rate = 200.0;
  double camera_rate = 10.0;
  bool imu_noise_enabled = true;
  ImuNoise imu_noise;
  double initial_gyro_bias_sigma = 1e-3;
  double initial_accel_bias_sigma = 2e-2;
  double sigma_px = 1.0;
  // Ground-truth ^G T_L: yaw about z (gravity must stay vertical in both frames).
  double frame_offset_yaw = 0.0;
  Vec3 frame_offset_translation = Vec3::Zero();
  MapSimConfig map;
  MatchSimConfig match;
  FeatureSimConfig features;

  void validate() const;
};

struct TruthSample {
  double t = 0.0;
  Pose g_T_i;
  Vec3 v_G = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
};

struct TrackObservation {
  int id = -1;
  Vec2 uv = Vec2::Zero();
};

struct FeatureFrame {
  double t = 0.0;
  std::vector<TrackObservation> obs;
};

struct SimWorld {
  SimConfig config;
  std::shared_ptr<const Trajectory> trajectory;
  PinholeCamera camera;
  Pose g_T_l;                               // true frame offset
  std::vector<ImuSample> imu;
  std::vector<TruthSample> imu_truth;       // aligned with imu
  std::vector<MapKeyframe> true_keyframes;  // same ids as the map
  KeyframeMap map;                          // perturbed keyframes, estimated landmarks
  std::map<int, Vec3> true_landmarks;       // in G
  std::vector<FeatureFrame> frames;
  std::vector<MatchSet> matches;

  // Truth interpolated from the IMU-rate samples (exact at sample times).
  TruthSample truth_at(double t) const;
};

// Default camera: 640x480, f = 400 px, looking along body x, 10 cm ahead of the IMU.
PinholeCamera default_camera();

std::unique_ptr<Trajectory> generate_trajectory(const TrajectoryConfig& cfg);
std::vector<Vec3> read_waypoints(const std::string& path);

/// IMU readings at cfg.imu_rate: w_m = w + b_g + n_g, a_m = R_IG (a - g) + b_a + n_a with
/// discrete white noise sigma / sqrt(dt) and bias random walk sigma_b sqrt(dt) per step.
void synthesize_imu(const Trajectory& traj, const SimConfig& cfg, std::mt19937_64& rng,
                    std::vector<ImuSample>& imu, std::vector<TruthSample>& truth);

/// Keyframe camera poses along a laterally offset second pass of the trajectory.
std::vector<MapKeyframe> generate_true_keyframes(const Trajectory& traj, const SimConfig& cfg,
                                                 const PinholeCamera& cam);

/// Each pose is replaced by retract(pose, n) with n ~ N(0, diag(sigma_o2 I, sigma_p2 I));
/// the stored covariance is that same diagonal.
std::vector<MapKeyframe> perturb_map(const std::vector<MapKeyframe>& truth,
                                     const MapSimConfig& cfg, std::mt19937_64& rng);

/// Landmarks sampled in every keyframe's frustum, observed with pixel noise by nearby
/// keyframes, triangulated from the perturbed poses and anchored in the keyframe that
/// generated them. Landmarks with fewer than two observations or failed triangulation
/// are dropped.
void generate_map_landmarks(const std::vector<MapKeyframe>& true_kfs,
                            const std::vector<MapKeyframe>& perturbed_kfs,
                            const SimConfig& cfg, std::mt19937_64& rng, KeyframeMap& map,
                            std::map<int, Vec3>& true_landmarks);

std::vector<MatchSet> generate_matches(const SimWorld& world, std::mt19937_64& rng);

std::vector<FeatureFrame> generate_local_tracks(const SimWorld& world, std::mt19937_64& rng);

// Full world; deterministic in cfg (seed included).
SimWorld generate_world(const SimConfig& cfg);

}  // namespace csmsckf
