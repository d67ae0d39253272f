#include "csmsckf/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace csmsckf {

namespace {

std::mt19937_64 component_rng(std::uint64_t seed, std::uint64_t component) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(component)};
  return std::mt19937_64(seq);
}

enum Component : std::uint64_t { kImu = 1, kMap = 2, kLandmarks = 3, kMatches = 4, kTracks = 5 };

Vec3 gaussian3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return sigma * Vec3(x, y, z);
}

Mat3 rot_z(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

}  // namespace

Pose TrajectorySample::pose() const {
  return {UnitQuatJPL::from_rotation_matrix(R_GI.transpose()), p};
}

void heading_attitude(const Vec3& v, const Vec3& a, Mat3& R_GI, Vec3& omega) {
  const double h2 = v.x() * v.x() + v.y() * v.y();
  const double h = std::sqrt(h2);
  if (h < 1e-9) throw std::invalid_argument("heading_attitude: no horizontal velocity");
  const double yaw = std::atan2(v.y(), v.x());
  const double b = -std::atan2(v.z(), h);
  const double yaw_rate = (v.x() * a.y() - v.y() * a.x()) / h2;
  const double h_rate = (v.x() * a.x() + v.y() * a.y()) / h;
  const double b_rate = -(h * a.z() - v.z() * h_rate) / (h2 + v.z() * v.z());
  const Mat3 Ry = Eigen::AngleAxisd(b, Vec3::UnitY()).toRotationMatrix();
  R_GI = rot_z(yaw) * Ry;
  omega = Ry.transpose() * Vec3::UnitZ() * yaw_rate + Vec3::UnitY() * b_rate;
}

TrajectorySample StaticTrajectory::sample(double t) const {
  TrajectorySample s;
  s.t = t;
  s.R_GI = pose_.rotation_matrix().transpose();
  s.p = pose_.translation;
  return s;
}

CircleTrajectory::CircleTrajectory(double radius, double speed, double height, double duration)
    : radius_(radius), speed_(speed), height_(height), duration_(duration) {
  if (!(radius > 0.0) || !(speed > 0.0) || !(duration > 0.0)) {
    throw std::invalid_argument("CircleTrajectory: radius, speed and duration must be positive");
  }
}

TrajectorySample CircleTrajectory::sample(double t) const {
  const double w = speed_ / radius_;
  const double phi = w * t;
  TrajectorySample s;
  s.t = t;
  s.p = Vec3(radius_ * std::cos(phi), radius_ * std::sin(phi), height_);
  s.v = Vec3(-speed_ * std::sin(phi), speed_ * std::cos(phi), 0.0);
  s.a = Vec3(-speed_ * w * std::cos(phi), -speed_ * w * std::sin(phi), 0.0);
  heading_attitude(s.v, s.a, s.R_GI, s.omega);
  return s;
}

SplineTrajectory::SplineTrajectory(std::vector<Vec3> control_points, double segment_duration)
    : ctrl_(std::move(control_points)), seg_dt_(segment_duration) {
  if (ctrl_.size() < 4) throw std::invalid_argument("SplineTrajectory: need >= 4 points");
  if (!(seg_dt_ > 0.0)) throw std::invalid_argument("SplineTrajectory: bad segment duration");
}

double SplineTrajectory::duration() const { return seg_dt_ * static_cast<double>(ctrl_.size()); }

void SplineTrajectory::evaluate(double t, Vec3& p, Vec3& v, Vec3& a) const {
  const int m = static_cast<int>(ctrl_.size());
  double u = t / seg_dt_;
  u -= std::floor(u / m) * m;
  int i = static_cast<int>(std::floor(u));
  if (i >= m) i = m - 1;
  const double s = u - i;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double B[4] = {(1 - s) * (1 - s) * (1 - s) / 6.0, (3 * s3 - 6 * s2 + 4) / 6.0,
                       (-3 * s3 + 3 * s2 + 3 * s + 1) / 6.0, s3 / 6.0};
  const double dB[4] = {-0.5 * (1 - s) * (1 - s), 1.5 * s2 - 2 * s, -1.5 * s2 + s + 0.5,
                        0.5 * s2};
  const double ddB[4] = {1 - s, 3 * s - 2, -3 * s + 1, s};
  p.setZero();
  v.setZero();
  a.setZero();
  for (int k = 0; k < 4; ++k) {
    const Vec3& c = ctrl_[((i - 1 + k) % m + m) % m];
    p += B[k] * c;
    v += dB[k] * c;
    a += ddB[k] * c;
  }
  v /= seg_dt_;
  a /= seg_dt_ * seg_dt_;
}

TrajectorySample SplineTrajectory::sample(double t) const {
  TrajectorySample s;
  s.t = t;
  evaluate(t, s.p, s.v, s.a);
  heading_attitude(s.v, s.a, s.R_GI, s.omega);
  return s;
}

double SplineTrajectory::length() const {
  const int steps = 50 * static_cast<int>(ctrl_.size());
  const double dt = duration() / steps;
  double len = 0.0;
  Vec3 p, v, a;
  for (int k = 0; k < steps; ++k) {
    evaluate((k + 0.5) * dt, p, v, a);
    len += v.norm() * dt;
  }
  return len;
}

std::vector<Vec3> read_waypoints(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read waypoint file " + path);
  std::vector<Vec3> pts;
  std::string line;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z())) {
      throw std::runtime_error("malformed waypoint line: " + line);
    }
    pts.push_back(p);
  }
  return pts;
}

namespace {
std::unique_ptr<Trajectory> spline_at_speed(std::vector<Vec3> pts, double speed) {
  double chord = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    chord += (pts[(i + 1) % pts.size()] - pts[i]).norm();
  }
  chord /= static_cast<double>(pts.size());
  return std::make_unique<SplineTrajectory>(std::move(pts), chord / speed);
}
}  // namespace

std::unique_ptr<Trajectory> generate_trajectory(const TrajectoryConfig& cfg) {
  if (!(cfg.speed > 0.0)) throw std::invalid_argument("trajectory speed must be positive");
  if (cfg.type == "loop") {
    // Wavy closed loop; about 1.3 km for the default radius.
    constexpr int kPoints = 64;
    std::vector<Vec3> pts;
    for (int i = 0; i < kPoints; ++i) {
      const double phi = 2.0 * std::numbers::pi * i / kPoints;
      const double r = cfg.radius * (1.0 + 0.12 * std::sin(3 * phi) + 0.05 * std::cos(5 * phi));
      pts.emplace_back(r * std::cos(phi), r * std::sin(phi), cfg.height + 1.5 * std::sin(2 * phi));
    }
    return spline_at_speed(std::move(pts), cfg.speed);
  }
  if (cfg.type == "circle") {
    const double lap = 2.0 * std::numbers::pi * cfg.radius / cfg.speed;
    return std::make_unique<CircleTrajectory>(cfg.radius, cfg.speed, cfg.height, lap);
  }
  if (cfg.type == "static") {
    return std::make_unique<StaticTrajectory>(Pose{UnitQuatJPL(), Vec3(0, 0, cfg.height)},
                                              cfg.static_duration);
  }
  if (cfg.type == "waypoints") {
    return spline_at_speed(read_waypoints(cfg.waypoint_file), cfg.speed);
  }
  throw std::invalid_argument("unknown trajectory type '" + cfg.type + "'");
}

void SimConfig::validate() const {
  if (!(imu_rate > 0.0) || !(camera_rate > 0.0)) {
    throw std::invalid_argument("sim rates must be positive");
  }
  const double ratio = imu_rate / camera_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw std::invalid_argument("imu_rate must be an integer multiple of camera_rate");
  }
  if (sigma_px < 0.0 || map.sigma_p2 < 0.0 || map.sigma_o2 < 0.0 ||
      initial_gyro_bias_sigma < 0.0 || initial_accel_bias_sigma < 0.0) {
    throw std::invalid_argument("sim noise levels must be non-negative");
  }
  if (imu_noise_enabled) imu_noise.validate();
  if (match.dropout < 0.0 || match.dropout > 1.0) {
    throw std::invalid_argument("match dropout must lie in [0, 1]");
  }
  if (match.keyframes < 1) throw std::invalid_argument("match keyframes must be >= 1");
  if (features.max_track_length < 2) throw std::invalid_argument("track length must be >= 2");
}

PinholeCamera default_camera() {
  PinholeCamera cam;
  Mat3 R_CI;
  R_CI << 0, -1, 0,
          0, 0, -1,
          1, 0, 0;
  cam.extrinsic = {UnitQuatJPL::from_rotation_matrix(R_CI), Vec3(0.1, 0.0, 0.05)};
  return cam;
}

void synthesize_imu(const Trajectory& traj, const SimConfig& cfg, std::mt19937_64& rng,
                    std::vector<ImuSample>& imu, std::vector<TruthSample>& truth) {
  const double dt = 1.0 / cfg.imu_rate;
  const int n = static_cast<int>(std::floor(traj.duration() * cfg.imu_rate + 1e-9)) + 1;
  imu.clear();
  truth.clear();
  imu.reserve(n);
  truth.reserve(n);
  const bool noisy = cfg.imu_noise_enabled;
  const ImuNoise& q = cfg.imu_noise;
  Vec3 bg = noisy ? gaussian3(rng, cfg.initial_gyro_bias_sigma) : Vec3::Zero();
  Vec3 ba = noisy ? gaussian3(rng, cfg.initial_accel_bias_sigma) : Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    const TrajectorySample s = traj.sample(t);
    ImuSample m;
    m.t = t;
    m.gyro = s.omega + bg;
    m.accel = s.R_GI.transpose() * (s.a - kGravity) + ba;
    if (noisy) {
      m.gyro += gaussian3(rng, q.sigma_g / std::sqrt(dt));
      m.accel += gaussian3(rng, q.sigma_a / std::sqrt(dt));
    }
    imu.push_back(m);
    truth.push_back({t, s.pose(), s.v, bg, ba});
    if (noisy) {
      bg += gaussian3(rng, q.sigma_bg * std::sqrt(dt));
      ba += gaussian3(rng, q.sigma_ba * std::sqrt(dt));
    }
  }
}

std::vector<MapKeyframe> generate_true_keyframes(const Trajectory& traj, const SimConfig& cfg,
                                                 const PinholeCamera& cam) {
  std::vector<MapKeyframe> kfs;
  const double period = cfg.map.keyframe_period;
  if (!(period > 0.0)) throw std::invalid_argument("keyframe period must be positive");
  int id = 0;
  for (double t = 0.5 * period; t < traj.duration(); t += period) {
    const TrajectorySample s = traj.sample(t);
    Pose g_T_c = pose_compose(s.pose(), cam.extrinsic);
    g_T_c.translation += s.R_GI * Vec3(0.0, cfg.map.lateral_offset, 0.0);
    MapKeyframe kf;
    kf.id = id++;
    kf.pose = g_T_c;
    kf.camera = cam;
    kfs.push_back(kf);
  }
  return kfs;
}

std::vector<MapKeyframe> perturb_map(const std::vector<MapKeyframe>& truth,
                                     const MapSimConfig& cfg, std::mt19937_64& rng) {
  Vec6 var;
  var << Vec3::Constant(cfg.sigma_o2), Vec3::Constant(cfg.sigma_p2);
  std::vector<MapKeyframe> out;
  out.reserve(truth.size());
  for (const auto& kf : truth) {
    Vec6 n;
    n.head<3>() = gaussian3(rng, std::sqrt(cfg.sigma_o2));
    n.tail<3>() = gaussian3(rng, std::sqrt(cfg.sigma_p2));
    MapKeyframe p = kf;
    p.pose = pose_retract(kf.pose, n);
    p.cov = var.asDiagonal();
    out.push_back(p);
  }
  return out;
}

void generate_map_landmarks(const std::vector<MapKeyframe>& true_kfs,
                            const std::vector<MapKeyframe>& perturbed_kfs,
                            const SimConfig& cfg, std::mt19937_64& rng, KeyframeMap& map,
                            std::map<int, Vec3>& true_landmarks) {
  const MapSimConfig& mc = cfg.map;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> px(0.0, 1.0);
  TriangulationOptions topts;
  topts.min_depth = 0.5;
  int next_id = 0;
  const int nkf = static_cast<int>(true_kfs.size());
  for (int i = 0; i < nkf; ++i) {
    const PinholeCamera& cam = true_kfs[i].camera;
    for (int k = 0; k < mc.landmarks_per_keyframe; ++k) {
      const Vec2 uv0(20.0 + unit(rng) * (cam.width - 40.0), 20.0 + unit(rng) * (cam.height - 40.0));
      const double depth = mc.min_depth + unit(rng) * (mc.max_depth - mc.min_depth);
      const Vec3 p_G = true_kfs[i].pose.transform(depth * cam.unproject(uv0));

      std::vector<KeyframeObservation> obs;
      std::vector<Pose> poses;
      std::vector<Vec2> uvs;
      const int lo = std::max(0, i - mc.covisible_keyframes);
      const int hi = std::min(nkf - 1, i + mc.covisible_keyframes);
      for (int j = lo; j <= hi; ++j) {
        const Vec3 p_C = true_kfs[j].pose.inverse_transform(p_G);
        const auto z = p_C.z() > 0.5 ? project(cam, p_C) : std::nullopt;
        if (!z || !cam.in_image(*z)) continue;
        const double nu = px(rng);
        const double nv = px(rng);
        const Vec2 uv = *z + cfg.sigma_px * Vec2(nu, nv);
        obs.push_back({true_kfs[j].id, uv});
        poses.push_back(perturbed_kfs[j].pose);
        uvs.push_back(uv);
      }
      if (obs.size() < 2) continue;
      const auto p_est = triangulate_points(poses, uvs, cam, topts);
      if (!p_est) continue;
      MapLandmark lm;
      lm.id = next_id++;
      lm.anchor_kf = true_kfs[i].id;
      lm.p = perturbed_kfs[i].pose.inverse_transform(*p_est);
      map.add_landmark(lm);
      for (const auto& o : obs) map.add_observation(lm.id, o);
      true_landmarks[lm.id] = p_G;
    }
  }
}

TruthSample SimWorld::truth_at(double t) const {
  if (imu_truth.empty()) throw std::logic_error("SimWorld::truth_at: no truth samples");
  const double rate = config.imu_rate;
  const long idx = std::clamp(static_cast<long>(std::floor(t * rate + 1e-6)), 0L,
                              static_cast<long>(imu_truth.size()) - 1);
  TruthSample out = imu_truth[idx];
  if (std::abs(out.t - t) > 1e-9 && !trajectory) {
    // Streams read back from disk carry no trajectory: interpolate position and velocity.
    const long j = std::min(idx + 1, static_cast<long>(imu_truth.size()) - 1);
    const TruthSample& b = imu_truth[j];
    if (j != idx && b.t > out.t) {
      const double a = std::clamp((t - out.t) / (b.t - out.t), 0.0, 1.0);
      out.g_T_i.translation += a * (b.g_T_i.translation - out.g_T_i.translation);
      out.v_G += a * (b.v_G - out.v_G);
    }
    out.t = t;
  } else if (std::abs(out.t - t) > 1e-9) {
    const TrajectorySample s = trajectory->sample(t);
    out.t = t;
    out.g_T_i = s.pose();
    out.v_G = s.v;
  }
  return out;
}

std::vector<MatchSet> generate_matches(const SimWorld& world, std::mt19937_64& rng) {
  const MatchSimConfig& mc = world.config.match;
  const PinholeCamera& cam = world.camera;
  std::vector<MatchSet> out;
  if (world.frames.empty() || mc.period <= 0.0) return out;

  std::map<int, std::vector<int>> by_anchor;
  for (const auto& [id, lm] : world.map.landmarks()) by_anchor[lm.anchor_kf].push_back(id);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> px(0.0, 1.0);
  const int stride = std::max(1, static_cast<int>(std::lround(mc.period * world.config.camera_rate)));
  for (std::size_t k = stride; k < world.frames.size(); k += stride) {
    const double t = world.frames[k].t;
    // Draw before the checks so the random stream does not depend on the dry spell.
    const bool dropped = unit(rng) < mc.dropout;
    const bool dry = mc.dry_spell_duration > 0.0 && t >= mc.dry_spell_start &&
                     t < mc.dry_spell_start + mc.dry_spell_duration;
    if (dropped || dry) continue;

    const Pose g_T_c = pose_compose(world.truth_at(t).g_T_i, cam.extrinsic);
    const Vec3 axis = g_T_c.rotation_matrix().row(2).transpose();
    std::vector<std::pair<double, int>> cands;
    for (const auto& kf : world.true_keyframes) {
      const double d = (kf.pose.translation - g_T_c.translation).norm();
      const Vec3 kf_axis = kf.pose.rotation_matrix().row(2).transpose();
      if (d <= mc.max_keyframe_distance && axis.dot(kf_axis) > std::cos(0.5)) {
        cands.emplace_back(d, kf.id);
      }
    }
    std::sort(cands.begin(), cands.end());
    if (cands.empty()) continue;

    MatchSet m;
    m.t = t;
    for (std::size_t c = 0; c < cands.size() && static_cast<int>(c) < mc.keyframes; ++c) {
      m.keyframe_ids.push_back(cands[c].second);
    }
    for (int kf_id : m.keyframe_ids) {
      std::vector<std::pair<int, Vec2>> visible;
      for (int lm_id : by_anchor[kf_id]) {
        const Vec3 p_C = g_T_c.inverse_transform(world.true_landmarks.at(lm_id));
        if (p_C.z() < 0.5 || p_C.z() > 60.0) continue;
        const auto z = project(cam, p_C);
        if (!z || !cam.in_image(*z)) continue;
        visible.emplace_back(lm_id, *z);
      }
      std::shuffle(visible.begin(), visible.end(), rng);
      if (static_cast<int>(visible.size()) > mc.pairs_per_keyframe) {
        visible.resize(mc.pairs_per_keyframe);
      }
      for (const auto& [lm_id, z] : visible) {
        LandmarkMatch pair;
        pair.landmark_id = lm_id;
        const double nu = px(rng);
        const double nv = px(rng);
        pair.uv = z + world.config.sigma_px * Vec2(nu, nv);
        for (const auto& o : world.map.observations(lm_id)) {
          if (std::find(m.keyframe_ids.begin(), m.keyframe_ids.end(), o.kf_id) !=
              m.keyframe_ids.end()) {
            pair.kf_obs.push_back(o);
          }
        }
        m.pairs.push_back(std::move(pair));
      }
    }
    if (static_cast<int>(m.pairs.size()) >= mc.min_pairs) out.push_back(std::move(m));
  }
  return out;
}

std::vector<FeatureFrame> generate_local_tracks(const SimWorld& world, std::mt19937_64& rng) {
  const FeatureSimConfig& fc = world.config.features;
  const PinholeCamera& cam = world.camera;
  const Trajectory& traj = *world.trajectory;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> px(0.0, 1.0);

  // Environment points scattered on both sides of the path.
  double path_length = 0.0;
  if (const auto* spline = dynamic_cast<const SplineTrajectory*>(&traj)) {
    path_length = spline->length();
  } else {
    for (double t = 0.0; t < traj.duration(); t += 0.1) path_length += traj.sample(t).v.norm() * 0.1;
  }
  const int npts = std::max(0, static_cast<int>(fc.points_per_meter * path_length));
  std::vector<Vec3> points;
  points.reserve(npts);
  for (int i = 0; i < npts; ++i) {
    const double t = unit(rng) * traj.duration();
    const TrajectorySample s = traj.sample(t);
    const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
    const double lateral = side * (fc.min_lateral + unit(rng) * (fc.max_lateral - fc.min_lateral));
    const double along = (unit(rng) - 0.5) * 10.0;
    const double height = fc.min_height + unit(rng) * (fc.max_height - fc.min_height);
    points.push_back(s.p + s.R_GI * Vec3(along, lateral, 0.0) + Vec3(0.0, 0.0, height));
  }
  // A static trajectory has no path; give it a fixed cloud in front of the camera.
  if (npts == 0) {
    const TrajectorySample s = traj.sample(0.0);
    for (int i = 0; i < 200; ++i) {
      const Vec3 local(5.0 + 15.0 * unit(rng), (unit(rng) - 0.5) * 16.0, (unit(rng) - 0.5) * 10.0);
      points.push_back(s.p + s.R_GI * local);
    }
  }

  std::vector<int> track_id(points.size(), -1);
  std::vector<int> track_len(points.size(), 0);
  int next_id = 0;
  std::vector<FeatureFrame> frames;
  const int stride = static_cast<int>(std::lround(world.config.imu_rate / world.config.camera_rate));
  for (std::size_t i = 0; i < world.imu.size(); i += stride) {
    FeatureFrame f;
    f.t = world.imu[i].t;
    const Pose g_T_c = pose_compose(world.imu_truth[i].g_T_i, cam.extrinsic);
    for (std::size_t j = 0; j < points.size(); ++j) {
      const Vec3 p_C = g_T_c.inverse_transform(points[j]);
      std::optional<Vec2> z;
      if (p_C.z() > 0.5 && p_C.z() < fc.max_depth) z = project(cam, p_C);
      if (!z || !cam.in_image(*z, fc.image_margin)) {
        track_id[j] = -1;
        track_len[j] = 0;
        continue;
      }
      if (track_id[j] < 0 || track_len[j] >= fc.max_track_length) {
        track_id[j] = next_id++;
        track_len[j] = 0;
      }
      ++track_len[j];
      const double nu = px(rng);
      const double nv = px(rng);
      f.obs.push_back({track_id[j], *z + world.config.sigma_px * Vec2(nu, nv)});
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

SimWorld generate_world(const SimConfig& cfg) {
  cfg.validate();
  SimWorld world;
  world.config = cfg;
  world.trajectory = generate_trajectory(cfg.trajectory);
  world.camera = default_camera();
  world.g_T_l = {UnitQuatJPL::from_rotation_matrix(rot_z(cfg.frame_offset_yaw).transpose()),
                 cfg.frame_offset_translation};

  auto rng_imu = component_rng(cfg.seed, kImu);
  synthesize_imu(*world.trajectory, cfg, rng_imu, world.imu, world.imu_truth);

  world.true_keyframes = generate_true_keyframes(*world.trajectory, cfg, world.camera);
  auto rng_map = component_rng(cfg.seed, kMap);
  const auto perturbed = perturb_map(world.true_keyframes, cfg.map, rng_map);
  for (const auto& kf : perturbed) world.map.add_keyframe(kf);
  auto rng_lm = component_rng(cfg.seed, kLandmarks);
  generate_map_landmarks(world.true_keyframes, perturbed, cfg, rng_lm, world.map,
                         world.true_landmarks);

  auto rng_tracks = component_rng(cfg.seed, kTracks);
  world.frames = generate_local_tracks(world, rng_tracks);
  auto rng_match = component_rng(cfg.seed, kMatches);
  world.matches = generate_matches(world, rng_match);
  return world;
}

}  // namespace csmsckf
