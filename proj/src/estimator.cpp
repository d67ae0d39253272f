#include "csmsckf/estimator.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <stdexcept>

#include "csmsckf/log.hpp"

namespace csmsckf {

namespace {
double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}
}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kOdometry: return "odometry";
    case Mode::kSingleMatch: return "sm";
    case Mode::kMultiMatch: return "mm";
    case Mode::kMapConstant: return "mapconst";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "odometry" || s == "odom") return Mode::kOdometry;
  if (s == "sm") return Mode::kSingleMatch;
  if (s == "mm") return Mode::kMultiMatch;
  if (s == "mapconst") return Mode::kMapConstant;
  throw std::invalid_argument("unknown mode '" + name + "' (odometry|sm|mm|mapconst)");
}

Mat15 EstimatorConfig::initial_covariance() const {
  Vec15 d;
  d << Vec3::Constant(init_sigma_theta * init_sigma_theta),
      Vec3::Constant(init_sigma_p * init_sigma_p), Vec3::Constant(init_sigma_v * init_sigma_v),
      Vec3::Constant(init_sigma_bg * init_sigma_bg), Vec3::Constant(init_sigma_ba * init_sigma_ba);
  return d.asDiagonal();
}

void EstimatorConfig::validate() const {
  imu_noise.validate();
  if (max_clones < 2) throw std::invalid_argument("max_clones must be >= 2");
  if (!(sigma_px > 0.0)) throw std::invalid_argument("sigma_px must be positive");
  if (max_rows < 1) throw std::invalid_argument("max_rows must be positive");
  if (max_keyframes < 1) throw std::invalid_argument("max_keyframes must be >= 1");
  if (!(relin_threshold_px > 0.0)) throw std::invalid_argument("relin threshold must be positive");
  if (!(init_sigma_theta > 0.0 && init_sigma_p > 0.0 && init_sigma_v > 0.0 &&
        init_sigma_bg > 0.0 && init_sigma_ba > 0.0)) {
    throw std::invalid_argument("initial standard deviations must be positive");
  }
}

Estimator::Estimator(const EstimatorConfig& cfg, const PinholeCamera& cam, const KeyframeMap* map)
    : cfg_(cfg), cam_(cam), map_(map) {
  cfg_.validate();
  cam_.validate();
  if (cfg_.mode != Mode::kOdometry && map_ == nullptr) {
    throw std::invalid_argument("Estimator: map-based modes need a map");
  }
  local_opts_.sigma_px = cfg_.sigma_px;
  local_opts_.max_rows = cfg_.max_rows;
  local_opts_.chi2_gating = cfg_.chi2_gating;

  global_opts_.sigma_px = cfg_.sigma_px;
  global_opts_.relinearize = cfg_.relinearize;
  global_opts_.relin_threshold_px = cfg_.relin_threshold_px;
  global_opts_.relin_shift_mean = cfg_.relin_shift_mean;
  global_opts_.chi2_gating = cfg_.chi2_gating;
  global_opts_.rel_transform_prior = cfg_.rel_transform_prior;
  global_opts_.full_ekf = cfg_.full_ekf;
  global_opts_.max_keyframes = cfg_.mode == Mode::kSingleMatch ? 1 : cfg_.max_keyframes;
  global_opts_.map_as_constant = cfg_.mode == Mode::kMapConstant;
  global_opts_.pnp.inlier_threshold_px = 3.0 * cfg_.sigma_px;
}

void Estimator::initialize(double t0, const ImuState& x0, const Mat15& P0) {
  state_.emplace(x0, P0, cfg_.max_clones);
  t_ = t0;
  tracks_.clear();
}

void Estimator::add_imu(const ImuSample& s) {
  if (!imu_.empty() && !(s.t > imu_.back().t)) {
    throw std::invalid_argument("IMU timestamps must increase strictly");
  }
  imu_.push_back(s);
}

void Estimator::propagate_to(double t) {
  ImuState& x = state_->imu();
  Mat15 phi_total = Mat15::Identity();
  Mat15 q_total = Mat15::Zero();
  bool moved = false;
  while (t_ < t - 1e-9) {
    while (cursor_ + 1 < imu_.size() && imu_[cursor_ + 1].t <= t_ + 1e-12) ++cursor_;
    if (cursor_ + 1 >= imu_.size() || imu_[cursor_].t > t_ + 1e-12) {
      throw std::runtime_error("IMU stream does not cover the requested interval");
    }
    const ImuSample& a = imu_[cursor_];
    const ImuSample& b = imu_[cursor_ + 1];
    const double end = std::min(b.t, t);
    const double dt = end - t_;
    if (dt < 1e-9) {
      t_ = end;
      continue;
    }
    const ImuSample s = interval_sample(interpolate(a, b, t_), interpolate(a, b, end));
    const PropagationJacobians J = propagate_jacobians(x, s, dt);
    const Mat12 Qd = discrete_noise(cfg_.imu_noise, dt);
    phi_total = J.phi * phi_total;
    q_total = J.phi * q_total * J.phi.transpose() + J.g * Qd * J.g.transpose();
    x = propagate_state(x, s, dt);
    t_ = end;
    moved = true;
  }
  t_ = std::max(t_, t);
  if (moved) propagate_covariance(state_->cov(), phi_total, q_total);
  if (cursor_ > 4096) {
    imu_.erase(imu_.begin(), imu_.begin() + static_cast<std::ptrdiff_t>(cursor_));
    cursor_ = 0;
  }
}

FrameEstimate Estimator::process_frame(const FeatureFrame& frame, const MatchSet* match) {
  if (!state_) throw std::logic_error("Estimator::process_frame before initialize");
  propagate_to(frame.t);
  FilterState& st = *state_;
  st.augment_clone(frame.t);

  for (const auto& o : frame.obs) {
    FeatureTrack& tr = tracks_[o.id];
    tr.id = o.id;
    tr.obs.push_back({frame.t, o.uv});
  }

  // Tracks not seen in this frame are finished. When the window overflows, tracks that
  // reach back to the clone about to leave are used now as well.
  const bool overflow = st.num_clones() > st.max_clones();
  const double oldest = st.x().clones.front().t;
  std::vector<FeatureTrack> ready;
  for (auto it = tracks_.begin(); it != tracks_.end();) {
    const FeatureTrack& tr = it->second;
    const bool lost = std::abs(tr.obs.back().t - frame.t) > 1e-9;
    const bool expiring = overflow && std::abs(tr.obs.front().t - oldest) < 1e-9;
    if (lost || expiring) {
      if (tr.obs.size() >= 2) ready.push_back(tr);
      it = tracks_.erase(it);
    } else {
      ++it;
    }
  }
  if (!ready.empty()) {
    const auto start = std::chrono::steady_clock::now();
    const LocalUpdateStats ls = local_update(st, ready, cam_, local_opts_);
    timing_.local_ms.push_back(elapsed_ms(start));
    log::info("t=", frame.t, " local: tracks ", ls.tracks, " used ", ls.used, " rows ", ls.rows,
              " tri-rejected ", ls.rejected_triangulation, " gated ", ls.rejected_gate);
  }

  bool match_used = false;
  bool relinearized = false;
  if (match != nullptr && cfg_.mode != Mode::kOdometry) {
    if (std::abs(match->t - frame.t) > 1e-9) {
      throw std::invalid_argument("match time does not coincide with the frame");
    }
    const auto start = std::chrono::steady_clock::now();
    const GlobalUpdateStats gs = global_update(st, *match, *map_, cam_, global_opts_);
    timing_.global_ms.push_back(elapsed_ms(start));
    log::info("t=", frame.t, " global: landmarks ", gs.residual.landmarks, " used ",
              gs.residual.used, " gated ", gs.residual.gated, " dropped ", gs.residual.dropped,
              " rows ", gs.rows, " reproj ", gs.reprojection_px, gs.relinearized ? " relin" : "",
              gs.initialized ? " init" : "");
    match_used = gs.status == UpdateStatus::kApplied;
    relinearized = gs.relinearized;
  }

  if (overflow) {
    st.marginalize_clone(oldest);
    for (auto& [id, tr] : tracks_) {
      std::erase_if(tr.obs, [&](const FeatureObservation& o) { return std::abs(o.t - oldest) < 1e-9; });
    }
  }

  if (!st.imu().is_finite()) throw std::runtime_error("filter state became non-finite");
  FrameEstimate est = snapshot(frame.t);
  est.match_used = match_used;
  est.relinearized = relinearized;
  return est;
}

FrameEstimate Estimator::snapshot(double t) const {
  const FilterState& st = *state_;
  FrameEstimate e;
  e.t = t;
  e.imu = st.x().imu;
  const Mat3 P_pp = st.cov().aa().block<3, 3>(imu_idx::kPos, imu_idx::kPos);
  if (st.has_rel_transform()) {
    const Pose& x_t = *st.x().rel_transform;
    e.g_T_l = x_t;
    e.global_valid = true;
    const Mat3 R_GL = x_t.rotation_matrix().transpose();
    const Vec3& p_L = e.imu.p;
    e.p_global = x_t.transform(p_L);
    const int o = st.rel_transform_offset();
    std::vector<int> idx;
    for (int k = 0; k < 6; ++k) idx.push_back(o + k);
    for (int k = 0; k < 3; ++k) idx.push_back(imu_idx::kPos + k);
    Eigen::MatrixXd P9(9, 9);
    for (int i = 0; i < 9; ++i) {
      for (int j = 0; j < 9; ++j) P9(i, j) = st.cov().aa()(idx[i], idx[j]);
    }
    Eigen::Matrix<double, 3, 9> J;
    J << -R_GL * skew(p_L), Mat3::Identity(), R_GL;
    e.p_global_cov = J * P9 * J.transpose();
    e.x_t_cov = st.cov().aa().block<6, 6>(o, o);
  } else {
    const Mat3 R_GL = reference_offset_.rotation_matrix().transpose();
    e.p_global = reference_offset_.transform(e.imu.p);
    e.p_global_cov = R_GL * P_pp * R_GL.transpose();
  }
  return e;
}

}  // namespace csmsckf
