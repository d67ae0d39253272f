#include "csmsckf/global_localization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "csmsckf/log.hpp"

namespace csmsckf {

namespace {

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

const Pose& keyframe_pose(const FilterState& state, const KeyframeMap& map, int id,
                          bool map_as_constant) {
  if (!map_as_constant) {
    if (const auto k = state.keyframe_index(id)) return state.x().keyframes[*k].pose;
  }
  return map.keyframe(id).pose;
}

}  // namespace

Pose local_camera_pose(const FilterState& state, double t, const PinholeCamera& cam) {
  const auto idx = state.clone_index(t);
  if (!idx) throw std::invalid_argument("no clone at the query time");
  return pose_compose(state.x().clones[*idx].pose, cam.extrinsic);
}

std::optional<PnPResult> solve_match_pnp(const MatchSet& match, const KeyframeMap& map,
                                         const PinholeCamera& cam, const PnPOptions& opts) {
  if (match.keyframe_ids.empty()) return std::nullopt;
  const Pose& g_T_ref = map.keyframe(match.keyframe_ids.front()).pose;
  std::vector<Vec3> p_G;
  std::vector<Vec2> uv;
  for (const auto& pair : match.pairs) {
    if (!map.has_landmark(pair.landmark_id)) continue;
    const MapLandmark& lm = map.landmark(pair.landmark_id);
    p_G.push_back(map.keyframe(lm.anchor_kf).pose.transform(lm.p));
    uv.push_back(pair.uv);
  }
  // Solve in the reference keyframe frame to keep coordinates small, then lift to G.
  std::vector<Vec3> p_ref(p_G.size());
  for (std::size_t i = 0; i < p_G.size(); ++i) p_ref[i] = g_T_ref.inverse_transform(p_G[i]);
  auto res = epnp_solve(p_ref, uv, cam, opts);
  if (!res) return std::nullopt;
  res->w_T_c = pose_compose(g_T_ref, res->w_T_c);
  return res;
}

bool initialize_global(FilterState& state, const MatchSet& match, const KeyframeMap& map,
                       const PinholeCamera& cam, const GlobalOptions& opts) {
  if (state.has_rel_transform()) {
    throw std::logic_error("initialize_global: x_t already initialized");
  }
  const auto pnp = solve_match_pnp(match, map, cam, opts.pnp);
  if (!pnp) return false;
  const Pose l_T_c = local_camera_pose(state, match.t, cam);
  state.init_rel_transform(pose_compose(pnp->w_T_c, pose_inverse(l_T_c)),
                           opts.rel_transform_prior);
  return true;
}

double match_reprojection_error(const FilterState& state, const MatchSet& match,
                                const KeyframeMap& map, const PinholeCamera& cam,
                                const std::optional<Pose>& x_t_point) {
  if (!x_t_point && !state.has_rel_transform()) {
    throw std::logic_error("match_reprojection_error: x_t not initialized");
  }
  const Pose& g_T_l = x_t_point ? *x_t_point : *state.x().rel_transform;
  const Pose g_T_c = pose_compose(g_T_l, local_camera_pose(state, match.t, cam));
  double sum = 0.0;
  int n = 0;
  for (const auto& pair : match.pairs) {
    if (!map.has_landmark(pair.landmark_id)) continue;
    const MapLandmark& lm = map.landmark(pair.landmark_id);
    const Vec3 p_G = keyframe_pose(state, map, lm.anchor_kf, false).transform(lm.p);
    const auto z = project(cam, g_T_c.inverse_transform(p_G));
    if (!z) continue;
    sum += (*z - pair.uv).norm();
    ++n;
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::infinity();
}

RelinearizationDecision relinearize(const FilterState& state, const MatchSet& match,
                                    const KeyframeMap& map, const PinholeCamera& cam,
                                    double threshold_px, const PnPOptions& pnp) {
  RelinearizationDecision out;
  out.reprojection_px = match_reprojection_error(state, match, map, cam);
  if (out.reprojection_px <= threshold_px) return out;
  const auto res = solve_match_pnp(match, map, cam, pnp);
  if (!res) return out;
  const Pose l_T_c = local_camera_pose(state, match.t, cam);
  out.point = pose_compose(res->w_T_c, pose_inverse(l_T_c));
  return out;
}

std::optional<LandmarkLinearization> linearize_landmark(
    const FilterState& state, const MatchSet& match, const LandmarkMatch& pair,
    const KeyframeMap& map, const PinholeCamera& cam, bool map_as_constant,
    const std::optional<Pose>& x_t_point) {
  if (!state.has_rel_transform()) {
    throw std::logic_error("linearize_landmark: x_t not initialized");
  }
  if (!map.has_landmark(pair.landmark_id)) return std::nullopt;
  const MapLandmark& lm = map.landmark(pair.landmark_id);
  const auto clone_idx = state.clone_index(match.t);
  if (!clone_idx) throw std::invalid_argument("linearize_landmark: no clone at query time");

  // Keyframe rows: the anchor first, then other keyframes that are in the state.
  std::vector<const KeyframeObservation*> kf_rows;
  std::vector<int> slots;
  if (!map_as_constant) {
    const auto anchor_slot = state.keyframe_index(lm.anchor_kf);
    if (!anchor_slot) return std::nullopt;
    slots.push_back(static_cast<int>(*anchor_slot));
    for (const auto& o : pair.kf_obs) {
      if (o.kf_id == lm.anchor_kf) kf_rows.insert(kf_rows.begin(), &o);
    }
    for (const auto& o : pair.kf_obs) {
      if (o.kf_id == lm.anchor_kf) continue;
      const auto slot = state.keyframe_index(o.kf_id);
      if (!slot || contains(slots, static_cast<int>(*slot))) continue;
      slots.push_back(static_cast<int>(*slot));
      kf_rows.push_back(&o);
    }
  }

  const int frames = 1 + static_cast<int>(kf_rows.size());
  LandmarkLinearization out;
  out.frames = frames;
  out.keyframe_slots = slots;
  out.r.resize(2 * frames);
  out.h_active.setZero(2 * frames, state.active_dim());
  out.h_nuisance.setZero(2 * frames, 6 * static_cast<int>(slots.size()));
  out.h_f.setZero(2 * frames, 3);

  const Pose& g_T_a = keyframe_pose(state, map, lm.anchor_kf, map_as_constant);
  const Mat3 R_aG = g_T_a.rotation_matrix();
  const Vec3 p_G = g_T_a.transform(lm.p);
  // d p_G / d [dtheta_a, dp_a] and d p_G / d p_f
  Eigen::Matrix<double, 3, 6> dpG_da;
  dpG_da.leftCols<3>() = -R_aG.transpose() * skew(lm.p);
  dpG_da.rightCols<3>() = Mat3::Identity();
  const Mat3 dpG_df = R_aG.transpose();

  // Query image, through x_t, the clone and the extrinsic.
  const Pose& x_hat = *state.x().rel_transform;
  const Pose& x_bar = x_t_point ? *x_t_point : x_hat;
  const Mat3 R_LG = x_bar.rotation_matrix();
  const Vec3 p_L = x_bar.inverse_transform(p_G);
  const Pose& clone = state.x().clones[*clone_idx].pose;
  const Mat3 R_IL = clone.rotation_matrix();
  const Vec3 p_I = clone.inverse_transform(p_L);
  const Mat3 R_CI = cam.extrinsic.rotation_matrix();
  const Vec3 p_C = cam.extrinsic.inverse_transform(p_I);
  const auto z = project(cam, p_C);
  if (!z) return std::nullopt;
  const Mat23 Jp = projection_jacobian(cam, p_C);
  const Eigen::Matrix<double, 2, 3> J_L = Jp * R_CI * R_IL;  // d z / d p_L
  const Eigen::Matrix<double, 2, 3> J_G = J_L * R_LG;        // d z / d p_G

  const int c = state.clone_offset(*clone_idx);
  const int t = state.rel_transform_offset();
  out.h_active.block<2, 3>(0, c) = Jp * R_CI * skew(p_I);
  out.h_active.block<2, 3>(0, c + 3) = -J_L;
  out.h_active.block<2, 3>(0, t) = J_L * skew(p_L);
  out.h_active.block<2, 3>(0, t + 3) = -J_G;
  out.h_f.topRows<2>() = J_G * dpG_df;
  if (!map_as_constant) out.h_nuisance.block<2, 6>(0, 0) = J_G * dpG_da;
  out.r.head<2>() = pair.uv - *z;
  if (x_t_point) {
    out.r.head<2>() -= out.h_active.block<2, 6>(0, t) * pose_lift(x_bar, x_hat);
  }

  for (std::size_t k = 0; k < kf_rows.size(); ++k) {
    const KeyframeObservation& o = *kf_rows[k];
    const int row = 2 + 2 * static_cast<int>(k);
    const MapKeyframe& kf = map.keyframe(o.kf_id);
    if (o.kf_id == lm.anchor_kf) {
      // Anchor row: the landmark is already expressed in this camera.
      const auto zk = project(kf.camera, lm.p);
      if (!zk) return std::nullopt;
      out.r.segment<2>(row) = o.uv - *zk;
      out.h_f.block<2, 3>(row, 0) = projection_jacobian(kf.camera, lm.p);
      continue;
    }
    const Pose& g_T_k = keyframe_pose(state, map, o.kf_id, false);
    const Mat3 R_kG = g_T_k.rotation_matrix();
    const Vec3 p_k = g_T_k.inverse_transform(p_G);
    const auto zk = project(kf.camera, p_k);
    if (!zk) return std::nullopt;
    const Mat23 Jk = projection_jacobian(kf.camera, p_k);
    // Column block of this keyframe inside the compact nuisance Jacobian.
    const auto it = std::find(slots.begin(), slots.end(),
                              static_cast<int>(*state.keyframe_index(o.kf_id)));
    const int kcol = 6 * static_cast<int>(it - slots.begin());
    out.r.segment<2>(row) = o.uv - *zk;
    out.h_nuisance.block<2, 3>(row, kcol) = Jk * skew(p_k);
    out.h_nuisance.block<2, 3>(row, kcol + 3) = -Jk * R_kG;
    out.h_nuisance.block<2, 6>(row, 0) += Jk * R_kG * dpG_da;
    out.h_f.block<2, 3>(row, 0) = Jk * R_kG * dpG_df;
  }
  return out;
}

GlobalResidual build_global_residual(const FilterState& state, const MatchSet& match,
                                     const KeyframeMap& map, const PinholeCamera& cam,
                                     const GlobalOptions& opts,
                                     const std::optional<Pose>& x_t_point,
                                     GlobalResidualStats* stats) {
  GlobalResidualStats local_stats;
  GlobalResidualStats& st = stats ? *stats : local_stats;
  st = {};
  st.landmarks = static_cast<int>(match.pairs.size());
  const double var = opts.sigma_px * opts.sigma_px;
  const int na = state.active_dim();

  std::vector<LinearizedMeasurement> parts;
  for (const auto& pair : match.pairs) {
    const auto lin =
        linearize_landmark(state, match, pair, map, cam, opts.map_as_constant, x_t_point);
    if (!lin) {
      ++st.dropped;
      continue;
    }
    LinearizedMeasurement m;
    if (opts.map_as_constant) {
      m.r = lin->r;
      m.h_active = lin->h_active;
      m.h_nuisance.resize(m.rows(), 0);
    } else {
      const int nk = static_cast<int>(lin->h_nuisance.cols());
      Eigen::MatrixXd h_x(lin->r.size(), na + nk);
      h_x.leftCols(na) = lin->h_active;
      h_x.rightCols(nk) = lin->h_nuisance;
      const ProjectedResidual proj = nullspace_project(lin->r, h_x, lin->h_f);
      if (proj.r.size() == 0) {
        ++st.dropped;
        continue;
      }
      m.r = proj.r;
      m.h_active = proj.h_x.leftCols(na);
      m.h_nuisance = proj.h_x.rightCols(nk);
      m.keyframe_slots = lin->keyframe_slots;
    }
    m.noise = var * Eigen::MatrixXd::Identity(m.rows(), m.rows());
    if (opts.chi2_gating && !chi2_gate(m, state.cov())) {
      ++st.gated;
      continue;
    }
    parts.push_back(std::move(m));
  }
  st.used = static_cast<int>(parts.size());
  GlobalResidual out = stack_measurements(parts);
  if (!out.empty()) compress_measurement(out);
  return out;
}

GlobalUpdateStats global_update(FilterState& state, const MatchSet& match,
                                const KeyframeMap& map, const PinholeCamera& cam,
                                const GlobalOptions& opts) {
  GlobalUpdateStats stats;
  if (!state.has_rel_transform()) {
    if (!initialize_global(state, match, map, cam, opts)) {
      log::info("global init deferred at t=", match.t, ": EPnP failed");
      return stats;
    }
    stats.initialized = true;
  }

  // Keyframes admitted for this match, capped; landmarks outside them are ignored.
  std::vector<int> allowed;
  for (int id : match.keyframe_ids) {
    if (static_cast<int>(allowed.size()) >= opts.max_keyframes) break;
    if (map.has_keyframe(id) && !contains(allowed, id)) allowed.push_back(id);
  }
  MatchSet used = match;
  used.keyframe_ids = allowed;
  used.pairs.clear();
  for (const auto& pair : match.pairs) {
    if (!map.has_landmark(pair.landmark_id)) continue;
    if (!contains(allowed, map.landmark(pair.landmark_id).anchor_kf)) continue;
    LandmarkMatch p = pair;
    std::erase_if(p.kf_obs, [&](const KeyframeObservation& o) { return !contains(allowed, o.kf_id); });
    used.pairs.push_back(std::move(p));
  }
  if (used.pairs.empty()) return stats;

  if (!opts.map_as_constant) {
    std::vector<MapKeyframe> kfs;
    for (int id : allowed) {
      if (!state.keyframe_index(id)) kfs.push_back(map.keyframe(id));
    }
    stats.keyframes_added = static_cast<int>(state.augment_keyframes(kfs).size());
  }

  std::optional<Pose> point;
  if (opts.relinearize) {
    const RelinearizationDecision d =
        relinearize(state, used, map, cam, opts.relin_threshold_px, opts.pnp);
    stats.reprojection_px = d.reprojection_px;
    point = d.point;
    stats.relinearized = point.has_value();
    if (point && opts.relin_shift_mean) {
      state.reset_rel_transform_mean(*point);
      point.reset();
    }
  }

  const GlobalResidual res =
      build_global_residual(state, used, map, cam, opts, point, &stats.residual);
  stats.rows = res.rows();
  stats.status = opts.full_ekf ? ekf_update(state, res) : schmidt_update(state, res);
  return stats;
}

}  // namespace csmsckf
