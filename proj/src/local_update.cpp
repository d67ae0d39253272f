#include "csmsckf/local_update.hpp"

#include <stdexcept>

#include "csmsckf/log.hpp"

namespace csmsckf {

std::optional<Vec3> triangulate_points(const std::vector<Pose>& w_T_c,
                                       const std::vector<Vec2>& uv, const PinholeCamera& cam,
                                       const TriangulationOptions& opts) {
  if (w_T_c.size() != uv.size()) {
    throw std::invalid_argument("triangulate_points: pose and pixel counts differ");
  }
  if (w_T_c.size() < 2) return std::nullopt;

  std::vector<Mat3> rot(w_T_c.size());
  Mat3 A = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (std::size_t i = 0; i < w_T_c.size(); ++i) {
    rot[i] = w_T_c[i].rotation_matrix();
    const Vec3 bearing = (rot[i].transpose() * cam.unproject(uv[i])).normalized();
    const Mat3 M = Mat3::Identity() - bearing * bearing.transpose();
    A += M;
    b += M * w_T_c[i].translation;
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> es(A, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(2);
  if (!(lo > 0.0) || hi / lo > opts.max_condition) return std::nullopt;
  Vec3 p = A.ldlt().solve(b);

  for (int it = 0; it < opts.gauss_newton_steps; ++it) {
    Mat3 JtJ = Mat3::Zero();
    Vec3 Jtr = Vec3::Zero();
    for (std::size_t i = 0; i < w_T_c.size(); ++i) {
      const Vec3 p_C = rot[i] * (p - w_T_c[i].translation);
      const auto z = project(cam, p_C);
      if (!z) return std::nullopt;
      const Eigen::Matrix<double, 2, 3> J = projection_jacobian(cam, p_C) * rot[i];
      JtJ += J.transpose() * J;
      Jtr += J.transpose() * (uv[i] - *z);
    }
    const Vec3 dp = JtJ.ldlt().solve(Jtr);
    if (!dp.allFinite()) return std::nullopt;
    p += dp;
  }

  for (std::size_t i = 0; i < w_T_c.size(); ++i) {
    const double depth = (rot[i] * (p - w_T_c[i].translation)).z();
    if (!(depth >= opts.min_depth && depth <= opts.max_depth)) return std::nullopt;
  }
  return p;
}

std::optional<Vec3> triangulate(const FeatureTrack& track, const FilterState& state,
                                const PinholeCamera& cam, const TriangulationOptions& opts) {
  std::vector<Pose> poses;
  std::vector<Vec2> uv;
  for (const auto& o : track.obs) {
    const auto idx = state.clone_index(o.t);
    if (!idx) continue;
    poses.push_back(pose_compose(state.x().clones[*idx].pose, cam.extrinsic));
    uv.push_back(o.uv);
  }
  return triangulate_points(poses, uv, cam, opts);
}

std::optional<FeatureLinearization> local_residual_jacobian(const FeatureTrack& track,
                                                            const Vec3& f_L,
                                                            const FilterState& state,
                                                            const PinholeCamera& cam) {
  const Mat3 R_CI = cam.extrinsic.rotation_matrix();
  const Vec3& p_IC = cam.extrinsic.translation;

  std::vector<std::pair<std::size_t, Vec2>> used;
  for (const auto& o : track.obs) {
    if (const auto idx = state.clone_index(o.t)) used.emplace_back(*idx, o.uv);
  }
  const int rows = 2 * static_cast<int>(used.size());
  FeatureLinearization out;
  out.r.resize(rows);
  out.h_x.setZero(rows, state.active_dim());
  out.h_f.resize(rows, 3);

  for (std::size_t k = 0; k < used.size(); ++k) {
    const auto& [idx, uv] = used[k];
    const Pose& clone = state.x().clones[idx].pose;
    const Mat3 R_IL = clone.rotation_matrix();
    const Vec3 p_I = R_IL * (f_L - clone.translation);
    const Vec3 p_C = R_CI * (p_I - p_IC);
    const auto z = project(cam, p_C);
    if (!z) return std::nullopt;
    const Mat23 Jp = projection_jacobian(cam, p_C);
    const int row = 2 * static_cast<int>(k);
    const int col = state.clone_offset(idx);
    out.r.segment<2>(row) = uv - *z;
    out.h_x.block<2, 3>(row, col) = Jp * R_CI * skew(p_I);
    out.h_x.block<2, 3>(row, col + 3) = -Jp * R_CI * R_IL;
    out.h_f.block<2, 3>(row, 0) = Jp * R_CI * R_IL;
  }
  return out;
}

ProjectedResidual nullspace_project(const Eigen::VectorXd& r, const Eigen::MatrixXd& h_x,
                                    const Eigen::MatrixXd& h_f) {
  const int m = static_cast<int>(h_f.rows());
  if (r.size() != m || h_x.rows() != m) {
    throw std::invalid_argument("nullspace_project: row counts differ");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h_f.rows(), h_f.cols());
  qr.setThreshold(1e-10);
  qr.compute(h_f);
  const int rank = static_cast<int>(qr.rank());

  ProjectedResidual out;
  out.degenerate = rank < h_f.cols();
  const int keep = m - rank;
  if (keep <= 0) {
    out.r.resize(0);
    out.h_x.resize(0, h_x.cols());
    return out;
  }
  const auto Qt = qr.householderQ().transpose();
  const Eigen::VectorXd qt_r = Qt * r;
  const Eigen::MatrixXd qt_h = Qt * h_x;
  out.r = qt_r.tail(keep);
  out.h_x = qt_h.bottomRows(keep);
  return out;
}

LocalUpdateStats local_update(FilterState& state, const std::vector<FeatureTrack>& tracks,
                              const PinholeCamera& cam, const LocalUpdateOptions& opts) {
  LocalUpdateStats stats;
  stats.tracks = static_cast<int>(tracks.size());
  const double var = opts.sigma_px * opts.sigma_px;
  std::vector<LinearizedMeasurement> parts;
  int rows = 0;

  for (const auto& track : tracks) {
    const auto f = triangulate(track, state, cam, opts.triangulation);
    if (!f) {
      ++stats.rejected_triangulation;
      continue;
    }
    const auto lin = local_residual_jacobian(track, *f, state, cam);
    if (!lin) {
      ++stats.rejected_triangulation;
      continue;
    }
    ProjectedResidual proj = nullspace_project(lin->r, lin->h_x, lin->h_f);
    if (proj.r.size() == 0) continue;

    LinearizedMeasurement m;
    m.r = std::move(proj.r);
    m.h_active = std::move(proj.h_x);
    m.h_nuisance.resize(m.rows(), 0);
    m.noise = var * Eigen::MatrixXd::Identity(m.rows(), m.rows());
    if (opts.chi2_gating && !chi2_gate(m, state.cov())) {
      ++stats.rejected_gate;
      continue;
    }
    if (rows + m.rows() > opts.max_rows) {
      ++stats.dropped_row_cap;
      continue;
    }
    rows += m.rows();
    parts.push_back(std::move(m));
  }
  stats.used = static_cast<int>(parts.size());
  stats.rows = rows;
  if (parts.empty()) return stats;

  LinearizedMeasurement stacked = stack_measurements(parts);
  compress_measurement(stacked);
  stats.status = schmidt_update(state, stacked);
  if (stats.dropped_row_cap > 0) {
    log::info("local update: ", stats.dropped_row_cap, " tracks over the row cap");
  }
  return stats;
}

}  // namespace csmsckf
