#include "csmsckf/kalman_update.hpp"

#include <algorithm>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

#include "csmsckf/log.hpp"

namespace csmsckf {

namespace {

constexpr double kMaxCondition = 1e12;

Eigen::MatrixXd gather_an_cols(const BlockCovariance& P, const std::vector<int>& slots) {
  Eigen::MatrixXd out(P.active_dim(), 6 * static_cast<int>(slots.size()));
  for (std::size_t k = 0; k < slots.size(); ++k) {
    out.middleCols<6>(6 * static_cast<int>(k)) = P.an().middleCols<6>(6 * slots[k]);
  }
  return out;
}

Eigen::MatrixXd gather_nn_rows(const BlockCovariance& P, const std::vector<int>& slots) {
  Eigen::MatrixXd out(6 * static_cast<int>(slots.size()), P.nuisance_dim());
  for (std::size_t k = 0; k < slots.size(); ++k) {
    out.middleRows<6>(6 * static_cast<int>(k)) = P.nn().middleRows<6>(6 * slots[k]);
  }
  return out;
}

Eigen::MatrixXd gather_nn_block(const BlockCovariance& P, const std::vector<int>& slots) {
  const int s = static_cast<int>(slots.size());
  Eigen::MatrixXd out(6 * s, 6 * s);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      out.block<6, 6>(6 * i, 6 * j) = P.nn().block<6, 6>(6 * slots[i], 6 * slots[j]);
    }
  }
  return out;
}

void check_shape(const BlockCovariance& P, const LinearizedMeasurement& m) {
  const int rows = m.rows();
  if (m.h_active.rows() != rows || m.h_active.cols() != P.active_dim() ||
      m.h_nuisance.rows() != (m.keyframe_slots.empty() ? m.h_nuisance.rows() : rows) ||
      m.h_nuisance.cols() != 6 * static_cast<int>(m.keyframe_slots.size()) ||
      m.noise.rows() != rows || m.noise.cols() != rows) {
    throw std::invalid_argument("measurement shape does not match covariance layout");
  }
  for (int slot : m.keyframe_slots) {
    if (slot < 0 || 6 * (slot + 1) > P.nuisance_dim()) {
      throw std::out_of_range("measurement references a keyframe outside the state");
    }
  }
}

// P H^T restricted to the active rows, and S.
struct GainTerms {
  Eigen::MatrixXd pht_active;
  Eigen::MatrixXd s;
};

GainTerms gain_terms(const BlockCovariance& P, const LinearizedMeasurement& m) {
  check_shape(P, m);
  GainTerms g;
  g.pht_active.noalias() = P.aa() * m.h_active.transpose();
  const bool has_nuisance = !m.keyframe_slots.empty();
  Eigen::MatrixXd an_cols;
  if (has_nuisance) {
    an_cols = gather_an_cols(P, m.keyframe_slots);
    g.pht_active.noalias() += an_cols * m.h_nuisance.transpose();
  }
  g.s.noalias() = m.h_active * g.pht_active;
  if (has_nuisance) {
    Eigen::MatrixXd pht_nuisance = an_cols.transpose() * m.h_active.transpose();
    pht_nuisance.noalias() += gather_nn_block(P, m.keyframe_slots) * m.h_nuisance.transpose();
    g.s.noalias() += m.h_nuisance * pht_nuisance;
  }
  g.s += m.noise;
  g.s = 0.5 * (g.s + g.s.transpose()).eval();
  return g;
}

// 1-norm reciprocal condition estimate from the factor, O(m^2) once L is known.
bool well_conditioned(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return llt.info() == Eigen::Success && llt.rcond() > 1.0 / kMaxCondition;
}

UpdateStatus update_impl(FilterState& state, const LinearizedMeasurement& m, bool full_ekf) {
  if (m.empty()) return UpdateStatus::kEmpty;
  BlockCovariance& P = state.cov();
  const GainTerms g = gain_terms(P, m);
  if (!g.s.allFinite()) return UpdateStatus::kIllConditioned;
  const Eigen::LLT<Eigen::MatrixXd> llt(g.s);
  if (!well_conditioned(llt)) {
    log::warn("kalman update skipped: innovation covariance ill-conditioned");
    return UpdateStatus::kIllConditioned;
  }

  const Eigen::MatrixXd k_active = llt.solve(g.pht_active.transpose()).transpose();
  const Eigen::VectorXd dx_active = k_active * m.r;

  // H_A P_AN + H_N P_NN, i.e. the transpose of the nuisance rows of P H^T.
  Eigen::MatrixXd hp_nuisance;
  const int n = P.nuisance_dim();
  if (n > 0) {
    hp_nuisance.noalias() = m.h_active * P.an();
    if (!m.keyframe_slots.empty()) {
      hp_nuisance.noalias() += m.h_nuisance * gather_nn_rows(P, m.keyframe_slots);
    }
  }

  P.aa().noalias() -= k_active * g.pht_active.transpose();
  if (n > 0) {
    P.an().noalias() -= k_active * hp_nuisance;
  }
  if (full_ekf && n > 0) {
    const Eigen::MatrixXd k_nuisance = llt.solve(hp_nuisance).transpose();
    P.nn().noalias() -= k_nuisance * hp_nuisance;
    state.correct_nuisance(k_nuisance * m.r);
  }
  P.symmetrize();
  state.correct_active(dx_active);
  return UpdateStatus::kApplied;
}

}  // namespace

Eigen::MatrixXd LinearizedMeasurement::dense_h(int nuisance_dim) const {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(rows(), h_active.cols() + nuisance_dim);
  h.leftCols(h_active.cols()) = h_active;
  for (std::size_t k = 0; k < keyframe_slots.size(); ++k) {
    h.middleCols<6>(h_active.cols() + 6 * keyframe_slots[k]) =
        h_nuisance.middleCols<6>(6 * static_cast<int>(k));
  }
  return h;
}

LinearizedMeasurement stack_measurements(const std::vector<LinearizedMeasurement>& parts) {
  LinearizedMeasurement out;
  int rows = 0;
  int active = -1;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    rows += p.rows();
    if (active >= 0 && p.h_active.cols() != active) {
      throw std::invalid_argument("stack_measurements: active dimensions differ");
    }
    active = static_cast<int>(p.h_active.cols());
    for (int slot : p.keyframe_slots) {
      if (std::find(out.keyframe_slots.begin(), out.keyframe_slots.end(), slot) ==
          out.keyframe_slots.end()) {
        out.keyframe_slots.push_back(slot);
      }
    }
  }
  if (rows == 0) return out;
  const int ncols = 6 * static_cast<int>(out.keyframe_slots.size());
  out.r.resize(rows);
  out.h_active.setZero(rows, active);
  out.h_nuisance.setZero(rows, ncols);
  out.noise.setZero(rows, rows);
  int row = 0;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    const int k = p.rows();
    out.r.segment(row, k) = p.r;
    out.h_active.middleRows(row, k) = p.h_active;
    for (std::size_t j = 0; j < p.keyframe_slots.size(); ++j) {
      const auto pos = std::find(out.keyframe_slots.begin(), out.keyframe_slots.end(),
                                 p.keyframe_slots[j]) - out.keyframe_slots.begin();
      out.h_nuisance.block(row, 6 * static_cast<int>(pos), k, 6) =
          p.h_nuisance.middleCols<6>(6 * static_cast<int>(j));
    }
    out.noise.block(row, row, k, k) = p.noise;
    row += k;
  }
  return out;
}

void compress_measurement(LinearizedMeasurement& m) {
  const int rows = m.rows();
  const int na = static_cast<int>(m.h_active.cols());
  const int cols = na + static_cast<int>(m.h_nuisance.cols());
  if (rows <= cols) return;
  const double sigma2 = m.noise(0, 0);
  if (!m.noise.isApprox(sigma2 * Eigen::MatrixXd::Identity(rows, rows))) {
    throw std::invalid_argument("compress_measurement: noise must be isotropic");
  }
  Eigen::MatrixXd h(rows, cols);
  h.leftCols(na) = m.h_active;
  h.rightCols(cols - na) = m.h_nuisance;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(h);
  const Eigen::MatrixXd qt_h = qr.householderQ().adjoint() * h;
  const Eigen::VectorXd qt_r = qr.householderQ().adjoint() * m.r;
  m.h_active = qt_h.topLeftCorner(cols, na);
  m.h_nuisance = qt_h.topRightCorner(cols, cols - na);
  m.r = qt_r.head(cols);
  m.noise = sigma2 * Eigen::MatrixXd::Identity(cols, cols);
}

Eigen::MatrixXd innovation_covariance(const BlockCovariance& P, const LinearizedMeasurement& m) {
  return gain_terms(P, m).s;
}

double chi2_threshold(int dof) {
  if (dof < 1) throw std::invalid_argument("chi2_threshold: dof must be positive");
  static const std::vector<double> table = [] {
    std::vector<double> t(501, 0.0);
    for (int i = 1; i <= 500; ++i) {
      t[i] = boost::math::quantile(boost::math::chi_squared(i), 0.95);
    }
    return t;
  }();
  if (dof <= 500) return table[dof];
  return boost::math::quantile(boost::math::chi_squared(dof), 0.95);
}

namespace {
bool gate_with_s(const Eigen::VectorXd& r, const Eigen::MatrixXd& s) {
  const Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (!s.allFinite() || !well_conditioned(llt)) return false;
  const double d2 = r.dot(llt.solve(r));
  return d2 < chi2_threshold(static_cast<int>(r.size()));
}
}  // namespace

bool chi2_gate(const LinearizedMeasurement& m, const BlockCovariance& P) {
  if (m.empty()) return false;
  return gate_with_s(m.r, innovation_covariance(P, m));
}

bool chi2_gate(const Eigen::VectorXd& r, const Eigen::MatrixXd& H, const Eigen::MatrixXd& P,
               const Eigen::MatrixXd& R) {
  if (r.size() == 0) return false;
  Eigen::MatrixXd s = H * P * H.transpose() + R;
  s = 0.5 * (s + s.transpose()).eval();
  return gate_with_s(r, s);
}

UpdateStatus schmidt_update(FilterState& state, const LinearizedMeasurement& m) {
  return update_impl(state, m, false);
}

UpdateStatus ekf_update(FilterState& state, const LinearizedMeasurement& m) {
  return update_impl(state, m, true);
}

}  // namespace csmsckf
