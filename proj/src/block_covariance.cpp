#include "csmsckf/block_covariance.hpp"

#include <stdexcept>

namespace csmsckf {

BlockCovariance::BlockCovariance(const Eigen::MatrixXd& active)
    : aa_(active), an_(active.rows(), 0), nn_(0, 0) {
  if (active.rows() != active.cols()) {
    throw std::invalid_argument("BlockCovariance: active block must be square");
  }
}

Eigen::MatrixXd BlockCovariance::dense() const {
  const int a = active_dim();
  const int n = nuisance_dim();
  Eigen::MatrixXd full(a + n, a + n);
  full.topLeftCorner(a, a) = aa_;
  full.topRightCorner(a, n) = an_;
  full.bottomLeftCorner(n, a) = an_.transpose();
  full.bottomRightCorner(n, n) = nn_;
  return full;
}

BlockCovariance BlockCovariance::from_dense(const Eigen::MatrixXd& full, int active_dim) {
  const int n = static_cast<int>(full.rows()) - active_dim;
  if (full.rows() != full.cols() || n < 0) {
    throw std::invalid_argument("BlockCovariance::from_dense: bad partition");
  }
  BlockCovariance out;
  out.aa_ = full.topLeftCorner(active_dim, active_dim);
  out.an_ = full.topRightCorner(active_dim, n);
  out.nn_ = full.bottomRightCorner(n, n);
  return out;
}

void BlockCovariance::insert_active(int offset, const Eigen::MatrixXd& self,
                                    const Eigen::MatrixXd& cross_active,
                                    const Eigen::MatrixXd& cross_nuisance) {
  const int a = active_dim();
  const int n = nuisance_dim();
  const int s = static_cast<int>(self.rows());
  if (offset < 0 || offset > a || self.cols() != s || cross_active.rows() != s ||
      cross_active.cols() != a || cross_nuisance.rows() != s || cross_nuisance.cols() != n) {
    throw std::invalid_argument("BlockCovariance::insert_active: dimension mismatch");
  }
  const int tail = a - offset;
  Eigen::MatrixXd aa(a + s, a + s);
  aa.topLeftCorner(offset, offset) = aa_.topLeftCorner(offset, offset);
  aa.topRightCorner(offset, tail) = aa_.topRightCorner(offset, tail);
  aa.bottomLeftCorner(tail, offset) = aa_.bottomLeftCorner(tail, offset);
  aa.bottomRightCorner(tail, tail) = aa_.bottomRightCorner(tail, tail);

  aa.block(offset, offset, s, s) = self;
  aa.block(offset, 0, s, offset) = cross_active.leftCols(offset);
  aa.block(offset, offset + s, s, tail) = cross_active.rightCols(tail);
  aa.block(0, offset, offset, s) = cross_active.leftCols(offset).transpose();
  aa.block(offset + s, offset, tail, s) = cross_active.rightCols(tail).transpose();

  Eigen::MatrixXd an(a + s, n);
  an.topRows(offset) = an_.topRows(offset);
  an.middleRows(offset, s) = cross_nuisance;
  an.bottomRows(tail) = an_.bottomRows(tail);

  aa_ = std::move(aa);
  an_ = std::move(an);
}

void BlockCovariance::remove_active(int offset, int size) {
  const int a = active_dim();
  const int n = nuisance_dim();
  if (offset < 0 || size < 0 || offset + size > a) {
    throw std::out_of_range("BlockCovariance::remove_active: range outside active block");
  }
  const int tail = a - offset - size;
  Eigen::MatrixXd aa(a - size, a - size);
  aa.topLeftCorner(offset, offset) = aa_.topLeftCorner(offset, offset);
  aa.topRightCorner(offset, tail) = aa_.topRightCorner(offset, tail);
  aa.bottomLeftCorner(tail, offset) = aa_.bottomLeftCorner(tail, offset);
  aa.bottomRightCorner(tail, tail) = aa_.bottomRightCorner(tail, tail);

  Eigen::MatrixXd an(a - size, n);
  an.topRows(offset) = an_.topRows(offset);
  an.bottomRows(tail) = an_.bottomRows(tail);

  aa_ = std::move(aa);
  an_ = std::move(an);
}

void BlockCovariance::append_nuisance(const Eigen::MatrixXd& self) {
  const int a = active_dim();
  const int n = nuisance_dim();
  const int s = static_cast<int>(self.rows());
  if (self.cols() != s) {
    throw std::invalid_argument("BlockCovariance::append_nuisance: block must be square");
  }
  Eigen::MatrixXd an = Eigen::MatrixXd::Zero(a, n + s);
  an.leftCols(n) = an_;
  Eigen::MatrixXd nn = Eigen::MatrixXd::Zero(n + s, n + s);
  nn.topLeftCorner(n, n) = nn_;
  nn.bottomRightCorner(s, s) = self;
  an_ = std::move(an);
  nn_ = std::move(nn);
}

double BlockCovariance::entry(int i, int j) const {
  const int a = active_dim();
  if (i < a && j < a) return aa_(i, j);
  if (i < a) return an_(i, j - a);
  if (j < a) return an_(j, i - a);
  return nn_(i - a, j - a);
}

Eigen::MatrixXd BlockCovariance::marginal(const std::vector<int>& indices) const {
  const int k = static_cast<int>(indices.size());
  Eigen::MatrixXd out(k, k);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      out(r, c) = entry(indices[r], indices[c]);
    }
  }
  return out;
}

void BlockCovariance::symmetrize() {
  aa_ = 0.5 * (aa_ + aa_.transpose()).eval();
  // P_NN is only ever written symmetrically; leave it bit-identical.
}

double BlockCovariance::max_asymmetry() const {
  double worst = 0.0;
  if (aa_.size() > 0) worst = (aa_ - aa_.transpose()).cwiseAbs().maxCoeff();
  if (nn_.size() > 0) worst = std::max(worst, (nn_ - nn_.transpose()).cwiseAbs().maxCoeff());
  return worst;
}

bool BlockCovariance::all_finite() const {
  return aa_.allFinite() && an_.allFinite() && nn_.allFinite();
}

double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace csmsckf
