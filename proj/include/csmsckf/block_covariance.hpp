#pragma once

#include <vector>

#include <Eigen/Dense>

namespace csmsckf {

/// Joint covariance of the partitioned error state [x_A; x_N], stored as the three
/// distinct blocks P_AA, P_AN and P_NN.
///
/// Keeping the blocks apart lets clone insertion/removal (which only reshapes the
/// active part) cost O(a * n) instead of copying the whole matrix, and lets the
/// Schmidt update leave P_NN untouched in memory.
class BlockCovariance {
 public:
  BlockCovariance() = default;
  explicit BlockCovariance(const Eigen::MatrixXd& active);

  int active_dim() const { return static_cast<int>(aa_.rows()); }
  int nuisance_dim() const { return static_cast<int>(nn_.rows()); }
  int dim() const { return active_dim() + nuisance_dim(); }

  Eigen::MatrixXd& aa() { return aa_; }
  Eigen::MatrixXd& an() { return an_; }
  Eigen::MatrixXd& nn() { return nn_; }
  const Eigen::MatrixXd& aa() const { return aa_; }
  const Eigen::MatrixXd& an() const { return an_; }
  const Eigen::MatrixXd& nn() const { return nn_; }

  // Assembled full matrix; O(dim^2), meant for tests and diagnostics.
  Eigen::MatrixXd dense() const;
  static BlockCovariance from_dense(const Eigen::MatrixXd& full, int active_dim);

  // Inserts `size` active rows/cols at `offset` with the given cross terms.
  // `cross_active` is size x active_dim() (pre-insertion ordering), `cross_nuisance`
  // is size x nuisance_dim(), `self` is size x size.
  void insert_active(int offset, const Eigen::MatrixXd& self, const Eigen::MatrixXd& cross_active,
                     const Eigen::MatrixXd& cross_nuisance);
  void remove_active(int offset, int size);
  // Appends a nuisance block with zero cross-covariance to everything else.
  void append_nuisance(const Eigen::MatrixXd& self);

  // Marginal covariance over a set of full-state indices.
  Eigen::MatrixXd marginal(const std::vector<int>& indices) const;
  double entry(int i, int j) const;

  void symmetrize();
  double max_asymmetry() const;
  bool all_finite() const;

 private:
  Eigen::MatrixXd aa_;
  Eigen::MatrixXd an_;
  Eigen::MatrixXd nn_;
};

double min_eigenvalue(const Eigen::MatrixXd& symmetric);

}  // namespace csmsckf
