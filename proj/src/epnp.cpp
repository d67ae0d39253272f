#include "csmsckf/epnp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace csmsckf {

namespace {

using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat6x10 = Eigen::Matrix<double, 6, 10>;
using Vec4 = Eigen::Vector4d;

// Below this eigenvalue ratio the point cloud is treated as planar.
constexpr double kPlanarRatio = 1e-6;

constexpr std::array<std::pair<int, int>, 6> kPairs{
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

// p_C = R p_W + t
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

Pose to_pose(const RigidTransform& T) {
  return {UnitQuatJPL::from_rotation_matrix(T.R), -T.R.transpose() * T.t};
}

double reprojection(const RigidTransform& T, const std::vector<Vec3>& p,
                    const std::vector<Vec2>& uv, const PinholeCamera& cam) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto z = project(cam, T.R * p[i] + T.t);
    if (!z) return std::numeric_limits<double>::infinity();
    sum += (*z - uv[i]).norm();
  }
  return sum / static_cast<double>(p.size());
}

class EpnpSolver {
 public:
  EpnpSolver(const std::vector<Vec3>& p, const std::vector<Vec2>& uv, const PinholeCamera& cam)
      : p_(p), uv_(uv), cam_(cam) {}

  std::optional<RigidTransform> solve() {
    if (p_.size() < 4) return std::nullopt;
    if (!choose_control_points()) return std::nullopt;
    compute_alphas();

    Eigen::MatrixXd M(2 * p_.size(), 12);
    fill_m(M);
    const Mat12 MtM = M.transpose() * M;
    const Eigen::SelfAdjointEigenSolver<Mat12> es(MtM);
    // Columns 0..3 span the (approximate) kernel.
    const Eigen::Matrix<double, 12, 4> kernel = es.eigenvectors().leftCols<4>();

    const Mat6x10 L = compute_l6x10(kernel);
    Eigen::Matrix<double, 6, 1> rho;
    for (int k = 0; k < 6; ++k) {
      rho(k) = (cw_[kPairs[k].first] - cw_[kPairs[k].second]).squaredNorm();
    }

    std::optional<RigidTransform> best;
    double best_err = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= 3; ++n) {
      Vec4 betas = n == 1 ? approx_n1(L, rho) : n == 2 ? approx_n2(L, rho) : approx_n3(L, rho);
      gauss_newton(L, rho, betas);
      const auto T = compute_pose(kernel, betas);
      if (!T) continue;
      const double err = reprojection(*T, p_, uv_, cam_);
      if (err < best_err) {
        best_err = err;
        best = T;
      }
    }
    return best;
  }

 private:
  bool choose_control_points() {
    Vec3 c0 = Vec3::Zero();
    for (const auto& x : p_) c0 += x;
    c0 /= static_cast<double>(p_.size());
    Mat3 C = Mat3::Zero();
    for (const auto& x : p_) C += (x - c0) * (x - c0).transpose();
    const Eigen::SelfAdjointEigenSolver<Mat3> es(C);
    const Vec3 ev = es.eigenvalues();
    if (!(ev(2) > 0.0) || ev(0) / ev(2) < kPlanarRatio) return false;
    cw_[0] = c0;
    const double n = static_cast<double>(p_.size());
    for (int j = 0; j < 3; ++j) {
      // Largest spread first.
      cw_[j + 1] = c0 + std::sqrt(ev(2 - j) / n) * es.eigenvectors().col(2 - j);
    }
    return true;
  }

  void compute_alphas() {
    Mat3 B;
    for (int j = 0; j < 3; ++j) B.col(j) = cw_[j + 1] - cw_[0];
    const Mat3 B_inv = B.inverse();
    alphas_.resize(p_.size());
    for (std::size_t i = 0; i < p_.size(); ++i) {
      const Vec3 a = B_inv * (p_[i] - cw_[0]);
      alphas_[i] = Vec4(1.0 - a.sum(), a(0), a(1), a(2));
    }
  }

  void fill_m(Eigen::MatrixXd& M) const {
    M.setZero();
    for (std::size_t i = 0; i < p_.size(); ++i) {
      const int r = 2 * static_cast<int>(i);
      for (int j = 0; j < 4; ++j) {
        const double a = alphas_[i](j);
        M(r, 3 * j) = a * cam_.fx;
        M(r, 3 * j + 2) = a * (cam_.cx - uv_[i].x());
        M(r + 1, 3 * j + 1) = a * cam_.fy;
        M(r + 1, 3 * j + 2) = a * (cam_.cy - uv_[i].y());
      }
    }
  }

  // Row k expresses |c_a - c_b|^2 for control-point pair k as a linear function of
  // [b11 b12 b22 b13 b23 b33 b14 b24 b34 b44] with b_ij = beta_i beta_j.
  static Mat6x10 compute_l6x10(const Eigen::Matrix<double, 12, 4>& kernel) {
    Mat6x10 L;
    for (int k = 0; k < 6; ++k) {
      const auto [a, b] = kPairs[k];
      std::array<Vec3, 4> dv;
      for (int i = 0; i < 4; ++i) {
        dv[i] = kernel.col(i).segment<3>(3 * a) - kernel.col(i).segment<3>(3 * b);
      }
      L(k, 0) = dv[0].dot(dv[0]);
      L(k, 1) = 2.0 * dv[0].dot(dv[1]);
      L(k, 2) = dv[1].dot(dv[1]);
      L(k, 3) = 2.0 * dv[0].dot(dv[2]);
      L(k, 4) = 2.0 * dv[1].dot(dv[2]);
      L(k, 5) = dv[2].dot(dv[2]);
      L(k, 6) = 2.0 * dv[0].dot(dv[3]);
      L(k, 7) = 2.0 * dv[1].dot(dv[3]);
      L(k, 8) = 2.0 * dv[2].dot(dv[3]);
      L(k, 9) = dv[3].dot(dv[3]);
    }
    return L;
  }

  template <int N>
  static Eigen::Matrix<double, N, 1> least_squares(const Eigen::Matrix<double, 6, N>& A,
                                                   const Eigen::Matrix<double, 6, 1>& b) {
    return A.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(b);
  }

  static Vec4 approx_n1(const Mat6x10& L, const Eigen::Matrix<double, 6, 1>& rho) {
    Eigen::Matrix<double, 6, 4> A;
    A << L.col(0), L.col(1), L.col(3), L.col(6);
    const Vec4 b = least_squares<4>(A, rho);
    Vec4 betas;
    if (b(0) < 0.0) {
      betas(0) = std::sqrt(-b(0));
      betas.tail<3>() = -b.tail<3>() / betas(0);
    } else {
      betas(0) = std::sqrt(b(0));
      betas.tail<3>() = b.tail<3>() / betas(0);
    }
    return betas;
  }

  static Vec4 approx_n2(const Mat6x10& L, const Eigen::Matrix<double, 6, 1>& rho) {
    Eigen::Matrix<double, 6, 3> A;
    A << L.col(0), L.col(1), L.col(2);
    const Vec3 b = least_squares<3>(A, rho);
    Vec4 betas = Vec4::Zero();
    if (b(0) < 0.0) {
      betas(0) = std::sqrt(-b(0));
      betas(1) = b(2) < 0.0 ? std::sqrt(-b(2)) : 0.0;
    } else {
      betas(0) = std::sqrt(b(0));
      betas(1) = b(2) > 0.0 ? std::sqrt(b(2)) : 0.0;
    }
    if (b(1) < 0.0) betas(0) = -betas(0);
    return betas;
  }

  static Vec4 approx_n3(const Mat6x10& L, const Eigen::Matrix<double, 6, 1>& rho) {
    Eigen::Matrix<double, 6, 5> A;
    A << L.col(0), L.col(1), L.col(2), L.col(3), L.col(4);
    const Eigen::Matrix<double, 5, 1> b = least_squares<5>(A, rho);
    Vec4 betas = Vec4::Zero();
    if (b(0) < 0.0) {
      betas(0) = std::sqrt(-b(0));
      betas(1) = b(2) < 0.0 ? std::sqrt(-b(2)) : 0.0;
    } else {
      betas(0) = std::sqrt(b(0));
      betas(1) = b(2) > 0.0 ? std::sqrt(b(2)) : 0.0;
    }
    if (b(1) < 0.0) betas(0) = -betas(0);
    betas(2) = betas(0) != 0.0 ? b(3) / betas(0) : 0.0;
    return betas;
  }

  static void gauss_newton(const Mat6x10& L, const Eigen::Matrix<double, 6, 1>& rho,
                           Vec4& betas) {
    for (int it = 0; it < 5; ++it) {
      Eigen::Matrix<double, 6, 4> J;
      Eigen::Matrix<double, 6, 1> r;
      const Vec4& b = betas;
      for (int k = 0; k < 6; ++k) {
        const auto l = L.row(k);
        J(k, 0) = 2 * l(0) * b(0) + l(1) * b(1) + l(3) * b(2) + l(6) * b(3);
        J(k, 1) = l(1) * b(0) + 2 * l(2) * b(1) + l(4) * b(2) + l(7) * b(3);
        J(k, 2) = l(3) * b(0) + l(4) * b(1) + 2 * l(5) * b(2) + l(8) * b(3);
        J(k, 3) = l(6) * b(0) + l(7) * b(1) + l(8) * b(2) + 2 * l(9) * b(3);
        const double model = l(0) * b(0) * b(0) + l(1) * b(0) * b(1) + l(2) * b(1) * b(1) +
                             l(3) * b(0) * b(2) + l(4) * b(1) * b(2) + l(5) * b(2) * b(2) +
                             l(6) * b(0) * b(3) + l(7) * b(1) * b(3) + l(8) * b(2) * b(3) +
                             l(9) * b(3) * b(3);
        r(k) = rho(k) - model;
      }
      const Vec4 step = J.colPivHouseholderQr().solve(r);
      if (!step.allFinite()) return;
      betas += step;
    }
  }

  std::optional<RigidTransform> compute_pose(const Eigen::Matrix<double, 12, 4>& kernel,
                                             const Vec4& betas) const {
    const Vec12 ccs = kernel * betas;
    std::vector<Vec3> pc(p_.size());
    for (std::size_t i = 0; i < p_.size(); ++i) {
      pc[i].setZero();
      for (int j = 0; j < 4; ++j) pc[i] += alphas_[i](j) * ccs.segment<3>(3 * j);
    }
    if (pc[0].z() < 0.0) {
      for (auto& x : pc) x = -x;
    }

    Vec3 mc = Vec3::Zero();
    Vec3 mw = Vec3::Zero();
    for (std::size_t i = 0; i < p_.size(); ++i) {
      mc += pc[i];
      mw += p_[i];
    }
    mc /= static_cast<double>(p_.size());
    mw /= static_cast<double>(p_.size());
    Mat3 H = Mat3::Zero();
    for (std::size_t i = 0; i < p_.size(); ++i) {
      H += (pc[i] - mc) * (p_[i] - mw).transpose();
    }
    const Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 D = Mat3::Identity();
    D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    RigidTransform T;
    T.R = svd.matrixU() * D * svd.matrixV().transpose();
    T.t = mc - T.R * mw;
    if (!T.R.allFinite() || !T.t.allFinite()) return std::nullopt;
    return T;
  }

  const std::vector<Vec3>& p_;
  const std::vector<Vec2>& uv_;
  const PinholeCamera& cam_;
  std::array<Vec3, 4> cw_;
  std::vector<Vec4> alphas_;
};

// Gauss-Newton on total squared reprojection error, R <- exp(w) R, t <- t + dt.
void refine(RigidTransform& T, const std::vector<Vec3>& p, const std::vector<Vec2>& uv,
            const PinholeCamera& cam, int iterations) {
  for (int it = 0; it < iterations; ++it) {
    Mat6 JtJ = Mat6::Zero();
    Vec6 Jtr = Vec6::Zero();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Vec3 Rp = T.R * p[i];
      const Vec3 pc = Rp + T.t;
      const auto z = project(cam, pc);
      if (!z) return;
      const Mat23 Jp = projection_jacobian(cam, pc);
      Eigen::Matrix<double, 2, 6> J;
      J.leftCols<3>() = -Jp * skew(Rp);
      J.rightCols<3>() = Jp;
      JtJ += J.transpose() * J;
      Jtr += J.transpose() * (uv[i] - *z);
    }
    const Vec6 d = JtJ.ldlt().solve(Jtr);
    if (!d.allFinite()) return;
    T.R = exp_so3(d.head<3>()) * T.R;
    T.t += d.tail<3>();
    if (d.norm() < 1e-12) break;
  }
  // Re-orthonormalize after the multiplicative updates.
  const Eigen::JacobiSVD<Mat3> svd(T.R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  T.R = svd.matrixU() * svd.matrixV().transpose();
}

std::vector<int> inliers_of(const RigidTransform& T, const std::vector<Vec3>& p,
                            const std::vector<Vec2>& uv, const PinholeCamera& cam,
                            double threshold) {
  std::vector<int> in;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto z = project(cam, T.R * p[i] + T.t);
    if (z && (*z - uv[i]).norm() < threshold) in.push_back(static_cast<int>(i));
  }
  return in;
}

template <typename T>
std::vector<T> subset(const std::vector<T>& v, const std::vector<int>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[i]);
  return out;
}

}  // namespace

std::optional<Pose> epnp(const std::vector<Vec3>& p_W, const std::vector<Vec2>& uv,
                         const PinholeCamera& cam) {
  if (p_W.size() != uv.size()) throw std::invalid_argument("epnp: size mismatch");
  const auto T = EpnpSolver(p_W, uv, cam).solve();
  if (!T) return std::nullopt;
  return to_pose(*T);
}

double mean_reprojection_error(const Pose& w_T_c, const std::vector<Vec3>& p_W,
                               const std::vector<Vec2>& uv, const PinholeCamera& cam) {
  if (p_W.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < p_W.size(); ++i) {
    const auto z = project(cam, w_T_c.inverse_transform(p_W[i]));
    if (!z) return std::numeric_limits<double>::infinity();
    sum += (*z - uv[i]).norm();
  }
  return sum / static_cast<double>(p_W.size());
}

std::optional<PnPResult> epnp_solve(const std::vector<Vec3>& p_W, const std::vector<Vec2>& uv,
                                    const PinholeCamera& cam, const PnPOptions& opts) {
  if (p_W.size() != uv.size()) throw std::invalid_argument("epnp_solve: size mismatch");
  const int n = static_cast<int>(p_W.size());
  const int min_points = std::max(opts.min_points, 4);
  if (n < min_points) return std::nullopt;

  std::vector<int> best_inliers;
  // Try the whole set first; RANSAC only if it leaves outliers behind.
  if (const auto T = EpnpSolver(p_W, uv, cam).solve()) {
    RigidTransform refined = *T;
    refine(refined, p_W, uv, cam, opts.refine_iterations);
    best_inliers = inliers_of(refined, p_W, uv, cam, opts.inlier_threshold_px);
  }
  if (static_cast<int>(best_inliers.size()) < n) {
    std::mt19937_64 rng(opts.seed);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int it = 0; it < opts.ransac_iterations; ++it) {
      for (int k = 0; k < min_points; ++k) {
        std::uniform_int_distribution<int> pick(k, n - 1);
        std::swap(idx[k], idx[pick(rng)]);
      }
      const std::vector<int> sample(idx.begin(), idx.begin() + min_points);
      const auto sp = subset(p_W, sample);
      const auto su = subset(uv, sample);
      const auto T = EpnpSolver(sp, su, cam).solve();
      if (!T) continue;
      auto in = inliers_of(*T, p_W, uv, cam, opts.inlier_threshold_px);
      if (in.size() > best_inliers.size()) best_inliers = std::move(in);
      if (static_cast<int>(best_inliers.size()) == n) break;
    }
  }
  if (static_cast<int>(best_inliers.size()) < min_points) return std::nullopt;

  const auto ip = subset(p_W, best_inliers);
  const auto iu = subset(uv, best_inliers);
  auto T = EpnpSolver(ip, iu, cam).solve();
  if (!T) return std::nullopt;
  refine(*T, ip, iu, cam, opts.refine_iterations);
  const double err = reprojection(*T, ip, iu, cam);
  if (!std::isfinite(err) || err > opts.inlier_threshold_px) return std::nullopt;

  PnPResult out;
  out.w_T_c = to_pose(*T);
  out.mean_reprojection_px = err;
  out.inliers = static_cast<int>(best_inliers.size());
  return out;
}

}  // namespace csmsckf
