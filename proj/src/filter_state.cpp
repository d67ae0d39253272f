#include "csmsckf/filter_state.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "csmsckf/log.hpp"

namespace csmsckf {

namespace {
constexpr double kTimeEps = 1e-9;
}

Mat6 default_rel_transform_prior() {
  Vec6 d;
  d << 1.0, 1.0, 1.0, 10.0, 10.0, 10.0;
  return d.asDiagonal();
}

FilterState::FilterState(const ImuState& imu, const Eigen::Matrix<double, 15, 15>& imu_cov,
                         int max_clones)
    : cov_(Eigen::MatrixXd(imu_cov)), max_clones_(max_clones) {
  if (max_clones < 2) throw std::invalid_argument("FilterState: window needs >= 2 clones");
  x_.imu = imu;
}

int FilterState::rel_transform_offset() const {
  if (!x_.rel_transform) throw std::logic_error("FilterState: x_t not initialized");
  return clone_offset(x_.clones.size());
}

std::optional<std::size_t> FilterState::clone_index(double t) const {
  for (std::size_t i = 0; i < x_.clones.size(); ++i) {
    if (std::abs(x_.clones[i].t - t) < kTimeEps) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> FilterState::keyframe_index(int id) const {
  for (std::size_t i = 0; i < x_.keyframes.size(); ++i) {
    if (x_.keyframes[i].id == id) return i;
  }
  return std::nullopt;
}

void FilterState::augment_clone(double t) {
  if (clone_index(t)) {
    throw std::invalid_argument("augment_clone: clone already exists at this timestamp");
  }
  if (!x_.imu.is_finite()) throw std::runtime_error("augment_clone: non-finite IMU pose");
  if (!x_.clones.empty() && t < x_.clones.back().t) {
    throw std::invalid_argument("augment_clone: timestamps must increase");
  }
  const int offset = clone_offset(x_.clones.size());
  const Eigen::MatrixXd self = cov_.aa().topLeftCorner(6, 6);
  const Eigen::MatrixXd cross_active = cov_.aa().topRows(6);
  const Eigen::MatrixXd cross_nuisance = cov_.an().topRows(6);
  cov_.insert_active(offset, self, cross_active, cross_nuisance);
  x_.clones.push_back({t, x_.imu.pose()});
}

void FilterState::marginalize_clone(double t) {
  const auto idx = clone_index(t);
  if (!idx) throw std::invalid_argument("marginalize_clone: unknown clone timestamp");
  cov_.remove_active(clone_offset(*idx), 6);
  x_.clones.erase(x_.clones.begin() + static_cast<std::ptrdiff_t>(*idx));
}

void FilterState::reset_rel_transform_mean(const Pose& g_T_l) {
  if (!x_.rel_transform) throw std::logic_error("reset_rel_transform_mean: x_t not initialized");
  x_.rel_transform = g_T_l;
}

void FilterState::init_rel_transform(const Pose& g_T_l, const Mat6& prior) {
  if (x_.rel_transform) throw std::logic_error("init_rel_transform: already initialized");
  const int offset = cov_.active_dim();
  cov_.insert_active(offset, prior, Eigen::MatrixXd::Zero(6, offset),
                     Eigen::MatrixXd::Zero(6, cov_.nuisance_dim()));
  x_.rel_transform = g_T_l;
}

std::vector<int> FilterState::augment_keyframes(std::span<const MapKeyframe> kfs) {
  std::vector<int> added;
  std::vector<const MapKeyframe*> fresh;
  for (const auto& kf : kfs) {
    if (keyframe_index(kf.id) ||
        std::find(added.begin(), added.end(), kf.id) != added.end()) {
      log::warn("augment_keyframes: keyframe ", kf.id, " already in state, skipped");
      continue;
    }
    added.push_back(kf.id);
    fresh.push_back(&kf);
  }
  if (fresh.empty()) return added;
  // One block-diagonal append instead of a reallocation per keyframe.
  const int s = 6 * static_cast<int>(fresh.size());
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(s, s);
  for (std::size_t k = 0; k < fresh.size(); ++k) {
    block.block<6, 6>(6 * k, 6 * k) = fresh[k]->cov;
    x_.keyframes.push_back({fresh[k]->id, fresh[k]->pose});
  }
  cov_.append_nuisance(block);
  return added;
}

void FilterState::correct_active(const Eigen::VectorXd& dx) {
  if (dx.size() != cov_.active_dim()) {
    throw std::invalid_argument("correct_active: correction size mismatch");
  }
  x_.imu = retract(x_.imu, ErrorState::from_vector(dx.head<15>()));
  for (std::size_t i = 0; i < x_.clones.size(); ++i) {
    x_.clones[i].pose = pose_retract(x_.clones[i].pose, dx.segment<6>(clone_offset(i)));
  }
  if (x_.rel_transform) {
    x_.rel_transform = pose_retract(*x_.rel_transform, dx.segment<6>(rel_transform_offset()));
  }
}

void FilterState::correct_nuisance(const Eigen::VectorXd& dx) {
  if (dx.size() != cov_.nuisance_dim()) {
    throw std::invalid_argument("correct_nuisance: correction size mismatch");
  }
  for (std::size_t k = 0; k < x_.keyframes.size(); ++k) {
    x_.keyframes[k].pose = pose_retract(x_.keyframes[k].pose, dx.segment<6>(keyframe_offset(k)));
  }
}

void FilterState::audit() const {
  const int expected_active =
      15 + 6 * static_cast<int>(x_.clones.size()) + (x_.rel_transform ? 6 : 0);
  const int expected_nuisance = 6 * static_cast<int>(x_.keyframes.size());
  if (cov_.active_dim() != expected_active || cov_.nuisance_dim() != expected_nuisance ||
      cov_.an().rows() != expected_active || cov_.an().cols() != expected_nuisance) {
    throw std::logic_error("FilterState::audit: covariance layout does not match state");
  }
  for (std::size_t i = 1; i < x_.clones.size(); ++i) {
    if (!(x_.clones[i].t > x_.clones[i - 1].t)) {
      throw std::logic_error("FilterState::audit: clone timestamps out of order");
    }
  }
  for (std::size_t i = 0; i < x_.keyframes.size(); ++i) {
    for (std::size_t j = i + 1; j < x_.keyframes.size(); ++j) {
      if (x_.keyframes[i].id == x_.keyframes[j].id) {
        throw std::logic_error("FilterState::audit: duplicate keyframe id");
      }
    }
  }
}

}  // namespace csmsckf
