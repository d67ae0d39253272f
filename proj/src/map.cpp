#include "csmsckf/map.hpp"

#include <stdexcept>
#include <string>

namespace csmsckf {

void KeyframeMap::add_keyframe(const MapKeyframe& kf) {
  if (!keyframes_.emplace(kf.id, kf).second) {
    throw std::invalid_argument("KeyframeMap: duplicate keyframe id " + std::to_string(kf.id));
  }
}

void KeyframeMap::add_landmark(const MapLandmark& lm) {
  if (!has_keyframe(lm.anchor_kf)) {
    throw std::invalid_argument("KeyframeMap: landmark " + std::to_string(lm.id) +
                                " anchored in unknown keyframe");
  }
  if (!landmarks_.emplace(lm.id, lm).second) {
    throw std::invalid_argument("KeyframeMap: duplicate landmark id " + std::to_string(lm.id));
  }
}

void KeyframeMap::add_observation(int landmark_id, const KeyframeObservation& obs) {
  if (!has_landmark(landmark_id) || !has_keyframe(obs.kf_id)) {
    throw std::invalid_argument("KeyframeMap: observation references unknown ids");
  }
  observations_[landmark_id].push_back(obs);
}

const std::vector<KeyframeObservation>& KeyframeMap::observations(int landmark_id) const {
  static const std::vector<KeyframeObservation> kEmpty;
  auto it = observations_.find(landmark_id);
  return it == observations_.end() ? kEmpty : it->second;
}

const MapKeyframe& KeyframeMap::keyframe(int id) const {
  auto it = keyframes_.find(id);
  if (it == keyframes_.end()) throw std::out_of_range("unknown keyframe " + std::to_string(id));
  return it->second;
}

const MapLandmark& KeyframeMap::landmark(int id) const {
  auto it = landmarks_.find(id);
  if (it == landmarks_.end()) throw std::out_of_range("unknown landmark " + std::to_string(id));
  return it->second;
}

}  // namespace csmsckf
