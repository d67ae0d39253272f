#pragma once

#include <map>
#include <vector>

#include "csmsckf/geometry.hpp"

namespace csmsckf {

/// Map keyframe: pose ^G T_kf of the keyframe camera and its 6x6 covariance, ordered
/// (dtheta, dp) like every pose error in this library.
struct MapKeyframe {
  int id = -1;
  Pose pose;
  Mat6 cov = Mat6::Identity() * 0.1;
  PinholeCamera camera;
};

/// Landmark position expressed in the camera frame of its anchor keyframe.
struct MapLandmark {
  int id = -1;
  int anchor_kf = -1;
  Vec3 p = Vec3::Zero();
};

// 2D position of a landmark recorded in one map keyframe.
struct KeyframeObservation {
  int kf_id = -1;
  Vec2 uv = Vec2::Zero();
};

/// Immutable-after-load keyframe map. Safe to share read-only between runs.
class KeyframeMap {
 public:
  void add_keyframe(const MapKeyframe& kf);
  void add_landmark(const MapLandmark& lm);
  void add_observation(int landmark_id, const KeyframeObservation& obs);

  const MapKeyframe& keyframe(int id) const;
  const MapLandmark& landmark(int id) const;
  bool has_keyframe(int id) const { return keyframes_.count(id) != 0; }
  bool has_landmark(int id) const { return landmarks_.count(id) != 0; }

  // Keyframe observations of a landmark (empty if none were recorded).
  const std::vector<KeyframeObservation>& observations(int landmark_id) const;

  const std::map<int, MapKeyframe>& keyframes() const { return keyframes_; }
  const std::map<int, MapLandmark>& landmarks() const { return landmarks_; }

 private:
  std::map<int, MapKeyframe> keyframes_;
  std::map<int, MapLandmark> landmarks_;
  std::map<int, std::vector<KeyframeObservation>> observations_;
};

}  // namespace csmsckf
