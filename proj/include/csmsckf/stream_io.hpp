#pragma once

#include <filesystem>

#include "csmsckf/config.hpp"
#include "csmsckf/simulator.hpp"

namespace csmsckf {

/// Writes a simulated world as plain CSV streams plus a manifest:
///   imu.csv               t,wx,wy,wz,ax,ay,az
///   tracks.csv            t,feature_id,u,v
///   matches.csv           t,keyframe_ids,landmark_id,u,v   (ids space separated)
///   map_keyframes.csv     id,qx,qy,qz,qw,px,py,pz,c00,c01,...,c55 (upper triangle)
///   map_landmarks.csv     id,anchor_kf,x,y,z               (anchor camera frame)
///   map_observations.csv  landmark_id,kf_id,u,v
///   truth.csv             t,px,py,pz,qx,qy,qz,qw,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz
///   config.yaml, manifest.json
/// Quaternions are JPL (x, y, z, w) in the Pose convention of geometry.hpp.
void write_world(const SimWorld& world, const Config& cfg, const std::filesystem::path& dir);

/// Reads the streams back. The result has no continuous trajectory (truth is
/// interpolated between samples) and no true keyframes or landmarks.
SimWorld read_world(const std::filesystem::path& dir, Config* cfg_out = nullptr);

}  // namespace csmsckf
