#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "csmsckf/geometry.hpp"

namespace csmsckf {

struct PnPOptions {
  int min_points = 6;
  int ransac_iterations = 200;
  // Inlier threshold on reprojection error; with unit pixel noise this is a 3-sigma cut.
  double inlier_threshold_px = 3.0;
  int refine_iterations = 10;
  std::uint64_t seed = 0x5eed;
};

struct PnPResult {
  Pose w_T_c;  // camera pose in the frame the 3D points live in
  double mean_reprojection_px = 0.0;
  int inliers = 0;
};

/// Plain EPnP (four control points, betas from the 1/2/3-dimensional kernel
/// approximations refined by Gauss-Newton, best by reprojection error), with no outlier
/// handling and no final refinement. Needs at least four points in general position.
std::optional<Pose> epnp(const std::vector<Vec3>& p_W, const std::vector<Vec2>& uv,
                         const PinholeCamera& cam);

/// Robust PnP: EPnP on minimal 6-point samples inside RANSAC, refit on the consensus
/// set, then Gauss-Newton on reprojection error. Fails with fewer than
/// opts.min_points correspondences, on (near-)planar point sets, or if the consensus
/// set ends up smaller than opts.min_points.
std::optional<PnPResult> epnp_solve(const std::vector<Vec3>& p_W, const std::vector<Vec2>& uv,
                                    const PinholeCamera& cam, const PnPOptions& opts = {});

// Mean pixel distance between uv and the projections of p_W through w_T_c. Points
// behind the camera count as +inf.
double mean_reprojection_error(const Pose& w_T_c, const std::vector<Vec3>& p_W,
                               const std::vector<Vec2>& uv, const PinholeCamera& cam);

}  // namespace csmsckf
