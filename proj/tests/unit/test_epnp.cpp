#include <doctest.h>

#include "csmsckf/epnp.hpp"
#include "test_support.hpp"

using namespace csmsckf;
using namespace csmsckf::testing;

namespace {

struct PnPScene {
  Pose w_T_c;
  std::vector<Vec3> p_W;
  std::vector<Vec2> uv;
};

// Points spread in front of a random camera, at `depth` +- 40%.
PnPScene make_scene(Rng& rng, const PinholeCamera& cam, int n, double depth, double noise) {
  PnPScene s;
  s.w_T_c = random_pose(rng, 1.0, 5.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  while (static_cast<int>(s.uv.size()) < n) {
    const double z = depth * (1.0 + 0.4 * u(rng));
    const Vec3 p_C(0.6 * z * u(rng), 0.45 * z * u(rng), z);
    const auto px = project(cam, p_C);
    if (!px) continue;
    s.p_W.push_back(s.w_T_c.transform(p_C));
    s.uv.push_back(*px + noise * Vec2(randn(rng), randn(rng)));
  }
  return s;
}

}  // namespace

TEST_CASE("noiseless correspondences give the exact pose") {
  Rng rng(1);
  const PinholeCamera cam;
  for (int trial = 0; trial < 50; ++trial) {
    const PnPScene s = make_scene(rng, cam, 6 + trial % 20, 10.0, 0.0);
    const auto plain = epnp(s.p_W, s.uv, cam);
    REQUIRE(plain.has_value());
    CHECK(rotation_angle_between(plain->rotation, s.w_T_c.rotation) < 1e-6);
    CHECK((plain->translation - s.w_T_c.translation).norm() < 1e-6);
    const auto robust = epnp_solve(s.p_W, s.uv, cam);
    REQUIRE(robust.has_value());
    CHECK(rotation_angle_between(robust->w_T_c.rotation, s.w_T_c.rotation) < 1e-6);
    CHECK((robust->w_T_c.translation - s.w_T_c.translation).norm() < 1e-6);
    CHECK(robust->inliers == static_cast<int>(s.p_W.size()));
  }
}

TEST_CASE("one-pixel noise on thirty points stays within a few centimetres") {
  Rng rng(2);
  const PinholeCamera cam;
  double sum = 0.0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const PnPScene s = make_scene(rng, cam, 30, 10.0, 1.0);
    const auto res = epnp_solve(s.p_W, s.uv, cam);
    REQUIRE(res.has_value());
    sum += (res->w_T_c.translation - s.w_T_c.translation).norm();
    CHECK(res->mean_reprojection_px < 2.0);
  }
  CHECK(sum / trials < 0.05);
}

TEST_CASE("outliers are rejected by the consensus step") {
  Rng rng(3);
  const PinholeCamera cam;
  PnPScene s = make_scene(rng, cam, 40, 10.0, 0.5);
  for (int i = 0; i < 10; ++i) s.uv[i] += Vec2(80.0, -60.0);
  const auto res = epnp_solve(s.p_W, s.uv, cam);
  REQUIRE(res.has_value());
  CHECK(res->inliers == 30);
  CHECK((res->w_T_c.translation - s.w_T_c.translation).norm() < 0.1);
}

TEST_CASE("too few or planar points fail") {
  Rng rng(4);
  const PinholeCamera cam;
  const PnPScene s = make_scene(rng, cam, 4, 10.0, 0.0);
  CHECK_FALSE(epnp_solve(s.p_W, s.uv, cam).has_value());
  CHECK_FALSE(epnp(std::vector<Vec3>(s.p_W.begin(), s.p_W.begin() + 3),
                   std::vector<Vec2>(s.uv.begin(), s.uv.begin() + 3), cam)
                  .has_value());

  // Twenty points on one plane.
  std::vector<Vec3> plane;
  std::vector<Vec2> uv;
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  while (plane.size() < 20) {
    const Vec3 p_C(u(rng), u(rng), 10.0);
    plane.push_back(p_C);
    uv.push_back(*project(cam, p_C));
  }
  CHECK_FALSE(epnp_solve(plane, uv, cam).has_value());
}

TEST_CASE("reprojection error helper") {
  Rng rng(5);
  const PinholeCamera cam;
  PnPScene s = make_scene(rng, cam, 10, 8.0, 0.0);
  CHECK(mean_reprojection_error(s.w_T_c, s.p_W, s.uv, cam) < 1e-9);
  for (auto& z : s.uv) z.x() += 3.0;
  CHECK(mean_reprojection_error(s.w_T_c, s.p_W, s.uv, cam) == doctest::Approx(3.0));
}
