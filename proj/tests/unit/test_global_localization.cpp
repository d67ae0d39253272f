#include <doctest.h>

#include "csmsckf/global_localization.hpp"
#include "test_support.hpp"

using namespace csmsckf;
using namespace csmsckf::testing;

namespace {

struct JacobianCheck {
  double active = 0.0, nuisance = 0.0, feature = 0.0;
};

JacobianCheck check_landmark_jacobians(const GlobalScene& s, const LandmarkMatch& pair,
                                       bool mapconst) {
  const auto lin = linearize_landmark(s.state, s.match, pair, s.map, s.cam, mapconst, std::nullopt);
  REQUIRE(lin.has_value());
  const int na = s.state.active_dim();
  const int nn = s.state.nuisance_dim();
  auto residual = [&](const FilterState& st, const KeyframeMap& map) {
    const auto l = linearize_landmark(st, s.match, pair, map, s.cam, mapconst, std::nullopt);
    REQUIRE(l.has_value());
    return Eigen::VectorXd(l->r);
  };
  const Eigen::MatrixXd num_a = -numerical_jacobian(
      [&](const Eigen::VectorXd& d) {
        return residual(perturbed(s.state, d, Eigen::VectorXd()), s.map);
      },
      na);
  JacobianCheck out;
  out.active = rel_error(lin->h_active, num_a);
  if (!mapconst) {
    const Eigen::MatrixXd num_n = -numerical_jacobian(
        [&](const Eigen::VectorXd& d) {
          return residual(perturbed(s.state, Eigen::VectorXd(), d), s.map);
        },
        nn);
    out.nuisance = rel_error(dense_nuisance(*lin, nn), num_n);
  }
  const Eigen::MatrixXd num_f = -numerical_jacobian(
      [&](const Eigen::VectorXd& d) {
        return residual(s.state, with_landmark_offset(s.map, pair.landmark_id, d));
      },
      3);
  out.feature = rel_error(lin->h_f, num_f);
  return out;
}

}  // namespace

TEST_CASE("global residual vanishes at the true state") {
  Rng rng(11);
  const GlobalScene s = make_global_scene(rng, 3, 5);
  for (const auto& pair : s.match.pairs) {
    const auto lin = linearize_landmark(s.state, s.match, pair, s.map, s.cam, false, std::nullopt);
    REQUIRE(lin.has_value());
    CHECK(lin->r.norm() < 1e-8);
    CHECK(lin->frames == 4);
    CHECK(lin->r.size() == 8);
  }
}

TEST_CASE("global Jacobians match central differences") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const int nkf = 1 + trial % 3;
    const GlobalScene s = make_global_scene(rng, nkf, 2, 0.5);
    for (const auto& pair : s.match.pairs) {
      const JacobianCheck c = check_landmark_jacobians(s, pair, false);
      CHECK(c.active < 1e-4);
      CHECK(c.nuisance < 1e-4);
      CHECK(c.feature < 1e-4);
      const JacobianCheck m = check_landmark_jacobians(s, pair, true);
      CHECK(m.active < 1e-4);
      CHECK(m.feature < 1e-4);
    }
  }
}

TEST_CASE("single keyframe landmark gives four raw rows and one projected row") {
  Rng rng(13);
  GlobalScene s = make_global_scene(rng, 1, 1, 0.3);
  const auto lin = linearize_landmark(s.state, s.match, s.match.pairs[0], s.map, s.cam, false,
                                      std::nullopt);
  REQUIRE(lin.has_value());
  CHECK(lin->r.size() == 4);
  GlobalOptions opts;
  opts.chi2_gating = false;
  const GlobalResidual res = build_global_residual(s.state, s.match, s.map, s.cam, opts);
  CHECK(res.rows() == 1);
}

TEST_CASE("constant-map mode keeps query rows only") {
  Rng rng(14);
  GlobalScene s = make_global_scene(rng, 3, 4, 0.3);
  GlobalOptions opts;
  opts.chi2_gating = false;
  opts.map_as_constant = true;
  const GlobalResidual res = build_global_residual(s.state, s.match, s.map, s.cam, opts);
  CHECK(res.rows() == 8);
  CHECK(res.h_nuisance.cols() == 0);
}

TEST_CASE("row count follows the number of observing frames") {
  Rng rng(15);
  for (int nkf = 1; nkf <= 4; ++nkf) {
    const GlobalScene s = make_global_scene(rng, nkf, 3, 0.5);
    for (const auto& pair : s.match.pairs) {
      const auto lin =
          linearize_landmark(s.state, s.match, pair, s.map, s.cam, false, std::nullopt);
      REQUIRE(lin.has_value());
      CHECK(lin->frames == nkf + 1);
      CHECK(lin->r.size() == 2 * (nkf + 1));
      CHECK(lin->keyframe_slots.size() == static_cast<std::size_t>(nkf));
    }
  }
}

TEST_CASE("null-space global update equals the landmark-in-state oracle") {
  Rng rng(16);
  for (int trial = 0; trial < 60; ++trial) {
    const GlobalScene s = make_global_scene(rng, 1 + trial % 3, 1, 1.0);
    const auto lin = linearize_landmark(s.state, s.match, s.match.pairs[0], s.map, s.cam,
                                        false, std::nullopt);
    REQUIRE(lin.has_value());
    const int na = s.state.active_dim();
    const int nn = s.state.nuisance_dim();
    Eigen::MatrixXd h_x(lin->r.size(), na + nn);
    h_x << lin->h_active, dense_nuisance(*lin, nn);
    const auto oracle = landmark_oracle(s.state.cov().dense(), h_x, lin->h_f, lin->r, 1.0);

    Eigen::MatrixXd h_compact(lin->r.size(), na + lin->h_nuisance.cols());
    h_compact << lin->h_active, lin->h_nuisance;
    const auto proj = nullspace_project(lin->r, h_compact, lin->h_f);
    LinearizedMeasurement m;
    m.r = proj.r;
    m.h_active = proj.h_x.leftCols(na);
    m.h_nuisance = proj.h_x.rightCols(lin->h_nuisance.cols());
    m.keyframe_slots = lin->keyframe_slots;
    m.noise = Eigen::MatrixXd::Identity(m.rows(), m.rows());
    FilterState st = s.state;
    REQUIRE(ekf_update(st, m) == UpdateStatus::kApplied);
    CHECK(rel_error(st.cov().dense(), oracle.P) < 1e-6);
    Eigen::VectorXd dx(na + nn);
    dx << active_lift(s.state, st), nuisance_lift(s.state, st);
    CHECK((dx - oracle.dx).norm() < 1e-6 * std::max(1.0, oracle.dx.norm()));
  }
}

TEST_CASE("evaluating at another x_t point keeps the residual first-order consistent") {
  Rng rng(17);
  GlobalScene s = make_global_scene(rng, 2, 3, 0.5);
  const Pose truth = *s.state.x().rel_transform;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(s.state.active_dim());
  d.tail<6>() << 2e-3, -1e-3, 1e-3, 0.01, -0.02, 0.01;
  const FilterState off = perturbed(s.state, d, Eigen::VectorXd());
  for (const auto& pair : s.match.pairs) {
    const auto at_hat = linearize_landmark(off, s.match, pair, s.map, s.cam, false, std::nullopt);
    const auto at_bar = linearize_landmark(off, s.match, pair, s.map, s.cam, false, truth);
    REQUIRE(at_hat.has_value());
    REQUIRE(at_bar.has_value());
    const Eigen::VectorXd first_order = at_bar->h_active.rightCols<6>() * d.tail<6>();
    CHECK((at_hat->r - at_bar->r).norm() < 1e-2 * first_order.norm());
    // Evaluated at the exact point, the residual is H_t times the x_t error alone.
    const Eigen::VectorXd r_exact = linearize_landmark(s.state, s.match, pair, s.map, s.cam,
                                                       false, std::nullopt)->r;
    CHECK((at_bar->r - (r_exact - first_order)).norm() < 1e-9);
  }
}

TEST_CASE("global initialization recovers the frame offset from exact inputs") {
  Rng rng(18);
  GlobalScene s = make_global_scene(rng, 2, 12, 0.0, 3, false);
  GlobalOptions opts;
  REQUIRE(initialize_global(s.state, s.match, s.map, s.cam, opts));
  const Pose& est = *s.state.x().rel_transform;
  CHECK(rotation_angle_between(est.rotation, s.true_g_T_l.rotation) < 1e-9);
  CHECK((est.translation - s.true_g_T_l.translation).norm() < 1e-9);
  const int o = s.state.rel_transform_offset();
  CHECK(s.state.cov().aa().block<6, 6>(o, o) == opts.rel_transform_prior);
  CHECK_THROWS_AS(initialize_global(s.state, s.match, s.map, s.cam, opts), std::logic_error);
}

TEST_CASE("re-linearization triggers only above the threshold") {
  Rng rng(19);
  GlobalScene s = make_global_scene(rng, 2, 15, 0.5);
  const auto quiet = relinearize(s.state, s.match, s.map, s.cam, 20.0);
  CHECK(quiet.reprojection_px < 2.0);
  CHECK_FALSE(quiet.point.has_value());

  Eigen::VectorXd d = Eigen::VectorXd::Zero(s.state.active_dim());
  d.tail<6>() << 0.0, 0.0, 0.08, 1.5, -1.0, 0.5;
  const FilterState off = perturbed(s.state, d, Eigen::VectorXd());
  const auto fired = relinearize(off, s.match, s.map, s.cam, 20.0);
  CHECK(fired.reprojection_px > 20.0);
  REQUIRE(fired.point.has_value());
  CHECK((fired.point->translation - s.true_g_T_l.translation).norm() < 0.1);
  CHECK(rotation_angle_between(fired.point->rotation, s.true_g_T_l.rotation) < 0.01);
}

TEST_CASE("global update leaves the nuisance part untouched") {
  Rng rng(20);
  GlobalScene s = make_global_scene(rng, 3, 8, 1.0);
  const auto nn = s.state.cov().nn();
  const auto kfs = s.state.x().keyframes;
  GlobalOptions opts;
  opts.chi2_gating = false;
  const auto stats = global_update(s.state, s.match, s.map, s.cam, opts);
  CHECK(stats.status == UpdateStatus::kApplied);
  CHECK(stats.keyframes_added == 0);
  CHECK(s.state.cov().nn() == nn);
  for (std::size_t k = 0; k < kfs.size(); ++k) CHECK(s.state.x().keyframes[k].pose == kfs[k].pose);
  CHECK(min_eigenvalue(s.state.cov().dense()) > -1e-10);
}

TEST_CASE("exact map and state make the global update a no-op") {
  Rng rng(21);
  GlobalScene s = make_global_scene(rng, 3, 8, 0.0);
  const FilterState before = s.state;
  GlobalOptions opts;
  global_update(s.state, s.match, s.map, s.cam, opts);
  CHECK(active_lift(before, s.state).norm() < 1e-8);
}
