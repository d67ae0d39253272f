#include <doctest.h>

#include <algorithm>

#include "csmsckf/estimator.hpp"
#include "csmsckf/evaluation.hpp"
#include "test_support.hpp"

using namespace csmsckf;
using namespace csmsckf::testing;

namespace {

SimConfig small_config(double radius = 30.0) {
  SimConfig cfg;
  cfg.seed = 11;
  cfg.trajectory.type = "circle";
  cfg.trajectory.radius = radius;
  cfg.trajectory.speed = 5.0;
  return cfg;
}

ImuState truth_state(const SimWorld& w, double t) {
  const TruthSample s = w.truth_at(t);
  ImuState x;
  x.q = s.g_T_i.rotation;
  x.p = s.g_T_i.translation;
  x.v = s.v_G;
  x.bg = s.bg;
  x.ba = s.ba;
  return x;
}

}  // namespace

TEST_CASE("mode names round trip") {
  for (Mode m : {Mode::kOdometry, Mode::kSingleMatch, Mode::kMultiMatch, Mode::kMapConstant}) {
    CHECK(mode_from_string(to_string(m)) == m);
  }
  CHECK(mode_from_string("MM") == Mode::kMultiMatch);
  CHECK_THROWS(mode_from_string("slam"));
}

TEST_CASE("window size, covariance health and x_t initialization along a run") {
  const SimWorld w = generate_world(small_config());
  EstimatorConfig cfg;
  cfg.max_clones = 8;
  Estimator est(cfg, w.camera, &w.map);
  CHECK_FALSE(est.initialized());
  const double t0 = w.frames.front().t;
  est.initialize(t0, truth_state(w, t0), cfg.initial_covariance());
  std::size_t imu_next = 0, match_next = 0;
  bool seen_match = false;
  double worst_eig = 0.0;
  for (std::size_t k = 0; k < w.frames.size(); ++k) {
    const auto& frame = w.frames[k];
    while (imu_next < w.imu.size() && w.imu[imu_next].t <= frame.t + 1e-9) est.add_imu(w.imu[imu_next++]);
    const MatchSet* match = nullptr;
    if (match_next < w.matches.size() && std::abs(w.matches[match_next].t - frame.t) < 1e-9) {
      match = &w.matches[match_next++];
    }
    const FrameEstimate fe = est.process_frame(frame, match);
    CHECK(est.state().num_clones() <= cfg.max_clones);
    seen_match = seen_match || fe.match_used;
    CHECK(fe.global_valid == est.state().has_rel_transform());
    if (seen_match) CHECK(fe.g_T_l.has_value());
    if (k % 25 == 0) {
      CHECK(est.state().cov().max_asymmetry() < 1e-9);
      const Eigen::MatrixXd P = est.state().cov().dense();
      worst_eig = std::min(worst_eig, min_eigenvalue(P) / P.diagonal().maxCoeff());
    }
  }
  CHECK(seen_match);
  CHECK(worst_eig > -1e-10);
  CHECK(est.state().nuisance_dim() > 0);
}

TEST_CASE("noise-free odometry stays within a centimetre over 60 s") {
  SimConfig sim = small_config(50.0);
  sim.imu_noise_enabled = false;
  sim.sigma_px = 0.0;
  const SimWorld w = generate_world(sim);
  REQUIRE(w.frames.back().t - w.frames.front().t >= 60.0);
  EstimatorConfig cfg;
  cfg.mode = Mode::kOdometry;
  cfg.init_sigma_theta = cfg.init_sigma_p = cfg.init_sigma_v = 1e-9;
  cfg.init_sigma_bg = cfg.init_sigma_ba = 1e-9;
  const RunReport rep = run(w, cfg);
  CHECK_FALSE(rep.diverged);
  CHECK(rep.evaluated == static_cast<int>(w.frames.size()));
  CHECK(rep.rmse < 0.01);
  CHECK(rep.matches_used == 0);
}

TEST_CASE("map-based modes bound the global error on a small loop") {
  const SimWorld w = generate_world(small_config());
  for (Mode m : {Mode::kSingleMatch, Mode::kMultiMatch}) {
    EstimatorConfig cfg;
    cfg.mode = m;
    if (m == Mode::kSingleMatch) cfg.max_keyframes = 1;
    const RunReport rep = run(w, cfg);
    CHECK_FALSE(rep.diverged);
    CHECK(rep.matches_used > 0);
    INFO(to_string(m), " rmse ", rep.rmse);
    // Right after x_t is initialized the error is odometry drift plus the PnP error.
    const auto first = std::find_if(rep.rows.begin(), rep.rows.end(),
                                    [](const ReportRow& r) { return r.global_valid; });
    REQUIRE(first != rep.rows.end());
    CHECK(first->err.norm() < 1.0);
    CHECK(rep.rmse < (m == Mode::kMultiMatch ? 0.5 : 2.0));
  }
}

TEST_CASE("configuration validation") {
  EstimatorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.max_clones = 1;
  CHECK_THROWS(cfg.validate());
  cfg = EstimatorConfig{};
  cfg.sigma_px = 0.0;
  CHECK_THROWS(cfg.validate());
  const Mat15 P0 = EstimatorConfig{}.initial_covariance();
  CHECK(P0(imu_idx::kPos, imu_idx::kPos) == doctest::Approx(1e-6));
  CHECK(P0.isDiagonal(0.0));
}
