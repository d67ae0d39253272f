#include "csmsckf/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace csmsckf {

namespace {

std::mt19937_64 init_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    6u};
  return std::mt19937_64(seq);
}

ImuState initial_estimate(const SimWorld& world, const Mat15& P0, double t0) {
  const TruthSample truth = world.truth_at(t0);
  const Pose l_T_i = pose_compose(pose_inverse(world.g_T_l), truth.g_T_i);
  ImuState x;
  x.q = l_T_i.rotation;
  x.p = l_T_i.translation;
  x.v = world.g_T_l.rotation_matrix() * truth.v_G;
  x.bg = truth.bg;
  x.ba = truth.ba;
  auto rng = init_rng(world.config.seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Vec15 z;
  for (int i = 0; i < 15; ++i) z(i) = n(rng);
  const Eigen::LLT<Mat15> llt(P0);
  const Vec15 delta = llt.matrixL() * z;
  return retract(x, ErrorState::from_vector(delta));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

double compute_rmse(const std::vector<Vec3>& est, const std::vector<Vec3>& gt) {
  if (est.size() != gt.size()) throw std::invalid_argument("compute_rmse: size mismatch");
  if (est.empty()) throw std::invalid_argument("compute_rmse: no samples");
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) sum += (est[i] - gt[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(est.size()));
}

NeesResult compute_nees(const std::vector<Vec3>& err, const std::vector<Mat3>& cov) {
  if (err.size() != cov.size()) throw std::invalid_argument("compute_nees: size mismatch");
  NeesResult out;
  out.per_step.reserve(err.size());
  double sum = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    const Eigen::LLT<Mat3> llt(cov[i]);
    if (llt.info() != Eigen::Success || !cov[i].allFinite()) {
      out.per_step.push_back(std::numeric_limits<double>::quiet_NaN());
      ++out.skipped;
      continue;
    }
    const double e = err[i].dot(llt.solve(err[i]));
    out.per_step.push_back(e);
    sum += e;
    ++used;
  }
  out.mean = used > 0 ? sum / used : std::numeric_limits<double>::quiet_NaN();
  return out;
}

RunReport run(const SimWorld& world, const EstimatorConfig& cfg, std::uint64_t config_hash) {
  RunReport rep;
  rep.config_hash = config_hash;
  rep.seed = world.config.seed;
  rep.mode = to_string(cfg.mode);
  rep.relinearize = cfg.relinearize;
  if (world.frames.empty()) throw std::invalid_argument("run: world has no camera frames");

  Estimator est(cfg, world.camera, &world.map);
  est.set_reference_offset(world.g_T_l);
  const double t0 = world.frames.front().t;
  const Mat15 P0 = cfg.initial_covariance();
  est.initialize(t0, initial_estimate(world, P0, t0), P0);

  std::size_t imu_next = 0;
  std::size_t match_next = 0;
  std::vector<Vec3> errs;
  std::vector<Mat3> covs;
  std::vector<Vec3> est_p;
  std::vector<Vec3> true_p;
  int inside = 0;
  try {
    for (const auto& frame : world.frames) {
      while (imu_next < world.imu.size() && world.imu[imu_next].t <= frame.t + 1e-9) {
        est.add_imu(world.imu[imu_next++]);
      }
      while (match_next < world.matches.size() && world.matches[match_next].t < frame.t - 1e-9) {
        ++match_next;
      }
      const MatchSet* match = nullptr;
      if (match_next < world.matches.size() &&
          std::abs(world.matches[match_next].t - frame.t) < 1e-9) {
        match = &world.matches[match_next];
      }
      const FrameEstimate fe = est.process_frame(frame, match);

      ReportRow row;
      row.t = frame.t;
      row.p_est = fe.p_global;
      row.p_true = world.truth_at(frame.t).g_T_i.translation;
      row.err = row.p_est - row.p_true;
      row.sigma3 = 3.0 * fe.p_global_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
      row.global_valid = fe.global_valid;
      row.match_used = fe.match_used;
      row.relinearized = fe.relinearized;
      if (fe.g_T_l) {
        row.x_t_err = fe.g_T_l->translation - world.g_T_l.translation;
        row.x_t_sigma3 = 3.0 * fe.x_t_cov.diagonal().tail<3>().cwiseMax(0.0).cwiseSqrt();
      }
      const NeesResult n = compute_nees({row.err}, {fe.p_global_cov});
      row.nees = n.per_step.front();
      rep.matches_used += row.match_used;
      rep.relinearizations += row.relinearized;
      rep.rows.push_back(row);

      if (!row.err.allFinite() || row.err.norm() > kDivergenceThreshold) {
        rep.diverged = true;
        rep.failure = "position error exceeded divergence threshold";
        break;
      }
      const bool evaluate = cfg.mode == Mode::kOdometry || row.global_valid;
      if (!evaluate) continue;
      errs.push_back(row.err);
      covs.push_back(fe.p_global_cov);
      est_p.push_back(row.p_est);
      true_p.push_back(row.p_true);
      for (int a = 0; a < 3; ++a) inside += std::abs(row.err(a)) <= row.sigma3(a);
    }
  } catch (const std::exception& e) {
    rep.diverged = true;
    rep.failure = e.what();
  }
  rep.timing = est.timing();
  rep.evaluated = static_cast<int>(errs.size());
  if (!errs.empty()) {
    rep.rmse = compute_rmse(est_p, true_p);
    const NeesResult n = compute_nees(errs, covs);
    rep.nees_mean = n.mean;
    rep.nees_skipped = n.skipped;
    rep.inside_3sigma = static_cast<double>(inside) / (3.0 * static_cast<double>(errs.size()));
  }
  return rep;
}

std::string report_csv(const RunReport& r) {
  std::ostringstream os;
  os << "t,px,py,pz,gx,gy,gz,ex,ey,ez,s3x,s3y,s3z,nees,global_valid,xt_ex,xt_ey,xt_ez,"
        "xt_s3x,xt_s3y,xt_s3z,match_used,relinearized\n";
  for (const auto& row : r.rows) {
    os << fmt(row.t);
    for (const Vec3* v : {&row.p_est, &row.p_true, &row.err, &row.sigma3}) {
      for (int a = 0; a < 3; ++a) os << ',' << fmt((*v)(a));
    }
    os << ',' << fmt(row.nees) << ',' << int(row.global_valid);
    for (const Vec3* v : {&row.x_t_err, &row.x_t_sigma3}) {
      for (int a = 0; a < 3; ++a) os << ',' << fmt((*v)(a));
    }
    os << ',' << int(row.match_used) << ',' << int(row.relinearized) << '\n';
  }
  return os.str();
}

std::string report_summary_json(const RunReport& r) {
  nlohmann::ordered_json j;
  char hash[20];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(r.config_hash));
  j["config_hash"] = hash;
  j["seed"] = r.seed;
  j["mode"] = r.mode;
  j["relinearize"] = r.relinearize;
  j["diverged"] = r.diverged;
  j["failure"] = r.failure;
  j["rows"] = r.rows.size();
  j["evaluated_rows"] = r.evaluated;
  j["rmse_m"] = r.rmse;
  j["nees_mean"] = r.nees_mean;
  j["nees_skipped"] = r.nees_skipped;
  j["inside_3sigma"] = r.inside_3sigma;
  j["matches_used"] = r.matches_used;
  j["relinearizations"] = r.relinearizations;
  return j.dump(2) + "\n";
}

void write_report(const RunReport& report, const std::filesystem::path& dir,
                  const std::string& stem) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write(stem + ".csv", report_csv(report));
  write(stem + ".json", report_summary_json(report));
  nlohmann::ordered_json t;
  t["local_updates"] = report.timing.local_ms.size();
  t["local_median_ms"] = median(report.timing.local_ms);
  t["global_updates"] = report.timing.global_ms.size();
  t["global_median_ms"] = median(report.timing.global_ms);
  write(stem + "_timing.json", t.dump(2) + "\n");
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("loglog_slope: need >= 2 matching points");
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace {

FilterState timing_state(int active_dim, int nuisance_dim, std::mt19937_64& rng) {
  const int clones = (active_dim - 21) / 6;
  if (clones < 1 || 21 + 6 * clones != active_dim) {
    throw std::invalid_argument("timing_harness: active_dim must be 21 + 6k");
  }
  std::normal_distribution<double> n(0.0, 1.0);
  FilterState st(ImuState{}, Mat15::Identity(), clones + 1);
  for (int c = 0; c < clones; ++c) st.augment_clone(c);
  st.init_rel_transform(Pose::identity());
  std::vector<MapKeyframe> kfs(nuisance_dim / 6);
  for (std::size_t k = 0; k < kfs.size(); ++k) {
    kfs[k].id = static_cast<int>(k);
    kfs[k].cov = Mat6::Identity() * 0.01;
  }
  st.augment_keyframes(kfs);
  // Well-conditioned active block and weak cross terms keep the joint matrix PD.
  BlockCovariance& P = st.cov();
  P.aa() = Eigen::MatrixXd::Identity(active_dim, active_dim);
  const double scale = 0.02 / std::sqrt(static_cast<double>(nuisance_dim));
  for (int j = 0; j < nuisance_dim; ++j) {
    for (int i = 0; i < active_dim; ++i) P.an()(i, j) = scale * n(rng);
  }
  return st;
}

template <typename F>
double median_time_ms(F&& f, double budget_ms, int min_reps, int max_reps) {
  std::vector<double> samples;
  double total = 0.0;
  while (static_cast<int>(samples.size()) < max_reps &&
         (static_cast<int>(samples.size()) < min_reps || total < budget_ms)) {
    const auto start = std::chrono::steady_clock::now();
    f();
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    samples.push_back(ms);
    total += ms;
  }
  return median(samples);
}

}  // namespace

TimingReport timing_harness(const std::vector<int>& nuisance_dims, int active_dim, int rows,
                            std::uint64_t seed) {
  if (nuisance_dims.size() < 2) throw std::invalid_argument("timing_harness: need >= 2 sizes");
  TimingReport rep;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int dim : nuisance_dims) {
    if (dim < 18 || dim % 6 != 0) {
      throw std::invalid_argument("timing_harness: nuisance dims must be multiples of 6, >= 18");
    }
    FilterState st = timing_state(active_dim, dim, rng);
    LinearizedMeasurement m;
    m.r = Eigen::VectorXd::Zero(rows);
    m.h_active = Eigen::MatrixXd::NullaryExpr(rows, active_dim, [&] { return n(rng); });
    m.h_nuisance = Eigen::MatrixXd::NullaryExpr(rows, 18, [&] { return n(rng); });
    const int kf = dim / 6;
    m.keyframe_slots = {0, kf / 2, kf - 1};
    m.noise = Eigen::MatrixXd::Identity(rows, rows);

    TimingPoint p;
    p.nuisance_dim = dim;
    FilterState s1 = st;
    p.schmidt_ms = median_time_ms([&] { schmidt_update(s1, m); }, 200.0, 7, 400);
    FilterState s2 = st;
    p.ekf_ms = median_time_ms([&] { ekf_update(s2, m); }, 200.0, 3, 200);
    rep.points.push_back(p);
  }
  std::vector<double> x, ys, ye;
  for (const auto& p : rep.points) {
    x.push_back(p.nuisance_dim);
    ys.push_back(p.schmidt_ms);
    ye.push_back(p.ekf_ms);
  }
  rep.schmidt_slope = loglog_slope(x, ys);
  rep.ekf_slope = loglog_slope(x, ye);
  return rep;
}

std::string timing_json(const TimingReport& report) {
  nlohmann::ordered_json j;
  j["points"] = nlohmann::json::array();
  for (const auto& p : report.points) {
    j["points"].push_back(
        {{"nuisance_dim", p.nuisance_dim}, {"schmidt_ms", p.schmidt_ms}, {"ekf_ms", p.ekf_ms}});
  }
  j["schmidt_slope"] = report.schmidt_slope;
  j["ekf_slope"] = report.ekf_slope;
  return j.dump(2) + "\n";
}

}  // namespace csmsckf
