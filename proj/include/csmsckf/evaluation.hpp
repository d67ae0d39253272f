#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csmsckf/estimator.hpp"

namespace csmsckf {

struct ReportRow {
  double t = 0.0;
  Vec3 p_est = Vec3::Zero();
  Vec3 p_true = Vec3::Zero();
  Vec3 err = Vec3::Zero();
  Vec3 sigma3 = Vec3::Zero();
  double nees = 0.0;  // NaN when the covariance could not be inverted
  bool global_valid = false;
  Vec3 x_t_err = Vec3::Zero();     // translation of x_t minus the true frame offset
  Vec3 x_t_sigma3 = Vec3::Zero();
  bool match_used = false;
  bool relinearized = false;
};

struct RunReport {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string mode;
  bool relinearize = false;
  bool diverged = false;
  std::string failure;
  std::vector<ReportRow> rows;

  // Aggregates over evaluated rows: every row in odometry mode, rows with an estimated
  // x_t otherwise.
  int evaluated = 0;
  double rmse = 0.0;
  double nees_mean = 0.0;
  int nees_skipped = 0;
  double inside_3sigma = 0.0;  // fraction of (row, axis) pairs with |e| <= 3 sigma
  int matches_used = 0;
  int relinearizations = 0;

  // Wall-clock data; not part of the reproducible report.
  UpdateTiming timing;
};

// Position error above this is treated as divergence.
inline constexpr double kDivergenceThreshold = 1e4;

/// Runs the filter over a simulated world. The initial IMU state is the truth mapped
/// into L, perturbed by a draw from the initial covariance (seeded from the world seed).
RunReport run(const SimWorld& world, const EstimatorConfig& cfg, std::uint64_t config_hash = 0);

// sqrt(mean |est - gt|^2), no alignment. Throws on empty or mismatched input.
double compute_rmse(const std::vector<Vec3>& est, const std::vector<Vec3>& gt);

struct NeesResult {
  std::vector<double> per_step;  // NaN for skipped steps
  double mean = 0.0;
  int skipped = 0;
};
NeesResult compute_nees(const std::vector<Vec3>& err, const std::vector<Mat3>& cov);

std::string report_csv(const RunReport& report);
std::string report_summary_json(const RunReport& report);
// Writes <stem>.csv, <stem>.json and <stem>_timing.json into dir.
void write_report(const RunReport& report, const std::filesystem::path& dir,
                  const std::string& stem);

struct TimingPoint {
  int nuisance_dim = 0;
  double schmidt_ms = 0.0;  // medians
  double ekf_ms = 0.0;
};

struct TimingReport {
  std::vector<TimingPoint> points;
  double schmidt_slope = 0.0;
  double ekf_slope = 0.0;
};

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Median wall time of one Schmidt update and one full-EKF update of the same
/// measurement (`rows` rows touching three keyframes) for each nuisance dimension.
/// The default active state is IMU + one clone + x_t; active_dim = 21 + 6k adds clones.
TimingReport timing_harness(const std::vector<int>& nuisance_dims, int active_dim = 27,
                            int rows = 30, std::uint64_t seed = 7);
std::string timing_json(const TimingReport& report);

}  // namespace csmsckf
