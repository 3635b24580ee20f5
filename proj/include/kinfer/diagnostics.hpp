#pragma once

// Identifiability and convergence probes built on the learning pipeline.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinfer/learn.hpp"
#include "kinfer/metrics.hpp"

namespace kinfer {

struct Coercivity {
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double condition = 0.0;  // inf when sigma_min == 0
};

Coercivity coercivity_probe(const NormalEquations& ne);
Coercivity coercivity_probe(const Eigen::MatrixXd& A);

struct RateStudyConfig {
  InitialDistribution dist;
  int L = 50;
  double T = 5.0;
  Tolerances tol;
  SpaceConfig space;           // cells are overwritten by the schedule
  std::vector<int> Ms;
  int reps = 5;
  double s = 2.0;              // smoothness index of the truth
  int V = 1;                   // dimension of the kernel domain |V|
  double cells_scale = 20.0;   // c in cells = floor(c (M / log M)^(1 / (2s + |V|)))
  double tol_rel = 1e-10;
  unsigned threads = 1;
};

struct RatePoint {
  int M = 0;
  int cells = 0;
  double mean_err2 = 0.0;
  double std_err2 = 0.0;
  std::vector<double> err2;
};

struct RateFit {
  std::vector<RatePoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  double theory_slope = 0.0;  // -2s / (2s + |V|)
  double s = 2.0;
  int V = 1;
  bool exact_regime = false;  // every error below 1e-14; the fit is skipped (slope 0)
};

// floor(c (M / log M)^(1 / (2s + |V|))), at least 1.
int schedule_cells(int M, double s, int V, double c);

// For each M and repetition, learns from a fresh dataset (substream
// "rate/<M>/<rep>" of dist.seed) on the fixed supports `box`, and records the
// squared joint EA error (plus the squared xi error when learned) on
// `eval_cloud`. Fits log(mean err^2) against log(M / log M). Throws
// ConfigError when Ms has fewer than 4 increasing values spanning 2 octaves
// or reps < 3; learning failures are rethrown naming M and the repetition.
RateFit rate_study(const SystemSpec& spec, const RateStudyConfig& cfg, const SampleCloud& eval_cloud,
                   const RangeEstimate& box);

nlohmann::json rate_to_json(const RateFit& fit);
void write_rate_csv(const std::filesystem::path& file, const RateFit& fit);
// x = log(M / log M), y = log(mean err^2), yerr, and the fitted line.
void write_rate_plotdata(const std::filesystem::path& file, const RateFit& fit);

struct PredictionConfig {
  int L = 50;       // observations on [0, T]; the grid continues to T_f at the same spacing
  double T = 5.0;
  double T_f = 10.0;
  Tolerances tol;
  unsigned threads = 1;
};

struct PredictionResult {
  ErrorReport report;  // one row per successful initial condition
  int failures = 0;
  std::vector<std::string> failure_messages;
  std::vector<double> times;
};

// Observation grid on [0, T_f] whose first L points are the grid on [0, T].
std::vector<double> prediction_grid(const PredictionConfig& cfg);

// Integrates the true system and the system with kernels replaced by `est`
// from identical initial conditions. Reports trajectory errors over [0, T]
// (suffix _T) and [T, T_f] (suffix _Tf). Integration failures under the
// estimated kernels are counted and excluded.
PredictionResult trajectory_prediction_eval(const SystemSpec& truth, const KernelSet& est,
                                            const std::vector<State>& ics, const PredictionConfig& cfg);

}  // namespace kinfer
