#pragma once

// State, trajectory and kernel error norms.

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kinfer/measures.hpp"
#include "kinfer/model.hpp"

namespace kinfer {

// sqrt(sum_i |z_i|^2 / N_{k_i}); Z holds N blocks of equal size (d or 1).
double s_norm(std::span<const double> Z, const SystemSpec& spec);

// sqrt(|X - X'|_S^2 + |V - V'|_S^2 + |Xi - Xi'|_S^2)
double y_norm_diff(const State& a, const State& b, const SystemSpec& spec);
double y_norm(const State& a, const SystemSpec& spec);

struct TrajError {
  double traj = 0.0;      // max_l |Y - Y'|_Y
  double traj_rel = 0.0;  // traj / max_l |Y|_Y
  double x_rel = 0.0;     // max_l |X - X'|_S / max_l |X|_S
  double v_rel = 0.0;
  double xi_rel = 0.0;
  bool zero_reference = false;  // some reference norm was 0; that ratio holds the absolute value
};

// `truth` is the reference trajectory. Throws ConfigError when the two time
// grids differ.
TrajError traj_error(std::span<const State> truth, std::span<const State> est, const SystemSpec& spec);

struct KernelErrors {
  double E = 0.0;      // sqrt(sum w (dphiE r)^2)
  double A = 0.0;      // sqrt(sum w (dphiA rdot)^2)
  double joint = 0.0;  // sqrt(sum w (dphiE r + dphiA rdot)^2)
  double E_rel = 0.0;
  double A_rel = 0.0;
  double joint_rel = 0.0;
  bool zero_reference = false;
};

// Monte-Carlo norms over the cloud; per-pair squares are summed over (k, k').
// Absent kernels count as zero. Relative errors divide by the same norm of
// the truth. Throws ConfigError on an empty cloud.
KernelErrors kernel_error_EA(const KernelSet& est, const KernelSet& truth, const SampleCloud& cloud);

struct XiErrors {
  double err = 0.0;  // sqrt(sum w (dphiXi xidiff)^2)
  double rel = 0.0;
  bool zero_reference = false;
};

XiErrors kernel_error_xi(const KernelSet& est, const KernelSet& truth, const SampleCloud& cloud);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  int n = 0;
};

Stat summarize(std::span<const double> values);

// Named error values, one row per repetition.
struct ErrorReport {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(const std::vector<std::pair<std::string, double>>& fields);
  std::vector<double> column(const std::string& name) const;
  Stat stat(const std::string& name) const;

  nlohmann::json to_json() const;
  // Header, one row per repetition, then "mean" and "std" rows.
  void write_csv(const std::filesystem::path& file) const;
  void write_json(const std::filesystem::path& file) const;
};

std::vector<std::pair<std::string, double>> fields(const KernelErrors& e);
std::vector<std::pair<std::string, double>> fields(const XiErrors& e);

}  // namespace kinfer
