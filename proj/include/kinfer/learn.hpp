#pragma once

// Least-squares regression of interaction kernels.
//
// For the EA system each observation (m, l, i) contributes d rows
//   Psi[(l,i,a), j] = 1/sqrt(N_{k_i}) sum_{i' != i} 1/N_{k_i'} psi_j(r, s) w_a
// with w = x_i' - x_i for E columns and v_i' - v_i for A columns, and target
//   y[(l,i,a)] = 1/sqrt(N_{k_i}) (m_i accel_i - F^x_i)_a.
// A = sum Psi^T Psi / (L M), b = sum Psi^T y / (L M), c = sum |y|^2 / (L M),
// so the empirical loss of alpha is alpha^T A alpha - 2 alpha^T b + c.
// The xi system is the same with one row per (m, l, i), weight xi_i' - xi_i and
// target xidot_i - F^xi_i.

#include <filesystem>
#include <optional>

#include <Eigen/Dense>

#include "kinfer/hypothesis.hpp"
#include "kinfer/measures.hpp"
#include "kinfer/simulate.hpp"

namespace kinfer {

// accel(t_l) = (v(t_{l+1}) - v(t_l)) / h, backward at the last time; xidot
// from xi the same way. First-order datasets difference positions instead.
// Throws ConfigError when L < 2.
TrajectoryDataset finite_difference_derivs(const TrajectoryDataset& ds);

enum class SystemTag { EA, Xi };

struct NormalEquations {
  SystemTag tag = SystemTag::EA;
  std::size_t n = 0;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double c = 0.0;
  long long count = 0;          // M * L
  long long outside = 0;        // pair samples that fell outside an active block's box
};

// Throws ConfigError on shape mismatches between dataset, system and space and
// NumericalError on non-finite feature values or observations.
NormalEquations assemble_EA(const TrajectoryDataset& ds, const SystemSpec& spec, const HypothesisSpace& space,
                            unsigned threads = 1);
NormalEquations assemble_xi(const TrajectoryDataset& ds, const SystemSpec& spec, const HypothesisSpace& space,
                            unsigned threads = 1);

struct SolveResult {
  Eigen::VectorXd alpha;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  int rank = 0;
};

// Minimum-norm least-squares solution from the SVD of A, discarding singular
// values below tol_rel * sigma_max. Throws ConfigError for n == 0 or
// tol_rel outside (0, 1).
SolveResult solve(const NormalEquations& ne, double tol_rel = 1e-10);

double quadratic_loss(const NormalEquations& ne, const Eigen::VectorXd& alpha);

// Loss computed directly from the residuals of the kernels `est`, without
// the normal equations.
double empirical_loss_EA(const TrajectoryDataset& ds, const SystemSpec& spec, const KernelSet& est);
double empirical_loss_xi(const TrajectoryDataset& ds, const SystemSpec& spec, const KernelSet& est);

struct LearnConfig {
  SpaceConfig space;
  double tol_rel = 1e-10;
  unsigned threads = 1;
  std::optional<RangeEstimate> ranges;  // supports; default: the dataset's own ranges
};

struct LearnResult {
  EstimatedKernels kernels;
  RangeEstimate ranges;
  std::optional<NormalEquations> ne_EA;
  std::optional<NormalEquations> ne_xi;
  std::optional<SolveResult> solve_EA;
  std::optional<SolveResult> solve_xi;
  double loss_EA = 0.0;
  double loss_xi = 0.0;
};

// ranges -> space -> assemble -> solve for every channel with blocks.
LearnResult learn_kernels(const TrajectoryDataset& ds, const SystemSpec& spec, const LearnConfig& cfg);

// Header row then A as rows followed by a final row holding b.
void write_normal_equations_csv(const std::filesystem::path& file, const NormalEquations& ne);

}  // namespace kinfer
