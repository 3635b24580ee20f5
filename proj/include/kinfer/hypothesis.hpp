#pragma once

// Tensor-grid discontinuous piecewise polynomials, one block per
// (channel, k, k'). On each axis a cell carries the shifted monomials
// 1, u, u^2 (u in [0, 1] the cell-local coordinate); the 1-D index is
// cell * (degree + 1) + power and block-local indices are row-major over
// the axes (r first, then the channel's feature axes).
//
// Global order: E blocks, then A blocks, each by (k, k') lexicographically,
// form the EA coefficient vector; xi blocks form a separate vector.

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kinfer/measures.hpp"
#include "kinfer/model.hpp"

namespace kinfer {

inline constexpr int kMaxDegree = 2;
inline constexpr int kMaxAxes = 1 + kMaxFeatures;
inline constexpr int kMaxLocal = 81;  // (kMaxDegree + 1)^kMaxAxes

struct AxisGrid {
  double lo = 0.0;
  double hi = 0.0;
  int cells = 1;
  int degree = 0;

  int dim() const { return cells * (degree + 1); }
};

struct SpaceBlock {
  Channel channel = Channel::Energy;
  int k = 0;
  int kp = 0;
  std::vector<AxisGrid> axes;
  std::size_t offset = 0;  // into the EA vector (E, A) or the xi vector
  std::size_t dim = 0;

  int arity() const { return static_cast<int>(axes.size()) - 1; }
  std::size_t cell_count() const;
};

struct HypothesisSpace {
  int K = 0;
  std::vector<SpaceBlock> blocks;
  std::size_t n_EA = 0;
  std::size_t n_xi = 0;

  const SpaceBlock* find(Channel c, int k, int kp) const;
  std::size_t size_of(Channel c) const { return c == Channel::Environment ? n_xi : n_EA; }
  bool has(Channel c) const;
};

struct ChannelConfig {
  // Unset: learn the channel for the pairs where the system has a kernel.
  std::optional<bool> enabled;
  std::vector<int> cells{16};  // one value for all axes or one per axis
  std::vector<int> degree{1};
  // Optional fixed box per axis (r first); axes beyond the list use the
  // empirical range.
  std::vector<std::pair<double, double>> box;
};

struct SpaceConfig {
  std::array<ChannelConfig, kNumChannels> channel;

  ChannelConfig& operator[](Channel c) { return channel[static_cast<int>(c)]; }
  const ChannelConfig& operator[](Channel c) const { return channel[static_cast<int>(c)]; }
};

nlohmann::json space_config_to_json(const SpaceConfig& cfg);
SpaceConfig space_config_from_json(const nlohmann::json& j);

// Builds uniform grids over each pair's box. Pairs without samples and
// without a fixed box are skipped. Throws ConfigError for cells < 1, degree
// outside [0, 2], an inverted box, or a zero-width axis with cells > 1.
HypothesisSpace build_space(const SystemSpec& spec, const RangeEstimate& ranges, const SpaceConfig& cfg);

// Direct construction from explicit blocks; offsets and sizes are assigned here.
HypothesisSpace make_space(int K, std::vector<SpaceBlock> blocks);

struct BasisValues {
  int count = 0;
  std::array<std::size_t, kMaxLocal> index{};  // global index (offset applied)
  std::array<double, kMaxLocal> value{};
};

// Nonzero basis values at (r, s). Empty when the point lies outside the box.
// Optionally reports the containing tensor cell.
void eval_basis(const SpaceBlock& b, double r, std::span<const double> s, BasisValues& out,
                std::size_t* cell = nullptr);

// sum alpha_j psi_j(r, s) over the block. alpha is the full vector of the
// block's system (EA or xi). Throws ConfigError on a size mismatch.
double reconstruct(const HypothesisSpace& space, std::span<const double> alpha, Channel c, int k, int kp,
                   double r, std::span<const double> s);

struct Reconstruction {
  double value = 0.0;
  bool inside = false;
  bool empty_cell = false;  // the containing cell held no training data
};

struct EstimatedKernels {
  HypothesisSpace space;
  std::vector<double> alpha_EA;
  std::vector<double> alpha_xi;
  // Per block: 1 when the tensor cell received training data. Empty means unknown.
  std::vector<std::vector<char>> occupied;
  nlohmann::json system = nlohmann::json::object();
  nlohmann::json report = nlohmann::json::object();

  Reconstruction evaluate(Channel c, int k, int kp, double r, std::span<const double> s) const;

  // Kernels that evaluate the estimate; zero outside each block's box.
  KernelSet to_kernel_set() const;
};

nlohmann::json kernels_to_json(const EstimatedKernels& est);
EstimatedKernels kernels_from_json(const nlohmann::json& j);
void save_kernels(const std::filesystem::path& file, const EstimatedKernels& est);
EstimatedKernels load_kernels(const std::filesystem::path& file);

}  // namespace kinfer
