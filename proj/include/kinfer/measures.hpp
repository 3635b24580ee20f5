#pragma once

// Empirical pairwise-sample measures of a trajectory dataset: ranges used to
// place hypothesis supports, the weighted sample cloud, and histograms.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinfer/model.hpp"
#include "kinfer/simulate.hpp"

namespace kinfer {

// Everything a kernel or norm needs about one ordered pair (i, ip) at one time.
struct PairObservation {
  int k = 0;
  int kp = 0;
  PairGeometry g;
  std::array<std::array<double, kMaxFeatures>, kNumChannels> s{};
  std::array<int, kNumChannels> arity{};
};

// Fills `out` for agents (i, ip) of `state`. In first-order mode velocities
// are not fed to feature maps (they see an empty velocity span), matching rhs.
void observe_pair(const SystemSpec& spec, const State& state, int i, int ip, PairObservation& out);

struct PairRange {
  long long count = 0;  // ordered samples seen
  double r_min = 0.0, r_max = 0.0;
  double rdot_min = 0.0, rdot_max = 0.0;
  double xidiff_min = 0.0, xidiff_max = 0.0;
  std::array<std::vector<double>, kNumChannels> feat_min;
  std::array<std::vector<double>, kNumChannels> feat_max;

  void add(const PairObservation& o);
  void merge(const PairRange& other);
};

struct RangeEstimate {
  int K = 0;
  std::vector<PairRange> pairs;  // index k * K + kp
  double R_xdot = 0.0;           // max |v_i' - v_i|
  double R_xi = 0.0;             // max |xi_i' - xi_i|

  const PairRange& pair(int k, int kp) const { return pairs[static_cast<std::size_t>(k * K + kp)]; }
  // Componentwise union of two estimates over the same K.
  void merge(const RangeEstimate& other);
};

// Exact min/max over all (m, l, i, i'), i != i', per type pair.
RangeEstimate estimate_ranges(const TrajectoryDataset& ds, const SystemSpec& spec, unsigned threads = 1);

nlohmann::json ranges_to_json(const RangeEstimate& r);

// Raw samples of one type pair. k == kp uses unordered pairs {i, i'};
// k != kp uses all i in C_k, i' in C_kp. Every sample has weight
// 1 / (M L N_kk') so the pair's total mass is 1.
struct PairCloud {
  int k = 0;
  int kp = 0;
  double weight = 0.0;
  std::array<int, kNumChannels> arity{};
  std::vector<double> r;
  std::vector<double> rdot;
  std::vector<double> xidiff;
  std::array<std::vector<double>, kNumChannels> s;  // row-major, arity per sample

  std::size_t size() const { return r.size(); }
  std::span<const double> features(Channel c, std::size_t j) const {
    const int p = arity[static_cast<int>(c)];
    return std::span<const double>(s[static_cast<int>(c)]).subspan(j * p, p);
  }
  void push(const PairObservation& o);
};

struct SampleCloud {
  int K = 0;
  std::vector<PairCloud> pairs;  // index k * K + kp

  const PairCloud& pair(int k, int kp) const { return pairs[static_cast<std::size_t>(k * K + kp)]; }
  std::size_t total_samples() const;
};

SampleCloud sample_cloud(const TrajectoryDataset& ds, const SystemSpec& spec, unsigned threads = 1);

enum class MeasureKind { E, A, EA, Xi };
std::string_view measure_kind_name(MeasureKind kind);
MeasureKind measure_kind_from_name(std::string_view name);

// Axis names for a measure of the given kind on one pair:
//   E   r, sE...
//   A   r, rdot, sA...
//   EA  r, sE..., rdot, sA...
//   Xi  r, xidiff, sXi...
std::vector<std::string> measure_axes(MeasureKind kind, const std::array<int, kNumChannels>& arity);

// Uniform-bin histogram. Masses are row-major with the first axis slowest.
struct Histogram {
  int k = 0;
  int kp = 0;
  std::vector<std::string> axes;
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<int> bins;
  std::vector<double> mass;

  double total() const;
  bool same_grid(const Histogram& other) const;
};

struct EmpiricalMeasure {
  MeasureKind kind = MeasureKind::E;
  int K = 0;
  std::vector<Histogram> pairs;  // index k * K + kp

  const Histogram& pair(int k, int kp) const { return pairs[static_cast<std::size_t>(k * K + kp)]; }
};

// Bins each pair's cloud over its range box. `bins` holds one count for all
// axes or one per axis; degenerate axes (lo == hi) collapse to one bin.
// A sample on an interior bin edge goes to the upper bin; the global maximum
// closes the last bin. Throws ConfigError for bins < 1.
EmpiricalMeasure empirical_measure(const SampleCloud& cloud, const RangeEstimate& ranges,
                                   MeasureKind kind, const std::vector<int>& bins);

EmpiricalMeasure empirical_measure(const TrajectoryDataset& ds, const SystemSpec& spec,
                                   MeasureKind kind, const std::vector<int>& bins, unsigned threads = 1);

// Sums out every axis not listed in `keep` (indices into h.axes, ascending).
Histogram marginal(const Histogram& h, const std::vector<int>& keep);

// Total variation distance 1/2 sum |a - b|. Throws ConfigError on grid mismatch.
double measure_distance(const Histogram& a, const Histogram& b);
double measure_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);  // max over pairs

// One row per nonempty-grid bin: k, kp, per-axis lo/hi edges, mass.
void write_histogram_csv(const std::filesystem::path& file, const EmpiricalMeasure& m);

}  // namespace kinfer
