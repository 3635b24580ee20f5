#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kinfer/integrator.hpp"
#include "kinfer/model.hpp"

namespace kinfer {

// Sampler for one state component. lo/hi (uniform) or mean/scale (gaussian)
// hold either one value broadcast to every coordinate or one value per
// coordinate of an agent.
struct ComponentSampler {
  enum class Kind { Uniform, Gaussian };
  Kind kind = Kind::Uniform;
  std::vector<double> lo{0.0};
  std::vector<double> hi{0.0};
  std::vector<double> mean{0.0};
  std::vector<double> scale{1.0};

  static ComponentSampler uniform(double lo, double hi);
  static ComponentSampler gaussian(double mean, double scale);
};

struct InitialDistribution {
  ComponentSampler x;
  ComponentSampler v;
  ComponentSampler xi;
  std::uint64_t seed = 0;
};

nlohmann::json distribution_to_json(const InitialDistribution& dist);
InitialDistribution distribution_from_json(const nlohmann::json& j);

// Draw m uses the substream (seed, purpose, m), so draws do not depend on M
// or on worker scheduling. Throws ConfigError for malformed samplers.
std::vector<State> sample_initial_conditions(const InitialDistribution& dist, const SystemSpec& spec,
                                             int M, std::string_view purpose = "ic");

enum class DerivSource { Observed, FiniteDifference };
std::string_view deriv_source_name(DerivSource s);
DerivSource deriv_source_from_name(std::string_view name);

struct Trajectory {
  std::vector<State> states;
  std::vector<Derivs> derivs;
};

// L equispaced times on [0, T]; L == 1 gives {0}.
std::vector<double> make_time_grid(int L, double T);

// Integrates one trajectory through `times` (times[0] is the initial time of
// y0). Derivatives at each time come from the right-hand side evaluated on
// the integrated state. The maximum step is half the observation spacing.
Trajectory integrate(const SystemSpec& spec, const State& y0, std::span<const double> times,
                     const Tolerances& tol);

struct TrajectoryDataset {
  int N = 0;
  int d = 0;
  int K = 0;
  bool has_xi = false;
  bool first_order = false;
  std::vector<double> times;
  std::vector<Trajectory> trajectories;
  DerivSource source = DerivSource::Observed;

  nlohmann::json system = nlohmann::json::object();  // spec_to_json of the generator
  std::uint64_t seed = 0;
  Tolerances tol;

  int M() const { return static_cast<int>(trajectories.size()); }
  int L() const { return static_cast<int>(times.size()); }
  double T() const { return times.empty() ? 0.0 : times.back(); }

  // Throws ConfigError when the time grid or state shapes are inconsistent.
  void validate() const;
};

// Samples M initial conditions and integrates each on [0, T] at L times.
// Trajectories run on up to `threads` workers; the result does not depend on
// the worker count. Integration failures are rethrown with the trajectory index.
TrajectoryDataset generate_dataset(const SystemSpec& spec, const InitialDistribution& dist, int M,
                                   int L, double T, const Tolerances& tol, unsigned threads = 1,
                                   std::string_view purpose = "ic");

// Integrates from the given initial states.
TrajectoryDataset integrate_all(const SystemSpec& spec, const std::vector<State>& ics,
                                std::span<const double> times, const Tolerances& tol,
                                unsigned threads = 1);

// Concatenates two datasets over the same grid and system shape.
TrajectoryDataset concatenate(const TrajectoryDataset& a, const TrajectoryDataset& b);

}  // namespace kinfer
