#pragma once

// Heterogeneous second-order interacting agent systems:
//
//   m_i x_i'' = F^x(x_i, v_i, xi_i)
//             + sum_{i' != i} 1/N_{k_i'} [ phiE_{k_i k_i'}(r, sE) (x_i' - x_i)
//                                        + phiA_{k_i k_i'}(r, sA) (v_i' - v_i) ]
//   xi_i'    = F^xi(x_i, v_i, xi_i)
//             + sum_{i' != i} 1/N_{k_i'} phiXi_{k_i k_i'}(r, sXi) (xi_i' - xi_i)
//
// Types are 0-based in code (k in [0, K)).

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace kinfer {

enum class Channel { Energy = 0, Alignment = 1, Environment = 2 };
inline constexpr int kNumChannels = 3;

std::string_view channel_name(Channel c);
Channel channel_from_name(std::string_view name);

inline constexpr int kMaxDim = 3;
inline constexpr int kMaxFeatures = 3;

struct AgentRef {
  std::span<const double> x;
  std::span<const double> v;
  double xi = 0.0;
};

using KernelFn = std::function<double(double r, std::span<const double> s)>;

// Scalar interaction kernel phi(r, s) with a declared r-support; evaluates to
// zero outside [r_min, r_max].
struct Kernel {
  KernelFn fn;
  int arity = 0;
  double r_min = 0.0;
  double r_max = std::numeric_limits<double>::infinity();

  double operator()(double r, std::span<const double> s) const {
    if (r < r_min || r > r_max) return 0.0;
    return fn(r, s);
  }
};

using FeatureFn = std::function<void(const AgentRef& self, const AgentRef& other, std::span<double> out)>;

struct FeatureMap {
  int arity = 0;
  FeatureFn fn;
};

// Kernels per (channel, k, k'). An absent kernel means the channel is
// identically zero for that pair and is not part of the learning problem.
class KernelSet {
 public:
  KernelSet() = default;
  explicit KernelSet(int n_types);

  int n_types() const { return n_types_; }
  void set(Channel c, int k, int kp, Kernel kernel);
  void clear(Channel c);
  const Kernel* get(Channel c, int k, int kp) const;
  bool has_channel(Channel c) const;

 private:
  int n_types_ = 0;
  std::array<std::vector<std::optional<Kernel>>, kNumChannels> table_;
};

class FeatureMapSet {
 public:
  FeatureMapSet() = default;
  explicit FeatureMapSet(int n_types);

  void set(Channel c, int k, int kp, FeatureMap map);
  const FeatureMap& get(Channel c, int k, int kp) const;
  int arity(Channel c, int k, int kp) const { return get(c, k, kp).arity; }

 private:
  int n_types_ = 0;
  std::array<std::vector<FeatureMap>, kNumChannels> table_;
};

using NoncollectiveX = std::function<void(const AgentRef& agent, std::span<double> out)>;
using NoncollectiveXi = std::function<double(const AgentRef& agent)>;

struct SystemSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();

  int N = 0;
  int d = 0;
  int K = 1;
  std::vector<int> type_of;
  std::vector<double> masses;  // damping coefficients nu_i when first_order

  KernelSet kernels;
  FeatureMapSet features;
  NoncollectiveX force_x;    // empty: zero force
  NoncollectiveXi force_xi;  // empty: zero force
  bool has_xi = false;
  bool first_order = false;

  // Derived by finalize().
  std::vector<int> type_counts;
  std::vector<std::vector<int>> members;

  // Validates invariants and fills the derived fields. Throws ConfigError.
  void finalize();

  int type_count_of_agent(int i) const { return type_counts[type_of[i]]; }
  int xi_size() const { return has_xi ? N : 0; }
};

struct State {
  double t = 0.0;
  std::vector<double> X;
  std::vector<double> V;
  std::vector<double> Xi;

  AgentRef agent(int i, int d) const;
};

// Zero state shaped for the spec.
State make_state(const SystemSpec& spec);

void check_state_shape(const SystemSpec& spec, const State& s);

struct Derivs {
  std::vector<double> accel;  // x'' (or x' in first-order mode)
  std::vector<double> xidot;
};

struct PairGeometry {
  double r = 0.0;
  std::array<double, kMaxDim> rvec{};
  std::array<double, kMaxDim> rdotvec{};
  double rdot = 0.0;
  double xidiff = 0.0;
};

// Differences agent ip minus agent i. Throws ConfigError on invalid indices.
PairGeometry pairwise(const State& state, int d, int i, int ip);

// Same, on raw stacked arrays (Xi may be empty).
PairGeometry pairwise(std::span<const double> X, std::span<const double> V,
                      std::span<const double> Xi, int d, int i, int ip);

// Right-hand side of the system. Throws NumericalError on a non-finite kernel
// value, naming the pair and channel.
Derivs rhs(const SystemSpec& spec, const State& state);

// Allocation-free variant used by the integrator. V is ignored in first-order
// mode (agents are treated as having zero velocity in feature/force inputs).
void rhs_into(const SystemSpec& spec, std::span<const double> X, std::span<const double> V,
              std::span<const double> Xi, std::span<double> accel, std::span<double> xidot);

// Reads the d-dim vectors and evaluates a feature map for the ordered pair (i, ip).
int eval_features(const SystemSpec& spec, Channel c, int i, int ip, std::span<const double> X,
                  std::span<const double> V, std::span<const double> Xi,
                  std::array<double, kMaxFeatures>& out);

}  // namespace kinfer
