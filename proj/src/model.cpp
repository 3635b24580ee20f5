#include "kinfer/model.hpp"

#include <cmath>
#include <sstream>

#include "kinfer/common.hpp"

namespace kinfer {

std::string_view channel_name(Channel c) {
  switch (c) {
    case Channel::Energy: return "E";
    case Channel::Alignment: return "A";
    case Channel::Environment: return "xi";
  }
  return "?";
}

Channel channel_from_name(std::string_view name) {
  if (name == "E") return Channel::Energy;
  if (name == "A") return Channel::Alignment;
  if (name == "xi") return Channel::Environment;
  throw ConfigError("unknown channel '" + std::string(name) + "' (expected E, A or xi)");
}

KernelSet::KernelSet(int n_types) : n_types_(n_types) {
  for (auto& t : table_) t.assign(static_cast<std::size_t>(n_types) * n_types, std::nullopt);
}

void KernelSet::set(Channel c, int k, int kp, Kernel kernel) {
  if (k < 0 || kp < 0 || k >= n_types_ || kp >= n_types_)
    throw ConfigError("kernel type pair out of range");
  table_[static_cast<int>(c)][k * n_types_ + kp] = std::move(kernel);
}

void KernelSet::clear(Channel c) {
  for (auto& k : table_[static_cast<int>(c)]) k.reset();
}

const Kernel* KernelSet::get(Channel c, int k, int kp) const {
  const auto& slot = table_[static_cast<int>(c)][k * n_types_ + kp];
  return slot ? &*slot : nullptr;
}

bool KernelSet::has_channel(Channel c) const {
  for (const auto& k : table_[static_cast<int>(c)])
    if (k) return true;
  return false;
}

FeatureMapSet::FeatureMapSet(int n_types) : n_types_(n_types) {
  for (auto& t : table_) t.assign(static_cast<std::size_t>(n_types) * n_types, FeatureMap{});
}

void FeatureMapSet::set(Channel c, int k, int kp, FeatureMap map) {
  if (k < 0 || kp < 0 || k >= n_types_ || kp >= n_types_)
    throw ConfigError("feature map type pair out of range");
  if (map.arity < 0 || map.arity > kMaxFeatures)
    throw ConfigError("feature arity must be in [0, " + std::to_string(kMaxFeatures) + "]");
  table_[static_cast<int>(c)][k * n_types_ + kp] = std::move(map);
}

const FeatureMap& FeatureMapSet::get(Channel c, int k, int kp) const {
  return table_[static_cast<int>(c)][k * n_types_ + kp];
}

void SystemSpec::finalize() {
  if (N <= 0) throw ConfigError("N must be positive");
  if (d <= 0 || d > kMaxDim) throw ConfigError("d must be in [1, " + std::to_string(kMaxDim) + "]");
  if (K <= 0) throw ConfigError("K must be positive");
  if (static_cast<int>(type_of.size()) != N) throw ConfigError("type_of must have N entries");
  if (static_cast<int>(masses.size()) != N) throw ConfigError("masses must have N entries");
  for (double m : masses)
    if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("masses must be strictly positive");
  if (kernels.n_types() != K) throw ConfigError("kernel set built for a different K");

  type_counts.assign(K, 0);
  members.assign(K, {});
  for (int i = 0; i < N; ++i) {
    const int k = type_of[i];
    if (k < 0 || k >= K) throw ConfigError("type_of[" + std::to_string(i) + "] out of range");
    ++type_counts[k];
    members[k].push_back(i);
  }
  for (int k = 0; k < K; ++k)
    if (type_counts[k] == 0) throw ConfigError("type " + std::to_string(k) + " has no agents");

  for (int c = 0; c < kNumChannels; ++c) {
    for (int k = 0; k < K; ++k) {
      for (int kp = 0; kp < K; ++kp) {
        const Kernel* kern = kernels.get(static_cast<Channel>(c), k, kp);
        if (kern && kern->arity != features.arity(static_cast<Channel>(c), k, kp))
          throw ConfigError("kernel arity does not match its feature map for channel " +
                            std::string(channel_name(static_cast<Channel>(c))));
      }
    }
  }
  if (!has_xi && kernels.has_channel(Channel::Environment))
    throw ConfigError("environment kernels supplied for a system without xi");
  if (first_order && kernels.has_channel(Channel::Alignment))
    throw ConfigError("first-order systems cannot carry alignment kernels");
}

AgentRef State::agent(int i, int d) const {
  AgentRef a;
  a.x = std::span<const double>(X).subspan(static_cast<std::size_t>(i) * d, d);
  if (!V.empty()) a.v = std::span<const double>(V).subspan(static_cast<std::size_t>(i) * d, d);
  a.xi = Xi.empty() ? 0.0 : Xi[i];
  return a;
}

State make_state(const SystemSpec& spec) {
  State s;
  s.X.assign(static_cast<std::size_t>(spec.N) * spec.d, 0.0);
  s.V.assign(static_cast<std::size_t>(spec.N) * spec.d, 0.0);
  s.Xi.assign(spec.xi_size(), 0.0);
  return s;
}

void check_state_shape(const SystemSpec& spec, const State& s) {
  const std::size_t nd = static_cast<std::size_t>(spec.N) * spec.d;
  if (s.X.size() != nd || s.V.size() != nd || s.Xi.size() != static_cast<std::size_t>(spec.xi_size()))
    throw ConfigError("state dimensions do not match the system (N=" + std::to_string(spec.N) +
                      ", d=" + std::to_string(spec.d) + ")");
}

PairGeometry pairwise(std::span<const double> X, std::span<const double> V,
                      std::span<const double> Xi, int d, int i, int ip) {
  PairGeometry g;
  double r2 = 0.0, v2 = 0.0;
  for (int a = 0; a < d; ++a) {
    const double dx = X[ip * d + a] - X[i * d + a];
    g.rvec[a] = dx;
    r2 += dx * dx;
    if (!V.empty()) {
      const double dv = V[ip * d + a] - V[i * d + a];
      g.rdotvec[a] = dv;
      v2 += dv * dv;
    }
  }
  g.r = std::sqrt(r2);
  g.rdot = std::sqrt(v2);
  g.xidiff = Xi.empty() ? 0.0 : Xi[ip] - Xi[i];
  return g;
}

PairGeometry pairwise(const State& state, int d, int i, int ip) {
  const int n = static_cast<int>(state.X.size()) / d;
  if (i < 0 || ip < 0 || i >= n || ip >= n)
    throw ConfigError("agent index out of range in pairwise (" + std::to_string(i) + ", " +
                      std::to_string(ip) + ")");
  return pairwise(state.X, state.V, state.Xi, d, i, ip);
}

int eval_features(const SystemSpec& spec, Channel c, int i, int ip, std::span<const double> X,
                  std::span<const double> V, std::span<const double> Xi,
                  std::array<double, kMaxFeatures>& out) {
  const FeatureMap& fm = spec.features.get(c, spec.type_of[i], spec.type_of[ip]);
  if (fm.arity == 0) return 0;
  const std::size_t d = spec.d;
  AgentRef self{X.subspan(i * d, d), V.empty() ? std::span<const double>{} : V.subspan(i * d, d),
                Xi.empty() ? 0.0 : Xi[i]};
  AgentRef other{X.subspan(ip * d, d), V.empty() ? std::span<const double>{} : V.subspan(ip * d, d),
                 Xi.empty() ? 0.0 : Xi[ip]};
  fm.fn(self, other, std::span<double>(out.data(), fm.arity));
  return fm.arity;
}

namespace {

[[noreturn]] void report_nonfinite(Channel c, int i, int ip, double value) {
  std::ostringstream os;
  os << "non-finite " << channel_name(c) << " kernel value " << value << " at pair (" << i << ", "
     << ip << ")";
  throw NumericalError(os.str());
}

}  // namespace

void rhs_into(const SystemSpec& spec, std::span<const double> X, std::span<const double> V,
              std::span<const double> Xi, std::span<double> accel, std::span<double> xidot) {
  const int N = spec.N;
  const int d = spec.d;
  const bool first_order = spec.first_order;
  std::span<const double> Vin = first_order ? std::span<const double>{} : V;
  std::array<double, kMaxDim> zeros{};

  std::array<double, kMaxDim> force{};
  std::array<double, kMaxFeatures> feat{};

  for (int i = 0; i < N; ++i) {
    const int k = spec.type_of[i];
    AgentRef self{X.subspan(static_cast<std::size_t>(i) * d, d),
                  first_order ? std::span<const double>(zeros.data(), d)
                              : V.subspan(static_cast<std::size_t>(i) * d, d),
                  spec.has_xi ? Xi[i] : 0.0};

    double* acc = accel.data() + static_cast<std::size_t>(i) * d;
    for (int a = 0; a < d; ++a) acc[a] = 0.0;
    if (spec.force_x) {
      spec.force_x(self, std::span<double>(force.data(), d));
      for (int a = 0; a < d; ++a) acc[a] = force[a];
    }
    double xi_acc = 0.0;
    if (spec.has_xi && spec.force_xi) xi_acc = spec.force_xi(self);

    for (int ip = 0; ip < N; ++ip) {
      if (ip == i) continue;
      const int kp = spec.type_of[ip];
      const double w = 1.0 / spec.type_counts[kp];
      const PairGeometry g = pairwise(X, Vin, spec.has_xi ? Xi : std::span<const double>{}, d, i, ip);

      if (const Kernel* kE = spec.kernels.get(Channel::Energy, k, kp)) {
        const int p = eval_features(spec, Channel::Energy, i, ip, X, Vin, Xi, feat);
        const double phi = (*kE)(g.r, std::span<const double>(feat.data(), p));
        if (!std::isfinite(phi)) report_nonfinite(Channel::Energy, i, ip, phi);
        for (int a = 0; a < d; ++a) acc[a] += w * phi * g.rvec[a];
      }
      if (!first_order) {
        if (const Kernel* kA = spec.kernels.get(Channel::Alignment, k, kp)) {
          const int p = eval_features(spec, Channel::Alignment, i, ip, X, Vin, Xi, feat);
          const double phi = (*kA)(g.r, std::span<const double>(feat.data(), p));
          if (!std::isfinite(phi)) report_nonfinite(Channel::Alignment, i, ip, phi);
          for (int a = 0; a < d; ++a) acc[a] += w * phi * g.rdotvec[a];
        }
      }
      if (spec.has_xi) {
        if (const Kernel* kX = spec.kernels.get(Channel::Environment, k, kp)) {
          const int p = eval_features(spec, Channel::Environment, i, ip, X, Vin, Xi, feat);
          const double phi = (*kX)(g.r, std::span<const double>(feat.data(), p));
          if (!std::isfinite(phi)) report_nonfinite(Channel::Environment, i, ip, phi);
          xi_acc += w * phi * g.xidiff;
        }
      }
    }

    const double inv_m = 1.0 / spec.masses[i];
    for (int a = 0; a < d; ++a) acc[a] *= inv_m;
    if (spec.has_xi) xidot[i] = xi_acc;
  }
}

Derivs rhs(const SystemSpec& spec, const State& state) {
  check_state_shape(spec, state);
  Derivs out;
  out.accel.assign(state.X.size(), 0.0);
  out.xidot.assign(spec.xi_size(), 0.0);
  rhs_into(spec, state.X, state.V, state.Xi, out.accel, out.xidot);
  return out;
}

}  // namespace kinfer
