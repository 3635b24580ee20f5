#include "kinfer/simulate.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "kinfer/common.hpp"
#include "kinfer/zoo.hpp"

namespace kinfer {

ComponentSampler ComponentSampler::uniform(double lo, double hi) {
  ComponentSampler s;
  s.kind = Kind::Uniform;
  s.lo = {lo};
  s.hi = {hi};
  return s;
}

ComponentSampler ComponentSampler::gaussian(double mean, double scale) {
  ComponentSampler s;
  s.kind = Kind::Gaussian;
  s.mean = {mean};
  s.scale = {scale};
  return s;
}

namespace {

nlohmann::json sampler_to_json(const ComponentSampler& s) {
  if (s.kind == ComponentSampler::Kind::Uniform)
    return {{"kind", "uniform"}, {"lo", s.lo}, {"hi", s.hi}};
  return {{"kind", "gaussian"}, {"mean", s.mean}, {"scale", s.scale}};
}

std::vector<double> number_or_list(const nlohmann::json& j) {
  if (j.is_number()) return {j.get<double>()};
  return j.get<std::vector<double>>();
}

ComponentSampler sampler_from_json(const nlohmann::json& j) {
  ComponentSampler s;
  const std::string kind = j.value("kind", "uniform");
  if (kind == "uniform") {
    s.kind = ComponentSampler::Kind::Uniform;
    s.lo = number_or_list(j.at("lo"));
    s.hi = number_or_list(j.at("hi"));
  } else if (kind == "gaussian") {
    s.kind = ComponentSampler::Kind::Gaussian;
    s.mean = number_or_list(j.at("mean"));
    s.scale = number_or_list(j.at("scale"));
  } else {
    throw ConfigError("unknown sampler kind '" + kind + "'");
  }
  return s;
}

double pick(const std::vector<double>& v, int coord) {
  return v.size() == 1 ? v[0] : v[static_cast<std::size_t>(coord)];
}

void check_sampler(const ComponentSampler& s, int width, const char* what) {
  auto check_size = [&](const std::vector<double>& v) {
    if (v.size() != 1 && static_cast<int>(v.size()) != width)
      throw ConfigError(std::string(what) + " sampler needs 1 or " + std::to_string(width) + " values");
  };
  if (s.kind == ComponentSampler::Kind::Uniform) {
    check_size(s.lo);
    check_size(s.hi);
    for (int c = 0; c < width; ++c)
      if (!(pick(s.lo, c) <= pick(s.hi, c)))
        throw ConfigError(std::string(what) + " sampler box has lo > hi");
  } else {
    check_size(s.mean);
    check_size(s.scale);
    for (int c = 0; c < width; ++c)
      if (!(pick(s.scale, c) >= 0.0)) throw ConfigError(std::string(what) + " sampler scale must be >= 0");
  }
}

void draw(const ComponentSampler& s, int width, std::mt19937_64& rng, std::vector<double>& out) {
  const std::size_t agents = out.size() / static_cast<std::size_t>(width);
  for (std::size_t i = 0; i < agents; ++i) {
    for (int c = 0; c < width; ++c) {
      double value;
      if (s.kind == ComponentSampler::Kind::Uniform) {
        const double lo = pick(s.lo, c), hi = pick(s.hi, c);
        value = lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
      } else {
        value = pick(s.mean, c) + pick(s.scale, c) * std::normal_distribution<double>(0.0, 1.0)(rng);
      }
      out[i * width + c] = value;
    }
  }
}

}  // namespace

nlohmann::json distribution_to_json(const InitialDistribution& dist) {
  return {{"x", sampler_to_json(dist.x)},
          {"v", sampler_to_json(dist.v)},
          {"xi", sampler_to_json(dist.xi)},
          {"seed", dist.seed}};
}

InitialDistribution distribution_from_json(const nlohmann::json& j) {
  try {
    InitialDistribution d;
    if (j.contains("x")) d.x = sampler_from_json(j.at("x"));
    if (j.contains("v")) d.v = sampler_from_json(j.at("v"));
    if (j.contains("xi")) d.xi = sampler_from_json(j.at("xi"));
    d.seed = j.value("seed", std::uint64_t{0});
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed initial distribution: ") + e.what());
  }
}

std::vector<State> sample_initial_conditions(const InitialDistribution& dist, const SystemSpec& spec,
                                             int M, std::string_view purpose) {
  if (M < 1) throw ConfigError("need at least one initial condition (M >= 1)");
  check_sampler(dist.x, spec.d, "position");
  check_sampler(dist.v, spec.d, "velocity");
  if (spec.has_xi) check_sampler(dist.xi, 1, "xi");

  std::vector<State> out;
  out.reserve(M);
  for (int m = 0; m < M; ++m) {
    std::mt19937_64 rng(substream_seed(dist.seed, purpose, static_cast<std::uint64_t>(m)));
    State s = make_state(spec);
    draw(dist.x, spec.d, rng, s.X);
    if (!spec.first_order) draw(dist.v, spec.d, rng, s.V);
    if (spec.has_xi) draw(dist.xi, 1, rng, s.Xi);
    out.push_back(std::move(s));
  }
  return out;
}

std::string_view deriv_source_name(DerivSource s) {
  return s == DerivSource::Observed ? "observed" : "finite_difference";
}

DerivSource deriv_source_from_name(std::string_view name) {
  if (name == "observed") return DerivSource::Observed;
  if (name == "finite_difference") return DerivSource::FiniteDifference;
  throw ConfigError("unknown derivative source '" + std::string(name) + "'");
}

std::vector<double> make_time_grid(int L, double T) {
  if (L < 1) throw ConfigError("L must be >= 1");
  if (L == 1) return {0.0};
  if (!(T > 0.0)) throw ConfigError("T must be positive when L > 1");
  std::vector<double> t(L);
  const double h = T / (L - 1);
  for (int l = 0; l < L; ++l) t[l] = l * h;
  t.back() = T;
  return t;
}

Trajectory integrate(const SystemSpec& spec, const State& y0, std::span<const double> times,
                     const Tolerances& tol) {
  check_state_shape(spec, y0);
  const std::size_t nd = static_cast<std::size_t>(spec.N) * spec.d;
  const std::size_t nxi = spec.xi_size();
  const bool first = spec.first_order;
  const std::size_t nv = first ? 0 : nd;
  const std::size_t n = nd + nv + nxi;

  std::vector<double> y(n);
  std::copy(y0.X.begin(), y0.X.end(), y.begin());
  if (!first) std::copy(y0.V.begin(), y0.V.end(), y.begin() + nd);
  std::copy(y0.Xi.begin(), y0.Xi.end(), y.begin() + nd + nv);

  OdeRhs f = [&](double, std::span<const double> yy, std::span<double> dy) {
    auto X = yy.subspan(0, nd);
    auto V = first ? std::span<const double>{} : yy.subspan(nd, nv);
    auto Xi = yy.subspan(nd + nv, nxi);
    if (first) {
      rhs_into(spec, X, V, Xi, dy.subspan(0, nd), dy.subspan(nd, nxi));
    } else {
      std::copy(V.begin(), V.end(), dy.begin());
      rhs_into(spec, X, V, Xi, dy.subspan(nd, nd), dy.subspan(2 * nd, nxi));
    }
  };

  double max_step = 0.0;
  if (times.size() >= 2) max_step = 0.5 * std::abs(times[1] - times[0]);

  std::vector<std::vector<double>> ys;
  integrate_dense(f, y, times, tol, max_step, ys);

  Trajectory traj;
  traj.states.reserve(times.size());
  traj.derivs.reserve(times.size());
  for (std::size_t l = 0; l < times.size(); ++l) {
    const auto& yl = ys[l];
    State s;
    s.t = times[l];
    s.X.assign(yl.begin(), yl.begin() + nd);
    s.Xi.assign(yl.begin() + nd + nv, yl.end());
    Derivs dv;
    dv.accel.assign(nd, 0.0);
    dv.xidot.assign(nxi, 0.0);
    if (first) {
      rhs_into(spec, s.X, {}, s.Xi, dv.accel, dv.xidot);
      s.V = dv.accel;  // velocity is the algebraic output x' = rhs / nu
    } else {
      s.V.assign(yl.begin() + nd, yl.begin() + 2 * nd);
      rhs_into(spec, s.X, s.V, s.Xi, dv.accel, dv.xidot);
    }
    traj.states.push_back(std::move(s));
    traj.derivs.push_back(std::move(dv));
  }
  return traj;
}

void TrajectoryDataset::validate() const {
  if (N <= 0 || d <= 0 || K <= 0) throw ConfigError("dataset shape must be positive");
  const int Lc = L();
  if (Lc < 1) throw ConfigError("dataset has no observation times");
  if (Lc >= 2) {
    const double h = (times.back() - times.front()) / (Lc - 1);
    if (!(h > 0.0)) throw ConfigError("dataset times must be strictly increasing");
    for (int l = 1; l < Lc; ++l) {
      const double step = times[l] - times[l - 1];
      if (!(step > 0.0) || std::abs(step - h) > 1e-12 * std::max(h, std::abs(times[l])))
        throw ConfigError("dataset times are not equispaced");
    }
  }
  const std::size_t nd = static_cast<std::size_t>(N) * d;
  const std::size_t nxi = has_xi ? N : 0;
  for (const auto& tr : trajectories) {
    if (static_cast<int>(tr.states.size()) != Lc || static_cast<int>(tr.derivs.size()) != Lc)
      throw ConfigError("trajectory length does not match the time grid");
    for (int l = 0; l < Lc; ++l) {
      const State& s = tr.states[l];
      const Derivs& dv = tr.derivs[l];
      if (s.X.size() != nd || s.V.size() != nd || s.Xi.size() != nxi || dv.accel.size() != nd ||
          dv.xidot.size() != nxi)
        throw ConfigError("trajectory state shape does not match the dataset (N, d)");
    }
  }
}

TrajectoryDataset integrate_all(const SystemSpec& spec, const std::vector<State>& ics,
                                std::span<const double> times, const Tolerances& tol,
                                unsigned threads) {
  TrajectoryDataset ds;
  ds.N = spec.N;
  ds.d = spec.d;
  ds.K = spec.K;
  ds.has_xi = spec.has_xi;
  ds.first_order = spec.first_order;
  ds.times.assign(times.begin(), times.end());
  ds.tol = tol;
  ds.system = spec_to_json(spec);
  ds.trajectories.resize(ics.size());
  parallel_for(ics.size(), threads, [&](std::size_t m) {
    try {
      ds.trajectories[m] = integrate(spec, ics[m], times, tol);
    } catch (const NumericalError& e) {
      throw NumericalError("trajectory " + std::to_string(m) + ": " + e.what());
    }
  });
  return ds;
}

TrajectoryDataset generate_dataset(const SystemSpec& spec, const InitialDistribution& dist, int M,
                                   int L, double T, const Tolerances& tol, unsigned threads,
                                   std::string_view purpose) {
  const std::vector<double> times = make_time_grid(L, T);
  const std::vector<State> ics = sample_initial_conditions(dist, spec, M, purpose);
  TrajectoryDataset ds = integrate_all(spec, ics, times, tol, threads);
  ds.seed = dist.seed;
  return ds;
}

TrajectoryDataset concatenate(const TrajectoryDataset& a, const TrajectoryDataset& b) {
  if (a.N != b.N || a.d != b.d || a.K != b.K || a.has_xi != b.has_xi || a.times != b.times)
    throw ConfigError("cannot concatenate datasets with different shapes or time grids");
  TrajectoryDataset out = a;
  out.trajectories.insert(out.trajectories.end(), b.trajectories.begin(), b.trajectories.end());
  return out;
}

}  // namespace kinfer
