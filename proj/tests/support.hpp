#pragma once

// Shared helpers for the test suites: random instances, an independent
// dense assembly of the normal equations, and small numeric utilities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <tuple>
#include <span>
#include <string>
#include <vector>

#include "kinfer/hypothesis.hpp"
#include "kinfer/learn.hpp"
#include "kinfer/model.hpp"
#include "kinfer/simulate.hpp"
#include "kinfer/zoo.hpp"

namespace testing {

using namespace kinfer;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
  bool coin() { return integer(0, 1) == 1; }
  std::vector<double> vec(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double rel_l2(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    num += (a[j] - b[j]) * (a[j] - b[j]);
    den += b[j] * b[j];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

// E feature used by random systems: projection of the velocity difference on
// the position difference.
inline FeatureMap dot_feature() {
  FeatureMap fm;
  fm.arity = 1;
  fm.fn = [](const AgentRef& a, const AgentRef& b, std::span<double> out) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.x.size(); ++c) s += (b.x[c] - a.x[c]) * (b.v[c] - a.v[c]);
    out[0] = s;
  };
  return fm;
}

// Random custom system without kernels: types, masses, forces and, per pair,
// an E feature of arity 0 or 1.
inline SystemSpec random_spec(Rng& rng, int N, int K, int d, bool has_xi, bool features) {
  SystemSpec s;
  s.name = "custom";
  s.N = N;
  s.d = d;
  s.K = K;
  s.type_of.resize(N);
  for (int i = 0; i < N; ++i) s.type_of[i] = i < K ? i : rng.integer(0, K - 1);
  std::shuffle(s.type_of.begin(), s.type_of.end(), rng.engine());
  s.masses = rng.vec(N, 0.5, 2.0);
  s.kernels = KernelSet(K);
  s.features = FeatureMapSet(K);
  if (features)
    for (int k = 0; k < K; ++k)
      for (int kp = 0; kp < K; ++kp)
        if (rng.coin()) s.features.set(Channel::Energy, k, kp, dot_feature());
  const double fx = rng.uniform(-0.5, 0.5), fv = rng.uniform(-0.5, 0.5);
  s.force_x = [fx, fv](const AgentRef& a, std::span<double> out) {
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = fx * a.x[c] + fv * a.v[c];
  };
  s.has_xi = has_xi;
  if (has_xi) {
    const double g = rng.uniform(-0.5, 0.5);
    s.force_xi = [g](const AgentRef& a) { return g * a.xi + 0.1; };
  }
  s.finalize();
  return s;
}

// Random states and derivatives on an equispaced grid (not a solution of any ODE).
inline TrajectoryDataset random_dataset(Rng& rng, const SystemSpec& spec, int M, int L, double T = 1.0) {
  TrajectoryDataset ds;
  ds.N = spec.N;
  ds.d = spec.d;
  ds.K = spec.K;
  ds.has_xi = spec.has_xi;
  ds.times = make_time_grid(L, T);
  const std::size_t nd = static_cast<std::size_t>(spec.N * spec.d);
  for (int m = 0; m < M; ++m) {
    Trajectory tr;
    for (int l = 0; l < L; ++l) {
      State s;
      s.t = ds.times[l];
      s.X = rng.vec(nd, 0.0, 3.0);
      s.V = rng.vec(nd, -1.0, 1.0);
      if (spec.has_xi) s.Xi = rng.vec(spec.N, -1.0, 1.0);
      Derivs dv;
      dv.accel = rng.vec(nd);
      if (spec.has_xi) dv.xidot = rng.vec(spec.N);
      tr.states.push_back(std::move(s));
      tr.derivs.push_back(std::move(dv));
    }
    ds.trajectories.push_back(std::move(tr));
  }
  return ds;
}

// Value of basis function `local` of block b at (r, s), written from the
// definition: product over axes of the cell indicator times u^power.
inline double naive_basis(const SpaceBlock& b, std::size_t local, double r, std::span<const double> s) {
  std::vector<std::size_t> digit(b.axes.size());
  for (std::size_t a = b.axes.size(); a-- > 0;) {
    const std::size_t dim = static_cast<std::size_t>(b.axes[a].dim());
    digit[a] = local % dim;
    local /= dim;
  }
  double v = 1.0;
  for (std::size_t a = 0; a < b.axes.size(); ++a) {
    const AxisGrid& g = b.axes[a];
    const double x = a == 0 ? r : s[a - 1];
    const int cell = static_cast<int>(digit[a]) / (g.degree + 1);
    const int power = static_cast<int>(digit[a]) % (g.degree + 1);
    if (x < g.lo || x > g.hi) return 0.0;
    double u = 0.0;
    if (g.hi > g.lo) {
      const double w = (g.hi - g.lo) / g.cells;
      const double left = g.lo + cell * w, right = g.lo + (cell + 1) * w;
      const bool last = cell == g.cells - 1;
      if (x < left || (last ? x > right : x >= right)) return 0.0;
      u = (x - left) / w;
    }
    v *= std::pow(u, power);
  }
  return v;
}

struct DenseSystem {
  std::vector<std::vector<double>> A;
  std::vector<double> b;
};

// Builds every row of Psi explicitly and forms Psi^T Psi / (LM) and
// Psi^T y / (LM) with plain loops.
inline DenseSystem naive_normal_equations(const TrajectoryDataset& ds, const SystemSpec& spec,
                                          const HypothesisSpace& space, SystemTag tag) {
  const bool xi = tag == SystemTag::Xi;
  const std::size_t n = xi ? space.n_xi : space.n_EA;
  const int d = spec.d;
  const int rows_per_agent = xi ? 1 : d;
  std::vector<std::vector<double>> rows;
  std::vector<double> y;

  for (const auto& tr : ds.trajectories) {
    for (std::size_t l = 0; l < tr.states.size(); ++l) {
      const State& st = tr.states[l];
      const Derivs& dv = tr.derivs[l];
      for (int i = 0; i < spec.N; ++i) {
        const int k = spec.type_of[i];
        const double wi = 1.0 / std::sqrt(static_cast<double>(spec.type_counts[k]));
        std::vector<std::vector<double>> psi(rows_per_agent, std::vector<double>(n, 0.0));
        for (int ip = 0; ip < spec.N; ++ip) {
          if (ip == i) continue;
          const int kp = spec.type_of[ip];
          const double wp = 1.0 / spec.type_counts[kp];
          std::vector<double> dx(d), dvv(d);
          double r2 = 0.0;
          for (int c = 0; c < d; ++c) {
            dx[c] = st.X[ip * d + c] - st.X[i * d + c];
            dvv[c] = st.V[ip * d + c] - st.V[i * d + c];
            r2 += dx[c] * dx[c];
          }
          const double r = std::sqrt(r2);
          for (const auto& blk : space.blocks) {
            if (blk.k != k || blk.kp != kp) continue;
            if (xi != (blk.channel == Channel::Environment)) continue;
            std::vector<double> s(3, 0.0);
            const FeatureMap& fm = spec.features.get(blk.channel, k, kp);
            if (fm.arity > 0) {
              AgentRef self{std::span<const double>(st.X).subspan(i * d, d),
                            std::span<const double>(st.V).subspan(i * d, d), xi ? st.Xi[i] : 0.0};
              AgentRef other{std::span<const double>(st.X).subspan(ip * d, d),
                             std::span<const double>(st.V).subspan(ip * d, d), xi ? st.Xi[ip] : 0.0};
              fm.fn(self, other, std::span<double>(s.data(), fm.arity));
            }
            for (std::size_t j = 0; j < blk.dim; ++j) {
              const double phi = naive_basis(blk, j, r, s);
              if (phi == 0.0) continue;
              if (xi) {
                psi[0][blk.offset + j] += wi * wp * phi * (st.Xi[ip] - st.Xi[i]);
              } else {
                const auto& w = blk.channel == Channel::Energy ? dx : dvv;
                for (int c = 0; c < d; ++c) psi[c][blk.offset + j] += wi * wp * phi * w[c];
              }
            }
          }
        }
        AgentRef self{std::span<const double>(st.X).subspan(i * d, d), std::span<const double>(st.V).subspan(i * d, d),
                      spec.has_xi ? st.Xi[i] : 0.0};
        if (xi) {
          const double f = spec.force_xi ? spec.force_xi(self) : 0.0;
          rows.push_back(psi[0]);
          y.push_back(wi * (dv.xidot[i] - f));
        } else {
          std::vector<double> f(d, 0.0);
          if (spec.force_x) spec.force_x(self, f);
          for (int c = 0; c < d; ++c) {
            rows.push_back(psi[c]);
            y.push_back(wi * (spec.masses[i] * dv.accel[i * d + c] - f[c]));
          }
        }
      }
    }
  }

  const double scale = 1.0 / (static_cast<double>(ds.M()) * ds.L());
  DenseSystem out;
  out.A.assign(n, std::vector<double>(n, 0.0));
  out.b.assign(n, 0.0);
  for (std::size_t row = 0; row < rows.size(); ++row)
    for (std::size_t a = 0; a < n; ++a) {
      out.b[a] += rows[row][a] * y[row];
      for (std::size_t c = 0; c < n; ++c) out.A[a][c] += rows[row][a] * rows[row][c];
    }
  for (std::size_t a = 0; a < n; ++a) {
    out.b[a] *= scale;
    for (std::size_t c = 0; c < n; ++c) out.A[a][c] *= scale;
  }
  return out;
}

// Largest entrywise deviation relative to the largest oracle magnitude.
inline double compare(const NormalEquations& ne, const DenseSystem& ref) {
  double scaleA = 0.0, scaleB = 0.0, errA = 0.0, errB = 0.0;
  const std::size_t n = ref.b.size();
  if (ne.n != n) return 1e300;
  for (std::size_t a = 0; a < n; ++a) {
    scaleB = std::max(scaleB, std::abs(ref.b[a]));
    errB = std::max(errB, std::abs(ne.b(a) - ref.b[a]));
    for (std::size_t c = 0; c < n; ++c) {
      scaleA = std::max(scaleA, std::abs(ref.A[a][c]));
      errA = std::max(errA, std::abs(ne.A(a, c) - ref.A[a][c]));
    }
  }
  const double ra = scaleA > 0.0 ? errA / scaleA : errA;
  const double rb = scaleB > 0.0 ? errB / scaleB : errB;
  return std::max(ra, rb);
}

struct OracleCase {
  SystemSpec spec;
  TrajectoryDataset ds;
  HypothesisSpace space;
  SystemTag tag;
};

// Random instance with N <= 5, K <= 2, d <= 2, L <= 4, M <= 3 and n <= 6.
inline OracleCase random_oracle_case(Rng& rng) {
  OracleCase c;
  const int K = rng.integer(1, 2);
  const int N = rng.integer(std::max(2, K), 5);
  const int d = rng.integer(1, 2);
  const bool xi = rng.integer(0, 3) == 0;
  c.spec = random_spec(rng, N, K, d, xi, !xi);
  c.ds = random_dataset(rng, c.spec, rng.integer(1, 3), rng.integer(1, 4));
  c.tag = xi ? SystemTag::Xi : SystemTag::EA;

  std::vector<SpaceBlock> blocks;
  int budget = 6;
  for (int k = 0; k < K && budget > 0; ++k)
    for (int kp = 0; kp < K && budget > 0; ++kp) {
      std::vector<Channel> chans = xi ? std::vector<Channel>{Channel::Environment}
                                      : std::vector<Channel>{Channel::Energy, Channel::Alignment};
      for (Channel ch : chans) {
        if (budget <= 0 || !rng.coin()) continue;
        SpaceBlock b;
        b.channel = ch;
        b.k = k;
        b.kp = kp;
        const int arity = c.spec.features.arity(ch, k, kp);
        const int deg = rng.integer(0, 1);
        const int cells = std::max(1, std::min(3, budget / ((deg + 1) * (arity > 0 ? 2 : 1))));
        b.axes.push_back({rng.uniform(0.0, 0.5), rng.uniform(2.5, 4.5), rng.integer(1, cells), deg});
        if (arity > 0) b.axes.push_back({rng.uniform(-4.0, -1.0), rng.uniform(1.0, 4.0), 1, rng.integer(0, 1)});
        std::size_t dim = 1;
        for (const auto& a : b.axes) dim *= static_cast<std::size_t>(a.dim());
        if (static_cast<int>(dim) > budget) continue;
        budget -= static_cast<int>(dim);
        blocks.push_back(std::move(b));
      }
    }
  if (blocks.empty()) {
    SpaceBlock b;
    b.channel = xi ? Channel::Environment : Channel::Energy;
    b.axes.push_back({0.0, 4.5, 2, 0});
    if (c.spec.features.arity(b.channel, 0, 0) > 0) b.axes.push_back({-4.0, 4.0, 1, 0});
    blocks.push_back(std::move(b));
  }
  std::sort(blocks.begin(), blocks.end(), [](const SpaceBlock& a, const SpaceBlock& b) {
    return std::tuple(static_cast<int>(a.channel), a.k, a.kp) < std::tuple(static_cast<int>(b.channel), b.k, b.kp);
  });
  c.space = make_space(K, std::move(blocks));
  return c;
}

// A K=1 system whose E and A kernels are random members of a 1-D degree-p
// grid on [lo, hi]. Kernels vanish outside the box.
struct InSpan {
  SystemSpec spec;
  EstimatedKernels truth;
};

inline InSpan in_span_system(Rng& rng, const std::string& base, int N, int d, double lo, double hi, int cells,
                             int degree, double scale = 0.5) {
  InSpan out;
  out.spec = make_model(base, {}, N, d);
  std::vector<SpaceBlock> blocks;
  for (Channel c : {Channel::Energy, Channel::Alignment}) {
    if (!out.spec.kernels.get(c, 0, 0)) continue;
    SpaceBlock b;
    b.channel = c;
    b.axes.push_back({lo, hi, cells, degree});
    blocks.push_back(b);
  }
  out.truth.space = make_space(1, std::move(blocks));
  out.truth.alpha_EA = rng.vec(out.truth.space.n_EA, -scale, scale);
  out.spec.kernels = out.truth.to_kernel_set();
  out.spec.finalize();
  return out;
}

inline SpaceConfig fixed_box_config(double lo, double hi, int cells, int degree) {
  SpaceConfig cfg;
  for (Channel c : {Channel::Energy, Channel::Alignment}) {
    cfg[c].box = {{lo, hi}};
    cfg[c].cells = {cells};
    cfg[c].degree = {degree};
  }
  return cfg;
}

}  // namespace testing
