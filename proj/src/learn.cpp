#include "kinfer/learn.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/SVD>

#include "kinfer/common.hpp"
#include "kinfer/simd/kernels.hpp"
#include "kinfer/zoo.hpp"

namespace kinfer {

TrajectoryDataset finite_difference_derivs(const TrajectoryDataset& ds) {
  ds.validate();
  const int L = ds.L();
  if (L < 2) throw ConfigError("finite differences need at least two observation times (L >= 2)");
  const double h = (ds.times.back() - ds.times.front()) / (L - 1);
  TrajectoryDataset out = ds;
  out.source = DerivSource::FiniteDifference;
  for (auto& tr : out.trajectories) {
    for (int l = 0; l < L; ++l) {
      const int lo = l < L - 1 ? l : L - 2;
      const State& a = tr.states[lo];
      const State& b = tr.states[lo + 1];
      const std::vector<double>& qa = ds.first_order ? a.X : a.V;
      const std::vector<double>& qb = ds.first_order ? b.X : b.V;
      Derivs& dv = tr.derivs[l];
      for (std::size_t j = 0; j < qa.size(); ++j) dv.accel[j] = (qb[j] - qa[j]) / h;
      for (std::size_t j = 0; j < a.Xi.size(); ++j) dv.xidot[j] = (b.Xi[j] - a.Xi[j]) / h;
    }
    if (ds.first_order)
      for (int l = 0; l < L; ++l) tr.states[l].V = tr.derivs[l].accel;
  }
  return out;
}

namespace {

constexpr std::size_t kChunk = 4;  // trajectories per deterministic work unit

void check_shapes(const TrajectoryDataset& ds, const SystemSpec& spec) {
  ds.validate();
  if (ds.N != spec.N || ds.d != spec.d || ds.K != spec.K || ds.has_xi != spec.has_xi)
    throw ConfigError("dataset shape (N, d, K, xi) does not match the system");
  if (ds.M() == 0) throw ConfigError("dataset has no trajectories");
}

struct Partial {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double c = 0.0;
  long long outside = 0;
};

// Computes chunk partials in waves of `threads` and merges them in ascending
// chunk order, so the sum is the same for every worker count.
template <class Compute>
void reduce_chunks(std::size_t nchunks, unsigned threads, std::size_t n, Compute compute, Partial& total) {
  total.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  total.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  const std::size_t wave = std::max(1u, threads);
  std::vector<Partial> parts(std::min(wave, nchunks));
  for (std::size_t start = 0; start < nchunks; start += wave) {
    const std::size_t count = std::min(wave, nchunks - start);
    parallel_for(count, threads, [&](std::size_t j) {
      Partial& p = parts[j];
      p.A.setZero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      p.b.setZero(static_cast<Eigen::Index>(n));
      p.c = 0.0;
      p.outside = 0;
      compute(start + j, p);
    });
    for (std::size_t j = 0; j < count; ++j) {
      total.A += parts[j].A;
      total.b += parts[j].b;
      total.c += parts[j].c;
      total.outside += parts[j].outside;
    }
  }
}

// Dense rows of one observation restricted to the columns it touches.
class LocalRows {
 public:
  LocalRows(std::size_t n, int rows, std::size_t capacity)
      : pos_(n, -1), rows_(rows), ld_(capacity), P_(static_cast<std::size_t>(rows) * capacity, 0.0) {
    cols_.reserve(capacity);
  }

  double* column(std::size_t global) {
    int& p = pos_[global];
    if (p < 0) {
      if (cols_.size() == ld_) grow();
      p = static_cast<int>(cols_.size());
      cols_.push_back(global);
      for (int a = 0; a < rows_; ++a) P_[a * ld_ + p] = 0.0;
    }
    return &P_[p];
  }
  std::size_t ld() const { return ld_; }

  void flush(const double* y, Partial& part, const simd::KernelTable& kt) {
    const std::size_t nc = cols_.size();
    if (nc > 0) {
      G_.assign(nc * nc, 0.0);
      g_.assign(nc, 0.0);
      kt.gram_accumulate(P_.data(), rows_, nc, ld_, G_.data());
      kt.gemv_t_accumulate(P_.data(), rows_, nc, ld_, y, g_.data());
      for (std::size_t p = 0; p < nc; ++p) {
        const auto gp = static_cast<Eigen::Index>(cols_[p]);
        part.b(gp) += g_[p];
        for (std::size_t q = 0; q < nc; ++q) part.A(gp, static_cast<Eigen::Index>(cols_[q])) += G_[p * nc + q];
      }
    }
    for (int a = 0; a < rows_; ++a) part.c += y[a] * y[a];
    for (std::size_t g : cols_) pos_[g] = -1;
    cols_.clear();
  }

 private:
  void grow() {
    const std::size_t nld = 2 * ld_;
    std::vector<double> nP(static_cast<std::size_t>(rows_) * nld, 0.0);
    for (int a = 0; a < rows_; ++a)
      std::copy(P_.begin() + a * ld_, P_.begin() + a * ld_ + cols_.size(), nP.begin() + a * nld);
    P_.swap(nP);
    ld_ = nld;
  }

  std::vector<int> pos_;
  std::vector<std::size_t> cols_;
  int rows_;
  std::size_t ld_;
  std::vector<double> P_;
  std::vector<double> G_, g_;
};

void check_finite(double v, const char* what, std::size_t m, int l, int i) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite " << what << " at trajectory " << m << ", time index " << l << ", agent " << i;
    throw NumericalError(os.str());
  }
}

NormalEquations finish(SystemTag tag, std::size_t n, Partial& total, const TrajectoryDataset& ds) {
  NormalEquations ne;
  ne.tag = tag;
  ne.n = n;
  ne.count = static_cast<long long>(ds.M()) * ds.L();
  const double inv = 1.0 / static_cast<double>(ne.count);
  ne.A = total.A * inv;
  ne.A = 0.5 * (ne.A + ne.A.transpose()).eval();
  ne.b = total.b * inv;
  ne.c = total.c * inv;
  ne.outside = total.outside;
  return ne;
}

AgentRef agent_ref(const SystemSpec& spec, const State& s, int i, std::span<const double> zeros) {
  const std::size_t d = spec.d;
  return AgentRef{std::span<const double>(s.X).subspan(i * d, d),
                  spec.first_order ? zeros : std::span<const double>(s.V).subspan(i * d, d),
                  spec.has_xi ? s.Xi[i] : 0.0};
}

}  // namespace

NormalEquations assemble_EA(const TrajectoryDataset& ds, const SystemSpec& spec, const HypothesisSpace& space,
                            unsigned threads) {
  check_shapes(ds, spec);
  if (space.K != spec.K) throw ConfigError("hypothesis space was built for a different number of types");
  const std::size_t n = space.n_EA;
  if (n == 0) throw ConfigError("the hypothesis space has no E or A blocks");
  const int N = spec.N, d = spec.d, K = spec.K;

  std::vector<const SpaceBlock*> blockE(static_cast<std::size_t>(K) * K, nullptr);
  std::vector<const SpaceBlock*> blockA(static_cast<std::size_t>(K) * K, nullptr);
  for (int k = 0; k < K; ++k)
    for (int kp = 0; kp < K; ++kp) {
      blockE[k * K + kp] = space.find(Channel::Energy, k, kp);
      blockA[k * K + kp] = spec.first_order ? nullptr : space.find(Channel::Alignment, k, kp);
    }
  const simd::KernelTable& kt = simd::active();

  Partial total;
  const std::size_t nchunks = (ds.M() + kChunk - 1) / kChunk;
  reduce_chunks(nchunks, threads, n, [&](std::size_t ch, Partial& part) {
    LocalRows rows(n, d, static_cast<std::size_t>(std::max(1, N - 1)) * 8);
    std::array<double, kMaxDim> zeros{}, force{}, y{};
    PairObservation o;
    BasisValues bv;
    const std::size_t m_end = std::min<std::size_t>(ds.M(), (ch + 1) * kChunk);
    for (std::size_t m = ch * kChunk; m < m_end; ++m) {
      const Trajectory& tr = ds.trajectories[m];
      for (int l = 0; l < ds.L(); ++l) {
        const State& s = tr.states[l];
        const std::vector<double>& acc = tr.derivs[l].accel;
        for (int i = 0; i < N; ++i) {
          const int k = spec.type_of[i];
          const double wrow = 1.0 / std::sqrt(static_cast<double>(spec.type_counts[k]));
          force.fill(0.0);
          if (spec.force_x) spec.force_x(agent_ref(spec, s, i, std::span<const double>(zeros.data(), d)),
                                         std::span<double>(force.data(), d));
          for (int a = 0; a < d; ++a) {
            y[a] = wrow * (spec.masses[i] * acc[i * d + a] - force[a]);
            check_finite(y[a], "regression target", m, l, i);
          }
          for (int ip = 0; ip < N; ++ip) {
            if (ip == i) continue;
            const int kp = spec.type_of[ip];
            const SpaceBlock* bE = blockE[k * K + kp];
            const SpaceBlock* bA = blockA[k * K + kp];
            if (!bE && !bA) continue;
            observe_pair(spec, s, i, ip, o);
            const double w = wrow / spec.type_counts[kp];
            if (bE) {
              const int p = o.arity[0];
              for (int j = 0; j < p; ++j) check_finite(o.s[0][j], "E feature", m, l, i);
              eval_basis(*bE, o.g.r, std::span<const double>(o.s[0].data(), p), bv);
              if (bv.count == 0) ++part.outside;
              for (int j = 0; j < bv.count; ++j) {
                double* col = rows.column(bv.index[j]);
                const std::size_t ld = rows.ld();
                for (int a = 0; a < d; ++a) col[a * ld] += w * bv.value[j] * o.g.rvec[a];
              }
            }
            if (bA) {
              const int p = o.arity[1];
              for (int j = 0; j < p; ++j) check_finite(o.s[1][j], "A feature", m, l, i);
              eval_basis(*bA, o.g.r, std::span<const double>(o.s[1].data(), p), bv);
              if (bv.count == 0) ++part.outside;
              for (int j = 0; j < bv.count; ++j) {
                double* col = rows.column(bv.index[j]);
                const std::size_t ld = rows.ld();
                for (int a = 0; a < d; ++a) col[a * ld] += w * bv.value[j] * o.g.rdotvec[a];
              }
            }
          }
          rows.flush(y.data(), part, kt);
        }
      }
    }
  }, total);
  return finish(SystemTag::EA, n, total, ds);
}

NormalEquations assemble_xi(const TrajectoryDataset& ds, const SystemSpec& spec, const HypothesisSpace& space,
                            unsigned threads) {
  if (!spec.has_xi || !ds.has_xi) throw ConfigError("no xi channel: the system has no environment variable");
  check_shapes(ds, spec);
  if (space.K != spec.K) throw ConfigError("hypothesis space was built for a different number of types");
  const std::size_t n = space.n_xi;
  if (n == 0) throw ConfigError("the hypothesis space has no xi blocks");
  const int N = spec.N, d = spec.d, K = spec.K;

  std::vector<const SpaceBlock*> blockX(static_cast<std::size_t>(K) * K, nullptr);
  for (int k = 0; k < K; ++k)
    for (int kp = 0; kp < K; ++kp) blockX[k * K + kp] = space.find(Channel::Environment, k, kp);
  const simd::KernelTable& kt = simd::active();

  Partial total;
  const std::size_t nchunks = (ds.M() + kChunk - 1) / kChunk;
  reduce_chunks(nchunks, threads, n, [&](std::size_t ch, Partial& part) {
    LocalRows rows(n, 1, static_cast<std::size_t>(std::max(1, N - 1)) * 4);
    std::array<double, kMaxDim> zeros{};
    PairObservation o;
    BasisValues bv;
    const std::size_t m_end = std::min<std::size_t>(ds.M(), (ch + 1) * kChunk);
    for (std::size_t m = ch * kChunk; m < m_end; ++m) {
      const Trajectory& tr = ds.trajectories[m];
      for (int l = 0; l < ds.L(); ++l) {
        const State& s = tr.states[l];
        const std::vector<double>& xidot = tr.derivs[l].xidot;
        for (int i = 0; i < N; ++i) {
          const int k = spec.type_of[i];
          const double wrow = 1.0 / std::sqrt(static_cast<double>(spec.type_counts[k]));
          double f = 0.0;
          if (spec.force_xi) f = spec.force_xi(agent_ref(spec, s, i, std::span<const double>(zeros.data(), d)));
          const double y = wrow * (xidot[i] - f);
          check_finite(y, "regression target", m, l, i);
          for (int ip = 0; ip < N; ++ip) {
            if (ip == i) continue;
            const int kp = spec.type_of[ip];
            const SpaceBlock* bX = blockX[k * K + kp];
            if (!bX) continue;
            observe_pair(spec, s, i, ip, o);
            const int p = o.arity[2];
            for (int j = 0; j < p; ++j) check_finite(o.s[2][j], "xi feature", m, l, i);
            eval_basis(*bX, o.g.r, std::span<const double>(o.s[2].data(), p), bv);
            if (bv.count == 0) ++part.outside;
            const double w = wrow / spec.type_counts[kp] * o.g.xidiff;
            for (int j = 0; j < bv.count; ++j) *rows.column(bv.index[j]) += w * bv.value[j];
          }
          rows.flush(&y, part, kt);
        }
      }
    }
  }, total);
  return finish(SystemTag::Xi, n, total, ds);
}

SolveResult solve(const NormalEquations& ne, double tol_rel) {
  if (ne.n == 0) throw ConfigError("cannot solve an empty system (n = 0)");
  if (!(tol_rel > 0.0 && tol_rel < 1.0)) throw ConfigError("tol_rel must lie in (0, 1)");
  if (!ne.A.allFinite() || !ne.b.allFinite()) throw NumericalError("normal equations contain non-finite entries");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(ne.A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  SolveResult out;
  out.sigma_max = sv(0);
  out.sigma_min = sv(sv.size() - 1);
  out.alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ne.n));
  if (!(out.sigma_max > 0.0)) return out;
  const double cut = tol_rel * out.sigma_max;
  while (out.rank < sv.size() && sv(out.rank) > cut) ++out.rank;
  const Eigen::Index r = out.rank;
  const Eigen::VectorXd coeff = (svd.matrixU().leftCols(r).transpose() * ne.b).cwiseQuotient(sv.head(r));
  out.alpha = svd.matrixV().leftCols(r) * coeff;
  return out;
}

double quadratic_loss(const NormalEquations& ne, const Eigen::VectorXd& alpha) {
  if (alpha.size() != static_cast<Eigen::Index>(ne.n)) throw ConfigError("coefficient vector size mismatch");
  return alpha.dot(ne.A * alpha) - 2.0 * alpha.dot(ne.b) + ne.c;
}

double empirical_loss_EA(const TrajectoryDataset& ds, const SystemSpec& spec, const KernelSet& est) {
  check_shapes(ds, spec);
  const int N = spec.N, d = spec.d;
  std::array<double, kMaxDim> zeros{}, force{}, res{};
  PairObservation o;
  double total = 0.0;
  for (std::size_t m = 0; m < ds.trajectories.size(); ++m) {
    const Trajectory& tr = ds.trajectories[m];
    for (int l = 0; l < ds.L(); ++l) {
      const State& s = tr.states[l];
      for (int i = 0; i < N; ++i) {
        const int k = spec.type_of[i];
        force.fill(0.0);
        if (spec.force_x) spec.force_x(agent_ref(spec, s, i, std::span<const double>(zeros.data(), d)),
                                       std::span<double>(force.data(), d));
        for (int a = 0; a < d; ++a) res[a] = spec.masses[i] * tr.derivs[l].accel[i * d + a] - force[a];
        for (int ip = 0; ip < N; ++ip) {
          if (ip == i) continue;
          const int kp = spec.type_of[ip];
          observe_pair(spec, s, i, ip, o);
          const double w = 1.0 / spec.type_counts[kp];
          if (const Kernel* kE = est.get(Channel::Energy, k, kp)) {
            const double phi = (*kE)(o.g.r, std::span<const double>(o.s[0].data(), o.arity[0]));
            for (int a = 0; a < d; ++a) res[a] -= w * phi * o.g.rvec[a];
          }
          if (spec.first_order) continue;
          if (const Kernel* kA = est.get(Channel::Alignment, k, kp)) {
            const double phi = (*kA)(o.g.r, std::span<const double>(o.s[1].data(), o.arity[1]));
            for (int a = 0; a < d; ++a) res[a] -= w * phi * o.g.rdotvec[a];
          }
        }
        double sq = 0.0;
        for (int a = 0; a < d; ++a) sq += res[a] * res[a];
        total += sq / spec.type_counts[k];
      }
    }
  }
  return total / (static_cast<double>(ds.M()) * ds.L());
}

double empirical_loss_xi(const TrajectoryDataset& ds, const SystemSpec& spec, const KernelSet& est) {
  if (!spec.has_xi) throw ConfigError("no xi channel: the system has no environment variable");
  check_shapes(ds, spec);
  const int N = spec.N, d = spec.d;
  std::array<double, kMaxDim> zeros{};
  PairObservation o;
  double total = 0.0;
  for (const Trajectory& tr : ds.trajectories)
    for (int l = 0; l < ds.L(); ++l) {
      const State& s = tr.states[l];
      for (int i = 0; i < N; ++i) {
        const int k = spec.type_of[i];
        double res = tr.derivs[l].xidot[i];
        if (spec.force_xi) res -= spec.force_xi(agent_ref(spec, s, i, std::span<const double>(zeros.data(), d)));
        for (int ip = 0; ip < N; ++ip) {
          if (ip == i) continue;
          const int kp = spec.type_of[ip];
          const Kernel* kX = est.get(Channel::Environment, k, kp);
          if (!kX) continue;
          observe_pair(spec, s, i, ip, o);
          res -= (*kX)(o.g.r, std::span<const double>(o.s[2].data(), o.arity[2])) * o.g.xidiff / spec.type_counts[kp];
        }
        total += res * res / spec.type_counts[k];
      }
    }
  return total / (static_cast<double>(ds.M()) * ds.L());
}

namespace {

// A tensor cell is occupied when the diagonal entry of its constant basis
// function is positive, i.e. some observation touched it with nonzero weight.
std::vector<char> occupancy(const SpaceBlock& b, const NormalEquations& ne) {
  const int naxes = static_cast<int>(b.axes.size());
  std::vector<std::size_t> stride(naxes, 1);
  for (int a = naxes - 2; a >= 0; --a) stride[a] = stride[a + 1] * b.axes[a + 1].dim();
  std::vector<char> occ(b.cell_count(), 0);
  std::vector<int> cell(naxes, 0);
  for (std::size_t flat = 0; flat < occ.size(); ++flat) {
    std::size_t rem = flat;
    for (int a = naxes - 1; a >= 0; --a) {
      cell[a] = static_cast<int>(rem % b.axes[a].cells);
      rem /= b.axes[a].cells;
    }
    std::size_t idx = b.offset;
    for (int a = 0; a < naxes; ++a) idx += static_cast<std::size_t>(cell[a] * (b.axes[a].degree + 1)) * stride[a];
    const auto ii = static_cast<Eigen::Index>(idx);
    occ[flat] = ne.A(ii, ii) > 0.0 ? 1 : 0;
  }
  return occ;
}

nlohmann::json solve_report(const NormalEquations& ne, const SolveResult& s, double loss) {
  const double cond = s.sigma_min > 0.0 ? s.sigma_max / s.sigma_min : std::numeric_limits<double>::infinity();
  return {{"n", ne.n},
          {"rank", s.rank},
          {"sigma_min", s.sigma_min},
          {"sigma_max", s.sigma_max},
          {"condition", std::isfinite(cond) ? nlohmann::json(cond) : nlohmann::json("inf")},
          {"loss", loss},
          {"outside_samples", ne.outside}};
}

}  // namespace

LearnResult learn_kernels(const TrajectoryDataset& ds, const SystemSpec& spec, const LearnConfig& cfg) {
  check_shapes(ds, spec);
  LearnResult out;
  out.ranges = cfg.ranges ? *cfg.ranges : estimate_ranges(ds, spec, cfg.threads);
  HypothesisSpace space = build_space(spec, out.ranges, cfg.space);
  if (space.n_EA == 0 && space.n_xi == 0) throw ConfigError("nothing to learn: the hypothesis space is empty");

  EstimatedKernels& est = out.kernels;
  est.space = space;
  est.alpha_EA.assign(space.n_EA, 0.0);
  est.alpha_xi.assign(space.n_xi, 0.0);
  est.occupied.resize(space.blocks.size());
  est.system = spec_to_json(spec);
  est.report = {{"tol_rel", cfg.tol_rel},
                {"M", ds.M()},
                {"L", ds.L()},
                {"T", ds.T()},
                {"derivs_source", std::string(deriv_source_name(ds.source))}};

  auto fill = [&](const NormalEquations& ne, const SolveResult& sr, std::vector<double>& alpha, bool xi) {
    alpha.assign(sr.alpha.data(), sr.alpha.data() + sr.alpha.size());
    for (std::size_t bi = 0; bi < space.blocks.size(); ++bi)
      if ((space.blocks[bi].channel == Channel::Environment) == xi) est.occupied[bi] = occupancy(space.blocks[bi], ne);
  };

  if (space.n_EA > 0) {
    out.ne_EA = assemble_EA(ds, spec, space, cfg.threads);
    out.solve_EA = solve(*out.ne_EA, cfg.tol_rel);
    out.loss_EA = quadratic_loss(*out.ne_EA, out.solve_EA->alpha);
    fill(*out.ne_EA, *out.solve_EA, est.alpha_EA, false);
    est.report["EA"] = solve_report(*out.ne_EA, *out.solve_EA, out.loss_EA);
  }
  if (space.n_xi > 0) {
    out.ne_xi = assemble_xi(ds, spec, space, cfg.threads);
    out.solve_xi = solve(*out.ne_xi, cfg.tol_rel);
    out.loss_xi = quadratic_loss(*out.ne_xi, out.solve_xi->alpha);
    fill(*out.ne_xi, *out.solve_xi, est.alpha_xi, true);
    est.report["xi"] = solve_report(*out.ne_xi, *out.solve_xi, out.loss_xi);
  }
  return out;
}

void write_normal_equations_csv(const std::filesystem::path& file, const NormalEquations& ne) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << std::setprecision(17);
  out << "row";
  for (std::size_t j = 0; j < ne.n; ++j) out << ",c" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < ne.A.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < ne.A.cols(); ++j) out << ',' << ne.A(i, j);
    out << '\n';
  }
  out << 'b';
  for (Eigen::Index j = 0; j < ne.b.size(); ++j) out << ',' << ne.b(j);
  out << '\n';
}

}  // namespace kinfer
