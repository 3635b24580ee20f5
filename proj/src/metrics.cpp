#include "kinfer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "kinfer/common.hpp"
#include "kinfer/simd/kernels.hpp"

namespace kinfer {

double s_norm(std::span<const double> Z, const SystemSpec& spec) {
  if (spec.N <= 0 || Z.size() % static_cast<std::size_t>(spec.N) != 0)
    throw ConfigError("s_norm: vector size is not a multiple of N");
  const std::size_t block = Z.size() / spec.N;
  if (block != 1 && block != static_cast<std::size_t>(spec.d))
    throw ConfigError("s_norm: blocks must have size d or 1");
  double s = 0.0;
  for (int i = 0; i < spec.N; ++i) {
    double zi = 0.0;
    for (std::size_t a = 0; a < block; ++a) zi += Z[i * block + a] * Z[i * block + a];
    s += zi / spec.type_count_of_agent(i);
  }
  return std::sqrt(s);
}

namespace {

double s_norm_diff(const std::vector<double>& a, const std::vector<double>& b, const SystemSpec& spec) {
  if (a.size() != b.size()) throw ConfigError("state components have different sizes");
  if (a.empty()) return 0.0;
  std::vector<double> d(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) d[j] = a[j] - b[j];
  return s_norm(d, spec);
}

double hyp(double a, double b, double c) { return std::sqrt(a * a + b * b + c * c); }

}  // namespace

double y_norm_diff(const State& a, const State& b, const SystemSpec& spec) {
  return hyp(s_norm_diff(a.X, b.X, spec), s_norm_diff(a.V, b.V, spec), s_norm_diff(a.Xi, b.Xi, spec));
}

double y_norm(const State& a, const SystemSpec& spec) {
  return hyp(s_norm(a.X, spec), s_norm(a.V, spec), a.Xi.empty() ? 0.0 : s_norm(a.Xi, spec));
}

TrajError traj_error(std::span<const State> truth, std::span<const State> est, const SystemSpec& spec) {
  if (truth.size() != est.size()) throw ConfigError("traj_error: trajectories have different lengths");
  for (std::size_t l = 0; l < truth.size(); ++l)
    if (truth[l].t != est[l].t) throw ConfigError("traj_error: time grids differ");
  double dY = 0, nY = 0, dX = 0, nX = 0, dV = 0, nV = 0, dXi = 0, nXi = 0;
  for (std::size_t l = 0; l < truth.size(); ++l) {
    const State& a = truth[l];
    const State& b = est[l];
    const double ex = s_norm_diff(a.X, b.X, spec), ev = s_norm_diff(a.V, b.V, spec),
                 exi = s_norm_diff(a.Xi, b.Xi, spec);
    const double rx = s_norm(a.X, spec), rv = s_norm(a.V, spec), rxi = a.Xi.empty() ? 0.0 : s_norm(a.Xi, spec);
    dY = std::max(dY, hyp(ex, ev, exi));
    nY = std::max(nY, hyp(rx, rv, rxi));
    dX = std::max(dX, ex);
    nX = std::max(nX, rx);
    dV = std::max(dV, ev);
    nV = std::max(nV, rv);
    dXi = std::max(dXi, exi);
    nXi = std::max(nXi, rxi);
  }
  TrajError e;
  auto ratio = [&e](double num, double den) {
    if (den > 0.0) return num / den;
    e.zero_reference = true;
    return num;
  };
  e.traj = dY;
  e.traj_rel = ratio(dY, nY);
  e.x_rel = ratio(dX, nX);
  e.v_rel = ratio(dV, nV);
  e.xi_rel = spec.has_xi ? ratio(dXi, nXi) : 0.0;
  return e;
}

namespace {

double eval_or_zero(const Kernel* k, double r, std::span<const double> s) { return k ? (*k)(r, s) : 0.0; }

}  // namespace

KernelErrors kernel_error_EA(const KernelSet& est, const KernelSet& truth, const SampleCloud& cloud) {
  if (cloud.total_samples() == 0) throw ConfigError("kernel errors need a non-empty sample cloud");
  const simd::KernelTable& kt = simd::active();
  double sE = 0, sA = 0, sJ = 0, tE = 0, tA = 0, tJ = 0;
  std::vector<double> dE, dA, dJ, rE, rA, rJ;
  for (const PairCloud& pc : cloud.pairs) {
    const std::size_t n = pc.size();
    if (n == 0) continue;
    const Kernel* eE = est.get(Channel::Energy, pc.k, pc.kp);
    const Kernel* eA = est.get(Channel::Alignment, pc.k, pc.kp);
    const Kernel* tEk = truth.get(Channel::Energy, pc.k, pc.kp);
    const Kernel* tAk = truth.get(Channel::Alignment, pc.k, pc.kp);
    dE.resize(n);
    dA.resize(n);
    dJ.resize(n);
    rE.resize(n);
    rA.resize(n);
    rJ.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto fE = pc.features(Channel::Energy, j);
      const auto fA = pc.features(Channel::Alignment, j);
      const double r = pc.r[j], rdot = pc.rdot[j];
      const double trueE = eval_or_zero(tEk, r, fE), trueA = eval_or_zero(tAk, r, fA);
      const double diffE = eval_or_zero(eE, r, fE) - trueE;
      const double diffA = eval_or_zero(eA, r, fA) - trueA;
      dE[j] = diffE * r;
      dA[j] = diffA * rdot;
      dJ[j] = dE[j] + dA[j];
      rE[j] = trueE * r;
      rA[j] = trueA * rdot;
      rJ[j] = rE[j] + rA[j];
    }
    sE += pc.weight * kt.dot(dE.data(), dE.data(), n);
    sA += pc.weight * kt.dot(dA.data(), dA.data(), n);
    sJ += pc.weight * kt.dot(dJ.data(), dJ.data(), n);
    tE += pc.weight * kt.dot(rE.data(), rE.data(), n);
    tA += pc.weight * kt.dot(rA.data(), rA.data(), n);
    tJ += pc.weight * kt.dot(rJ.data(), rJ.data(), n);
  }
  KernelErrors e;
  e.E = std::sqrt(sE);
  e.A = std::sqrt(sA);
  e.joint = std::sqrt(sJ);
  auto ratio = [&e](double num, double den2) {
    if (den2 > 0.0) return num / std::sqrt(den2);
    e.zero_reference = true;
    return num;
  };
  e.E_rel = ratio(e.E, tE);
  e.A_rel = ratio(e.A, tA);
  e.joint_rel = ratio(e.joint, tJ);
  return e;
}

XiErrors kernel_error_xi(const KernelSet& est, const KernelSet& truth, const SampleCloud& cloud) {
  if (cloud.total_samples() == 0) throw ConfigError("kernel errors need a non-empty sample cloud");
  const simd::KernelTable& kt = simd::active();
  double s = 0, t = 0;
  std::vector<double> dX, rX;
  for (const PairCloud& pc : cloud.pairs) {
    const std::size_t n = pc.size();
    if (n == 0) continue;
    const Kernel* eX = est.get(Channel::Environment, pc.k, pc.kp);
    const Kernel* tX = truth.get(Channel::Environment, pc.k, pc.kp);
    dX.resize(n);
    rX.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto f = pc.features(Channel::Environment, j);
      const double tv = eval_or_zero(tX, pc.r[j], f);
      dX[j] = (eval_or_zero(eX, pc.r[j], f) - tv) * pc.xidiff[j];
      rX[j] = tv * pc.xidiff[j];
    }
    s += pc.weight * kt.dot(dX.data(), dX.data(), n);
    t += pc.weight * kt.dot(rX.data(), rX.data(), n);
  }
  XiErrors e;
  e.err = std::sqrt(s);
  if (t > 0.0) {
    e.rel = e.err / std::sqrt(t);
  } else {
    e.rel = e.err;
    e.zero_reference = true;
  }
  return e;
}

Stat summarize(std::span<const double> values) {
  Stat s;
  s.n = static_cast<int>(values.size());
  if (s.n == 0) return s;
  for (double v : values) s.mean += v;
  s.mean /= s.n;
  if (s.n > 1) {
    double q = 0.0;
    for (double v : values) q += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(q / (s.n - 1));
  }
  return s;
}

void ErrorReport::add_row(const std::vector<std::pair<std::string, double>>& f) {
  std::vector<double> row(columns.size(), std::nan(""));
  for (const auto& [name, value] : f) {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) {
      columns.push_back(name);
      for (auto& r : rows) r.push_back(std::nan(""));
      row.push_back(value);
    } else {
      row[static_cast<std::size_t>(it - columns.begin())] = value;
    }
  }
  rows.push_back(std::move(row));
}

std::vector<double> ErrorReport::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ConfigError("error report has no column '" + name + "'");
  const std::size_t c = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  for (const auto& r : rows)
    if (!std::isnan(r[c])) out.push_back(r[c]);
  return out;
}

Stat ErrorReport::stat(const std::string& name) const {
  const auto v = column(name);
  return summarize(v);
}

nlohmann::json ErrorReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& name : columns) {
    const auto v = column(name);
    const Stat s = summarize(v);
    j[name] = {{"mean", s.mean}, {"std", s.std}, {"n", s.n}, {"values", v}};
  }
  return j;
}

void ErrorReport::write_csv(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << std::setprecision(17) << "row";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << r;
    for (double v : rows[r]) {
      out << ',';
      if (!std::isnan(v)) out << v;
    }
    out << '\n';
  }
  out << "mean";
  for (const auto& c : columns) out << ',' << stat(c).mean;
  out << "\nstd";
  for (const auto& c : columns) out << ',' << stat(c).std;
  out << '\n';
}

void ErrorReport::write_json(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << std::setw(2) << to_json() << '\n';
}

std::vector<std::pair<std::string, double>> fields(const KernelErrors& e) {
  return {{"errE", e.E},         {"errA", e.A},         {"errJoint", e.joint},
          {"errE_rel", e.E_rel}, {"errA_rel", e.A_rel}, {"errJoint_rel", e.joint_rel}};
}

std::vector<std::pair<std::string, double>> fields(const XiErrors& e) {
  return {{"errXi", e.err}, {"errXi_rel", e.rel}};
}

}  // namespace kinfer
