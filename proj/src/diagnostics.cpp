#include "kinfer/diagnostics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include <Eigen/SVD>

#include "kinfer/common.hpp"

namespace kinfer {

Coercivity coercivity_probe(const Eigen::MatrixXd& A) {
  if (A.rows() == 0 || A.rows() != A.cols()) throw ConfigError("coercivity probe needs a non-empty square matrix");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A);
  const Eigen::VectorXd& sv = svd.singularValues();
  Coercivity c;
  c.sigma_max = sv(0);
  c.sigma_min = sv(sv.size() - 1);
  c.condition = c.sigma_min > 0.0 ? c.sigma_max / c.sigma_min : std::numeric_limits<double>::infinity();
  return c;
}

Coercivity coercivity_probe(const NormalEquations& ne) { return coercivity_probe(ne.A); }

int schedule_cells(int M, double s, int V, double c) {
  if (M < 2) throw ConfigError("the cell schedule needs M >= 2");
  const double x = M / std::log(static_cast<double>(M));
  return std::max(1, static_cast<int>(std::floor(c * std::pow(x, 1.0 / (2.0 * s + V)))));
}

RateFit rate_study(const SystemSpec& spec, const RateStudyConfig& cfg, const SampleCloud& eval_cloud,
                   const RangeEstimate& box) {
  const auto& Ms = cfg.Ms;
  if (Ms.size() < 4) throw ConfigError("rate study needs at least 4 values of M");
  for (std::size_t j = 1; j < Ms.size(); ++j)
    if (Ms[j] <= Ms[j - 1]) throw ConfigError("rate study M values must be strictly increasing");
  if (Ms.front() < 2) throw ConfigError("rate study M values must be >= 2");
  if (Ms.back() < 4 * Ms.front()) throw ConfigError("rate study M values must span at least two octaves");
  if (cfg.reps < 3) throw ConfigError("rate study needs at least 3 repetitions");
  if (!(cfg.s > 0.0) || cfg.V < 1) throw ConfigError("rate study needs s > 0 and |V| >= 1");

  RateFit fit;
  fit.s = cfg.s;
  fit.V = cfg.V;
  fit.theory_slope = -2.0 * cfg.s / (2.0 * cfg.s + cfg.V);

  const std::size_t nM = Ms.size();
  const std::size_t reps = static_cast<std::size_t>(cfg.reps);
  std::vector<double> err2(nM * reps, 0.0);
  std::vector<int> cells(nM);
  for (std::size_t a = 0; a < nM; ++a) cells[a] = schedule_cells(Ms[a], cfg.s, cfg.V, cfg.cells_scale);

  parallel_for(nM * reps, cfg.threads, [&](std::size_t task) {
    const std::size_t a = task / reps, rep = task % reps;
    const int M = Ms[a];
    try {
      const std::string purpose = "rate/" + std::to_string(M) + "/" + std::to_string(rep);
      const TrajectoryDataset ds = generate_dataset(spec, cfg.dist, M, cfg.L, cfg.T, cfg.tol, 1, purpose);
      LearnConfig lc;
      lc.space = cfg.space;
      for (auto& cc : lc.space.channel) cc.cells = {cells[a]};
      lc.tol_rel = cfg.tol_rel;
      lc.threads = 1;
      lc.ranges = box;
      const LearnResult res = learn_kernels(ds, spec, lc);
      const KernelSet est = res.kernels.to_kernel_set();
      double e2 = 0.0;
      if (res.kernels.space.n_EA > 0) {
        const double e = kernel_error_EA(est, spec.kernels, eval_cloud).joint;
        e2 += e * e;
      }
      if (res.kernels.space.n_xi > 0) {
        const double e = kernel_error_xi(est, spec.kernels, eval_cloud).err;
        e2 += e * e;
      }
      err2[task] = e2;
    } catch (const ConfigError& e) {
      throw ConfigError("rate study M=" + std::to_string(M) + " rep=" + std::to_string(rep) + ": " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("rate study M=" + std::to_string(M) + " rep=" + std::to_string(rep) + ": " + e.what());
    }
  });

  fit.exact_regime = true;
  for (std::size_t a = 0; a < nM; ++a) {
    RatePoint p;
    p.M = Ms[a];
    p.cells = cells[a];
    p.err2.assign(err2.begin() + static_cast<std::ptrdiff_t>(a * reps),
                  err2.begin() + static_cast<std::ptrdiff_t>((a + 1) * reps));
    const Stat s = summarize(p.err2);
    p.mean_err2 = s.mean;
    p.std_err2 = s.std;
    for (double v : p.err2)
      if (!(std::sqrt(v) < 1e-14)) fit.exact_regime = false;
    fit.points.push_back(std::move(p));
  }

  if (fit.exact_regime) {
    fit.slope = 0.0;
    fit.intercept = 0.0;
    return fit;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(nM);
  for (const auto& p : fit.points) {
    if (!(p.mean_err2 > 0.0)) throw NumericalError("rate study produced a zero mean error outside the exact regime");
    const double x = std::log(p.M / std::log(static_cast<double>(p.M)));
    const double y = std::log(p.mean_err2);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

nlohmann::json rate_to_json(const RateFit& fit) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : fit.points)
    pts.push_back({{"M", p.M}, {"cells", p.cells}, {"mean_err2", p.mean_err2}, {"std_err2", p.std_err2}, {"err2", p.err2}});
  return {{"points", pts},
          {"slope", fit.slope},
          {"intercept", fit.intercept},
          {"theory_slope", fit.theory_slope},
          {"s", fit.s},
          {"V", fit.V},
          {"exact_regime", fit.exact_regime}};
}

void write_rate_csv(const std::filesystem::path& file, const RateFit& fit) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << std::setprecision(17) << "M,cells,mean_err2,std_err2\n";
  for (const auto& p : fit.points) out << p.M << ',' << p.cells << ',' << p.mean_err2 << ',' << p.std_err2 << '\n';
}

void write_rate_plotdata(const std::filesystem::path& file, const RateFit& fit) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << std::setprecision(17) << "x,y,yerr,fit\n";
  for (const auto& p : fit.points) {
    const double x = std::log(p.M / std::log(static_cast<double>(p.M)));
    const double y = p.mean_err2 > 0.0 ? std::log(p.mean_err2) : -std::numeric_limits<double>::infinity();
    // error bar of log(mean) by first-order propagation
    const double yerr = p.mean_err2 > 0.0 ? p.std_err2 / p.mean_err2 : 0.0;
    out << x << ',' << y << ',' << yerr << ',' << fit.intercept + fit.slope * x << '\n';
  }
}

std::vector<double> prediction_grid(const PredictionConfig& cfg) {
  if (cfg.L < 2) throw ConfigError("prediction needs L >= 2");
  if (!(cfg.T_f > cfg.T)) throw ConfigError("prediction needs T < T_f");
  std::vector<double> t = make_time_grid(cfg.L, cfg.T);
  const double h = cfg.T / (cfg.L - 1);
  const int extra = std::max(1, static_cast<int>(std::ceil((cfg.T_f - cfg.T) / h - 1e-9)));
  const double h2 = (cfg.T_f - cfg.T) / extra;
  for (int j = 1; j <= extra; ++j) t.push_back(j == extra ? cfg.T_f : cfg.T + j * h2);
  return t;
}

PredictionResult trajectory_prediction_eval(const SystemSpec& truth, const KernelSet& est,
                                            const std::vector<State>& ics, const PredictionConfig& cfg) {
  if (ics.empty()) throw ConfigError("prediction needs at least one initial condition");
  PredictionResult res;
  res.times = prediction_grid(cfg);
  SystemSpec learned = truth;
  learned.kernels = est;

  const std::size_t n = ics.size();
  std::vector<Trajectory> ref(n), hat(n);
  std::vector<std::string> failure(n);
  parallel_for(n, cfg.threads, [&](std::size_t m) {
    try {
      ref[m] = integrate(truth, ics[m], res.times, cfg.tol);
    } catch (const NumericalError& e) {
      throw NumericalError("true system, initial condition " + std::to_string(m) + ": " + e.what());
    }
    try {
      hat[m] = integrate(learned, ics[m], res.times, cfg.tol);
    } catch (const NumericalError& e) {
      failure[m] = "initial condition " + std::to_string(m) + ": " + e.what();
    }
  });

  const std::size_t split = static_cast<std::size_t>(cfg.L);
  for (std::size_t m = 0; m < n; ++m) {
    if (!failure[m].empty()) {
      ++res.failures;
      res.failure_messages.push_back(failure[m]);
      continue;
    }
    const std::span<const State> a(ref[m].states), b(hat[m].states);
    const TrajError e1 = traj_error(a.first(split), b.first(split), truth);
    const TrajError e2 = traj_error(a.subspan(split - 1), b.subspan(split - 1), truth);
    std::vector<std::pair<std::string, double>> f = {
        {"traj_T", e1.traj},   {"traj_rel_T", e1.traj_rel},   {"x_rel_T", e1.x_rel},   {"v_rel_T", e1.v_rel},
        {"traj_Tf", e2.traj}, {"traj_rel_Tf", e2.traj_rel}, {"x_rel_Tf", e2.x_rel}, {"v_rel_Tf", e2.v_rel}};
    if (truth.has_xi) {
      f.emplace_back("xi_rel_T", e1.xi_rel);
      f.emplace_back("xi_rel_Tf", e2.xi_rel);
    }
    res.report.add_row(f);
  }
  return res;
}

}  // namespace kinfer
