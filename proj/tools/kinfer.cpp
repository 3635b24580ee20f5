// kinfer: simulate agent systems and learn their interaction kernels.
//
//   kinfer simulate --config exp.json --out data/train
//   kinfer simulate --config exp.json --out data/eval --role eval
//   kinfer learn    --archive data/train --config exp.json --out run
//   kinfer evaluate --kernels run/kernels.json --archive data/eval --out run
//   kinfer predict  --kernels run/kernels.json --config exp.json --out run
//   kinfer converge --config exp.json --out rate
//   kinfer probe    --archive data/train --config exp.json --out run
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kinfer/archive.hpp"
#include "kinfer/common.hpp"
#include "kinfer/config.hpp"
#include "kinfer/diagnostics.hpp"
#include "kinfer/learn.hpp"
#include "kinfer/measures.hpp"
#include "kinfer/metrics.hpp"
#include "kinfer/simd/kernels.hpp"
#include "kinfer/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kinfer;

namespace {

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::optional<double> tol_rel;
  std::vector<std::string> sets;

  std::string archive;
  std::string kernels;
  std::string role = "train";
  std::string range_from;
  std::string ics = "fresh";
  bool csv = false;
  bool dump_normal = false;
};

std::string g_stage = "startup";

void stage(const std::string& s) { g_stage = s; }

ExperimentConfig config_of(const Options& o) {
  stage("config");
  ExperimentConfig cfg = load_config(o.config, o.sets);
  if (o.seed) cfg.seed = cfg.initial.seed = *o.seed;
  if (o.tol_rel) {
    cfg.tol_rel = *o.tol_rel;
    cfg.validate();
  }
  return cfg;
}

void write_json(const fs::path& file, const json& j) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << std::setw(2) << j << '\n';
}

TrajectoryDataset load_dataset(const std::string& dir, DerivSource want) {
  stage("read archive");
  if (dir.empty()) throw ConfigError("--archive is required");
  TrajectoryDataset ds = read_archive(dir);
  if (want == DerivSource::FiniteDifference && ds.source != DerivSource::FiniteDifference) {
    stage("finite differences");
    ds = finite_difference_derivs(ds);
  }
  return ds;
}

int cmd_simulate(const Options& o) {
  ExperimentConfig cfg = config_of(o);
  stage("model");
  const SystemSpec spec = make_system(cfg);
  if (o.role != "train" && o.role != "eval") throw ConfigError("--role must be train or eval");
  const bool eval = o.role == "eval";
  const int M = eval ? cfg.eval_M() : cfg.M;
  stage("simulate");
  TrajectoryDataset ds = generate_dataset(spec, cfg.initial, M, cfg.L, cfg.T, cfg.tol, resolve_threads(o.threads),
                                          eval ? "eval" : "ic");
  stage("write archive");
  write_archive(o.out, ds, {{"role", o.role}, {"initial", distribution_to_json(cfg.initial)}, {"config", config_to_json(cfg)}});
  if (o.csv) export_csv(fs::path(o.out) / "data.csv", ds);
  std::cout << "wrote " << M << " trajectories x " << cfg.L << " times of " << spec.name << " (N=" << spec.N
            << ", d=" << spec.d << ") to " << o.out << '\n';
  return 0;
}

int cmd_learn(const Options& o) {
  ExperimentConfig cfg = config_of(o);
  TrajectoryDataset ds = load_dataset(o.archive, cfg.derivs);
  stage("system");
  const SystemSpec spec = spec_from_json(ds.system);
  const unsigned threads = resolve_threads(o.threads);

  LearnConfig lc;
  lc.space = cfg.space;
  lc.tol_rel = cfg.tol_rel;
  lc.threads = threads;
  if (!o.range_from.empty()) {
    stage("ranges");
    const TrajectoryDataset ref = read_archive(o.range_from);
    RangeEstimate r = estimate_ranges(ref, spec, threads);
    r.merge(estimate_ranges(ds, spec, threads));
    lc.ranges = r;
  }
  stage("learn");
  LearnResult res = learn_kernels(ds, spec, lc);

  stage("write kernels");
  fs::create_directories(o.out);
  save_kernels(fs::path(o.out) / "kernels.json", res.kernels);
  json report = res.kernels.report;
  report["ranges"] = ranges_to_json(res.ranges);
  report["simd"] = std::string(simd::isa_name(simd::active().isa));
  write_json(fs::path(o.out) / "learn_report.json", report);
  if (o.dump_normal) {
    if (res.ne_EA) write_normal_equations_csv(fs::path(o.out) / "normal_EA.csv", *res.ne_EA);
    if (res.ne_xi) write_normal_equations_csv(fs::path(o.out) / "normal_xi.csv", *res.ne_xi);
  }

  auto show = [](const char* tag, const NormalEquations& ne, const SolveResult& s, double loss) {
    std::cout << tag << ": n=" << ne.n << " rank=" << s.rank << " sigma_min=" << s.sigma_min
              << " sigma_max=" << s.sigma_max << " loss=" << loss << '\n';
    if (ne.outside > 0)
      std::cerr << "warning: " << ne.outside << " " << tag
                << " pair samples fell outside the hypothesis supports and were ignored\n";
  };
  if (res.ne_EA) show("EA", *res.ne_EA, *res.solve_EA, res.loss_EA);
  if (res.ne_xi) show("xi", *res.ne_xi, *res.solve_xi, res.loss_xi);
  return 0;
}

void write_kernel_plotdata(const fs::path& dir, const EstimatedKernels& est, const SystemSpec& truth) {
  constexpr int kPoints = 200;
  for (const auto& b : est.space.blocks) {
    const fs::path file = dir / ("plotdata_kernel_" + std::string(channel_name(b.channel)) + "_" +
                                 std::to_string(b.k) + std::to_string(b.kp) + ".csv");
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + file.string());
    out << std::setprecision(17) << "r";
    std::vector<double> s(static_cast<std::size_t>(b.arity()));
    for (int j = 0; j < b.arity(); ++j) {
      s[j] = 0.5 * (b.axes[j + 1].lo + b.axes[j + 1].hi);
      out << ",s" << j;
    }
    out << ",estimate,truth,empty_cell\n";
    const Kernel* tk = truth.kernels.get(b.channel, b.k, b.kp);
    for (int p = 0; p < kPoints; ++p) {
      const double r = b.axes[0].lo + (b.axes[0].hi - b.axes[0].lo) * p / (kPoints - 1);
      const Reconstruction rc = est.evaluate(b.channel, b.k, b.kp, r, s);
      out << r;
      for (double v : s) out << ',' << v;
      out << ',' << rc.value << ',' << (tk ? (*tk)(r, s) : 0.0) << ',' << (rc.empty_cell ? 1 : 0) << '\n';
    }
  }
}

int cmd_evaluate(const Options& o) {
  ExperimentConfig cfg = config_of(o);
  stage("read kernels");
  if (o.kernels.empty()) throw ConfigError("--kernels is required");
  const EstimatedKernels est = load_kernels(o.kernels);
  const TrajectoryDataset ds = load_dataset(o.archive, DerivSource::Observed);
  stage("system");
  const SystemSpec spec = spec_from_json(ds.system);
  const unsigned threads = resolve_threads(o.threads);

  stage("measures");
  const SampleCloud cloud = sample_cloud(ds, spec, threads);
  const RangeEstimate ranges = estimate_ranges(ds, spec, threads);

  stage("kernel errors");
  const KernelSet estk = est.to_kernel_set();
  ErrorReport report;
  std::vector<std::pair<std::string, double>> row;
  if (est.space.n_EA > 0)
    for (auto& f : fields(kernel_error_EA(estk, spec.kernels, cloud))) row.push_back(f);
  if (est.space.n_xi > 0)
    for (auto& f : fields(kernel_error_xi(estk, spec.kernels, cloud))) row.push_back(f);
  report.add_row(row);

  stage("write reports");
  fs::create_directories(o.out);
  report.write_csv(fs::path(o.out) / "errors.csv");
  report.write_json(fs::path(o.out) / "errors.json");
  std::vector<MeasureKind> kinds;
  if (est.space.has(Channel::Energy)) kinds.push_back(MeasureKind::E);
  if (est.space.has(Channel::Alignment)) kinds.push_back(MeasureKind::A);
  if (est.space.has(Channel::Energy) && est.space.has(Channel::Alignment)) kinds.push_back(MeasureKind::EA);
  if (est.space.has(Channel::Environment)) kinds.push_back(MeasureKind::Xi);
  for (MeasureKind k : kinds) {
    const EmpiricalMeasure m = empirical_measure(cloud, ranges, k, cfg.bins);
    write_histogram_csv(fs::path(o.out) / ("hist_" + std::string(measure_kind_name(k)) + ".csv"), m);
  }
  write_kernel_plotdata(o.out, est, spec);

  for (const auto& [name, value] : row) std::cout << name << " = " << value << '\n';
  return 0;
}

int cmd_predict(const Options& o) {
  ExperimentConfig cfg = config_of(o);
  stage("read kernels");
  if (o.kernels.empty()) throw ConfigError("--kernels is required");
  const EstimatedKernels est = load_kernels(o.kernels);
  stage("system");
  const SystemSpec spec = est.system.empty() ? make_system(cfg) : spec_from_json(est.system);
  if (o.ics != "train" && o.ics != "fresh") throw ConfigError("--ics must be train or fresh");
  InitialDistribution dist = cfg.initial;
  const std::vector<State> ics = sample_initial_conditions(dist, spec, cfg.M, o.ics == "train" ? "ic" : "predict");

  stage("predict");
  PredictionConfig pc;
  pc.L = cfg.L;
  pc.T = cfg.T;
  pc.T_f = cfg.T_f;
  pc.tol = cfg.tol;
  pc.threads = resolve_threads(o.threads);
  const PredictionResult res = trajectory_prediction_eval(spec, est.to_kernel_set(), ics, pc);

  stage("write reports");
  fs::create_directories(o.out);
  res.report.write_csv(fs::path(o.out) / "traj_errors.csv");
  json j = res.report.to_json();
  j["failures"] = res.failures;
  j["failure_messages"] = res.failure_messages;
  j["ics"] = o.ics;
  write_json(fs::path(o.out) / "traj_errors.json", j);

  if (!ics.empty()) {
    const Trajectory a = integrate(spec, ics[0], res.times, cfg.tol);
    SystemSpec learned = spec;
    learned.kernels = est.to_kernel_set();
    std::ofstream out(fs::path(o.out) / "plotdata_traj.csv", std::ios::trunc);
    out << std::setprecision(17) << "t,i,coord,x_true,x_est\n";
    try {
      const Trajectory b = integrate(learned, ics[0], res.times, cfg.tol);
      for (std::size_t l = 0; l < res.times.size(); ++l)
        for (int i = 0; i < spec.N; ++i)
          for (int c = 0; c < spec.d; ++c)
            out << res.times[l] << ',' << i << ',' << c << ',' << a.states[l].X[i * spec.d + c] << ','
                << b.states[l].X[i * spec.d + c] << '\n';
    } catch (const NumericalError&) {
      // reported through the failure count
    }
  }

  const char* rows[] = {"x_rel_T", "v_rel_T", "traj_rel_T", "x_rel_Tf", "v_rel_Tf", "traj_rel_Tf"};
  if (!res.report.rows.empty())
    for (const char* name : rows) {
      const Stat s = res.report.stat(name);
      std::cout << name << ": mean " << s.mean << " std " << s.std << '\n';
    }
  if (res.failures > 0) std::cerr << "warning: " << res.failures << " estimated trajectories failed to integrate\n";
  return 0;
}

int cmd_converge(const Options& o) {
  ExperimentConfig cfg = config_of(o);
  stage("model");
  const SystemSpec spec = make_system(cfg);
  const unsigned threads = resolve_threads(o.threads);

  stage("reference data");
  const TrajectoryDataset ref = generate_dataset(spec, cfg.initial, cfg.eval_M(), cfg.L, cfg.T, cfg.tol, threads, "eval");
  const SampleCloud cloud = sample_cloud(ref, spec, threads);
  const RangeEstimate box = estimate_ranges(ref, spec, threads);

  stage("rate study");
  RateStudyConfig rc;
  rc.dist = cfg.initial;
  rc.L = cfg.L;
  rc.T = cfg.T;
  rc.tol = cfg.tol;
  rc.space = cfg.space;
  rc.Ms = cfg.converge.Ms;
  rc.reps = cfg.reps;
  rc.s = cfg.converge.s;
  rc.V = cfg.converge.V;
  rc.cells_scale = cfg.converge.cells_scale;
  rc.tol_rel = cfg.tol_rel;
  rc.threads = threads;
  const RateFit fit = rate_study(spec, rc, cloud, box);

  stage("write reports");
  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "rate.json", rate_to_json(fit));
  write_rate_csv(fs::path(o.out) / "rate.csv", fit);
  write_rate_plotdata(fs::path(o.out) / "plotdata_rate.csv", fit);
  std::cout << "slope " << fit.slope << " (theory " << fit.theory_slope << ")"
            << (fit.exact_regime ? " exact regime" : "") << '\n';
  return 0;
}

int cmd_probe(const Options& o) {
  ExperimentConfig cfg = config_of(o);
  TrajectoryDataset ds = load_dataset(o.archive, cfg.derivs);
  stage("system");
  const SystemSpec spec = spec_from_json(ds.system);
  const unsigned threads = resolve_threads(o.threads);

  stage("assemble");
  const RangeEstimate ranges = estimate_ranges(ds, spec, threads);
  const HypothesisSpace space = build_space(spec, ranges, cfg.space);
  json j = json::object();
  auto probe = [&](const char* tag, const NormalEquations& ne) {
    const Coercivity c = coercivity_probe(ne);
    j[tag] = {{"n", ne.n},
              {"sigma_min", c.sigma_min},
              {"sigma_max", c.sigma_max},
              {"condition", std::isfinite(c.condition) ? json(c.condition) : json("inf")}};
    std::cout << tag << ": sigma_min=" << c.sigma_min << " sigma_max=" << c.sigma_max << " condition=" << c.condition
              << '\n';
  };
  if (space.n_EA > 0) probe("EA", assemble_EA(ds, spec, space, threads));
  if (space.n_xi > 0) probe("xi", assemble_xi(ds, spec, space, threads));

  stage("write reports");
  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "probe.json", j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate interacting agent systems and learn their interaction kernels from trajectories"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment JSON file");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "random seed (overrides the config)");
    sub->add_option("--threads", o.threads, "worker threads (default: KINFER_THREADS or all cores)");
    sub->add_option("--tol-rel", o.tol_rel, "relative singular value cutoff of the solver");
    sub->add_option("--set", o.sets, "config override key=value (repeatable)");
  };

  auto* sim = app.add_subcommand("simulate", "generate a trajectory archive");
  common(sim);
  sim->add_option("--role", o.role, "train (M trajectories) or eval (M_rho trajectories)");
  sim->add_flag("--csv", o.csv, "also write data.csv");

  auto* learn = app.add_subcommand("learn", "estimate kernels from an archive");
  common(learn);
  learn->add_option("--archive", o.archive, "trajectory archive directory")->required();
  learn->add_option("--range-from", o.range_from, "archive whose pair ranges widen the hypothesis supports");
  learn->add_flag("--dump-normal", o.dump_normal, "write the normal equations as CSV");

  auto* eval = app.add_subcommand("evaluate", "kernel errors on an evaluation archive");
  common(eval);
  eval->add_option("--kernels", o.kernels, "estimated kernels JSON")->required();
  eval->add_option("--archive", o.archive, "evaluation archive directory")->required();

  auto* pred = app.add_subcommand("predict", "trajectory errors of the estimated system");
  common(pred);
  pred->add_option("--kernels", o.kernels, "estimated kernels JSON")->required();
  pred->add_option("--ics", o.ics, "initial conditions: train or fresh");

  auto* conv = app.add_subcommand("converge", "empirical convergence rate in M");
  common(conv);

  auto* probe = app.add_subcommand("probe", "singular values of the learning matrix");
  common(probe);
  probe->add_option("--archive", o.archive, "trajectory archive directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (learn->parsed()) return cmd_learn(o);
    if (eval->parsed()) return cmd_evaluate(o);
    if (pred->parsed()) return cmd_predict(o);
    if (conv->parsed()) return cmd_converge(o);
    if (probe->parsed()) return cmd_probe(o);
  } catch (const ConfigError& e) {
    std::cerr << "kinfer: " << g_stage << ": configuration error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "kinfer: " << g_stage << ": numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "kinfer: " << g_stage << ": " << e.what() << '\n';
    return 3;
  }
  return 2;
}
