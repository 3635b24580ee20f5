#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "kinfer/common.hpp"
#include "kinfer/diagnostics.hpp"
#include "kinfer/zoo.hpp"
#include "support.hpp"

using namespace kinfer;
using doctest::Approx;

namespace {

InitialDistribution box(std::uint64_t seed) {
  InitialDistribution d;
  d.x = ComponentSampler::uniform(0.0, 5.0);
  d.v = ComponentSampler::uniform(0.0, 5.0);
  d.seed = seed;
  return d;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) idx[j] = j;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) r[idx[j]] = static_cast<double>(j);
  return r;
}

}  // namespace

TEST_CASE("coercivity probe") {
  Coercivity c = coercivity_probe(Eigen::MatrixXd::Identity(3, 3));
  CHECK(c.sigma_min == 1.0);
  CHECK(c.sigma_max == 1.0);
  CHECK(c.condition == 1.0);
  c = coercivity_probe(Eigen::MatrixXd(Eigen::Vector2d(4.0, 1.0).asDiagonal()));
  CHECK(c.sigma_min == Approx(1.0));
  CHECK(c.sigma_max == Approx(4.0));
  CHECK(c.condition == Approx(4.0));
  c = coercivity_probe(Eigen::MatrixXd(Eigen::Vector2d(1.0, 0.0).asDiagonal()));
  CHECK(std::isinf(c.condition));

  testing::Rng rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = rng.integer(2, 8);
    Eigen::MatrixXd G(n + 3, n);
    for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = rng.normal();
    const Eigen::MatrixXd A = G.transpose() * G;
    c = coercivity_probe(A);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const double gmin = svd.singularValues()(n - 1), gmax = svd.singularValues()(0);
    CHECK(c.sigma_min == Approx(gmin * gmin).epsilon(1e-9));
    CHECK(c.sigma_max == Approx(gmax * gmax).epsilon(1e-9));
    CHECK(c.sigma_min == Approx(es.eigenvalues()(0)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(coercivity_probe(Eigen::MatrixXd(2, 3)), ConfigError);
}

TEST_CASE("cell schedule") {
  CHECK(schedule_cells(32, 2.0, 1, 10.0) == static_cast<int>(std::floor(10.0 * std::pow(32 / std::log(32.0), 0.2))));
  CHECK(schedule_cells(512, 2.0, 1, 10.0) > schedule_cells(32, 2.0, 1, 10.0));
  CHECK(schedule_cells(3, 2.0, 1, 0.01) == 1);
  CHECK_THROWS_AS(schedule_cells(1, 2.0, 1, 1.0), ConfigError);
}

TEST_CASE("rate study validation") {
  const SystemSpec s = make_model("cucker_smale", {}, 4, 2);
  RateStudyConfig cfg;
  cfg.dist = box(1);
  cfg.L = 3;
  cfg.reps = 3;
  const SampleCloud cloud;
  const RangeEstimate r;
  cfg.Ms = {8, 16, 32};
  CHECK_THROWS_AS(rate_study(s, cfg, cloud, r), ConfigError);
  cfg.Ms = {8, 16, 12, 32};
  CHECK_THROWS_AS(rate_study(s, cfg, cloud, r), ConfigError);
  cfg.Ms = {8, 10, 12, 14};
  CHECK_THROWS_AS(rate_study(s, cfg, cloud, r), ConfigError);
  cfg.Ms = {8, 16, 24, 32};
  cfg.reps = 2;
  CHECK_THROWS_AS(rate_study(s, cfg, cloud, r), ConfigError);
}

TEST_CASE("rate study: exact regime") {
  const SystemSpec s = make_model("cucker_smale", {{"kappa", 0.0}}, 4, 2);
  const TrajectoryDataset ref = generate_dataset(s, box(2), 10, 5, 1.0, {});
  RateStudyConfig cfg;
  cfg.dist = box(3);
  cfg.L = 5;
  cfg.T = 1.0;
  cfg.Ms = {4, 8, 16, 32};
  cfg.reps = 3;
  cfg.cells_scale = 2.0;
  const RateFit fit = rate_study(s, cfg, sample_cloud(ref, s), estimate_ranges(ref, s));
  CHECK(fit.exact_regime);
  CHECK(fit.slope == 0.0);
  CHECK(fit.theory_slope == Approx(-0.8));
  cfg.V = 2;
  CHECK(rate_study(s, cfg, sample_cloud(ref, s), estimate_ranges(ref, s)).theory_slope == Approx(-2.0 / 3.0));
}

TEST_CASE("prediction grid") {
  PredictionConfig cfg;
  cfg.L = 6;
  cfg.T = 5.0;
  cfg.T_f = 10.0;
  const auto t = prediction_grid(cfg);
  CHECK(t.size() == 11);
  CHECK(t[5] == 5.0);
  CHECK(t.back() == 10.0);
  cfg.T_f = 5.0;
  CHECK_THROWS_AS(prediction_grid(cfg), ConfigError);
}

TEST_CASE("prediction with the true kernels has zero error") {
  const SystemSpec s = make_model("fwep", {}, 5, 2);
  const auto ics = sample_initial_conditions(box(4), s, 3);
  PredictionConfig cfg;
  cfg.L = 11;
  const PredictionResult res = trajectory_prediction_eval(s, s.kernels, ics, cfg);
  CHECK(res.failures == 0);
  for (const auto& row : res.report.rows)
    for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("prediction error follows kernel error") {
  const SystemSpec s = make_model("fwep", {}, 6, 2);
  const TrajectoryDataset eval = generate_dataset(s, box(5), 40, 20, 5.0, {});
  const SampleCloud cloud = sample_cloud(eval, s);
  const RangeEstimate ranges = estimate_ranges(eval, s);
  const auto ics = sample_initial_conditions(box(6), s, 10);
  PredictionConfig pc;
  pc.L = 20;
  std::vector<double> kerr, terr;
  for (int cells : {1, 2, 4, 8, 16}) {
    const TrajectoryDataset ds = generate_dataset(s, box(7), 30, 20, 5.0, {});
    LearnConfig lc;
    lc.space[Channel::Energy].cells = {cells};
    lc.space[Channel::Alignment].cells = {cells};
    lc.space[Channel::Energy].degree = {0};
    lc.space[Channel::Alignment].degree = {0};
    lc.ranges = ranges;
    const KernelSet est = learn_kernels(ds, s, lc).kernels.to_kernel_set();
    kerr.push_back(kernel_error_EA(est, s.kernels, cloud).joint);
    terr.push_back(trajectory_prediction_eval(s, est, ics, pc).report.stat("traj_rel_T").mean);
  }
  CHECK(ranks(kerr) == ranks(terr));
}

TEST_CASE("failed estimated trajectories are counted and excluded") {
  const SystemSpec s = make_model("fwep", {}, 3, 1);
  KernelSet bad(1);
  Kernel k;
  k.fn = [](double r, std::span<const double>) { return 1e2 / (r * r * r * r); };
  bad.set(Channel::Energy, 0, 0, k);
  bad.set(Channel::Alignment, 0, 0, *s.kernels.get(Channel::Alignment, 0, 0));
  std::vector<State> ics = sample_initial_conditions(box(8), s, 2);
  PredictionConfig pc;
  pc.L = 6;
  const PredictionResult res = trajectory_prediction_eval(s, bad, ics, pc);
  CHECK(res.failures >= 1);
  CHECK(res.failures + static_cast<int>(res.report.rows.size()) == 2);
  CHECK(res.failure_messages.size() == static_cast<std::size_t>(res.failures));
}
