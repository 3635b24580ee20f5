#include <cmath>

#include <doctest.h>

#include "kinfer/common.hpp"
#include "kinfer/learn.hpp"
#include "kinfer/zoo.hpp"
#include "support.hpp"

using namespace kinfer;
using doctest::Approx;

namespace {

InitialDistribution box(std::uint64_t seed) {
  InitialDistribution d;
  d.x = ComponentSampler::uniform(0.0, 5.0);
  d.v = ComponentSampler::uniform(0.0, 5.0);
  d.xi = ComponentSampler::uniform(0.0, 1.0);
  d.seed = seed;
  return d;
}

// Single snapshot of a hand-built state with derivatives from the true rhs.
TrajectoryDataset snapshot(const SystemSpec& spec, State s) {
  TrajectoryDataset ds;
  ds.N = spec.N;
  ds.d = spec.d;
  ds.K = spec.K;
  ds.has_xi = spec.has_xi;
  ds.times = {0.0};
  Trajectory tr;
  tr.derivs.push_back(rhs(spec, s));
  tr.states.push_back(std::move(s));
  ds.trajectories.push_back(std::move(tr));
  return ds;
}

SystemSpec constant_kernel(Channel c, bool xi) {
  SystemSpec s;
  s.name = "custom";
  s.N = 2;
  s.d = 1;
  s.type_of = {0, 0};
  s.masses = {1.0, 1.0};
  s.kernels = KernelSet(1);
  s.features = FeatureMapSet(1);
  s.has_xi = xi;
  Kernel k;
  k.fn = [](double, std::span<const double>) { return 1.0; };
  s.kernels.set(c, 0, 0, k);
  s.finalize();
  return s;
}

// Trajectory whose velocity follows a prescribed function of time.
TrajectoryDataset velocity_profile(double (*v)(double), int L, double T, bool first_order = false) {
  TrajectoryDataset ds;
  ds.N = 1;
  ds.d = 1;
  ds.K = 1;
  ds.first_order = first_order;
  ds.times = make_time_grid(L, T);
  Trajectory tr;
  for (double t : ds.times) {
    State s;
    s.t = t;
    s.X = {first_order ? v(t) : 0.0};
    s.V = {first_order ? 0.0 : v(t)};
    tr.states.push_back(s);
    tr.derivs.push_back({{0.0}, {}});
  }
  ds.trajectories.push_back(tr);
  return ds;
}

}  // namespace

TEST_CASE("finite differences") {
  TrajectoryDataset c = finite_difference_derivs(velocity_profile([](double) { return 0.7; }, 5, 1.0));
  CHECK(c.source == DerivSource::FiniteDifference);
  for (const auto& d : c.trajectories[0].derivs) CHECK(d.accel[0] == 0.0);

  c = finite_difference_derivs(velocity_profile([](double t) { return t; }, 5, 1.0));
  for (const auto& d : c.trajectories[0].derivs) CHECK(d.accel[0] == 1.0);

  c = finite_difference_derivs(velocity_profile([](double t) { return t * t; }, 11, 1.0));
  CHECK(c.trajectories[0].derivs[0].accel[0] == Approx(0.1).epsilon(1e-12));
  CHECK(c.trajectories[0].derivs[0].accel[0] - 0.0 == Approx(0.1).epsilon(1e-12));  // error h at t = 0
  CHECK(c.trajectories[0].derivs[10].accel[0] == Approx(1.9).epsilon(1e-12));       // backward at the end

  c = finite_difference_derivs(velocity_profile([](double t) { return 3.0 * t; }, 4, 0.75, true));
  for (const auto& d : c.trajectories[0].derivs) CHECK(d.accel[0] == Approx(3.0).epsilon(1e-14));

  CHECK_THROWS_AS(finite_difference_derivs(velocity_profile([](double t) { return t; }, 1, 0.0)), ConfigError);
}

TEST_CASE("assembly: two-agent hand example") {
  const SystemSpec s = constant_kernel(Channel::Energy, false);
  State st = make_state(s);
  st.X = {0.0, 2.0};
  const TrajectoryDataset ds = snapshot(s, st);
  SpaceBlock b;
  b.axes.push_back({0.0, 3.0, 1, 0});
  const HypothesisSpace sp = make_space(1, {b});
  const NormalEquations ne = assemble_EA(ds, s, sp);
  CHECK(ne.n == 1);
  CHECK(ne.A(0, 0) == Approx(1.0).epsilon(1e-15));
  CHECK(ne.b(0) == Approx(1.0).epsilon(1e-15));
  CHECK(ne.count == 1);
  CHECK(solve(ne).alpha(0) == Approx(1.0));

  CHECK_THROWS_AS(assemble_xi(ds, s, sp), ConfigError);
}

TEST_CASE("assembly: xi hand example") {
  const SystemSpec s = constant_kernel(Channel::Environment, true);
  State st = make_state(s);
  st.X = {0.0, 2.0};
  st.Xi = {0.0, 1.0};
  SpaceBlock b;
  b.channel = Channel::Environment;
  b.axes.push_back({0.0, 3.0, 1, 0});
  const HypothesisSpace sp = make_space(1, {b});
  const NormalEquations ne = assemble_xi(snapshot(s, st), s, sp);
  CHECK(ne.A(0, 0) == Approx(0.25).epsilon(1e-15));
  CHECK(ne.b(0) == Approx(0.25).epsilon(1e-15));
  CHECK(solve(ne).alpha(0) == Approx(1.0));

  st.Xi = {0.3, 0.3};
  const NormalEquations flat = assemble_xi(snapshot(s, st), s, sp);
  CHECK(flat.A(0, 0) == 0.0);
}

TEST_CASE("assembly: zero derivatives and forces give b = 0") {
  testing::Rng rng(31);
  SystemSpec s = testing::random_spec(rng, 4, 1, 2, false, false);
  s.force_x = nullptr;
  TrajectoryDataset ds = testing::random_dataset(rng, s, 2, 3);
  for (auto& tr : ds.trajectories)
    for (auto& d : tr.derivs) std::fill(d.accel.begin(), d.accel.end(), 0.0);
  SpaceBlock b;
  b.axes.push_back({0.0, 5.0, 3, 1});
  const NormalEquations ne = assemble_EA(ds, s, make_space(1, {b}));
  CHECK(ne.b.norm() == 0.0);
  CHECK(ne.A.norm() > 0.0);
}

TEST_CASE("assembly: duplicating trajectories leaves (A, b) unchanged") {
  testing::Rng rng(32);
  const testing::OracleCase c = testing::random_oracle_case(rng);
  const TrajectoryDataset twice = concatenate(c.ds, c.ds);
  auto assemble = [&](const TrajectoryDataset& ds) {
    return c.tag == SystemTag::EA ? assemble_EA(ds, c.spec, c.space) : assemble_xi(ds, c.spec, c.space);
  };
  const NormalEquations a = assemble(c.ds), b = assemble(twice);
  CHECK((a.A - b.A).norm() <= 1e-14 * (1.0 + a.A.norm()));
  CHECK((a.b - b.b).norm() <= 1e-14 * (1.0 + a.b.norm()));
}

TEST_CASE("property: assembly matches the naive oracle") {
  testing::Rng rng(33);
  for (int trial = 0; trial < 30; ++trial) {
    const testing::OracleCase c = testing::random_oracle_case(rng);
    const NormalEquations ne =
        c.tag == SystemTag::EA ? assemble_EA(c.ds, c.spec, c.space) : assemble_xi(c.ds, c.spec, c.space);
    CHECK(testing::compare(ne, testing::naive_normal_equations(c.ds, c.spec, c.space, c.tag)) <= 1e-12);
  }
}

TEST_CASE("property: assembled matrices are symmetric positive semidefinite") {
  testing::Rng rng(34);
  for (int trial = 0; trial < 30; ++trial) {
    const testing::OracleCase c = testing::random_oracle_case(rng);
    const NormalEquations ne =
        c.tag == SystemTag::EA ? assemble_EA(c.ds, c.spec, c.space) : assemble_xi(c.ds, c.spec, c.space);
    CHECK((ne.A - ne.A.transpose()).norm() <= 1e-12 * (1e-300 + ne.A.norm()));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ne.A);
    const double smax = es.eigenvalues().cwiseAbs().maxCoeff();
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * smax);
  }
}

TEST_CASE("property: assembly is linear in the data") {
  testing::Rng rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    const testing::OracleCase c = testing::random_oracle_case(rng);
    const TrajectoryDataset other = testing::random_dataset(rng, c.spec, rng.integer(1, 4), c.ds.L());
    auto assemble = [&](const TrajectoryDataset& ds) {
      return c.tag == SystemTag::EA ? assemble_EA(ds, c.spec, c.space) : assemble_xi(ds, c.spec, c.space);
    };
    const NormalEquations a = assemble(c.ds), b = assemble(other), ab = assemble(concatenate(c.ds, other));
    const double ma = c.ds.M(), mb = other.M();
    const Eigen::MatrixXd A = (ma * a.A + mb * b.A) / (ma + mb);
    const Eigen::VectorXd bb = (ma * a.b + mb * b.b) / (ma + mb);
    CHECK((ab.A - A).norm() <= 1e-12 * (1e-300 + A.norm()));
    CHECK((ab.b - bb).norm() <= 1e-12 * (1e-300 + bb.norm()));
  }
}

TEST_CASE("assembly does not depend on the worker count") {
  const SystemSpec s = make_model("hetero_toy", {}, 6, 2);
  const TrajectoryDataset ds = generate_dataset(s, box(36), 11, 6, 2.0, {});
  SpaceConfig cfg;
  cfg[Channel::Energy].cells = {4};
  cfg[Channel::Alignment].cells = {3};
  const HypothesisSpace sp = build_space(s, estimate_ranges(ds, s), cfg);
  const NormalEquations a = assemble_EA(ds, s, sp, 1), b = assemble_EA(ds, s, sp, 3);
  CHECK(a.A == b.A);
  CHECK(a.b == b.b);
  CHECK(a.c == b.c);
}

TEST_CASE("solve") {
  NormalEquations ne;
  ne.n = 3;
  ne.A = Eigen::MatrixXd::Identity(3, 3);
  ne.b = Eigen::Vector3d(1.0, -2.0, 0.5);
  SolveResult r = solve(ne);
  CHECK((r.alpha - ne.b).norm() <= 1e-15);
  CHECK(r.rank == 3);
  CHECK(r.sigma_min == 1.0);

  ne.n = 2;
  ne.A = Eigen::Vector2d(1.0, 0.0).asDiagonal();
  ne.b = Eigen::Vector2d(2.0, 0.0);
  r = solve(ne);
  CHECK(r.alpha(0) == Approx(2.0));
  CHECK(r.alpha(1) == 0.0);
  CHECK(r.rank == 1);
  CHECK(r.sigma_min == 0.0);

  ne.A << 2.0, 1.0, 1.0, 2.0;
  ne.b = Eigen::Vector2d(3.0, 3.0);
  r = solve(ne);
  CHECK(r.alpha(0) == Approx(1.0).epsilon(1e-14));
  CHECK(r.alpha(1) == Approx(1.0).epsilon(1e-14));
  CHECK(r.sigma_max == Approx(3.0));

  CHECK_THROWS_AS(solve(ne, 0.0), ConfigError);
  CHECK_THROWS_AS(solve(NormalEquations{}), ConfigError);
  ne.A(0, 0) = std::nan("");
  CHECK_THROWS_AS(solve(ne), NumericalError);
}

TEST_CASE("learning recovers kernels in the span") {
  testing::Rng rng(37);
  const testing::InSpan sys = testing::in_span_system(rng, "fwep", 6, 2, 0.5, 4.5, 4, 1);
  const TrajectoryDataset ds = generate_dataset(sys.spec, box(38), 20, 10, 5.0, {});
  LearnConfig cfg;
  cfg.space = testing::fixed_box_config(0.5, 4.5, 4, 1);
  const LearnResult res = learn_kernels(ds, sys.spec, cfg);
  REQUIRE(res.solve_EA);
  REQUIRE(res.solve_EA->sigma_min > 1e-6 * res.solve_EA->sigma_max);
  CHECK(testing::rel_l2(res.kernels.alpha_EA, sys.truth.alpha_EA) < 1e-8);
  CHECK(res.loss_EA < 1e-16);
  CHECK(std::abs(empirical_loss_EA(ds, sys.spec, res.kernels.to_kernel_set()) - res.loss_EA) < 1e-12);
}

TEST_CASE("learning from zero-kernel data gives zero coefficients") {
  const SystemSpec s = make_model("cucker_smale", {{"kappa", 0.0}}, 5, 2);
  const TrajectoryDataset ds = generate_dataset(s, box(39), 4, 6, 1.0, {});
  LearnConfig cfg;
  cfg.space[Channel::Alignment].cells = {5};
  const LearnResult res = learn_kernels(ds, s, cfg);
  CHECK(res.ne_EA->b.norm() == 0.0);
  for (double a : res.kernels.alpha_EA) CHECK(a == 0.0);
}

TEST_CASE("property: the solution minimizes the empirical loss") {
  const SystemSpec s = make_model("fwep", {}, 6, 2);
  const TrajectoryDataset ds = generate_dataset(s, box(40), 8, 10, 5.0, {});
  LearnConfig cfg;
  cfg.space[Channel::Energy].cells = {6};
  cfg.space[Channel::Alignment].cells = {6};
  const LearnResult res = learn_kernels(ds, s, cfg);
  const Eigen::VectorXd alpha = res.solve_EA->alpha;
  const double base = quadratic_loss(*res.ne_EA, alpha);
  CHECK(base == Approx(res.loss_EA));
  testing::Rng rng(41);
  for (int p = 0; p < 20; ++p) {
    Eigen::VectorXd delta(alpha.size());
    for (Eigen::Index j = 0; j < delta.size(); ++j) delta(j) = rng.normal();
    delta *= 1e-3 * alpha.norm() / delta.norm();
    CHECK(base <= quadratic_loss(*res.ne_EA, alpha + delta) + 1e-12);
  }
  // the normal-equation loss agrees with the residuals computed directly
  CHECK(empirical_loss_EA(ds, s, res.kernels.to_kernel_set()) == Approx(base).epsilon(1e-8));
}

TEST_CASE("xi channel learning") {
  const SystemSpec s = make_model("xi_toy", {}, 6, 2);
  const TrajectoryDataset ds = generate_dataset(s, box(42), 10, 10, 2.0, {});
  LearnConfig cfg;
  cfg.space[Channel::Alignment].cells = {8};
  cfg.space[Channel::Environment].cells = {8};
  const LearnResult res = learn_kernels(ds, s, cfg);
  REQUIRE(res.ne_xi);
  CHECK(res.kernels.space.n_xi == 16);
  const SpaceBlock* b = res.kernels.space.find(Channel::Environment, 0, 0);
  const double r = 0.5 * (b->axes[0].lo + b->axes[0].hi);
  CHECK(res.kernels.evaluate(Channel::Environment, 0, 0, r, {}).value == Approx(std::exp(-r)).epsilon(0.05));
}

TEST_CASE("first-order systems learn only the energy channel") {
  const SystemSpec s = make_model("opinion_first_order", {{"radius", 2.0}}, 6, 1);
  const TrajectoryDataset ds = generate_dataset(s, box(43), 10, 10, 1.0, {});
  LearnConfig cfg;
  cfg.space[Channel::Energy].cells = {4};
  cfg.space[Channel::Energy].box = {{0.0, 2.0}};
  cfg.space[Channel::Energy].degree = {0};
  const LearnResult res = learn_kernels(ds, s, cfg);
  CHECK(!res.kernels.space.has(Channel::Alignment));
  for (double a : res.kernels.alpha_EA) CHECK(a == Approx(1.0).epsilon(1e-6));
}
