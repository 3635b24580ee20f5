#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "kinfer/common.hpp"
#include "kinfer/hypothesis.hpp"
#include "kinfer/zoo.hpp"
#include "support.hpp"

using namespace kinfer;
using doctest::Approx;

namespace {

SpaceBlock block1d(double lo, double hi, int cells, int degree, Channel c = Channel::Energy) {
  SpaceBlock b;
  b.channel = c;
  b.axes.push_back({lo, hi, cells, degree});
  return b;
}

RangeEstimate ranges_of(const SystemSpec& s, std::uint64_t seed) {
  InitialDistribution d;
  d.x = ComponentSampler::uniform(0.0, 5.0);
  d.v = ComponentSampler::uniform(0.0, 5.0);
  d.seed = seed;
  return estimate_ranges(generate_dataset(s, d, 4, 6, 1.0, {}), s);
}

}  // namespace

TEST_CASE("space sizes") {
  HypothesisSpace one = make_space(1, {block1d(0.0, 2.0, 1, 0)});
  CHECK(one.n_EA == 1);
  BasisValues bv;
  eval_basis(one.blocks[0], 1.3, {}, bv);
  REQUIRE(bv.count == 1);
  CHECK(bv.value[0] == 1.0);

  const SystemSpec fw = make_model("fwep", {}, 10, 2);
  SpaceConfig cfg;
  cfg[Channel::Energy].cells = {61};
  cfg[Channel::Alignment].cells = {61};
  const HypothesisSpace f = build_space(fw, ranges_of(fw, 1), cfg);
  CHECK(f.find(Channel::Energy, 0, 0)->dim == 122);
  CHECK(f.find(Channel::Alignment, 0, 0)->offset == 122);
  CHECK(f.n_EA == 244);

  const SystemSpec ad = make_model("anticipation", {}, 10, 2);
  cfg[Channel::Energy].cells = {14};
  const HypothesisSpace a = build_space(ad, ranges_of(ad, 2), cfg);
  CHECK(a.find(Channel::Energy, 0, 0)->dim == 784);
  CHECK(a.find(Channel::Energy, 0, 0)->axes.size() == 2);

  const SystemSpec h = make_model("hetero_toy", {}, 6, 2);
  cfg = SpaceConfig{};
  cfg[Channel::Energy].cells = {3};
  cfg[Channel::Alignment].cells = {2};
  const HypothesisSpace hs = build_space(h, ranges_of(h, 3), cfg);
  CHECK(hs.blocks.size() == 8);
  CHECK(hs.n_EA == 4 * 6 + 4 * 4);
  CHECK(hs.find(Channel::Energy, 1, 0)->offset == 12);
  CHECK(hs.find(Channel::Alignment, 0, 0)->offset == 24);
  CHECK(hs.n_xi == 0);
}

TEST_CASE("space configuration errors") {
  const SystemSpec fw = make_model("fwep", {}, 4, 2);
  const RangeEstimate r = ranges_of(fw, 4);
  SpaceConfig cfg;
  cfg[Channel::Energy].degree = {3};
  CHECK_THROWS_AS(build_space(fw, r, cfg), ConfigError);
  cfg = SpaceConfig{};
  cfg[Channel::Energy].cells = {0};
  CHECK_THROWS_AS(build_space(fw, r, cfg), ConfigError);
  cfg = SpaceConfig{};
  cfg[Channel::Energy].box = {{2.0, 2.0}};
  cfg[Channel::Energy].cells = {4};
  CHECK_THROWS_AS(build_space(fw, r, cfg), ConfigError);
  cfg[Channel::Energy].cells = {1};
  CHECK(build_space(fw, r, cfg).find(Channel::Energy, 0, 0)->dim == 2);
  cfg[Channel::Energy].box = {{3.0, 1.0}};
  CHECK_THROWS_AS(build_space(fw, r, cfg), ConfigError);
  cfg = SpaceConfig{};
  cfg[Channel::Environment].enabled = true;
  CHECK_THROWS_AS(build_space(fw, r, cfg), ConfigError);

  CHECK_THROWS_AS(make_space(1, {block1d(0, 1, 1, 0), block1d(0, 1, 2, 0)}), ConfigError);
}

TEST_CASE("basis evaluation") {
  const HypothesisSpace s = make_space(1, {block1d(0.0, 4.0, 2, 1)});
  BasisValues bv;
  eval_basis(s.blocks[0], 0.5, {}, bv);
  REQUIRE(bv.count == 2);
  CHECK(bv.index[0] == 0);
  CHECK(bv.value[0] == 1.0);
  CHECK(bv.index[1] == 1);
  CHECK(bv.value[1] == Approx(0.25));

  eval_basis(s.blocks[0], 4.5, {}, bv);
  CHECK(bv.count == 0);
  eval_basis(s.blocks[0], -0.1, {}, bv);
  CHECK(bv.count == 0);
  eval_basis(s.blocks[0], 4.0, {}, bv);
  REQUIRE(bv.count == 2);
  CHECK(bv.index[0] == 2);
  CHECK(bv.value[1] == Approx(1.0));
}

TEST_CASE("reconstruct") {
  const HypothesisSpace s = make_space(1, {block1d(0.0, 4.0, 2, 1)});
  const std::vector<double> zero(4, 0.0);
  CHECK(reconstruct(s, zero, Channel::Energy, 0, 0, 1.0, {}) == 0.0);
  const std::vector<double> pick{0.0, 0.0, 1.0, 0.0};
  CHECK(reconstruct(s, pick, Channel::Energy, 0, 0, 1.0, {}) == 0.0);
  CHECK(reconstruct(s, pick, Channel::Energy, 0, 0, 3.0, {}) == 1.0);
  const std::vector<double> lin{2.0, -3.0, 0.0, 0.0};
  CHECK(reconstruct(s, lin, Channel::Energy, 0, 0, 0.5, {}) == Approx(2.0 - 3.0 * 0.25));
  CHECK(reconstruct(s, lin, Channel::Alignment, 0, 0, 0.5, {}) == 0.0);
  CHECK_THROWS_AS(reconstruct(s, std::vector<double>(3), Channel::Energy, 0, 0, 0.5, {}), ConfigError);
}

TEST_CASE("property: tensor basis matches the definition") {
  testing::Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    SpaceBlock b = block1d(rng.uniform(0.0, 1.0), rng.uniform(2.0, 5.0), rng.integer(1, 5), rng.integer(0, 2));
    const int extra = rng.integer(0, 2);
    for (int a = 0; a < extra; ++a) b.axes.push_back({-2.0, rng.uniform(0.5, 3.0), rng.integer(1, 4), rng.integer(0, 2)});
    const HypothesisSpace s = make_space(1, {b});
    const SpaceBlock& blk = s.blocks[0];
    const double r = rng.uniform(0.0, 5.5);
    const std::vector<double> f = rng.vec(2, -2.5, 3.5);
    BasisValues bv;
    eval_basis(blk, r, f, bv);
    std::vector<double> dense(blk.dim, 0.0);
    for (int j = 0; j < bv.count; ++j) dense[bv.index[j]] = bv.value[j];
    int nonzero = 0;
    for (std::size_t j = 0; j < blk.dim; ++j) {
      const double ref = testing::naive_basis(blk, j, r, f);
      CHECK(dense[j] == Approx(ref).epsilon(1e-14));
      nonzero += ref != 0.0;
    }
    int bound = 1;
    for (const auto& a : blk.axes) bound *= a.degree + 1;
    CHECK(bv.count <= bound);
  }
}

TEST_CASE("property: constant functions sum to one inside the box") {
  testing::Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    SpaceBlock b = block1d(0.0, 3.0, rng.integer(1, 6), rng.integer(0, 2));
    b.axes.push_back({-1.0, 1.0, rng.integer(1, 3), rng.integer(0, 2)});
    const HypothesisSpace s = make_space(1, {b});
    const double r = rng.uniform(0.0, 3.0);
    const std::vector<double> f{rng.uniform(-1.0, 1.0)};
    double sum = 0.0;
    for (std::size_t j = 0; j < s.blocks[0].dim; ++j) {
      const std::size_t d1 = s.blocks[0].axes[1].dim();
      const bool constant = (j / d1) % (s.blocks[0].axes[0].degree + 1) == 0 &&
                            (j % d1) % (s.blocks[0].axes[1].degree + 1) == 0;
      if (constant) sum += testing::naive_basis(s.blocks[0], j, r, f);
    }
    CHECK(sum == Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("estimated kernels serialize") {
  const SystemSpec h = make_model("hetero_toy", {}, 6, 2);
  SpaceConfig cfg;
  cfg[Channel::Energy].cells = {3};
  cfg[Channel::Alignment].cells = {2};
  EstimatedKernels est;
  est.space = build_space(h, ranges_of(h, 5), cfg);
  testing::Rng rng(23);
  est.alpha_EA = rng.vec(est.space.n_EA);
  est.system = spec_to_json(h);
  const auto path = std::filesystem::temp_directory_path() / "kinfer_test_kernels.json";
  save_kernels(path, est);
  const EstimatedKernels back = load_kernels(path);
  CHECK(back.alpha_EA == est.alpha_EA);
  CHECK(back.space.n_EA == est.space.n_EA);
  for (int q = 0; q < 50; ++q) {
    const double r = rng.uniform(0.0, 6.0);
    for (Channel c : {Channel::Energy, Channel::Alignment})
      CHECK(back.evaluate(c, 1, 0, r, {}).value == est.evaluate(c, 1, 0, r, {}).value);
  }
  const KernelSet ks = back.to_kernel_set();
  const SpaceBlock* b = back.space.find(Channel::Energy, 0, 1);
  const double mid = 0.5 * (b->axes[0].lo + b->axes[0].hi);
  CHECK((*ks.get(Channel::Energy, 0, 1))(mid, {}) == est.evaluate(Channel::Energy, 0, 1, mid, {}).value);
  CHECK((*ks.get(Channel::Energy, 0, 1))(b->axes[0].hi + 1.0, {}) == 0.0);
  CHECK_THROWS_AS(kernels_from_json({{"format", "other"}}), ConfigError);
}
