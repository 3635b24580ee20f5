#include "kinfer/hypothesis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "kinfer/common.hpp"

namespace kinfer {

std::size_t SpaceBlock::cell_count() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= static_cast<std::size_t>(a.cells);
  return n;
}

const SpaceBlock* HypothesisSpace::find(Channel c, int k, int kp) const {
  for (const auto& b : blocks)
    if (b.channel == c && b.k == k && b.kp == kp) return &b;
  return nullptr;
}

bool HypothesisSpace::has(Channel c) const {
  return std::any_of(blocks.begin(), blocks.end(), [c](const SpaceBlock& b) { return b.channel == c; });
}

namespace {

void check_axis(const AxisGrid& a, Channel c, int k, int kp, int axis) {
  auto where = [&] {
    return std::string(channel_name(c)) + " block (" + std::to_string(k) + ", " + std::to_string(kp) + ") axis " +
           std::to_string(axis);
  };
  if (a.cells < 1) throw ConfigError(where() + ": cells must be >= 1");
  if (a.degree < 0 || a.degree > kMaxDegree)
    throw ConfigError(where() + ": degree must be in [0, " + std::to_string(kMaxDegree) + "]");
  if (!std::isfinite(a.lo) || !std::isfinite(a.hi) || a.hi < a.lo) throw ConfigError(where() + ": invalid box");
  if (a.hi == a.lo && a.cells > 1) throw ConfigError(where() + ": zero-width axis cannot have more than one cell");
}

int pick(const std::vector<int>& v, std::size_t axis, const char* what) {
  if (v.empty()) throw ConfigError(std::string("space config: empty ") + what + " list");
  if (v.size() == 1) return v[0];
  if (axis >= v.size()) throw ConfigError(std::string("space config: too few ") + what + " entries for the axes");
  return v[axis];
}

}  // namespace

HypothesisSpace make_space(int K, std::vector<SpaceBlock> blocks) {
  std::stable_sort(blocks.begin(), blocks.end(), [](const SpaceBlock& a, const SpaceBlock& b) {
    return std::tuple(static_cast<int>(a.channel), a.k, a.kp) < std::tuple(static_cast<int>(b.channel), b.k, b.kp);
  });
  HypothesisSpace s;
  s.K = K;
  for (auto& b : blocks) {
    if (b.axes.empty() || static_cast<int>(b.axes.size()) > kMaxAxes)
      throw ConfigError("a space block needs between 1 and " + std::to_string(kMaxAxes) + " axes");
    if (b.k < 0 || b.kp < 0 || b.k >= K || b.kp >= K) throw ConfigError("space block type pair out of range");
    std::size_t dim = 1;
    for (std::size_t a = 0; a < b.axes.size(); ++a) {
      check_axis(b.axes[a], b.channel, b.k, b.kp, static_cast<int>(a));
      dim *= static_cast<std::size_t>(b.axes[a].dim());
    }
    b.dim = dim;
    std::size_t& n = b.channel == Channel::Environment ? s.n_xi : s.n_EA;
    b.offset = n;
    n += dim;
  }
  for (std::size_t j = 1; j < blocks.size(); ++j)
    if (blocks[j].channel == blocks[j - 1].channel && blocks[j].k == blocks[j - 1].k && blocks[j].kp == blocks[j - 1].kp)
      throw ConfigError("duplicate space block");
  s.blocks = std::move(blocks);
  return s;
}

HypothesisSpace build_space(const SystemSpec& spec, const RangeEstimate& ranges, const SpaceConfig& cfg) {
  if (ranges.K != spec.K) throw ConfigError("ranges were estimated for a different number of types");
  std::vector<SpaceBlock> blocks;
  for (int ci = 0; ci < kNumChannels; ++ci) {
    const Channel c = static_cast<Channel>(ci);
    const ChannelConfig& cc = cfg.channel[ci];
    if (c == Channel::Environment && cc.enabled.value_or(false) && !spec.has_xi)
      throw ConfigError("no xi channel: the system has no environment variable");
    if (c == Channel::Alignment && spec.first_order) {
      if (cc.enabled.value_or(false)) throw ConfigError("first-order systems have no alignment channel");
      continue;
    }
    if (c == Channel::Environment && !spec.has_xi) continue;
    for (int k = 0; k < spec.K; ++k)
      for (int kp = 0; kp < spec.K; ++kp) {
        const bool active = cc.enabled.has_value() ? *cc.enabled : spec.kernels.get(c, k, kp) != nullptr;
        if (!active) continue;
        const PairRange& pr = ranges.pair(k, kp);
        const int naxes = 1 + spec.features.arity(c, k, kp);
        if (pr.count == 0 && static_cast<int>(cc.box.size()) < naxes) continue;
        SpaceBlock b;
        b.channel = c;
        b.k = k;
        b.kp = kp;
        for (int a = 0; a < naxes; ++a) {
          AxisGrid g;
          g.cells = pick(cc.cells, a, "cells");
          g.degree = pick(cc.degree, a, "degree");
          if (a < static_cast<int>(cc.box.size())) {
            g.lo = cc.box[a].first;
            g.hi = cc.box[a].second;
          } else if (a == 0) {
            g.lo = pr.r_min;
            g.hi = pr.r_max;
          } else {
            g.lo = pr.feat_min[ci][a - 1];
            g.hi = pr.feat_max[ci][a - 1];
          }
          b.axes.push_back(g);
        }
        blocks.push_back(std::move(b));
      }
  }
  return make_space(spec.K, std::move(blocks));
}

void eval_basis(const SpaceBlock& b, double r, std::span<const double> s, BasisValues& out, std::size_t* cell) {
  out.count = 0;
  const int naxes = static_cast<int>(b.axes.size());
  if (static_cast<int>(s.size()) < naxes - 1) throw ConfigError("eval_basis: too few feature values");

  std::array<int, kMaxAxes> first{};  // 1-D index of power 0
  std::array<std::array<double, kMaxDegree + 1>, kMaxAxes> mono{};
  std::array<std::size_t, kMaxAxes> stride{};
  std::size_t tensor_cell = 0;
  for (int a = 0; a < naxes; ++a) {
    const AxisGrid& g = b.axes[a];
    const double x = a == 0 ? r : s[a - 1];
    if (!(x >= g.lo && x <= g.hi)) return;
    int j = 0;
    double u = 0.0;
    if (g.hi > g.lo) {
      const double w = (g.hi - g.lo) / g.cells;
      j = std::min(g.cells - 1, static_cast<int>(std::floor((x - g.lo) / w)));
      u = std::clamp((x - (g.lo + j * w)) / w, 0.0, 1.0);
    }
    first[a] = j * (g.degree + 1);
    mono[a][0] = 1.0;
    for (int p = 1; p <= g.degree; ++p) mono[a][p] = mono[a][p - 1] * u;
    tensor_cell = tensor_cell * g.cells + j;
  }
  stride[naxes - 1] = 1;
  for (int a = naxes - 2; a >= 0; --a) stride[a] = stride[a + 1] * b.axes[a + 1].dim();
  if (cell) *cell = tensor_cell;

  std::array<int, kMaxAxes> pw{};
  for (;;) {
    std::size_t idx = b.offset;
    double v = 1.0;
    for (int a = 0; a < naxes; ++a) {
      idx += static_cast<std::size_t>(first[a] + pw[a]) * stride[a];
      v *= mono[a][pw[a]];
    }
    out.index[out.count] = idx;
    out.value[out.count] = v;
    ++out.count;
    int a = naxes - 1;
    while (a >= 0 && ++pw[a] > b.axes[a].degree) pw[a--] = 0;
    if (a < 0) break;
  }
}

double reconstruct(const HypothesisSpace& space, std::span<const double> alpha, Channel c, int k, int kp, double r,
                   std::span<const double> s) {
  if (alpha.size() != space.size_of(c))
    throw ConfigError("coefficient vector has " + std::to_string(alpha.size()) + " entries, the space needs " +
                      std::to_string(space.size_of(c)));
  const SpaceBlock* b = space.find(c, k, kp);
  if (!b) return 0.0;
  BasisValues bv;
  eval_basis(*b, r, s, bv);
  double v = 0.0;
  for (int j = 0; j < bv.count; ++j) v += alpha[bv.index[j]] * bv.value[j];
  return v;
}

Reconstruction EstimatedKernels::evaluate(Channel c, int k, int kp, double r, std::span<const double> s) const {
  Reconstruction out;
  const SpaceBlock* b = space.find(c, k, kp);
  if (!b) return out;
  const std::vector<double>& alpha = c == Channel::Environment ? alpha_xi : alpha_EA;
  BasisValues bv;
  std::size_t cell = 0;
  eval_basis(*b, r, s, bv, &cell);
  if (bv.count == 0) return out;
  out.inside = true;
  for (int j = 0; j < bv.count; ++j) out.value += alpha[bv.index[j]] * bv.value[j];
  const std::size_t bi = static_cast<std::size_t>(b - space.blocks.data());
  if (bi < occupied.size() && !occupied[bi].empty()) out.empty_cell = !occupied[bi][cell];
  return out;
}

KernelSet EstimatedKernels::to_kernel_set() const {
  auto shared = std::make_shared<const EstimatedKernels>(*this);
  KernelSet ks(space.K);
  for (const auto& b : space.blocks) {
    Kernel kern;
    kern.arity = b.arity();
    kern.r_min = b.axes[0].lo;
    kern.r_max = b.axes[0].hi;
    const Channel c = b.channel;
    const int k = b.k, kp = b.kp;
    kern.fn = [shared, c, k, kp](double r, std::span<const double> s) {
      const std::vector<double>& alpha = c == Channel::Environment ? shared->alpha_xi : shared->alpha_EA;
      return reconstruct(shared->space, alpha, c, k, kp, r, s);
    };
    ks.set(c, k, kp, std::move(kern));
  }
  return ks;
}

nlohmann::json space_config_to_json(const SpaceConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (int ci = 0; ci < kNumChannels; ++ci) {
    const ChannelConfig& cc = cfg.channel[ci];
    nlohmann::json jc{{"cells", cc.cells}, {"degree", cc.degree}};
    if (cc.enabled) jc["enabled"] = *cc.enabled;
    if (!cc.box.empty()) {
      nlohmann::json box = nlohmann::json::array();
      for (const auto& [lo, hi] : cc.box) box.push_back({lo, hi});
      jc["box"] = box;
    }
    j[std::string(channel_name(static_cast<Channel>(ci)))] = jc;
  }
  return j;
}

namespace {

std::vector<int> int_or_list(const nlohmann::json& j) {
  if (j.is_number_integer()) return {j.get<int>()};
  return j.get<std::vector<int>>();
}

}  // namespace

SpaceConfig space_config_from_json(const nlohmann::json& j) {
  SpaceConfig cfg;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const Channel c = channel_from_name(it.key());
      ChannelConfig& cc = cfg[c];
      const auto& jc = it.value();
      if (jc.contains("cells")) cc.cells = int_or_list(jc.at("cells"));
      if (jc.contains("degree")) cc.degree = int_or_list(jc.at("degree"));
      if (jc.contains("enabled") && !jc.at("enabled").is_null()) cc.enabled = jc.at("enabled").get<bool>();
      if (jc.contains("box"))
        for (const auto& ax : jc.at("box")) {
          const auto lh = ax.get<std::vector<double>>();
          if (lh.size() != 2) throw ConfigError("space box entries must be [lo, hi]");
          cc.box.emplace_back(lh[0], lh[1]);
        }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed space config: ") + e.what());
  }
  return cfg;
}

nlohmann::json kernels_to_json(const EstimatedKernels& est) {
  nlohmann::json blocks = nlohmann::json::array();
  for (std::size_t bi = 0; bi < est.space.blocks.size(); ++bi) {
    const SpaceBlock& b = est.space.blocks[bi];
    nlohmann::json axes = nlohmann::json::array();
    for (const auto& a : b.axes) axes.push_back({{"lo", a.lo}, {"hi", a.hi}, {"cells", a.cells}, {"degree", a.degree}});
    const std::vector<double>& alpha = b.channel == Channel::Environment ? est.alpha_xi : est.alpha_EA;
    std::vector<double> slice;
    if (alpha.size() >= b.offset + b.dim)
      slice.assign(alpha.begin() + static_cast<std::ptrdiff_t>(b.offset),
                   alpha.begin() + static_cast<std::ptrdiff_t>(b.offset + b.dim));
    nlohmann::json jb{{"channel", channel_name(b.channel)},
                      {"k", b.k},
                      {"kp", b.kp},
                      {"axes", axes},
                      {"offset", b.offset},
                      {"dim", b.dim},
                      {"alpha", slice}};
    if (bi < est.occupied.size() && !est.occupied[bi].empty()) {
      std::vector<int> occ(est.occupied[bi].begin(), est.occupied[bi].end());
      jb["occupied"] = occ;
    }
    blocks.push_back(std::move(jb));
  }
  return {{"format", "kinfer-kernels"},
          {"version", 1},
          {"K", est.space.K},
          {"n_EA", est.space.n_EA},
          {"n_xi", est.space.n_xi},
          {"blocks", blocks},
          {"system", est.system},
          {"report", est.report}};
}

EstimatedKernels kernels_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "kinfer-kernels") throw ConfigError("not an estimated-kernel document");
    std::vector<SpaceBlock> blocks;
    std::vector<std::vector<double>> slices;
    std::vector<std::vector<char>> occ;
    for (const auto& jb : j.at("blocks")) {
      SpaceBlock b;
      b.channel = channel_from_name(jb.at("channel").get<std::string>());
      b.k = jb.at("k").get<int>();
      b.kp = jb.at("kp").get<int>();
      for (const auto& ja : jb.at("axes"))
        b.axes.push_back({ja.at("lo").get<double>(), ja.at("hi").get<double>(), ja.at("cells").get<int>(),
                          ja.at("degree").get<int>()});
      blocks.push_back(std::move(b));
    }
    EstimatedKernels est;
    est.space = make_space(j.at("K").get<int>(), blocks);
    est.alpha_EA.assign(est.space.n_EA, 0.0);
    est.alpha_xi.assign(est.space.n_xi, 0.0);
    est.occupied.resize(est.space.blocks.size());
    for (const auto& jb : j.at("blocks")) {
      const Channel c = channel_from_name(jb.at("channel").get<std::string>());
      const SpaceBlock* b = est.space.find(c, jb.at("k").get<int>(), jb.at("kp").get<int>());
      const auto alpha = jb.at("alpha").get<std::vector<double>>();
      if (alpha.size() != b->dim) throw ConfigError("estimated-kernel block has the wrong number of coefficients");
      std::vector<double>& dst = c == Channel::Environment ? est.alpha_xi : est.alpha_EA;
      std::copy(alpha.begin(), alpha.end(), dst.begin() + static_cast<std::ptrdiff_t>(b->offset));
      if (jb.contains("occupied")) {
        const auto o = jb.at("occupied").get<std::vector<int>>();
        if (o.size() != b->cell_count()) throw ConfigError("estimated-kernel occupancy has the wrong size");
        est.occupied[static_cast<std::size_t>(b - est.space.blocks.data())].assign(o.begin(), o.end());
      }
    }
    est.system = j.value("system", nlohmann::json::object());
    est.report = j.value("report", nlohmann::json::object());
    return est;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed estimated-kernel document: ") + e.what());
  }
}

void save_kernels(const std::filesystem::path& file, const EstimatedKernels& est) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << std::setw(2) << kernels_to_json(est) << '\n';
}

EstimatedKernels load_kernels(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("estimated-kernel file not found: " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed estimated-kernel file " + file.string() + ": " + e.what());
  }
  return kernels_from_json(j);
}

}  // namespace kinfer
