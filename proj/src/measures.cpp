#include "kinfer/measures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "kinfer/common.hpp"

namespace kinfer {

namespace {

constexpr std::size_t kChunk = 4;  // trajectories per deterministic work unit

std::size_t chunk_count(std::size_t M) { return (M + kChunk - 1) / kChunk; }

}  // namespace

void observe_pair(const SystemSpec& spec, const State& state, int i, int ip, PairObservation& out) {
  const std::span<const double> Xi = spec.has_xi ? std::span<const double>(state.Xi) : std::span<const double>{};
  const std::span<const double> Vfeat = spec.first_order ? std::span<const double>{} : std::span<const double>(state.V);
  out.k = spec.type_of[i];
  out.kp = spec.type_of[ip];
  out.g = pairwise(state.X, state.V, Xi, spec.d, i, ip);
  for (int c = 0; c < kNumChannels; ++c)
    out.arity[c] = eval_features(spec, static_cast<Channel>(c), i, ip, state.X, Vfeat, Xi, out.s[c]);
}

void PairRange::add(const PairObservation& o) {
  if (count == 0) {
    r_min = r_max = o.g.r;
    rdot_min = rdot_max = o.g.rdot;
    xidiff_min = xidiff_max = o.g.xidiff;
    for (int c = 0; c < kNumChannels; ++c) {
      feat_min[c].assign(o.s[c].begin(), o.s[c].begin() + o.arity[c]);
      feat_max[c] = feat_min[c];
    }
  } else {
    r_min = std::min(r_min, o.g.r);
    r_max = std::max(r_max, o.g.r);
    rdot_min = std::min(rdot_min, o.g.rdot);
    rdot_max = std::max(rdot_max, o.g.rdot);
    xidiff_min = std::min(xidiff_min, o.g.xidiff);
    xidiff_max = std::max(xidiff_max, o.g.xidiff);
    for (int c = 0; c < kNumChannels; ++c)
      for (int j = 0; j < o.arity[c]; ++j) {
        feat_min[c][j] = std::min(feat_min[c][j], o.s[c][j]);
        feat_max[c][j] = std::max(feat_max[c][j], o.s[c][j]);
      }
  }
  ++count;
}

void PairRange::merge(const PairRange& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  r_min = std::min(r_min, other.r_min);
  r_max = std::max(r_max, other.r_max);
  rdot_min = std::min(rdot_min, other.rdot_min);
  rdot_max = std::max(rdot_max, other.rdot_max);
  xidiff_min = std::min(xidiff_min, other.xidiff_min);
  xidiff_max = std::max(xidiff_max, other.xidiff_max);
  for (int c = 0; c < kNumChannels; ++c) {
    if (feat_min[c].size() != other.feat_min[c].size())
      throw ConfigError("cannot merge ranges with different feature arities");
    for (std::size_t j = 0; j < feat_min[c].size(); ++j) {
      feat_min[c][j] = std::min(feat_min[c][j], other.feat_min[c][j]);
      feat_max[c][j] = std::max(feat_max[c][j], other.feat_max[c][j]);
    }
  }
  count += other.count;
}

void RangeEstimate::merge(const RangeEstimate& other) {
  if (other.K != K) throw ConfigError("cannot merge ranges with different type counts");
  for (std::size_t p = 0; p < pairs.size(); ++p) pairs[p].merge(other.pairs[p]);
  R_xdot = std::max(R_xdot, other.R_xdot);
  R_xi = std::max(R_xi, other.R_xi);
}

RangeEstimate estimate_ranges(const TrajectoryDataset& ds, const SystemSpec& spec, unsigned threads) {
  if (ds.M() == 0 || ds.L() == 0) throw ConfigError("cannot estimate ranges of an empty dataset");
  const int K = spec.K;
  const std::size_t nchunks = chunk_count(ds.M());
  std::vector<RangeEstimate> partial(nchunks);
  parallel_for(nchunks, threads, [&](std::size_t ch) {
    RangeEstimate& re = partial[ch];
    re.K = K;
    re.pairs.assign(static_cast<std::size_t>(K) * K, PairRange{});
    PairObservation o;
    const std::size_t m_end = std::min<std::size_t>(ds.M(), (ch + 1) * kChunk);
    for (std::size_t m = ch * kChunk; m < m_end; ++m)
      for (const State& s : ds.trajectories[m].states)
        for (int i = 0; i < spec.N; ++i)
          for (int ip = 0; ip < spec.N; ++ip) {
            if (ip == i) continue;
            observe_pair(spec, s, i, ip, o);
            re.pairs[static_cast<std::size_t>(o.k * K + o.kp)].add(o);
            re.R_xdot = std::max(re.R_xdot, o.g.rdot);
            re.R_xi = std::max(re.R_xi, std::abs(o.g.xidiff));
          }
  });
  RangeEstimate out = partial[0];
  for (std::size_t ch = 1; ch < nchunks; ++ch) out.merge(partial[ch]);
  return out;
}

nlohmann::json ranges_to_json(const RangeEstimate& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (int k = 0; k < r.K; ++k)
    for (int kp = 0; kp < r.K; ++kp) {
      const PairRange& p = r.pair(k, kp);
      nlohmann::json jp{{"k", k},
                        {"kp", kp},
                        {"count", p.count},
                        {"r", {p.r_min, p.r_max}},
                        {"rdot", {p.rdot_min, p.rdot_max}},
                        {"xidiff", {p.xidiff_min, p.xidiff_max}}};
      for (int c = 0; c < kNumChannels; ++c)
        if (!p.feat_min[c].empty())
          jp[std::string("s") + std::string(channel_name(static_cast<Channel>(c)))] = {p.feat_min[c], p.feat_max[c]};
      pairs.push_back(std::move(jp));
    }
  return {{"K", r.K}, {"R_xdot", r.R_xdot}, {"R_xi", r.R_xi}, {"pairs", pairs}};
}

void PairCloud::push(const PairObservation& o) {
  r.push_back(o.g.r);
  rdot.push_back(o.g.rdot);
  xidiff.push_back(o.g.xidiff);
  for (int c = 0; c < kNumChannels; ++c) s[c].insert(s[c].end(), o.s[c].begin(), o.s[c].begin() + o.arity[c]);
}

std::size_t SampleCloud::total_samples() const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += p.size();
  return n;
}

SampleCloud sample_cloud(const TrajectoryDataset& ds, const SystemSpec& spec, unsigned threads) {
  if (ds.M() == 0 || ds.L() == 0) throw ConfigError("cannot build a sample cloud from an empty dataset");
  const int K = spec.K;
  const std::size_t npairs = static_cast<std::size_t>(K) * K;

  auto fresh = [&] {
    SampleCloud c;
    c.K = K;
    c.pairs.resize(npairs);
    for (int k = 0; k < K; ++k)
      for (int kp = 0; kp < K; ++kp) {
        PairCloud& pc = c.pairs[static_cast<std::size_t>(k * K + kp)];
        pc.k = k;
        pc.kp = kp;
        for (int ch = 0; ch < kNumChannels; ++ch) pc.arity[ch] = spec.features.arity(static_cast<Channel>(ch), k, kp);
      }
    return c;
  };

  const std::size_t nchunks = chunk_count(ds.M());
  std::vector<SampleCloud> partial(nchunks);
  parallel_for(nchunks, threads, [&](std::size_t ch) {
    SampleCloud c = fresh();
    PairObservation o;
    const std::size_t m_end = std::min<std::size_t>(ds.M(), (ch + 1) * kChunk);
    for (std::size_t m = ch * kChunk; m < m_end; ++m)
      for (const State& s : ds.trajectories[m].states)
        for (int i = 0; i < spec.N; ++i)
          for (int ip = 0; ip < spec.N; ++ip) {
            if (ip == i) continue;
            const int k = spec.type_of[i], kp = spec.type_of[ip];
            if (k == kp && ip < i) continue;  // unordered pairs within a type
            observe_pair(spec, s, i, ip, o);
            c.pairs[static_cast<std::size_t>(k * K + kp)].push(o);
          }
    partial[ch] = std::move(c);
  });

  SampleCloud out = fresh();
  for (auto& part : partial)
    for (std::size_t p = 0; p < npairs; ++p) {
      PairCloud& dst = out.pairs[p];
      PairCloud& src = part.pairs[p];
      dst.r.insert(dst.r.end(), src.r.begin(), src.r.end());
      dst.rdot.insert(dst.rdot.end(), src.rdot.begin(), src.rdot.end());
      dst.xidiff.insert(dst.xidiff.end(), src.xidiff.begin(), src.xidiff.end());
      for (int c = 0; c < kNumChannels; ++c) dst.s[c].insert(dst.s[c].end(), src.s[c].begin(), src.s[c].end());
    }

  const double ML = static_cast<double>(ds.M()) * ds.L();
  for (int k = 0; k < K; ++k)
    for (int kp = 0; kp < K; ++kp) {
      const double Nk = spec.type_counts[k], Nkp = spec.type_counts[kp];
      const double Nkk = k == kp ? Nk * (Nk - 1.0) / 2.0 : Nk * Nkp;
      out.pairs[static_cast<std::size_t>(k * K + kp)].weight = Nkk > 0.0 ? 1.0 / (ML * Nkk) : 0.0;
    }
  return out;
}

std::string_view measure_kind_name(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::E: return "E";
    case MeasureKind::A: return "A";
    case MeasureKind::EA: return "EA";
    case MeasureKind::Xi: return "xi";
  }
  return "?";
}

MeasureKind measure_kind_from_name(std::string_view name) {
  if (name == "E") return MeasureKind::E;
  if (name == "A") return MeasureKind::A;
  if (name == "EA") return MeasureKind::EA;
  if (name == "xi") return MeasureKind::Xi;
  throw ConfigError("unknown measure kind '" + std::string(name) + "'");
}

namespace {

enum class AxisSource { R, Rdot, Xidiff, Feature };

struct AxisDef {
  std::string name;
  AxisSource src;
  int channel = 0;
  int feature = 0;
};

std::vector<AxisDef> axis_defs(MeasureKind kind, const std::array<int, kNumChannels>& arity) {
  std::vector<AxisDef> out;
  out.push_back({"r", AxisSource::R});
  auto features = [&](Channel c) {
    const int ci = static_cast<int>(c);
    for (int j = 0; j < arity[ci]; ++j)
      out.push_back({"s" + std::string(channel_name(c)) + std::to_string(j), AxisSource::Feature, ci, j});
  };
  switch (kind) {
    case MeasureKind::E:
      features(Channel::Energy);
      break;
    case MeasureKind::A:
      out.push_back({"rdot", AxisSource::Rdot});
      features(Channel::Alignment);
      break;
    case MeasureKind::EA:
      features(Channel::Energy);
      out.push_back({"rdot", AxisSource::Rdot});
      features(Channel::Alignment);
      break;
    case MeasureKind::Xi:
      out.push_back({"xidiff", AxisSource::Xidiff});
      features(Channel::Environment);
      break;
  }
  return out;
}

double axis_value(const AxisDef& a, const PairCloud& pc, std::size_t j) {
  switch (a.src) {
    case AxisSource::R: return pc.r[j];
    case AxisSource::Rdot: return pc.rdot[j];
    case AxisSource::Xidiff: return pc.xidiff[j];
    case AxisSource::Feature: return pc.s[a.channel][j * pc.arity[a.channel] + a.feature];
  }
  return 0.0;
}

std::pair<double, double> axis_box(const AxisDef& a, const PairRange& pr) {
  switch (a.src) {
    case AxisSource::R: return {pr.r_min, pr.r_max};
    case AxisSource::Rdot: return {pr.rdot_min, pr.rdot_max};
    case AxisSource::Xidiff: return {pr.xidiff_min, pr.xidiff_max};
    case AxisSource::Feature: return {pr.feat_min[a.channel][a.feature], pr.feat_max[a.channel][a.feature]};
  }
  return {0.0, 0.0};
}

int bin_of(double x, double lo, double hi, int bins) {
  if (bins == 1 || !(hi > lo)) return 0;
  if (x <= lo) return 0;
  if (x >= hi) return bins - 1;
  const int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
  return std::clamp(b, 0, bins - 1);
}

}  // namespace

std::vector<std::string> measure_axes(MeasureKind kind, const std::array<int, kNumChannels>& arity) {
  std::vector<std::string> names;
  for (const auto& a : axis_defs(kind, arity)) names.push_back(a.name);
  return names;
}

double Histogram::total() const {
  double t = 0.0;
  for (double m : mass) t += m;
  return t;
}

bool Histogram::same_grid(const Histogram& o) const {
  return axes == o.axes && lo == o.lo && hi == o.hi && bins == o.bins;
}

EmpiricalMeasure empirical_measure(const SampleCloud& cloud, const RangeEstimate& ranges, MeasureKind kind,
                                   const std::vector<int>& bins) {
  if (bins.empty()) throw ConfigError("histogram needs at least one bin count");
  for (int b : bins)
    if (b < 1) throw ConfigError("histogram bin counts must be >= 1");
  if (ranges.K != cloud.K) throw ConfigError("ranges and sample cloud disagree on K");

  EmpiricalMeasure em;
  em.kind = kind;
  em.K = cloud.K;
  em.pairs.resize(cloud.pairs.size());
  for (std::size_t p = 0; p < cloud.pairs.size(); ++p) {
    const PairCloud& pc = cloud.pairs[p];
    const PairRange& pr = ranges.pairs[p];
    const auto defs = axis_defs(kind, pc.arity);
    if (bins.size() != 1 && bins.size() != defs.size())
      throw ConfigError("histogram needs 1 or " + std::to_string(defs.size()) + " bin counts");
    Histogram& h = em.pairs[p];
    h.k = pc.k;
    h.kp = pc.kp;
    std::size_t cells = 1;
    for (std::size_t a = 0; a < defs.size(); ++a) {
      h.axes.push_back(defs[a].name);
      auto [lo, hi] = pr.count > 0 ? axis_box(defs[a], pr) : std::pair<double, double>{0.0, 0.0};
      h.lo.push_back(lo);
      h.hi.push_back(hi);
      const int b = bins.size() == 1 ? bins[0] : bins[a];
      h.bins.push_back(hi > lo ? b : 1);
      cells *= static_cast<std::size_t>(h.bins.back());
    }
    h.mass.assign(cells, 0.0);
    for (std::size_t j = 0; j < pc.size(); ++j) {
      std::size_t flat = 0;
      for (std::size_t a = 0; a < defs.size(); ++a)
        flat = flat * h.bins[a] + bin_of(axis_value(defs[a], pc, j), h.lo[a], h.hi[a], h.bins[a]);
      h.mass[flat] += pc.weight;
    }
  }
  return em;
}

EmpiricalMeasure empirical_measure(const TrajectoryDataset& ds, const SystemSpec& spec, MeasureKind kind,
                                   const std::vector<int>& bins, unsigned threads) {
  return empirical_measure(sample_cloud(ds, spec, threads), estimate_ranges(ds, spec, threads), kind, bins);
}

Histogram marginal(const Histogram& h, const std::vector<int>& keep) {
  const int naxes = static_cast<int>(h.axes.size());
  for (std::size_t j = 0; j < keep.size(); ++j)
    if (keep[j] < 0 || keep[j] >= naxes || (j > 0 && keep[j] <= keep[j - 1]))
      throw ConfigError("marginal axes must be ascending indices into the histogram axes");
  Histogram out;
  out.k = h.k;
  out.kp = h.kp;
  std::size_t cells = 1;
  for (int a : keep) {
    out.axes.push_back(h.axes[a]);
    out.lo.push_back(h.lo[a]);
    out.hi.push_back(h.hi[a]);
    out.bins.push_back(h.bins[a]);
    cells *= static_cast<std::size_t>(h.bins[a]);
  }
  out.mass.assign(cells, 0.0);
  std::vector<int> idx(naxes, 0);
  for (std::size_t flat = 0; flat < h.mass.size(); ++flat) {
    std::size_t rem = flat;
    for (int a = naxes - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % h.bins[a]);
      rem /= h.bins[a];
    }
    std::size_t target = 0;
    for (int a : keep) target = target * h.bins[a] + idx[a];
    out.mass[target] += h.mass[flat];
  }
  return out;
}

double measure_distance(const Histogram& a, const Histogram& b) {
  if (!a.same_grid(b)) throw ConfigError("measure_distance requires identical bin grids");
  double s = 0.0;
  for (std::size_t j = 0; j < a.mass.size(); ++j) s += std::abs(a.mass[j] - b.mass[j]);
  return 0.5 * s;
}

double measure_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.K != b.K || a.kind != b.kind) throw ConfigError("measure_distance requires measures of the same kind");
  double worst = 0.0;
  for (std::size_t p = 0; p < a.pairs.size(); ++p) worst = std::max(worst, measure_distance(a.pairs[p], b.pairs[p]));
  return worst;
}

void write_histogram_csv(const std::filesystem::path& file, const EmpiricalMeasure& m) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << std::setprecision(17);
  std::size_t width = 0;
  for (const auto& h : m.pairs) width = std::max(width, h.axes.size());
  out << "k,kp";
  for (std::size_t a = 0; a < width; ++a) out << ",axis" << a << ",lo" << a << ",hi" << a;
  out << ",mass\n";
  for (const auto& h : m.pairs) {
    const std::size_t naxes = h.axes.size();
    std::vector<int> idx(naxes, 0);
    for (std::size_t flat = 0; flat < h.mass.size(); ++flat) {
      std::size_t rem = flat;
      for (std::size_t a = naxes; a-- > 0;) {
        idx[a] = static_cast<int>(rem % h.bins[a]);
        rem /= h.bins[a];
      }
      out << h.k << ',' << h.kp;
      for (std::size_t a = 0; a < width; ++a) {
        if (a < naxes) {
          const double w = (h.hi[a] - h.lo[a]) / h.bins[a];
          out << ',' << h.axes[a] << ',' << h.lo[a] + idx[a] * w << ',' << h.lo[a] + (idx[a] + 1) * w;
        } else {
          out << ",,,";
        }
      }
      out << ',' << h.mass[flat] << '\n';
    }
  }
}

}  // namespace kinfer
