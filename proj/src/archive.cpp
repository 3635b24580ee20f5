#include "kinfer/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>

#include "kinfer/common.hpp"

namespace kinfer {
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "kinfer-trajectories";
constexpr int kVersion = 1;

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xFFu) << (8 * (7 - b));
    return r;
  }
}

void put(std::vector<unsigned char>& buf, double x) {
  const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(x));
  unsigned char bytes[8];
  std::memcpy(bytes, &bits, 8);
  buf.insert(buf.end(), bytes, bytes + 8);
}

double get(const unsigned char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, 8);
  return std::bit_cast<double>(to_little(bits));
}

}  // namespace

std::size_t archive_block_doubles(const TrajectoryDataset& ds) {
  const std::size_t nd = static_cast<std::size_t>(ds.N) * ds.d;
  const std::size_t nxi = ds.has_xi ? ds.N : 0;
  return 3 * nd + 2 * nxi;
}

nlohmann::json archive_manifest(const TrajectoryDataset& ds) {
  const std::size_t block = archive_block_doubles(ds);
  return {{"format", kFormat},
          {"version", kVersion},
          {"system", ds.system},
          {"N", ds.N},
          {"d", ds.d},
          {"K", ds.K},
          {"has_xi", ds.has_xi},
          {"first_order", ds.first_order},
          {"M", ds.M()},
          {"L", ds.L()},
          {"T", ds.T()},
          {"seed", ds.seed},
          {"rtol", ds.tol.rtol},
          {"atol", ds.tol.atol},
          {"derivs_source", std::string(deriv_source_name(ds.source))},
          {"block_layout", {"X", "V", "Xi", "accel", "xidot"}},
          {"block_doubles", block},
          {"byte_count", 8 * block * static_cast<std::size_t>(ds.M()) * ds.L()}};
}

void write_archive(const fs::path& dir, const TrajectoryDataset& ds, const nlohmann::json& extra) {
  ds.validate();
  fs::create_directories(dir);
  nlohmann::json manifest = archive_manifest(ds);
  for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();

  std::vector<unsigned char> buf;
  buf.reserve(manifest["byte_count"].get<std::size_t>());
  for (const auto& tr : ds.trajectories) {
    for (int l = 0; l < ds.L(); ++l) {
      const State& s = tr.states[l];
      const Derivs& dv = tr.derivs[l];
      for (double x : s.X) put(buf, x);
      for (double x : s.V) put(buf, x);
      for (double x : s.Xi) put(buf, x);
      for (double x : dv.accel) put(buf, x);
      for (double x : dv.xidot) put(buf, x);
    }
  }

  std::ofstream data(dir / "data.bin", std::ios::binary | std::ios::trunc);
  if (!data) throw ConfigError("cannot write " + (dir / "data.bin").string());
  data.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));

  std::ofstream man(dir / "manifest.json", std::ios::trunc);
  if (!man) throw ConfigError("cannot write " + (dir / "manifest.json").string());
  man << std::setw(2) << manifest << '\n';
}

nlohmann::json read_manifest(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw ConfigError("archive manifest not found: " + mpath.string());
  try {
    nlohmann::json j;
    in >> j;
    if (j.value("format", std::string()) != kFormat)
      throw ConfigError("not a trajectory archive: " + mpath.string());
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest " + mpath.string() + ": " + e.what());
  }
}

TrajectoryDataset read_archive(const fs::path& dir) {
  const nlohmann::json j = read_manifest(dir);
  TrajectoryDataset ds;
  int M = 0, L = 0;
  double T = 0.0;
  try {
    ds.N = j.at("N").get<int>();
    ds.d = j.at("d").get<int>();
    ds.K = j.at("K").get<int>();
    ds.has_xi = j.at("has_xi").get<bool>();
    ds.first_order = j.value("first_order", false);
    ds.system = j.at("system");
    ds.seed = j.value("seed", std::uint64_t{0});
    ds.tol.rtol = j.value("rtol", 1e-8);
    ds.tol.atol = j.value("atol", 1e-11);
    ds.source = deriv_source_from_name(j.at("derivs_source").get<std::string>());
    M = j.at("M").get<int>();
    L = j.at("L").get<int>();
    T = j.at("T").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("incomplete manifest: ") + e.what());
  }
  ds.times = make_time_grid(L, T);

  const std::size_t nd = static_cast<std::size_t>(ds.N) * ds.d;
  const std::size_t nxi = ds.has_xi ? ds.N : 0;
  const std::size_t block = archive_block_doubles(ds);
  const std::size_t bytes = 8 * block * static_cast<std::size_t>(M) * L;
  if (j.contains("byte_count") && j.at("byte_count").get<std::size_t>() != bytes)
    throw ConfigError("manifest byte_count does not match its shape");

  const fs::path dpath = dir / "data.bin";
  std::ifstream in(dpath, std::ios::binary);
  if (!in) throw ConfigError("archive data not found: " + dpath.string());
  std::vector<unsigned char> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes || in.peek() != std::char_traits<char>::eof())
    throw ConfigError("data.bin size does not match manifest (" + std::to_string(bytes) + " bytes expected)");

  const unsigned char* p = buf.data();
  auto take = [&p](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (std::size_t k = 0; k < n; ++k, p += 8) v[k] = get(p);
  };
  ds.trajectories.resize(M);
  for (int m = 0; m < M; ++m) {
    auto& tr = ds.trajectories[m];
    tr.states.resize(L);
    tr.derivs.resize(L);
    for (int l = 0; l < L; ++l) {
      State& s = tr.states[l];
      s.t = ds.times[l];
      take(s.X, nd);
      take(s.V, nd);
      take(s.Xi, nxi);
      take(tr.derivs[l].accel, nd);
      take(tr.derivs[l].xidot, nxi);
    }
  }
  ds.validate();
  return ds;
}

void export_csv(const fs::path& file, const TrajectoryDataset& ds) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << std::setprecision(17);
  out << "m,l,i,t";
  for (int a = 0; a < ds.d; ++a) out << ",x" << a;
  for (int a = 0; a < ds.d; ++a) out << ",v" << a;
  if (ds.has_xi) out << ",xi";
  for (int a = 0; a < ds.d; ++a) out << ",acc" << a;
  if (ds.has_xi) out << ",xidot";
  out << '\n';
  for (int m = 0; m < ds.M(); ++m) {
    const auto& tr = ds.trajectories[m];
    for (int l = 0; l < ds.L(); ++l) {
      const State& s = tr.states[l];
      const Derivs& dv = tr.derivs[l];
      for (int i = 0; i < ds.N; ++i) {
        out << m << ',' << l << ',' << i << ',' << ds.times[l];
        for (int a = 0; a < ds.d; ++a) out << ',' << s.X[i * ds.d + a];
        for (int a = 0; a < ds.d; ++a) out << ',' << s.V[i * ds.d + a];
        if (ds.has_xi) out << ',' << s.Xi[i];
        for (int a = 0; a < ds.d; ++a) out << ',' << dv.accel[i * ds.d + a];
        if (ds.has_xi) out << ',' << dv.xidot[i];
        out << '\n';
      }
    }
  }
}

}  // namespace kinfer
