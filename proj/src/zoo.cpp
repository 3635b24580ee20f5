#include "kinfer/zoo.hpp"

#include <algorithm>
#include <cmath>

#include "kinfer/common.hpp"

namespace kinfer {
namespace {

double param(const nlohmann::json& params, const char* key, double fallback) {
  if (!params.is_object() || !params.contains(key)) return fallback;
  const auto& v = params.at(key);
  if (!v.is_number()) throw ConfigError(std::string("model parameter '") + key + "' must be a number");
  return v.get<double>();
}

Kernel radial(std::function<double(double)> f, int arity = 0) {
  Kernel k;
  k.arity = arity;
  k.fn = [f = std::move(f)](double r, std::span<const double>) { return f(r); };
  return k;
}

SystemSpec blank(std::string_view name, const nlohmann::json& params, int N, int d, int K) {
  if (N <= 0) throw ConfigError("N must be positive");
  SystemSpec s;
  s.name = std::string(name);
  s.params = params.is_object() ? params : nlohmann::json::object();
  s.N = N;
  s.d = d;
  s.K = K;
  s.type_of.assign(N, 0);
  s.masses.assign(N, 1.0);
  s.kernels = KernelSet(K);
  s.features = FeatureMapSet(K);
  return s;
}

FeatureMap dot_feature() {
  FeatureMap fm;
  fm.arity = 1;
  fm.fn = [](const AgentRef& self, const AgentRef& other, std::span<double> out) {
    double s = 0.0;
    for (std::size_t a = 0; a < self.x.size(); ++a)
      s += (other.x[a] - self.x[a]) * (other.v[a] - self.v[a]);
    out[0] = s;
  };
  return fm;
}

SystemSpec make_fwep(const nlohmann::json& params, int N, int d) {
  const double a = param(params, "a", 1.0);
  const double beta = param(params, "beta", 0.5);
  if (!(a > 0.0)) throw ConfigError("fwep requires a > 0");
  if (!(beta >= 0.0)) throw ConfigError("fwep requires beta >= 0");
  SystemSpec s = blank("fwep", params, N, d, 1);
  s.kernels.set(Channel::Energy, 0, 0, radial([a](double) { return a; }));
  s.kernels.set(Channel::Alignment, 0, 0,
                radial([beta](double r) { return std::pow(1.0 + r * r, -beta); }));
  return s;
}

SystemSpec make_anticipation(const nlohmann::json& params, int N, int d) {
  const double tau = param(params, "tau", 0.1);
  const double p = param(params, "p", 1.5);
  if (!(p > 1.0 && p <= 2.0)) throw ConfigError("anticipation requires 1 < p <= 2");
  if (!(tau >= 0.0)) throw ConfigError("anticipation requires tau >= 0");
  SystemSpec s = blank("anticipation", params, N, d, 1);

  // U(r) = r^p / p, U'(r) = r^(p-1), U''(r) = (p-1) r^(p-2)
  Kernel energy;
  energy.arity = 1;
  energy.fn = [tau, p](double r, std::span<const double> sv) {
    const double rr = std::max(r, kAnticipationRFloor);
    const double u1 = std::pow(rr, p - 1.0);
    const double u2 = (p - 1.0) * std::pow(rr, p - 2.0);
    const double s = sv[0];
    return -tau * u1 * s / (rr * rr * rr) + tau * u2 * s / (rr * rr) + u1 / rr;
  };
  s.kernels.set(Channel::Energy, 0, 0, std::move(energy));
  s.features.set(Channel::Energy, 0, 0, dot_feature());
  s.kernels.set(Channel::Alignment, 0, 0, radial([tau, p](double r) {
                  const double rr = std::max(r, kAnticipationRFloor);
                  return tau * std::pow(rr, p - 1.0) / rr;
                }));
  return s;
}

SystemSpec make_cucker_smale(const nlohmann::json& params, int N, int d) {
  const double beta = param(params, "beta", 0.5);
  const double kappa = param(params, "kappa", 1.0);
  if (!(beta >= 0.0)) throw ConfigError("cucker_smale requires beta >= 0");
  SystemSpec s = blank("cucker_smale", params, N, d, 1);
  s.kernels.set(Channel::Alignment, 0, 0,
                radial([beta, kappa](double r) { return kappa * std::pow(1.0 + r * r, -beta); }));
  return s;
}

SystemSpec make_opinion(const nlohmann::json& params, int N, int d) {
  const double radius = param(params, "radius", 1.0);
  const double strength = param(params, "strength", 1.0);
  const double nu = param(params, "nu", 1.0);
  if (!(radius > 0.0)) throw ConfigError("opinion_first_order requires radius > 0");
  if (!(nu > 0.0)) throw ConfigError("opinion_first_order requires nu > 0");
  SystemSpec s = blank("opinion_first_order", params, N, d, 1);
  Kernel k = radial([strength](double) { return strength; });
  k.r_max = radius;
  s.kernels.set(Channel::Energy, 0, 0, std::move(k));
  s.masses.assign(N, nu);
  s.first_order = true;
  return s;
}

SystemSpec make_hetero(const nlohmann::json& params, int N, int d) {
  if (N < 2) throw ConfigError("hetero_toy needs at least two agents");
  const int n1 = static_cast<int>(param(params, "n1", std::ceil(N / 2.0)));
  if (n1 < 1 || n1 >= N) throw ConfigError("hetero_toy requires 1 <= n1 < N");
  SystemSpec s = blank("hetero_toy", params, N, d, 2);
  for (int i = n1; i < N; ++i) s.type_of[i] = 1;

  s.kernels.set(Channel::Energy, 0, 0, radial([](double r) { return 0.5 * std::tanh(r - 1.0); }));
  s.kernels.set(Channel::Energy, 0, 1, radial([](double r) { return 0.3 * std::exp(-r); }));
  s.kernels.set(Channel::Energy, 1, 0, radial([](double r) { return -0.2 * std::exp(-0.5 * r); }));
  s.kernels.set(Channel::Energy, 1, 1, radial([](double r) { return 0.4 * std::tanh(r - 0.5); }));
  const double betas[2][2] = {{0.5, 1.0}, {0.25, 0.75}};
  for (int k = 0; k < 2; ++k)
    for (int kp = 0; kp < 2; ++kp) {
      const double b = betas[k][kp];
      s.kernels.set(Channel::Alignment, k, kp,
                    radial([b](double r) { return std::pow(1.0 + r * r, -b); }));
    }
  return s;
}

SystemSpec make_xi_toy(const nlohmann::json& params, int N, int d) {
  const double gamma = param(params, "gamma", 0.1);
  const double beta = param(params, "beta", 0.5);
  SystemSpec s = blank("xi_toy", params, N, d, 1);
  s.has_xi = true;
  s.kernels.set(Channel::Alignment, 0, 0,
                radial([beta](double r) { return std::pow(1.0 + r * r, -beta); }));
  s.kernels.set(Channel::Environment, 0, 0, radial([](double r) { return std::exp(-r); }));
  s.force_xi = [gamma](const AgentRef& a) { return -gamma * a.xi; };
  return s;
}

}  // namespace

const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {"fwep",   "anticipation",      "cucker_smale",
                                                 "opinion_first_order", "hetero_toy", "xi_toy"};
  return names;
}

SystemSpec make_model(std::string_view name, const nlohmann::json& params, int N, int d) {
  SystemSpec s;
  if (name == "fwep") s = make_fwep(params, N, d);
  else if (name == "anticipation") s = make_anticipation(params, N, d);
  else if (name == "cucker_smale") s = make_cucker_smale(params, N, d);
  else if (name == "opinion_first_order") s = make_opinion(params, N, d);
  else if (name == "hetero_toy") s = make_hetero(params, N, d);
  else if (name == "xi_toy") s = make_xi_toy(params, N, d);
  else throw ConfigError("unknown model '" + std::string(name) + "'");
  s.finalize();
  return s;
}

SystemSpec first_order_mode(SystemSpec spec) {
  for (int k = 0; k < spec.K; ++k)
    for (int kp = 0; kp < spec.K; ++kp)
      if (spec.kernels.get(Channel::Alignment, k, kp))
        throw ConfigError("first-order mode requires phiA == 0; an alignment kernel was supplied");
  spec.first_order = true;
  spec.finalize();
  return spec;
}

nlohmann::json spec_to_json(const SystemSpec& spec) {
  return nlohmann::json{{"name", spec.name},     {"params", spec.params}, {"N", spec.N},
                        {"d", spec.d},           {"K", spec.K},           {"type_of", spec.type_of},
                        {"masses", spec.masses}, {"has_xi", spec.has_xi}, {"first_order", spec.first_order}};
}

SystemSpec spec_from_json(const nlohmann::json& j) {
  try {
    SystemSpec s = make_model(j.at("name").get<std::string>(), j.value("params", nlohmann::json::object()),
                              j.at("N").get<int>(), j.at("d").get<int>());
    if (j.contains("K") && j.at("K").get<int>() != s.K)
      throw ConfigError("system JSON K does not match model '" + s.name + "'");
    if (j.contains("type_of")) s.type_of = j.at("type_of").get<std::vector<int>>();
    if (j.contains("masses")) s.masses = j.at("masses").get<std::vector<double>>();
    s.finalize();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed system JSON: ") + e.what());
  }
}

}  // namespace kinfer
