#include "kinfer/config.hpp"

#include <fstream>

#include "kinfer/common.hpp"
#include "kinfer/zoo.hpp"

namespace kinfer {

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.initial.x = ComponentSampler::uniform(0.0, 5.0);
  cfg.initial.v = ComponentSampler::uniform(0.0, 5.0);
  cfg.initial.xi = ComponentSampler::uniform(0.0, 1.0);
  return cfg;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (N < 1) fail("N must be >= 1");
  if (d < 1 || d > kMaxDim) fail("d must be in [1, " + std::to_string(kMaxDim) + "]");
  if (M < 1) fail("M must be >= 1");
  if (M_rho < 0) fail("M_rho must be >= 0");
  if (L < 1) fail("L must be >= 1");
  if (L > 1 && !(T > 0.0)) fail("T must be positive");
  if (!(T < T_f)) fail("T must be smaller than T_f");
  if (!(tol.rtol > 0.0) || !(tol.atol > 0.0)) fail("rtol and atol must be positive");
  if (!(tol_rel > 0.0 && tol_rel < 1.0)) fail("tol_rel must lie in (0, 1)");
  if (reps < 1) fail("reps must be >= 1");
  if (derivs == DerivSource::FiniteDifference && L < 2) fail("finite-difference derivatives need L >= 2");
  for (int b : bins)
    if (b < 1) fail("bins must be >= 1");
  for (const auto& cc : space.channel) {
    for (int c : cc.cells)
      if (c < 1) fail("space cells must be >= 1");
    for (int p : cc.degree)
      if (p < 0 || p > kMaxDegree) fail("space degree must be in [0, " + std::to_string(kMaxDegree) + "]");
  }
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  return {{"model", {{"name", cfg.model}, {"params", cfg.params}}},
          {"N", cfg.N},
          {"d", cfg.d},
          {"seed", cfg.seed},
          {"initial", distribution_to_json(cfg.initial)},
          {"M", cfg.M},
          {"M_rho", cfg.M_rho},
          {"L", cfg.L},
          {"T", cfg.T},
          {"T_f", cfg.T_f},
          {"rtol", cfg.tol.rtol},
          {"atol", cfg.tol.atol},
          {"space", space_config_to_json(cfg.space)},
          {"tol_rel", cfg.tol_rel},
          {"reps", cfg.reps},
          {"derivs", std::string(deriv_source_name(cfg.derivs))},
          {"bins", cfg.bins},
          {"converge",
           {{"Ms", cfg.converge.Ms},
            {"s", cfg.converge.s},
            {"V", cfg.converge.V},
            {"cells_scale", cfg.converge.cells_scale}}}};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg = default_config();
  if (!j.is_object()) throw ConfigError("config: the document must be a JSON object");
  static const std::vector<std::string> known = {"model", "N",    "d",     "seed",    "initial", "M",
                                                 "M_rho", "L",    "T",     "T_f",     "rtol",    "atol",
                                                 "space", "tol_rel", "reps", "derivs", "bins",  "converge"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("config: unknown key '" + it.key() + "'");
  try {
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.is_string()) {
        cfg.model = m.get<std::string>();
      } else {
        cfg.model = m.value("name", cfg.model);
        if (m.contains("params")) cfg.params = m.at("params");
      }
    }
    cfg.N = j.value("N", cfg.N);
    cfg.d = j.value("d", cfg.d);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("initial")) {
      nlohmann::json init = distribution_to_json(cfg.initial);
      init.merge_patch(j.at("initial"));
      cfg.initial = distribution_from_json(init);
    }
    cfg.initial.seed = cfg.seed;
    cfg.M = j.value("M", cfg.M);
    cfg.M_rho = j.value("M_rho", cfg.M_rho);
    cfg.L = j.value("L", cfg.L);
    cfg.T = j.value("T", cfg.T);
    cfg.T_f = j.value("T_f", cfg.T_f);
    cfg.tol.rtol = j.value("rtol", cfg.tol.rtol);
    cfg.tol.atol = j.value("atol", cfg.tol.atol);
    if (j.contains("space")) cfg.space = space_config_from_json(j.at("space"));
    cfg.tol_rel = j.value("tol_rel", cfg.tol_rel);
    cfg.reps = j.value("reps", cfg.reps);
    if (j.contains("derivs")) cfg.derivs = deriv_source_from_name(j.at("derivs").get<std::string>());
    if (j.contains("bins")) {
      const auto& b = j.at("bins");
      cfg.bins = b.is_number() ? std::vector<int>{b.get<int>()} : b.get<std::vector<int>>();
    }
    if (j.contains("converge")) {
      const auto& c = j.at("converge");
      cfg.converge.Ms = c.value("Ms", cfg.converge.Ms);
      cfg.converge.s = c.value("s", cfg.converge.s);
      cfg.converge.V = c.value("V", cfg.converge.V);
      cfg.converge.cells_scale = c.value("cells_scale", cfg.converge.cells_scale);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override key '" + key + "' descends into a non-object");
      *node = nlohmann::json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("config file not found: " + file.string());
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + file.string() + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

SystemSpec make_system(const ExperimentConfig& cfg) { return make_model(cfg.model, cfg.params, cfg.N, cfg.d); }

}  // namespace kinfer
