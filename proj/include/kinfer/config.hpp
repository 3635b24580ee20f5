#pragma once

// Experiment configuration: one JSON document, optionally patched with
// dotted-key overrides such as  space.E.cells=31  or  model.params.beta=0.5.
//
// {
//   "model":   {"name": "fwep", "params": {"a": 1, "beta": 0.5}},
//   "N": 10, "d": 2, "seed": 1,
//   "initial": {"x": {"kind": "uniform", "lo": 0, "hi": 5}, "v": {...}, "xi": {...}},
//   "M": 100, "M_rho": 1000, "L": 50, "T": 5, "T_f": 10,
//   "rtol": 1e-8, "atol": 1e-11,
//   "space": {"E": {"cells": 31, "degree": 1}, "A": {...}, "xi": {...}},
//   "tol_rel": 1e-10, "reps": 1, "derivs": "observed",
//   "bins": [20],
//   "converge": {"Ms": [32, 64, 128, 256, 512], "s": 2, "V": 1, "cells_scale": 20}
// }

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinfer/hypothesis.hpp"
#include "kinfer/integrator.hpp"
#include "kinfer/simulate.hpp"

namespace kinfer {

struct ConvergeConfig {
  std::vector<int> Ms{32, 64, 128, 256, 512};
  double s = 2.0;
  int V = 1;
  double cells_scale = 20.0;
};

struct ExperimentConfig {
  std::string model = "fwep";
  nlohmann::json params = nlohmann::json::object();
  int N = 10;
  int d = 2;
  std::uint64_t seed = 0;
  InitialDistribution initial;
  int M = 100;
  int M_rho = 0;  // 0: ten times M
  int L = 50;
  double T = 5.0;
  double T_f = 10.0;
  Tolerances tol;
  SpaceConfig space;
  double tol_rel = 1e-10;
  int reps = 1;
  DerivSource derivs = DerivSource::Observed;
  std::vector<int> bins{20};
  ConvergeConfig converge;

  int eval_M() const { return M_rho > 0 ? M_rho : 10 * M; }

  // Throws ConfigError naming the offending field.
  void validate() const;
};

ExperimentConfig default_config();

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

// Sets doc[a][b]... = value for "a.b...=value". The value is parsed as JSON
// when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Reads the file (or starts from defaults when `file` is empty), applies the
// overrides in order, parses and validates.
ExperimentConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

// The configured zoo system.
SystemSpec make_system(const ExperimentConfig& cfg);

}  // namespace kinfer
