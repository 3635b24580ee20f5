#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kinfer/model.hpp"

namespace kinfer {

// Below this distance the anticipation kernels are evaluated at the floor
// value, regularizing 1/r^k singularities of degenerate states.
inline constexpr double kAnticipationRFloor = 1e-10;

// Names accepted by make_model.
const std::vector<std::string>& model_names();

// Builds a fully wired system with its true kernels. `params` supplies model
// constants; unspecified constants take their documented defaults:
//   fwep                 a=1, beta=0.5
//   anticipation         tau=0.1, p=1.5 (1 < p <= 2)
//   cucker_smale         beta=0.5, kappa=1
//   opinion_first_order  radius=1, strength=1, nu=1
//   hetero_toy           n1=ceil(N/2)
//   xi_toy               gamma=0.1, beta=0.5
// Throws ConfigError on unknown names or invalid constants.
SystemSpec make_model(std::string_view name, const nlohmann::json& params, int N, int d);

// Replaces the alignment channel with first-order integration: positions obey
// nu_i x_i' = F^x + sum 1/N_k' phiE (x_i' - x_i), with nu_i taken from masses.
SystemSpec first_order_mode(SystemSpec spec);

nlohmann::json spec_to_json(const SystemSpec& spec);

// Rebuilds a zoo system from its JSON document, applying stored types/masses.
SystemSpec spec_from_json(const nlohmann::json& j);

}  // namespace kinfer
