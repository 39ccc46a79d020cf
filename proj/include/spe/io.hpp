#pragma once

#include <string>

#include "spe/estimator.hpp"
#include "spe/pomdp.hpp"
#include "spe/soft_bellman.hpp"

namespace spe {

// {"n_states", "n_obs", "n_actions", "discount", "kernel", "reward"} with
// kernel nested [a][z][s][z'][s'] and reward nested [a][z][s].
std::string model_to_json(const PomdpModel& m);
PomdpModel model_from_json(const std::string& text);
PomdpModel load_model(const std::string& path);

// {"resolution", "n_states", "n_obs", "n_actions", "model_hash", "values"}
// with values nested [z][node][a].
std::string qtable_to_json(const QTable& q);
QTable qtable_from_json(const std::string& text);

// Fields as written by config_to_json, all optional and applied on top of
// `base`; unknown fields are rejected.
EstimatorConfig config_from_json(const std::string& text, EstimatorConfig base = {});

std::string read_file(const std::string& path);
// Writes through a temporary file renamed into place, so a failure never
// leaves a partial file behind.
void write_file(const std::string& path, const std::string& content);

}  // namespace spe
