#include "spe/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "spe/errors.hpp"

namespace spe {

using nlohmann::json;

namespace {

json parse(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string(what) + ": " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw SchemaError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw SchemaError(std::string(what) + ": unknown field \"" + key + "\"");
}

template <class T>
T field(const json& j, const char* key, const char* what) {
  if (!j.contains(key)) throw SchemaError(std::string(what) + ": missing field \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string(what) + ": field \"" + key + "\": " + e.what());
  }
}

// Flattens a nested array of numbers, checking the shape level by level.
void flatten(const json& j, std::span<const std::size_t> shape, std::vector<double>& out,
             const char* what) {
  if (shape.empty()) {
    if (!j.is_number()) throw SchemaError(std::string(what) + ": expected a number");
    out.push_back(j.get<double>());
    return;
  }
  if (!j.is_array() || j.size() != shape[0])
    throw SchemaError(std::string(what) + ": expected an array of length " +
                      std::to_string(shape[0]));
  for (const auto& e : j) flatten(e, shape.subspan(1), out, what);
}

json nest(std::span<const double> flat, std::span<const std::size_t> shape) {
  if (shape.empty()) return flat[0];
  json arr = json::array();
  const std::size_t stride = flat.size() / shape[0];
  for (std::size_t i = 0; i < shape[0]; ++i)
    arr.push_back(nest(flat.subspan(i * stride, stride), shape.subspan(1)));
  return arr;
}

}  // namespace

std::string model_to_json(const PomdpModel& m) {
  const std::size_t S = m.n_states(), Z = m.n_obs(), A = m.n_actions();
  const std::size_t ks[] = {A, Z, S, Z, S};
  const std::size_t rs[] = {A, Z, S};
  json j;
  j["n_states"] = S;
  j["n_obs"] = Z;
  j["n_actions"] = A;
  j["discount"] = m.discount();
  j["kernel"] = nest(m.kernel_data(), ks);
  j["reward"] = nest(m.reward_data(), rs);
  return j.dump();
}

PomdpModel model_from_json(const std::string& text) {
  const char* what = "model";
  const json j = parse(text, what);
  reject_unknown(j, {"n_states", "n_obs", "n_actions", "discount", "kernel", "reward"}, what);
  const int S = field<int>(j, "n_states", what);
  const int Z = field<int>(j, "n_obs", what);
  const int A = field<int>(j, "n_actions", what);
  const double discount = field<double>(j, "discount", what);
  if (S < 1 || Z < 1 || A < 1) throw InvalidArgument("model dimensions must be positive");
  const std::size_t ks[] = {std::size_t(A), std::size_t(Z), std::size_t(S), std::size_t(Z),
                            std::size_t(S)};
  const std::size_t rs[] = {std::size_t(A), std::size_t(Z), std::size_t(S)};
  std::vector<double> kernel, reward;
  flatten(j.at("kernel"), ks, kernel, "model kernel");
  if (!j.contains("reward")) throw SchemaError("model: missing field \"reward\"");
  flatten(j.at("reward"), rs, reward, "model reward");
  return PomdpModel(S, Z, A, discount, std::move(kernel), std::move(reward));
}

PomdpModel load_model(const std::string& path) { return model_from_json(read_file(path)); }

std::string qtable_to_json(const QTable& q) {
  const std::size_t shape[] = {std::size_t(q.n_obs()), std::size_t(q.n_nodes()),
                               std::size_t(q.n_actions())};
  json j;
  j["resolution"] = q.grid().resolution();
  j["n_states"] = q.grid().n_states();
  j["n_obs"] = q.n_obs();
  j["n_actions"] = q.n_actions();
  j["model_hash"] = q.model_hash;
  j["values"] = nest(q.values(), shape);
  return j.dump();
}

QTable qtable_from_json(const std::string& text) {
  const char* what = "QTable";
  const json j = parse(text, what);
  reject_unknown(j, {"resolution", "n_states", "n_obs", "n_actions", "model_hash", "values"},
                 what);
  auto grid = std::make_shared<const BeliefGrid>(field<int>(j, "n_states", what),
                                                 field<int>(j, "resolution", what));
  QTable q(grid, field<int>(j, "n_obs", what), field<int>(j, "n_actions", what));
  q.model_hash = field<std::string>(j, "model_hash", what);
  const std::size_t shape[] = {std::size_t(q.n_obs()), std::size_t(q.n_nodes()),
                               std::size_t(q.n_actions())};
  std::vector<double> values;
  if (!j.contains("values")) throw SchemaError("QTable: missing field \"values\"");
  flatten(j.at("values"), shape, values, "QTable values");
  q.values() = std::move(values);
  return q;
}

EstimatorConfig config_from_json(const std::string& text, EstimatorConfig c) {
  const char* what = "estimator config";
  const json j = parse(text, what);
  reject_unknown(j,
                 {"grid_resolution", "discount", "bellman_tol", "grad_q_tol", "grad_eps",
                  "step_rule", "step_size", "armijo", "max_outer", "theta1_init", "theta2_init",
                  "seed", "stage1_tol", "stage1_max_iter", "stage1_fd_step", "stage1_starts",
                  "stage1_spread", "burn_in", "x0_override"},
                 what);
  auto opt = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = field<std::decay_t<decltype(dst)>>(j, key, what);
  };
  opt("grid_resolution", c.grid_resolution);
  opt("discount", c.discount);
  opt("bellman_tol", c.bellman_tol);
  opt("grad_q_tol", c.grad_q_tol);
  opt("grad_eps", c.grad_eps);
  opt("step_size", c.step_size);
  opt("armijo", c.armijo);
  opt("max_outer", c.max_outer);
  opt("theta1_init", c.theta1_init);
  opt("theta2_init", c.theta2_init);
  opt("seed", c.seed);
  opt("stage1_tol", c.stage1_tol);
  opt("stage1_max_iter", c.stage1_max_iter);
  opt("stage1_fd_step", c.stage1_fd_step);
  opt("stage1_starts", c.stage1_starts);
  opt("stage1_spread", c.stage1_spread);
  opt("burn_in", c.burn_in);
  if (j.contains("step_rule")) {
    const auto rule = field<std::string>(j, "step_rule", what);
    if (rule == "fixed")
      c.step_rule = StepRule::Fixed;
    else if (rule == "backtracking")
      c.step_rule = StepRule::Backtracking;
    else
      throw SchemaError("estimator config: step_rule must be \"fixed\" or \"backtracking\"");
  }
  if (j.contains("x0_override")) {
    if (j.at("x0_override").is_null())
      c.x0_override.reset();
    else
      c.x0_override = field<std::vector<double>>(j, "x0_override", what);
  }
  validate(c);
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path);
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << content;
    out.flush();
    if (!out) {
      std::remove(tmp.c_str());
      throw IoError("failed writing " + path);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw IoError("cannot move output into place at " + path + ": " + ec.message());
  }
}

}  // namespace spe
