#include "spe/replacement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "spe/errors.hpp"

namespace spe {

using nlohmann::json;

void validate(const EngineParams& p) {
  for (double v : p.theta2)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("theta2 entries must lie in [0, 1]");
  for (const auto& row : p.theta3) {
    double total = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) throw InvalidArgument("theta3 entries must be nonnegative");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("theta3 rows must sum to 1");
  }
  if (!(p.rc > 0.0)) throw InvalidArgument("replacement cost must be positive");
  if (p.z_max < kMaxIncrement + 1) throw InvalidArgument("z_max must be at least 4");
  for (double v : p.theta1)
    if (!std::isfinite(v)) throw InvalidArgument("theta1 must be finite");
}

std::vector<double> engine_kernel(const std::array<double, 2>& theta2,
                                  const std::array<std::array<double, 4>, 2>& theta3, int z_max) {
  constexpr int S = 2;
  const std::size_t row = std::size_t(z_max) * S;
  std::vector<double> k(2 * std::size_t(z_max) * S * row, 0.0);
  auto at = [&](int a, int z, int s, int z2, int s2) -> double& {
    return k[((std::size_t(a) * z_max + z) * S + s) * row + std::size_t(z2) * S + s2];
  };
  for (int z = 0; z < z_max; ++z) {
    for (int s = 0; s < S; ++s) {
      const double stay = theta2[s];
      const std::array<double, 2> next_s = s == 0 ? std::array<double, 2>{stay, 1.0 - stay}
                                                  : std::array<double, 2>{1.0 - stay, stay};
      double total = 0.0;
      for (double v : theta3[s]) total += v;
      for (int d = 0; d <= kMaxIncrement; ++d) {
        const int z2 = std::min(z + d, z_max - 1);
        for (int s2 = 0; s2 < S; ++s2) at(0, z, s, z2, s2) += next_s[s2] * theta3[s][d] / total;
      }
      at(1, z, s, 0, 0) = 1.0;
    }
  }
  return k;
}

LinearReward engine_reward(int z_max) {
  constexpr int S = 2, A = 2, P = 3;
  std::vector<double> f(std::size_t(A) * z_max * S * P, 0.0);
  for (int z = 0; z < z_max; ++z)
    for (int s = 0; s < S; ++s) {
      f[((std::size_t(0) * z_max + z) * S + s) * P + s] = -kCostScale * z;
      f[((std::size_t(1) * z_max + z) * S + s) * P + 2] = -1.0;
    }
  return LinearReward(S, z_max, A, P, std::move(f));
}

std::vector<double> engine_theta1(const EngineParams& p) {
  return {p.theta1[0], p.theta1[1], p.rc};
}

PomdpModel build_engine_model(const EngineParams& p, double discount) {
  validate(p);
  const auto reward = engine_reward(p.z_max).reward(engine_theta1(p));
  return PomdpModel(2, p.z_max, 2, discount, engine_kernel(p.theta2, p.theta3, p.z_max), reward);
}

EngineDynamics::EngineDynamics(int z_max) : z_max_(z_max) {
  if (z_max < kMaxIncrement + 1) throw InvalidArgument("z_max must be at least 4");
}

void EngineDynamics::unpack(std::span<const double> raw, std::array<double, 2>& theta2,
                            std::array<std::array<double, 4>, 2>& theta3) const {
  if (raw.size() != 8) throw InvalidArgument("engine dynamics take 8 raw parameters");
  theta2 = {logistic(raw[0]), logistic(raw[1])};
  softmax_with_reference(raw.subspan(2, 3), theta3[0]);
  softmax_with_reference(raw.subspan(5, 3), theta3[1]);
}

std::vector<double> EngineDynamics::kernel(std::span<const double> raw) const {
  std::array<double, 2> theta2;
  std::array<std::array<double, 4>, 2> theta3;
  unpack(raw, theta2, theta3);
  return engine_kernel(theta2, theta3, z_max_);
}

std::vector<double> EngineDynamics::natural(std::span<const double> raw) const {
  std::array<double, 2> theta2;
  std::array<std::array<double, 4>, 2> theta3;
  unpack(raw, theta2, theta3);
  return {theta3[0][0], theta3[0][1], theta3[0][2], theta3[1][0],
          theta3[1][1], theta3[1][2], theta2[0],    theta2[1]};
}

std::vector<std::string> EngineDynamics::natural_names() const {
  return {"theta3_0_0", "theta3_0_1", "theta3_0_2", "theta3_1_0",
          "theta3_1_1", "theta3_1_2", "theta2_0",   "theta2_1"};
}

std::vector<double> EngineDynamics::raw_from(const EngineParams& p) const {
  std::vector<double> raw{logit(p.theta2[0]), logit(p.theta2[1])};
  for (const auto& row : p.theta3)
    for (int d = 0; d < 3; ++d) raw.push_back(std::log(row[d] / row[3]));
  return raw;
}

MileageDynamics::MileageDynamics(int z_max) : z_max_(z_max) {
  if (z_max < kMaxIncrement + 1) throw InvalidArgument("z_max must be at least 4");
}

std::vector<double> MileageDynamics::kernel(std::span<const double> raw) const {
  if (raw.size() != 3) throw InvalidArgument("mileage dynamics take 3 raw parameters");
  std::array<double, 4> inc;
  softmax_with_reference(raw, inc);
  std::vector<double> k(2 * std::size_t(z_max_) * z_max_, 0.0);
  for (int z = 0; z < z_max_; ++z) {
    for (int d = 0; d <= kMaxIncrement; ++d)
      k[std::size_t(z) * z_max_ + std::min(z + d, z_max_ - 1)] += inc[d];
    k[(std::size_t(z_max_) + z) * z_max_ + 0] = 1.0;
  }
  return k;
}

std::vector<double> MileageDynamics::natural(std::span<const double> raw) const {
  std::array<double, 4> inc;
  softmax_with_reference(raw, inc);
  return {inc.begin(), inc.end()};
}

std::vector<std::string> MileageDynamics::natural_names() const {
  return {"theta3_0", "theta3_1", "theta3_2", "theta3_3"};
}

LinearReward mileage_reward(int z_max) {
  constexpr int P = 2;
  std::vector<double> f(2 * std::size_t(z_max) * P, 0.0);
  for (int z = 0; z < z_max; ++z) {
    f[std::size_t(z) * P + 0] = -kCostScale * z;
    f[(std::size_t(z_max) + z) * P + 1] = -1.0;
  }
  return LinearReward(1, z_max, 2, P, std::move(f));
}

namespace {

double uniform01(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

int draw(std::mt19937_64& rng, std::span<const double> probs) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return static_cast<int>(k);
  }
  // Rounding left u above the last partial sum; take the last positive cell.
  for (std::size_t k = probs.size(); k-- > 0;)
    if (probs[k] > 0.0) return static_cast<int>(k);
  return static_cast<int>(probs.size()) - 1;
}

Belief draw_prior(std::mt19937_64& rng, int n_states, const SimConfig& cfg) {
  if (cfg.prior == PriorLaw::Fixed) {
    if (n_states == 1) return Belief::vertex(1, 0);
    if (n_states != 2) throw InvalidArgument("fixed good-state prior needs two states");
    return Belief({cfg.fixed_good, 1.0 - cfg.fixed_good});
  }
  if (n_states == 2) {
    const double g = uniform01(rng);
    return Belief({g, 1.0 - g});
  }
  // Flat Dirichlet via normalized exponentials.
  std::vector<double> p(n_states);
  double total = 0.0;
  for (double& v : p) {
    v = -std::log1p(-uniform01(rng));
    total += v;
  }
  for (double& v : p) v /= total;
  p.back() = 1.0;
  for (int s = 0; s + 1 < n_states; ++s) p.back() -= p[s];
  p.back() = std::max(p.back(), 0.0);
  return Belief(std::move(p));
}

}  // namespace

SimulatedData simulate(const PomdpModel& model, const QTable& q, const SimConfig& cfg) {
  if (cfg.n_histories < 1 || cfg.horizon < 1)
    throw InvalidArgument("simulation needs at least one history and one period");
  if (cfg.z0 < 0 || cfg.z0 >= model.n_obs()) throw InvalidArgument("z0 out of range");
  if (cfg.prior == PriorLaw::Fixed && !(cfg.fixed_good >= 0.0 && cfg.fixed_good <= 1.0))
    throw InvalidArgument("fixed prior must lie in [0, 1]");
  const int ns = model.n_states();
  SimulatedData out;
  out.data.resize(cfg.n_histories);
  if (cfg.keep_latent) {
    out.states.resize(cfg.n_histories);
    out.beliefs.resize(cfg.n_histories);
  }
  const std::uint32_t lo = static_cast<std::uint32_t>(cfg.seed);
  const std::uint32_t hi = static_cast<std::uint32_t>(cfg.seed >> 32);
  bool impossible = false;

#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < cfg.n_histories; ++i) {
    std::seed_seq seq{lo, hi, static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    History h;
    h.x0 = draw_prior(rng, ns, cfg);
    std::vector<double> x(h.x0.probs().begin(), h.x0.probs().end()), next(ns);
    int s = draw(rng, x);
    int z = cfg.z0;
    h.obs.reserve(cfg.horizon + 1);
    h.acts.reserve(cfg.horizon);
    h.obs.push_back(z);
    std::vector<int> states{s};
    std::vector<Belief> beliefs;
    if (cfg.keep_latent) beliefs.push_back(h.x0);
    for (int t = 0; t < cfg.horizon; ++t) {
      const auto pi = ccp(q, z, x);
      const int a = draw(rng, pi);
      const int cell = draw(rng, model.kernel_row(a, z, s));
      const int z2 = cell / ns;
      const int s2 = cell % ns;
      if (bayes_step(model, z2, z, x, a, next) == 0.0) {
        // Only reachable when the kernel and the filter disagree numerically.
#pragma omp atomic write
        impossible = true;
        break;
      }
      x.swap(next);
      h.acts.push_back(a);
      h.obs.push_back(z2);
      z = z2;
      s = s2;
      if (cfg.keep_latent) {
        states.push_back(s);
        beliefs.push_back(Belief(x));
      }
    }
    out.data[i] = std::move(h);
    if (cfg.keep_latent) {
      out.states[i] = std::move(states);
      out.beliefs[i] = std::move(beliefs);
    }
  }
  if (impossible) throw Error("simulated an observation with zero filter probability");
  return out;
}

SimulatedData simulate(const EngineParams& p, double discount, const SimConfig& cfg,
                       int grid_resolution) {
  const auto model = build_engine_model(p, discount);
  auto grid = std::make_shared<const BeliefGrid>(2, grid_resolution);
  const auto solved = solve(model, grid);
  return simulate(model, solved.q, cfg);
}

std::string dataset_to_string(const Dataset& data) {
  std::string out;
  for (const auto& h : data) {
    json j;
    j["x0"] = std::vector<double>(h.x0.probs().begin(), h.x0.probs().end());
    j["z"] = h.obs;
    j["a"] = h.acts;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset dataset_from_string(const std::string& text) {
  Dataset data;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    History h;
    try {
      h.x0 = Belief(j.at("x0").get<std::vector<double>>());
      h.obs = j.at("z").get<std::vector<int>>();
      h.acts = j.at("a").get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const InvalidArgument& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (h.obs.size() != h.acts.size() + 1)
      throw SchemaError("line " + std::to_string(lineno) +
                        ": z must have exactly one more entry than a");
    data.push_back(std::move(h));
  }
  return data;
}

void emit_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << dataset_to_string(data);
  if (!out) throw IoError("failed writing " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return dataset_from_string(ss.str());
}

EngineParams load_engine_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(0, e.what());
  }
  static const char* known[] = {"theta2", "theta3", "theta1", "rc", "z_max"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw SchemaError("unknown engine parameter field '" + key + "'");
  }
  EngineParams p;
  try {
    if (j.contains("theta2")) p.theta2 = j["theta2"].get<std::array<double, 2>>();
    if (j.contains("theta3")) {
      const auto rows = j["theta3"].get<std::vector<std::vector<double>>>();
      if (rows.size() != 2) throw SchemaError("theta3 needs two rows");
      for (int s = 0; s < 2; ++s) {
        const auto& r = rows[s];
        if (r.size() == 3) {
          p.theta3[s] = {r[0], r[1], r[2], 1.0 - r[0] - r[1] - r[2]};
        } else if (r.size() == 4) {
          p.theta3[s] = {r[0], r[1], r[2], r[3]};
        } else {
          throw SchemaError("theta3 rows need 3 or 4 entries");
        }
      }
    }
    if (j.contains("theta1")) p.theta1 = j["theta1"].get<std::array<double, 2>>();
    if (j.contains("rc")) p.rc = j["rc"].get<double>();
    if (j.contains("z_max")) p.z_max = j["z_max"].get<int>();
  } catch (const json::exception& e) {
    throw SchemaError(e.what());
  }
  validate(p);
  return p;
}

void save_engine_params(const EngineParams& p, const std::string& path) {
  json j;
  j["theta2"] = p.theta2;
  j["theta3"] = p.theta3;
  j["theta1"] = p.theta1;
  j["rc"] = p.rc;
  j["z_max"] = p.z_max;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace spe
