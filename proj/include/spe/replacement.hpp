#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spe/dynamics.hpp"
#include "spe/pomdp.hpp"
#include "spe/reward.hpp"
#include "spe/soft_bellman.hpp"

namespace spe {

// Bus-engine replacement with a hidden good (0) / bad (1) engine state.
// Actions: 0 = keep and maintain, 1 = replace. Observations are cumulative
// mileage bins of 2500 miles; the top bin z_max - 1 saturates.
struct EngineParams {
  // Persistence of the good and bad state under maintenance.
  std::array<double, 2> theta2{0.949, 0.988};
  // Mileage increment distribution (0..3 bins) given the current state.
  std::array<std::array<double, 4>, 2> theta3{{{0.039, 0.333, 0.590, 0.038},
                                               {0.181, 0.757, 0.061, 0.001}}};
  // Maintenance cost slopes per mileage bin in the good and bad state.
  std::array<double, 2> theta1{0.2, 1.2};
  double rc = 9.243;
  int z_max = 200;
};

inline constexpr int kMaxIncrement = 3;
inline constexpr double kCostScale = 0.001;

void validate(const EngineParams& p);

// Kernel P(z', s' | z, s, a) = P(s' | s, a) P(z' | z, s, a); replacement
// resets to (z' = 0, s' = 0) with certainty.
std::vector<double> engine_kernel(const std::array<double, 2>& theta2,
                                  const std::array<std::array<double, 4>, 2>& theta3, int z_max);

// theta1 = (theta_{1,0}, theta_{1,1}, RC).
LinearReward engine_reward(int z_max);
std::vector<double> engine_theta1(const EngineParams& p);

PomdpModel build_engine_model(const EngineParams& p, double discount);

// Hidden-state engine dynamics: raw = (logit theta2_0, logit theta2_1,
// 3 increment logits for s = 0, 3 for s = 1), increment 3 being the
// reference. Natural order: theta3_{0,0..2}, theta3_{1,0..2}, theta2_0, theta2_1.
class EngineDynamics : public DynamicsFamily {
 public:
  explicit EngineDynamics(int z_max);

  int n_states() const override { return 2; }
  int n_obs() const override { return z_max_; }
  int n_actions() const override { return 2; }
  int n_params() const override { return 8; }

  std::vector<double> kernel(std::span<const double> raw) const override;
  std::vector<double> natural(std::span<const double> raw) const override;
  std::vector<std::string> natural_names() const override;

  std::vector<double> raw_from(const EngineParams& p) const;
  // Splits raw parameters back into (theta2, theta3).
  void unpack(std::span<const double> raw, std::array<double, 2>& theta2,
              std::array<std::array<double, 4>, 2>& theta3) const;

 private:
  int z_max_;
};

// Fully observed mileage model (single hidden state): one increment
// distribution, 3 logits. Natural parameters: the four increment probabilities.
class MileageDynamics : public DynamicsFamily {
 public:
  explicit MileageDynamics(int z_max);

  int n_states() const override { return 1; }
  int n_obs() const override { return z_max_; }
  int n_actions() const override { return 2; }
  int n_params() const override { return 3; }

  std::vector<double> kernel(std::span<const double> raw) const override;
  std::vector<double> natural(std::span<const double> raw) const override;
  std::vector<std::string> natural_names() const override;

 private:
  int z_max_;
};

// theta1 = (cost slope, RC) for the single-state model.
LinearReward mileage_reward(int z_max);

enum class PriorLaw { Fixed, Uniform };

struct SimConfig {
  int n_histories = 1;
  int horizon = 1;
  std::uint64_t seed = 0;
  PriorLaw prior = PriorLaw::Uniform;
  // Good-state probability used when prior == Fixed.
  double fixed_good = 1.0;
  int z0 = 0;
  bool keep_latent = false;
};

struct SimulatedData {
  Dataset data;
  // Only filled with keep_latent: hidden states s_0..s_T and beliefs x_0..x_T.
  std::vector<std::vector<int>> states;
  std::vector<std::vector<Belief>> beliefs;
};

// Draws histories from the controlled POMDP: actions from the softmax policy
// at the current belief, (z', s') from the kernel, beliefs by Bayes update.
// Each history uses its own generator seeded from (seed, index), so the
// result does not depend on the thread count.
SimulatedData simulate(const PomdpModel& model, const QTable& q, const SimConfig& cfg);

// Solves the Bellman equation at the given parameters first.
SimulatedData simulate(const EngineParams& p, double discount, const SimConfig& cfg,
                       int grid_resolution = 101);

// JSON lines: {"x0": [...], "z": [...], "a": [...]} per history.
void emit_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);
std::string dataset_to_string(const Dataset& data);
Dataset dataset_from_string(const std::string& text);

// Engine parameter files mirror the struct field names.
EngineParams load_engine_params(const std::string& path);
void save_engine_params(const EngineParams& p, const std::string& path);

}  // namespace spe
