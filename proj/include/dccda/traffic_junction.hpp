#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dccda/environment.hpp"
#include "dccda/rng.hpp"

namespace dccda {

struct TrafficJunctionConfig {
  /// Cells on each approach; the junction is cell arm_length, exit cells follow.
  int arm_length = 2;
  int num_agents = 4;
  double spawn_prob = 0.5;
  int horizon = 10;
  int history_window = 2;
  double collision_penalty = -1.0;
  double time_penalty = -0.01;
  double gamma = 0.99;
};

inline void to_json(nlohmann::json& j, const TrafficJunctionConfig& c) {
  j = nlohmann::json{{"arm_length", c.arm_length},
                     {"num_agents", c.num_agents},
                     {"spawn_prob", c.spawn_prob},
                     {"horizon", c.horizon},
                     {"history_window", c.history_window},
                     {"collision_penalty", c.collision_penalty},
                     {"time_penalty", c.time_penalty},
                     {"gamma", c.gamma}};
}

inline void from_json(const nlohmann::json& j, TrafficJunctionConfig& c) {
  c.arm_length = j.value("arm_length", c.arm_length);
  c.num_agents = j.value("num_agents", c.num_agents);
  c.spawn_prob = j.value("spawn_prob", c.spawn_prob);
  c.horizon = j.value("horizon", c.horizon);
  c.history_window = j.value("history_window", c.history_window);
  c.collision_penalty = j.value("collision_penalty", c.collision_penalty);
  c.time_penalty = j.value("time_penalty", c.time_penalty);
  c.gamma = j.value("gamma", c.gamma);
}

/**
 * @brief Single four-way junction. Car i drives straight through on arm i % 4;
 * routes share only the junction cell, so a collision is two or more cars in
 * the junction on the same step.
 *
 * Actions: 0 brake, 1 gas. Observation: own position code (waiting, cells
 * 0..2L, exited) times a bit telling whether another car sits next to or
 * inside the junction.
 */
class TrafficJunctionLite {
 public:
  static constexpr int kBrake = 0;
  static constexpr int kGas = 1;

  explicit TrafficJunctionLite(const TrafficJunctionConfig& c) : c_(c) {
    if (c.num_agents < 1) throw std::invalid_argument("traffic junction: need at least one agent");
    if (c.arm_length < 1) throw std::invalid_argument("traffic junction: arm_length must be >= 1");
    if (c.num_agents > 4)
      throw std::invalid_argument("traffic junction: geometry has 4 arms, too small for " +
                                  std::to_string(c.num_agents) + " agents");
    if (!(c.spawn_prob > 0.0 && c.spawn_prob <= 1.0)) throw std::invalid_argument("traffic junction: bad spawn_prob");
    if (c.horizon < 1) throw std::invalid_argument("traffic junction: horizon must be >= 1");
    pos_.assign(c.num_agents, kWaiting);
  }

  int num_agents() const { return c_.num_agents; }
  int num_actions(int) const { return 2; }
  int num_observations(int) const { return 2 * (2 * c_.arm_length + 3); }
  int horizon() const { return c_.horizon; }
  double gamma() const { return c_.gamma; }
  int history_window() const { return c_.history_window; }
  bool success() const { return collisions_ == 0; }
  int collisions() const { return collisions_; }
  const std::vector<int>& positions() const { return pos_; }
  const TrafficJunctionConfig& config() const { return c_; }

  std::vector<int> reset(Rng& rng) {
    pos_.assign(c_.num_agents, kWaiting);
    collisions_ = 0;
    spawn(rng);
    return observe();
  }

  StepResult step(const std::vector<int>& actions, Rng& rng) {
    if (static_cast<int>(actions.size()) != c_.num_agents)
      throw std::invalid_argument("traffic junction: wrong number of actions");
    const int exit_cell = 2 * c_.arm_length;
    int active = 0;
    for (int i = 0; i < c_.num_agents; ++i) {
      if (pos_[i] < 0) continue;
      ++active;
      if (actions[i] == kGas) pos_[i] = pos_[i] == exit_cell ? kExited : pos_[i] + 1;
    }
    int in_junction = 0;
    for (int p : pos_)
      if (p == c_.arm_length) ++in_junction;
    StepResult r;
    r.reward = c_.time_penalty * active;
    if (in_junction >= 2) {
      ++collisions_;
      r.reward += c_.collision_penalty * in_junction;
    }
    spawn(rng);
    r.observations = observe();
    r.done = false;
    return r;
  }

 private:
  static constexpr int kWaiting = -1;
  static constexpr int kExited = -2;

  void spawn(Rng& rng) {
    for (auto& p : pos_)
      if (p == kWaiting && (c_.spawn_prob >= 1.0 || uniform01(rng) < c_.spawn_prob)) p = 0;
  }

  std::vector<int> observe() const {
    const int L = c_.arm_length;
    const int codes = 2 * L + 3;
    std::vector<int> obs(c_.num_agents);
    for (int i = 0; i < c_.num_agents; ++i) {
      int code = pos_[i] == kWaiting ? 0 : pos_[i] == kExited ? codes - 1 : pos_[i] + 1;
      int near = 0;
      for (int j = 0; j < c_.num_agents; ++j)
        if (j != i && (pos_[j] == L - 1 || pos_[j] == L)) near = 1;
      obs[i] = code * 2 + near;
    }
    return obs;
  }

  TrafficJunctionConfig c_;
  std::vector<int> pos_;
  int collisions_ = 0;
};

inline TrafficJunctionLite traffic_junction_lite(const TrafficJunctionConfig& c) { return TrafficJunctionLite(c); }

static_assert(Environment<TrafficJunctionLite>);
static_assert(Environment<TabularSimulator>);

}  // namespace dccda
