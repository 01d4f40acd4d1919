#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dccda/rng.hpp"

namespace dccda {

using Table2 = std::vector<std::vector<double>>;
using Table3 = std::vector<std::vector<std::vector<double>>>;

/// Joint indices are mixed radix with agent 0 as the least significant digit.
inline int joint_index(const std::vector<int>& parts, const std::vector<int>& sizes) {
  int idx = 0;
  for (int k = static_cast<int>(sizes.size()) - 1; k >= 0; --k) idx = idx * sizes[k] + parts[k];
  return idx;
}

inline std::vector<int> split_joint_index(int idx, const std::vector<int>& sizes) {
  std::vector<int> parts(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    parts[k] = idx % sizes[k];
    idx /= sizes[k];
  }
  return parts;
}

inline int product(const std::vector<int>& sizes) {
  int p = 1;
  for (int s : sizes) p *= s;
  return p;
}

/**
 * @brief Finite Dec-POMDP with shared reward.
 *
 * Tables are row-major: transition[s][a][s'], observation[s'][a][o],
 * reward[s][a], init_observation[s][o] (first observation given s_0).
 * Joint actions/observations use joint_index.
 */
struct TabularDecPomdp {
  int num_agents = 0;
  int num_states = 0;
  std::vector<double> init_dist;
  std::vector<int> actions_per_agent;
  std::vector<int> obs_per_agent;
  Table3 transition;
  Table3 observation;
  Table2 init_observation;
  Table2 reward;
  double gamma = 1.0;
  int horizon = 1;

  int num_joint_actions() const { return product(actions_per_agent); }
  int num_joint_observations() const { return product(obs_per_agent); }
  int joint_action(const std::vector<int>& a) const { return joint_index(a, actions_per_agent); }
  std::vector<int> split_action(int ja) const { return split_joint_index(ja, actions_per_agent); }
  int joint_observation(const std::vector<int>& o) const { return joint_index(o, obs_per_agent); }
  std::vector<int> split_observation(int jo) const { return split_joint_index(jo, obs_per_agent); }
};

namespace detail {

inline void check_row(const std::vector<double>& row, std::size_t width, const std::string& name,
                      std::vector<std::string>& out) {
  if (row.size() != width) {
    out.push_back(name + " has width " + std::to_string(row.size()) + ", expected " + std::to_string(width));
    return;
  }
  double sum = 0.0;
  for (double p : row) {
    if (!std::isfinite(p) || p < 0.0) {
      out.push_back(name + " has an invalid probability");
      return;
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg.precision(17);
    msg << name << " sums to " << sum;
    out.push_back(msg.str());
  }
}

}  // namespace detail

/// Lists every invariant violation; empty when the model is well formed.
inline std::vector<std::string> validate(const TabularDecPomdp& m) {
  std::vector<std::string> out;
  if (m.num_agents < 1) out.push_back("num_agents must be >= 1");
  if (m.num_states < 1) out.push_back("states must be non-empty");
  if (static_cast<int>(m.actions_per_agent.size()) != m.num_agents ||
      static_cast<int>(m.obs_per_agent.size()) != m.num_agents) {
    out.push_back("per-agent action/observation counts do not match num_agents");
    return out;
  }
  for (int n : m.actions_per_agent)
    if (n < 1) out.push_back("agent with no actions");
  for (int n : m.obs_per_agent)
    if (n < 1) out.push_back("agent with no observations");
  if (!out.empty()) return out;
  if (!(m.gamma > 0.0 && m.gamma <= 1.0)) out.push_back("gamma out of range");
  if (m.horizon < 1) out.push_back("horizon must be >= 1");

  const std::size_t S = m.num_states;
  const std::size_t A = m.num_joint_actions();
  const std::size_t O = m.num_joint_observations();
  detail::check_row(m.init_dist, S, "init_dist", out);
  if (m.transition.size() != S) out.push_back("transition has wrong number of states");
  if (m.observation.size() != S) out.push_back("observation has wrong number of states");
  if (m.init_observation.size() != S) out.push_back("init_observation has wrong number of states");
  if (m.reward.size() != S) out.push_back("reward has wrong number of states");
  if (!out.empty() && (m.transition.size() != S || m.observation.size() != S || m.init_observation.size() != S ||
                       m.reward.size() != S))
    return out;
  for (std::size_t s = 0; s < S; ++s) {
    const std::string ss = std::to_string(s);
    detail::check_row(m.init_observation[s], O, "init_observation row " + ss, out);
    if (m.transition[s].size() != A || m.observation[s].size() != A || m.reward[s].size() != A) {
      out.push_back("tables at state " + ss + " have wrong joint-action count");
      continue;
    }
    for (std::size_t a = 0; a < A; ++a) {
      const std::string sa = "(" + ss + "," + std::to_string(a) + ")";
      detail::check_row(m.transition[s][a], S, "transition row " + sa, out);
      detail::check_row(m.observation[s][a], O, "observation row " + sa, out);
      if (!std::isfinite(m.reward[s][a])) out.push_back("reward " + sa + " is not finite");
    }
  }
  return out;
}

inline void require_valid(const TabularDecPomdp& m) {
  auto report = validate(m);
  if (!report.empty()) throw std::invalid_argument("invalid model: " + report.front());
}

inline void to_json(nlohmann::json& j, const TabularDecPomdp& m) {
  j = nlohmann::json{{"num_agents", m.num_agents},       {"states", m.num_states},
                     {"init_dist", m.init_dist},         {"actions_per_agent", m.actions_per_agent},
                     {"obs_per_agent", m.obs_per_agent}, {"transition", m.transition},
                     {"observation", m.observation},     {"init_observation", m.init_observation},
                     {"reward", m.reward},               {"gamma", m.gamma},
                     {"horizon", m.horizon}};
}

inline void from_json(const nlohmann::json& j, TabularDecPomdp& m) {
  j.at("num_agents").get_to(m.num_agents);
  j.at("states").get_to(m.num_states);
  j.at("init_dist").get_to(m.init_dist);
  j.at("actions_per_agent").get_to(m.actions_per_agent);
  j.at("obs_per_agent").get_to(m.obs_per_agent);
  j.at("transition").get_to(m.transition);
  j.at("observation").get_to(m.observation);
  j.at("reward").get_to(m.reward);
  j.at("gamma").get_to(m.gamma);
  j.at("horizon").get_to(m.horizon);
  if (j.contains("init_observation")) {
    j.at("init_observation").get_to(m.init_observation);
  } else {
    // Without an explicit rule the first observation is uniform.
    const int O = m.num_joint_observations();
    m.init_observation.assign(m.num_states, std::vector<double>(O, 1.0 / O));
  }
}

struct RandomModelConfig {
  int num_agents = 2;
  int num_states = 3;
  int num_actions = 2;
  int num_observations = 2;
  int horizon = 2;
  double reward_min = -1.0;
  double reward_max = 1.0;
  double gamma = 0.95;
  /// Draw rewards from {reward_min, reward_max} only.
  bool binary_rewards = false;
};

namespace detail {

inline std::vector<double> random_simplex(std::size_t n, Rng& rng) {
  std::vector<double> row(n);
  double sum = 0.0;
  for (auto& x : row) {
    x = -std::log(1.0 - uniform01(rng));
    sum += x;
  }
  for (auto& x : row) x /= sum;
  // Push the rounding residue onto the largest entry so the row sums to 1.
  double total = 0.0;
  std::size_t big = 0;
  for (std::size_t k = 0; k < n; ++k) {
    total += row[k];
    if (row[k] > row[big]) big = k;
  }
  row[big] += 1.0 - total;
  return row;
}

}  // namespace detail

/// Random instance with Dirichlet(1) rows; deterministic in seed.
inline TabularDecPomdp make_random_decpomdp(const RandomModelConfig& c, std::uint64_t seed) {
  if (c.num_agents < 1 || c.num_states < 1 || c.num_actions < 1 || c.num_observations < 1 || c.horizon < 1)
    throw std::invalid_argument("make_random_decpomdp: all sizes must be >= 1");
  Rng rng(seed);
  TabularDecPomdp m;
  m.num_agents = c.num_agents;
  m.num_states = c.num_states;
  m.actions_per_agent.assign(c.num_agents, c.num_actions);
  m.obs_per_agent.assign(c.num_agents, c.num_observations);
  m.gamma = c.gamma;
  m.horizon = c.horizon;
  const int S = c.num_states, A = m.num_joint_actions(), O = m.num_joint_observations();
  m.init_dist = detail::random_simplex(S, rng);
  m.init_observation.resize(S);
  m.transition.assign(S, Table2(A));
  m.observation.assign(S, Table2(A));
  m.reward.assign(S, std::vector<double>(A));
  for (int s = 0; s < S; ++s) {
    m.init_observation[s] = detail::random_simplex(O, rng);
    for (int a = 0; a < A; ++a) {
      m.transition[s][a] = detail::random_simplex(S, rng);
      m.observation[s][a] = detail::random_simplex(O, rng);
      const double u = uniform01(rng);
      m.reward[s][a] = c.binary_rewards ? (u < 0.5 ? c.reward_min : c.reward_max)
                                        : c.reward_min + (c.reward_max - c.reward_min) * u;
    }
  }
  return m;
}

}  // namespace dccda
