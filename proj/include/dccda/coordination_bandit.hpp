#pragma once

#include "dccda/decpomdp.hpp"

namespace dccda {

/**
 * @brief One-shot two-agent game. A hidden role bit is drawn uniformly; agent 0
 * observes it, agent 1 observes nothing. Reward is 1 iff a_0 XOR a_1 equals the
 * role. Agent 1 can only learn which of its actions pays through a critic that
 * hears agent 0's (history, action).
 */
inline TabularDecPomdp make_coordination_bandit() {
  TabularDecPomdp m;
  m.num_agents = 2;
  m.num_states = 2;
  m.init_dist = {0.5, 0.5};
  m.actions_per_agent = {2, 2};
  m.obs_per_agent = {2, 1};
  const int joint_actions = 4, joint_obs = 2;
  m.transition.assign(2, std::vector<std::vector<double>>(joint_actions, std::vector<double>(2, 0.0)));
  m.observation.assign(2, std::vector<std::vector<double>>(joint_actions, std::vector<double>(joint_obs, 0.0)));
  m.init_observation.assign(2, std::vector<double>(joint_obs, 0.0));
  m.reward.assign(2, std::vector<double>(joint_actions, 0.0));
  for (int s = 0; s < 2; ++s) {
    // Joint observation index equals agent 0's observation since agent 1 has one symbol.
    m.init_observation[s][s] = 1.0;
    for (int ja = 0; ja < joint_actions; ++ja) {
      m.transition[s][ja][s] = 1.0;
      m.observation[s][ja][s] = 1.0;
      const auto a = m.split_action(ja);
      m.reward[s][ja] = ((a[0] ^ a[1]) == s) ? 1.0 : 0.0;
    }
  }
  m.gamma = 1.0;
  m.horizon = 1;
  return m;
}

}  // namespace dccda
