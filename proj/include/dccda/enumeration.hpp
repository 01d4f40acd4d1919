#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dccda/comm.hpp"
#include "dccda/decpomdp.hpp"
#include "dccda/environment.hpp"
#include "dccda/softmax_policy.hpp"

namespace dccda {

inline constexpr std::size_t kDefaultNodeBudget = 10'000'000;

/// A reachable joint history with its probability and state belief.
struct JointNode {
  std::vector<HistoryKey> keys;
  double prob = 0.0;
  std::vector<double> belief;
  std::vector<std::vector<double>> agent_probs;
  std::vector<double> action_probs;
  std::vector<double> reward;
  /// children[a] lists (index at depth+1, p(o'|h,a)).
  std::vector<std::vector<std::pair<std::size_t, double>>> children;
};

struct OutcomeTree {
  const TabularDecPomdp* model = nullptr;
  std::vector<HistoryCodec> codecs;
  std::vector<std::vector<JointNode>> depths;
  std::size_t num_nodes = 0;
};

namespace detail {

inline JointNode make_node(const TabularDecPomdp& m, const std::vector<SoftmaxPolicy>& pols,
                           std::vector<HistoryKey> keys, double prob, std::vector<double> belief) {
  JointNode node;
  node.keys = std::move(keys);
  node.prob = prob;
  node.belief = std::move(belief);
  const int n = m.num_agents, A = m.num_joint_actions();
  for (int i = 0; i < n; ++i) node.agent_probs.push_back(action_distribution(pols[i], node.keys[i]));
  node.action_probs.assign(A, 1.0);
  node.reward.assign(A, 0.0);
  for (int ja = 0; ja < A; ++ja) {
    auto a = m.split_action(ja);
    for (int i = 0; i < n; ++i) node.action_probs[ja] *= node.agent_probs[i][a[i]];
    for (int s = 0; s < m.num_states; ++s) node.reward[ja] += node.belief[s] * m.reward[s][ja];
  }
  return node;
}

}  // namespace detail

/**
 * @brief Expands every reachable joint history up to the last decision step.
 * Throws std::length_error once more than node_budget nodes would be built.
 */
inline OutcomeTree build_outcome_tree(const TabularDecPomdp& m, const std::vector<SoftmaxPolicy>& policies,
                                      std::size_t node_budget = kDefaultNodeBudget) {
  require_valid(m);
  if (static_cast<int>(policies.size()) != m.num_agents)
    throw std::invalid_argument("build_outcome_tree: one policy per agent");
  OutcomeTree tree;
  tree.model = &m;
  tree.codecs = make_codecs(m);
  const int n = m.num_agents, S = m.num_states, A = m.num_joint_actions(), O = m.num_joint_observations();
  auto charge = [&] {
    if (++tree.num_nodes > node_budget)
      throw std::length_error("outcome tree exceeds node budget of " + std::to_string(node_budget));
  };

  tree.depths.emplace_back();
  for (int jo = 0; jo < O; ++jo) {
    std::vector<double> b(S);
    double p = 0.0;
    for (int s = 0; s < S; ++s) p += (b[s] = m.init_dist[s] * m.init_observation[s][jo]);
    if (p <= 0.0) continue;
    for (auto& x : b) x /= p;
    auto o = m.split_observation(jo);
    std::vector<HistoryKey> keys(n);
    for (int i = 0; i < n; ++i) keys[i] = tree.codecs[i].initial(o[i]);
    charge();
    tree.depths[0].push_back(detail::make_node(m, policies, std::move(keys), p, std::move(b)));
  }

  for (int t = 0; t + 1 < m.horizon; ++t) {
    std::vector<JointNode> next;
    for (auto& node : tree.depths[t]) {
      node.children.assign(A, {});
      for (int ja = 0; ja < A; ++ja) {
        std::vector<double> pred(S, 0.0);
        for (int s = 0; s < S; ++s) {
          if (node.belief[s] == 0.0) continue;
          for (int s2 = 0; s2 < S; ++s2) pred[s2] += node.belief[s] * m.transition[s][ja][s2];
        }
        auto a = m.split_action(ja);
        for (int jo = 0; jo < O; ++jo) {
          std::vector<double> b(S);
          double po = 0.0;
          for (int s2 = 0; s2 < S; ++s2) po += (b[s2] = pred[s2] * m.observation[s2][ja][jo]);
          if (po <= 0.0) continue;
          for (auto& x : b) x /= po;
          auto o = m.split_observation(jo);
          std::vector<HistoryKey> keys(n);
          for (int i = 0; i < n; ++i) keys[i] = tree.codecs[i].extend(node.keys[i], a[i], o[i]);
          charge();
          node.children[ja].emplace_back(next.size(), po);
          next.push_back(
              detail::make_node(m, policies, std::move(keys), node.prob * node.action_probs[ja] * po, std::move(b)));
        }
      }
    }
    tree.depths.push_back(std::move(next));
  }
  return tree;
}

struct JointOutcome {
  int depth = 0;
  std::vector<HistoryKey> history;
  std::vector<int> joint_action;
  std::vector<MessageId> messages;
  double prob = 0.0;
};

/// Joint distribution over message tuples for one (h, a); senders outside `include` send nothing.
inline std::vector<std::pair<std::vector<MessageId>, double>> joint_message_distribution(
    const CommChannel& channel, const std::vector<HistoryKey>& keys, const std::vector<int>& actions,
    const std::vector<bool>& include) {
  std::vector<std::pair<std::vector<MessageId>, double>> out{{{}, 1.0}};
  for (std::size_t j = 0; j < keys.size(); ++j) {
    if (!include[j]) continue;
    auto dist = channel.distribution(static_cast<int>(j), keys[j], actions[j]);
    std::vector<std::pair<std::vector<MessageId>, double>> grown;
    grown.reserve(out.size() * dist.size());
    for (const auto& [msgs, p] : out)
      for (const auto& [mj, q] : dist) {
        auto m = msgs;
        m.push_back(mj);
        grown.emplace_back(std::move(m), p * q);
      }
    out = std::move(grown);
  }
  return out;
}

/// Every (joint history, joint action, joint message) with its probability, per depth.
inline std::vector<JointOutcome> enumerate_joint_outcomes(const TabularDecPomdp& m,
                                                          const std::vector<SoftmaxPolicy>& policies,
                                                          const CommChannel* channel = nullptr,
                                                          std::size_t node_budget = kDefaultNodeBudget) {
  OutcomeTree tree = build_outcome_tree(m, policies, node_budget);
  std::vector<JointOutcome> out;
  const std::vector<bool> all(m.num_agents, true);
  for (int t = 0; t < static_cast<int>(tree.depths.size()); ++t) {
    for (const auto& node : tree.depths[t]) {
      for (int ja = 0; ja < m.num_joint_actions(); ++ja) {
        const double p = node.prob * node.action_probs[ja];
        auto a = m.split_action(ja);
        if (!channel) {
          out.push_back({t, node.keys, a, {}, p});
          continue;
        }
        for (auto& [msgs, q] : joint_message_distribution(*channel, node.keys, a, all)) {
          if (out.size() >= node_budget)
            throw std::length_error("outcome enumeration exceeds node budget of " + std::to_string(node_budget));
          out.push_back({t, node.keys, a, std::move(msgs), p * q});
        }
      }
    }
  }
  return out;
}

}  // namespace dccda
