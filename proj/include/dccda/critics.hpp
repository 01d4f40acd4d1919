#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dccda/comm.hpp"
#include "dccda/enumeration.hpp"
#include "dccda/history.hpp"

namespace dccda {

struct JointKey {
  std::vector<HistoryKey> h;
  int a = 0;
  bool operator==(const JointKey&) const = default;
};

struct LocalKey {
  HistoryKey h = 0;
  int a = 0;
  bool operator==(const LocalKey&) const = default;
};

struct CommKey {
  HistoryKey h = 0;
  int a = 0;
  std::vector<MessageId> m;
  bool operator==(const CommKey&) const = default;
};

/// Joint history, joint action and the receiver's noise index.
struct NoiseKey {
  std::vector<HistoryKey> h;
  int a = 0;
  int eps = 0;
  bool operator==(const NoiseKey&) const = default;
};

struct KeyHash {
  std::size_t operator()(const NoiseKey& k) const {
    return (VectorHash{}(k.h) * 31 + std::hash<int>{}(k.a)) * 131 + std::hash<int>{}(k.eps);
  }
  std::size_t operator()(const JointKey& k) const { return VectorHash{}(k.h) * 31 + std::hash<int>{}(k.a); }
  std::size_t operator()(const LocalKey& k) const { return std::hash<HistoryKey>{}(k.h) * 31 + std::hash<int>{}(k.a); }
  std::size_t operator()(const CommKey& k) const {
    return (std::hash<HistoryKey>{}(k.h) * 31 + std::hash<int>{}(k.a)) * 1000003 + VectorHash{}(k.m);
  }
};

inline std::string key_string(const JointKey& k) {
  std::string s;
  for (std::size_t i = 0; i < k.h.size(); ++i) s += (i ? "," : "") + std::to_string(k.h[i]);
  return s + ":" + std::to_string(k.a);
}
inline std::string key_string(const LocalKey& k) { return std::to_string(k.h) + ":" + std::to_string(k.a); }
inline std::string key_string(const NoiseKey& k) {
  return key_string(JointKey{k.h, k.a}) + ":" + std::to_string(k.eps);
}
inline std::string key_string(const CommKey& k) {
  std::string s = std::to_string(k.h) + ":" + std::to_string(k.a) + ":";
  for (std::size_t i = 0; i < k.m.size(); ++i) s += (i ? "," : "") + std::to_string(k.m[i]);
  return s;
}

/// Zero-initialized Q table.
template <class Key>
class QTable {
 public:
  double lookup(const Key& k) const {
    auto it = t_.find(k);
    return it == t_.end() ? 0.0 : it->second;
  }
  void set(const Key& k, double v) {
    if (!std::isfinite(v)) throw std::domain_error("critic value must be finite");
    t_[k] = v;
  }
  std::size_t size() const { return t_.size(); }
  const std::unordered_map<Key, double, KeyHash>& table() const { return t_; }

 private:
  std::unordered_map<Key, double, KeyHash> t_;
};

using CentralizedQ = QTable<JointKey>;
using LocalQ = QTable<LocalKey>;
using CommQ = QTable<CommKey>;
using SurrogateQ = QTable<NoiseKey>;

template <class Key>
double q_lookup(const QTable<Key>& q, const Key& k) {
  return q.lookup(k);
}

/// One-step TD sample; `next` lists successor keys with their weights (expected-SARSA target).
template <class Key>
struct Transition {
  Key key;
  double reward = 0.0;
  bool terminal = true;
  std::vector<std::pair<Key, double>> next;
};

template <class Key>
double td_target(const QTable<Key>& q, const Transition<Key>& tr, double gamma) {
  if (!std::isfinite(tr.reward)) throw std::domain_error("td_update: non-finite reward");
  double target = 0.0;
  if (!tr.terminal)
    for (const auto& [k, w] : tr.next) target += w * q.lookup(k);
  return tr.reward + gamma * target;
}

template <class Key>
void td_update(QTable<Key>& q, const Transition<Key>& tr, double lr, double gamma) {
  if (!(lr >= 0.0 && lr <= 1.0)) throw std::invalid_argument("td_update: learning rate must be in [0,1]");
  const double y = td_target(q, tr, gamma);
  if (lr == 0.0) return;
  const double old = q.lookup(tr.key);
  q.set(tr.key, old + lr * (y - old));
}

template <class Key>
struct WeightedTransition {
  Transition<Key> tr;
  double weight = 1.0;
};

/// Synchronous update toward the probability-weighted mean target of each key.
template <class Key>
void expected_td_sweep(QTable<Key>& q, const std::vector<WeightedTransition<Key>>& batch, double lr, double gamma) {
  std::unordered_map<Key, std::pair<double, double>, KeyHash> acc;
  for (const auto& wt : batch) {
    auto& [num, den] = acc[wt.tr.key];
    num += wt.weight * td_target(q, wt.tr, gamma);
    den += wt.weight;
  }
  for (const auto& [k, nd] : acc) {
    if (nd.second <= 0.0) continue;
    const double old = q.lookup(k);
    q.set(k, old + lr * (nd.first / nd.second - old));
  }
}

/// Expected transitions of the centralized critic over an outcome tree.
inline std::vector<WeightedTransition<JointKey>> expected_joint_transitions(const OutcomeTree& tree) {
  const auto& m = *tree.model;
  std::vector<WeightedTransition<JointKey>> out;
  const int A = m.num_joint_actions();
  for (std::size_t t = 0; t < tree.depths.size(); ++t) {
    for (const auto& node : tree.depths[t]) {
      for (int ja = 0; ja < A; ++ja) {
        WeightedTransition<JointKey> wt;
        wt.weight = node.prob * node.action_probs[ja];
        wt.tr.key = {node.keys, ja};
        wt.tr.reward = node.reward[ja];
        wt.tr.terminal = node.children.empty();
        if (!wt.tr.terminal)
          for (const auto& [c, po] : node.children[ja]) {
            const auto& child = tree.depths[t + 1][c];
            for (int jb = 0; jb < A; ++jb) wt.tr.next.push_back({{child.keys, jb}, po * child.action_probs[jb]});
          }
        if (wt.weight > 0.0) out.push_back(std::move(wt));
      }
    }
  }
  return out;
}

/// Expected transitions of agent i's local critic over an outcome tree.
inline std::vector<WeightedTransition<LocalKey>> expected_local_transitions(const OutcomeTree& tree, int i) {
  const auto& m = *tree.model;
  std::vector<WeightedTransition<LocalKey>> out;
  const int A = m.num_joint_actions(), Ai = m.actions_per_agent[i];
  for (std::size_t t = 0; t < tree.depths.size(); ++t) {
    for (const auto& node : tree.depths[t]) {
      for (int ja = 0; ja < A; ++ja) {
        const int ai = m.split_action(ja)[i];
        WeightedTransition<LocalKey> wt;
        wt.weight = node.prob * node.action_probs[ja];
        wt.tr.key = {node.keys[i], ai};
        wt.tr.reward = node.reward[ja];
        wt.tr.terminal = node.children.empty();
        if (!wt.tr.terminal)
          for (const auto& [c, po] : node.children[ja]) {
            const auto& child = tree.depths[t + 1][c];
            for (int b = 0; b < Ai; ++b) wt.tr.next.push_back({{child.keys[i], b}, po * child.agent_probs[i][b]});
          }
        if (wt.weight > 0.0) out.push_back(std::move(wt));
      }
    }
  }
  return out;
}

template <class Key>
nlohmann::json critic_to_json(const QTable<Key>& q) {
  std::map<std::string, double> sorted;
  for (const auto& [k, v] : q.table()) sorted[key_string(k)] = v;
  return nlohmann::json(sorted);
}

}  // namespace dccda
