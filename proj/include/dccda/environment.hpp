#pragma once

#include <cmath>
#include <concepts>
#include <stdexcept>
#include <vector>

#include "dccda/comm.hpp"
#include "dccda/decpomdp.hpp"
#include "dccda/history.hpp"
#include "dccda/rng.hpp"
#include "dccda/softmax_policy.hpp"

namespace dccda {

struct StepResult {
  std::vector<int> observations;
  double reward = 0.0;
  bool done = false;
};

template <class E>
concept Environment = requires(E& env, const E& cenv, Rng& rng, const std::vector<int>& actions) {
  { cenv.num_agents() } -> std::convertible_to<int>;
  { cenv.num_actions(0) } -> std::convertible_to<int>;
  { cenv.num_observations(0) } -> std::convertible_to<int>;
  { cenv.horizon() } -> std::convertible_to<int>;
  { cenv.gamma() } -> std::convertible_to<double>;
  { cenv.history_window() } -> std::convertible_to<int>;
  { env.reset(rng) } -> std::same_as<std::vector<int>>;
  { env.step(actions, rng) } -> std::same_as<StepResult>;
  { cenv.success() } -> std::convertible_to<bool>;
};

/// Sampling adapter over a TabularDecPomdp. Success means return > success_threshold.
class TabularSimulator {
 public:
  explicit TabularSimulator(const TabularDecPomdp& model, double success_threshold = 0.0)
      : model_(&model), threshold_(success_threshold) {
    require_valid(model);
  }

  int num_agents() const { return model_->num_agents; }
  int num_actions(int i) const { return model_->actions_per_agent.at(i); }
  int num_observations(int i) const { return model_->obs_per_agent.at(i); }
  int horizon() const { return model_->horizon; }
  double gamma() const { return model_->gamma; }
  int history_window() const { return 0; }
  int state() const { return state_; }
  const TabularDecPomdp& model() const { return *model_; }

  std::vector<int> reset(Rng& rng) {
    state_ = sample_categorical(model_->init_dist, rng);
    t_ = 0;
    total_ = 0.0;
    return model_->split_observation(sample_categorical(model_->init_observation[state_], rng));
  }

  StepResult step(const std::vector<int>& actions, Rng& rng) {
    const int ja = model_->joint_action(actions);
    StepResult r;
    r.reward = model_->reward[state_][ja];
    state_ = sample_categorical(model_->transition[state_][ja], rng);
    r.observations = model_->split_observation(sample_categorical(model_->observation[state_][ja], rng));
    total_ += r.reward;
    r.done = ++t_ >= model_->horizon;
    return r;
  }

  bool success() const { return total_ > threshold_; }

 private:
  const TabularDecPomdp* model_;
  double threshold_;
  int state_ = 0;
  int t_ = 0;
  double total_ = 0.0;
};

/// One decision step of an episode.
struct StepRecord {
  std::vector<int> joint_obs;
  std::vector<HistoryKey> history;
  std::vector<int> joint_action;
  std::vector<MessageId> messages;
  double reward = 0.0;
  std::vector<double> q_values;
  std::vector<std::vector<double>> policy;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  double ret = 0.0;
  bool success = false;
};

inline double discounted_return(const Trajectory& tr, double gamma) {
  double g = 0.0, w = 1.0;
  for (const auto& s : tr.steps) {
    g += w * s.reward;
    w *= gamma;
  }
  return g;
}

template <Environment E>
std::vector<HistoryCodec> make_codecs(const E& env) {
  std::vector<HistoryCodec> codecs;
  for (int i = 0; i < env.num_agents(); ++i)
    codecs.emplace_back(env.num_observations(i), env.num_actions(i), std::max(env.horizon() - 1, 0),
                        env.history_window());
  return codecs;
}

inline std::vector<HistoryCodec> make_codecs(const TabularDecPomdp& m) {
  std::vector<HistoryCodec> codecs;
  for (int i = 0; i < m.num_agents; ++i)
    codecs.emplace_back(m.obs_per_agent[i], m.actions_per_agent[i], m.horizon - 1);
  return codecs;
}

/**
 * @brief Rolls out one episode. Per step the draw order is: actions by agent,
 * messages by sender (if a channel is given), then the environment.
 */
template <Environment E>
Trajectory sample_episode(E& env, const std::vector<HistoryCodec>& codecs, const std::vector<SoftmaxPolicy>& policies,
                          const CommChannel* channel, Rng& rng) {
  const int n = env.num_agents();
  if (static_cast<int>(policies.size()) != n) throw std::invalid_argument("sample_episode: one policy per agent");
  Trajectory tr;
  std::vector<int> obs = env.reset(rng);
  std::vector<HistoryKey> keys(n);
  for (int i = 0; i < n; ++i) keys[i] = codecs[i].initial(obs[i]);
  double discount = 1.0;
  for (int t = 0; t < env.horizon(); ++t) {
    StepRecord rec;
    rec.joint_obs = obs;
    rec.history = keys;
    rec.joint_action.resize(n);
    rec.policy.resize(n);
    for (int i = 0; i < n; ++i) {
      rec.policy[i] = action_distribution(policies[i], keys[i]);
      rec.joint_action[i] = sample_categorical(rec.policy[i], rng);
    }
    if (channel) {
      rec.messages.resize(n);
      for (int j = 0; j < n; ++j) rec.messages[j] = channel->sample(j, keys[j], rec.joint_action[j], rng);
    }
    StepResult r = env.step(rec.joint_action, rng);
    rec.reward = r.reward;
    tr.ret += discount * r.reward;
    discount *= env.gamma();
    const bool last = r.done || t + 1 >= env.horizon();
    if (!last)
      for (int i = 0; i < n; ++i) keys[i] = codecs[i].extend(keys[i], rec.joint_action[i], r.observations[i]);
    obs = std::move(r.observations);
    tr.steps.push_back(std::move(rec));
    if (last) break;
  }
  tr.success = env.success();
  return tr;
}

inline Trajectory sample_episode(const TabularDecPomdp& model, const std::vector<SoftmaxPolicy>& policies,
                                 const CommChannel* channel, Rng& rng) {
  TabularSimulator sim(model);
  return sample_episode(sim, make_codecs(model), policies, channel, rng);
}

}  // namespace dccda
