#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "dccda/comm.hpp"
#include "dccda/critics.hpp"
#include "dccda/environment.hpp"
#include "dccda/estimators.hpp"
#include "dccda/metrics.hpp"
#include "dccda/rng.hpp"
#include "dccda/softmax_policy.hpp"

namespace dccda {

enum class Optimizer { sgd, adam };

struct TrainConfig {
  EstimatorKind estimator = EstimatorKind::dccda;
  double actor_lr = 0.1;
  double critic_lr = 0.1;
  double comm_lr = 0.1;
  HyperParams hp;
  Optimizer optimizer = Optimizer::sgd;
  int iterations = 100;
  int episodes_per_iteration = 25;
  int update_epochs = 1;
  int eval_every = 25;  ///< training episodes between evaluations
  int eval_episodes = 32;
  int final_eval_episodes = 32;
  long long max_env_steps = 0;  ///< training step budget, 0 = unlimited
  int message_alphabet = 4;
  bool learn_messages = true;
  RowInit message_init = RowInit::random;
  std::uint64_t seed = 0;

  void check() const {
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0) || !(comm_lr > 0.0))
      throw std::invalid_argument("learning rates must be > 0");
    if (critic_lr > 1.0) throw std::invalid_argument("critic_lr must be <= 1");
    hp.check();
    if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
    if (episodes_per_iteration < 1) throw std::invalid_argument("episodes_per_iteration must be >= 1");
    if (update_epochs < 1) throw std::invalid_argument("update_epochs must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("eval cadence must be >= 1");
    if (eval_episodes < 1 || final_eval_episodes < 1) throw std::invalid_argument("evaluation needs >= 1 episode");
    if (max_env_steps < 0) throw std::invalid_argument("max_env_steps must be >= 0");
    if (message_alphabet < 1) throw std::invalid_argument("message_alphabet must be >= 1");
  }

  bool communicates() const {
    return estimator == EstimatorKind::dccda || estimator == EstimatorKind::dccda_ob ||
           estimator == EstimatorKind::dccda_ob_kl;
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"estimator", to_string(c.estimator)},
                     {"actor_lr", c.actor_lr},
                     {"critic_lr", c.critic_lr},
                     {"comm_lr", c.comm_lr},
                     {"alpha", c.hp.alpha},
                     {"beta", c.hp.beta},
                     {"eta", c.hp.eta},
                     {"optimizer", c.optimizer == Optimizer::adam ? "adam" : "sgd"},
                     {"iterations", c.iterations},
                     {"episodes_per_iteration", c.episodes_per_iteration},
                     {"update_epochs", c.update_epochs},
                     {"eval_every", c.eval_every},
                     {"eval_episodes", c.eval_episodes},
                     {"final_eval_episodes", c.final_eval_episodes},
                     {"max_env_steps", c.max_env_steps},
                     {"message_alphabet", c.message_alphabet},
                     {"learn_messages", c.learn_messages},
                     {"message_init", c.message_init == RowInit::uniform ? "uniform" : "random"},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> known = {
      "estimator",     "actor_lr",      "critic_lr",           "comm_lr",       "alpha",
      "beta",          "eta",           "optimizer",           "iterations",    "episodes_per_iteration",
      "update_epochs", "eval_every",    "eval_episodes",       "final_eval_episodes",
      "max_env_steps", "message_alphabet", "learn_messages",   "message_init",  "seed"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument("unknown train config key '" + k + "'");
  c = TrainConfig{};
  if (j.contains("estimator")) c.estimator = estimator_from_string(j["estimator"].get<std::string>());
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) j.at(k).get_to(dst);
  };
  get("actor_lr", c.actor_lr);
  get("critic_lr", c.critic_lr);
  get("comm_lr", c.comm_lr);
  get("alpha", c.hp.alpha);
  get("beta", c.hp.beta);
  get("eta", c.hp.eta);
  if (j.contains("optimizer")) {
    const auto o = j["optimizer"].get<std::string>();
    if (o != "sgd" && o != "adam") throw std::invalid_argument("optimizer must be sgd or adam");
    c.optimizer = o == "adam" ? Optimizer::adam : Optimizer::sgd;
  }
  get("iterations", c.iterations);
  get("episodes_per_iteration", c.episodes_per_iteration);
  get("update_epochs", c.update_epochs);
  get("eval_every", c.eval_every);
  get("eval_episodes", c.eval_episodes);
  get("final_eval_episodes", c.final_eval_episodes);
  get("max_env_steps", c.max_env_steps);
  get("message_alphabet", c.message_alphabet);
  get("learn_messages", c.learn_messages);
  if (j.contains("message_init")) {
    const auto s = j["message_init"].get<std::string>();
    if (s != "uniform" && s != "random") throw std::invalid_argument("message_init must be uniform or random");
    c.message_init = s == "uniform" ? RowInit::uniform : RowInit::random;
  }
  get("seed", c.seed);
  c.check();
}

/// Critic tables; only the one matching the estimator is trained.
struct Critics {
  CentralizedQ joint;
  std::vector<LocalQ> local;
  std::vector<CommQ> comm;
};

/// Agent i's view of one buffered step.
struct AgentRecord {
  std::size_t step = 0;  ///< index into ReplayBuffer::steps()
  HistoryKey h = 0;
  ReceivedMessages m;
  int a = 0;
  double r = 0.0;
  bool terminal = true;
  HistoryKey next_h = 0;
  ReceivedMessages next_m;
  std::vector<double> q;  ///< critic row over own actions at insertion
  std::vector<double> p;  ///< pi(.|h) at insertion
};

/// On-policy experience of one iteration, in insertion order.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int num_agents = 0, std::size_t capacity = 0)
      : capacity_(capacity), agents_(num_agents) {}

  int num_agents() const { return static_cast<int>(agents_.size()); }
  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  const std::vector<StepRecord>& steps() const { return steps_; }
  /// Index of the following step of the same episode, or -1.
  long next_of(std::size_t s) const { return next_[s]; }
  const std::vector<AgentRecord>& records(int i) const { return agents_.at(i); }

  void clear() {
    steps_.clear();
    next_.clear();
    for (auto& a : agents_) a.clear();
  }

  /// `q_rows[t][i]` is agent i's critic row at step t, looked up when the step is inserted.
  void insert(const Trajectory& tr, const std::vector<std::vector<std::vector<double>>>& q_rows) {
    if (q_rows.size() != tr.steps.size()) throw std::invalid_argument("insert: one critic snapshot per step");
    if (capacity_ && steps_.size() + tr.steps.size() > capacity_) throw std::length_error("replay buffer is full");
    const int n = num_agents();
    const std::size_t base = steps_.size();
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
      const auto& st = tr.steps[t];
      if (static_cast<int>(st.joint_action.size()) != n) throw std::invalid_argument("insert: agent count mismatch");
      const bool last = t + 1 == tr.steps.size();
      StepRecord copy = st;
      copy.q_values.resize(n);
      for (int i = 0; i < n; ++i) {
        AgentRecord r;
        r.step = base + t;
        r.h = st.history[i];
        if (!st.messages.empty()) r.m = broadcast(st.messages, i, n);
        r.a = st.joint_action[i];
        r.r = st.reward;
        r.terminal = last;
        if (!last) {
          const auto& nx = tr.steps[t + 1];
          r.next_h = nx.history[i];
          if (!nx.messages.empty()) r.next_m = broadcast(nx.messages, i, n);
        }
        r.q = q_rows[t].at(i);
        r.p = st.policy.at(i);
        if (static_cast<int>(r.q.size()) != static_cast<int>(r.p.size()))
          throw std::invalid_argument("insert: critic row width differs from the policy");
        copy.q_values[i] = r.q.at(r.a);
        agents_[i].push_back(std::move(r));
      }
      steps_.push_back(std::move(copy));
      next_.push_back(last ? -1 : static_cast<long>(base + t + 1));
    }
  }

 private:
  std::size_t capacity_;
  std::vector<StepRecord> steps_;
  std::vector<long> next_;
  std::vector<std::vector<AgentRecord>> agents_;
};

namespace detail {

inline std::vector<int> action_counts(const std::vector<SoftmaxPolicy>& policies) {
  std::vector<int> out;
  for (const auto& p : policies) out.push_back(p.num_actions());
  return out;
}

/// Critic row of agent i over its own actions at one step.
inline std::vector<double> critic_row(EstimatorKind kind, const Critics& c, const std::vector<int>& actions,
                                      const std::vector<HistoryKey>& h, const std::vector<int>& a,
                                      const ReceivedMessages& m, int i) {
  std::vector<double> row(actions[i]);
  for (int b = 0; b < actions[i]; ++b) {
    switch (kind) {
      case EstimatorKind::ctde: {
        auto ja = a;
        ja[i] = b;
        row[b] = c.joint.lookup({h, joint_index(ja, actions)});
        break;
      }
      case EstimatorKind::dtde:
        row[b] = c.local[i].lookup({h[i], b});
        break;
      default:
        row[b] = c.comm[i].lookup({h[i], b, m.ids});
    }
  }
  return row;
}

inline std::vector<std::vector<double>> step_rows(EstimatorKind kind, const Critics& c,
                                                  const std::vector<int>& actions, const StepRecord& st) {
  const int n = static_cast<int>(actions.size());
  std::vector<std::vector<double>> rows(n);
  for (int i = 0; i < n; ++i) {
    ReceivedMessages m;
    if (!st.messages.empty()) m = broadcast(st.messages, i, n);
    rows[i] = critic_row(kind, c, actions, st.history, st.joint_action, m, i);
  }
  return rows;
}

inline double expected_value(const std::vector<double>& probs, const std::vector<double>& q) {
  double v = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) v += probs[k] * q[k];
  return v;
}

}  // namespace detail

struct ActorStats {
  std::vector<double> grad_norms;
  double actor_loss = 0.0;
  double kl_loss = 0.0;
};

/// Estimator gradient of agent i averaged over its buffered records, at the current policy.
inline PolicyGradient buffer_gradient(const ReplayBuffer& buf, int i, const SoftmaxPolicy& pi, EstimatorKind kind,
                                      const HyperParams& hp, double* actor_loss = nullptr,
                                      double* kl_loss = nullptr) {
  const auto& recs = buf.records(i);
  PolicyGradient g;
  if (recs.empty()) return g;
  const double w = 1.0 / static_cast<double>(recs.size());
  double aloss = 0.0, kloss = 0.0;
  const bool ob = kind == EstimatorKind::dccda_ob || kind == EstimatorKind::dccda_ob_kl;
  for (const auto& r : recs) {
    const auto probs = action_distribution(pi, r.h);
    const auto& theta = pi.logits(r.h);
    GradientSample s{r.h, r.a, estimator_values(kind, theta, probs, r.q, r.a, hp), kind};
    accumulate(g, s, w);
    const double b = ob ? optimal_baseline_values(probs, r.q, hp.eta) : 0.0;
    aloss -= w * (r.q[r.a] - b) * std::log(probs[r.a]);
    if (kind == EstimatorKind::dccda_ob_kl) kloss += w * -kl_from_logits(theta, r.q, hp.alpha).loss;
  }
  if (actor_loss) *actor_loss = aloss;
  if (kl_loss) *kl_loss = kloss;
  return g;
}

/**
 * @brief Expected-SARSA sweep over the buffer in insertion order. The
 * successor value averages over the agent's own next action under the current
 * policy (over the joint next action for the centralized critic), with the
 * messages that were actually received at the next step. Returns the mean
 * squared TD error.
 */
inline double critic_update(Critics& c, const ReplayBuffer& buf, const std::vector<SoftmaxPolicy>& policies,
                            EstimatorKind kind, double lr, double gamma) {
  const int n = buf.num_agents();
  const auto actions = detail::action_counts(policies);
  double sq = 0.0;
  long count = 0;
  if (kind == EstimatorKind::ctde) {
    const int joint = product(actions);
    for (std::size_t s = 0; s < buf.size(); ++s) {
      const auto& st = buf.steps()[s];
      JointKey key{st.history, joint_index(st.joint_action, actions)};
      double target = st.reward;
      if (const long nx = buf.next_of(s); nx >= 0) {
        const auto& next = buf.steps()[nx].history;
        std::vector<std::vector<double>> probs(n);
        for (int i = 0; i < n; ++i) probs[i] = action_distribution(policies[i], next[i]);
        double v = 0.0;
        for (int ja = 0; ja < joint; ++ja) {
          const auto a = split_joint_index(ja, actions);
          double p = 1.0;
          for (int i = 0; i < n; ++i) p *= probs[i][a[i]];
          if (p != 0.0) v += p * c.joint.lookup({next, ja});
        }
        target += gamma * v;
      }
      const double q = c.joint.lookup(key);
      sq += (target - q) * (target - q);
      ++count;
      c.joint.set(key, q + lr * (target - q));
    }
    return count ? sq / count : 0.0;
  }
  for (int i = 0; i < n; ++i) {
    for (const auto& r : buf.records(i)) {
      double target = r.r;
      if (!r.terminal) {
        const auto probs = action_distribution(policies[i], r.next_h);
        std::vector<double> row(actions[i]);
        for (int b = 0; b < actions[i]; ++b)
          row[b] = kind == EstimatorKind::dtde ? c.local[i].lookup({r.next_h, b})
                                               : c.comm[i].lookup({r.next_h, b, r.next_m.ids});
        target += gamma * detail::expected_value(probs, row);
      }
      const double q = kind == EstimatorKind::dtde ? c.local[i].lookup({r.h, r.a}) : c.comm[i].lookup({r.h, r.a, r.m.ids});
      sq += (target - q) * (target - q);
      ++count;
      if (kind == EstimatorKind::dtde)
        c.local[i].set({r.h, r.a}, q + lr * (target - q));
      else
        c.comm[i].set({r.h, r.a, r.m.ids}, q + lr * (target - q));
    }
  }
  return count ? sq / count : 0.0;
}

/**
 * @brief Score-function ascent on each sender's message table. For every
 * buffered step, receiver i and sender j != i contribute
 *   A * (e_{m_j} - f_j(.|h_j, a_j)),
 * where A is Q_i(h_i, a_i, m_{-i}) minus its average over m_j ~ f_j(.|h_j, a_j)
 * with the other messages held fixed. Contributions are averaged over steps and
 * applied in logit space, so rows stay normalized.
 */
inline void update_message_function(std::vector<MessageFunction>& f, const ReplayBuffer& buf,
                                    const std::vector<CommQ>& critics, double lr) {
  if (buf.empty()) throw std::invalid_argument("update_message_function: empty buffer");
  const int n = buf.num_agents();
  if (static_cast<int>(f.size()) != n || static_cast<int>(critics.size()) != n)
    throw std::invalid_argument("update_message_function: one message function and critic per agent");
  if (lr == 0.0) return;
  std::map<std::tuple<int, HistoryKey, int>, std::vector<double>> step;
  const double w = 1.0 / static_cast<double>(buf.size());
  for (const auto& st : buf.steps()) {
    if (st.messages.empty()) throw std::invalid_argument("update_message_function: buffer has no messages");
    for (int i = 0; i < n; ++i) {
      auto m = broadcast(st.messages, i, n);
      const CommKey key{st.history[i], st.joint_action[i], m.ids};
      const double q = critics[i].lookup(key);
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const std::size_t slot = j < i ? j : j - 1;
        const int hj_a = st.joint_action[j];
        const auto row = f[j].row(st.history[j], hj_a);
        CommKey alt = key;
        double centre = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) {
          if (row[k] == 0.0) continue;
          alt.m[slot] = k;
          centre += row[k] * critics[i].lookup(alt);
        }
        const double adv = q - centre;
        if (adv == 0.0) continue;
        auto& acc = step[{j, st.history[j], hj_a}];
        if (acc.empty()) acc.assign(row.size(), 0.0);
        for (std::size_t k = 0; k < row.size(); ++k)
          acc[k] += w * lr * adv * ((k == st.messages[j] ? 1.0 : 0.0) - row[k]);
      }
    }
  }
  for (const auto& [where, delta] : step) {
    const auto& [j, h, a] = where;
    f[j].ascend(h, a, delta);
  }
}

/// Fraction of successful episodes when every agent samples from its policy; no messages are exchanged.
template <Environment E>
double evaluate(const std::vector<SoftmaxPolicy>& policies, E env, int episodes, Rng& rng,
                long long* env_steps = nullptr) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  const auto codecs = make_codecs(env);
  int wins = 0;
  for (int e = 0; e < episodes; ++e) {
    const auto tr = sample_episode(env, codecs, policies, nullptr, rng);
    if (env_steps) *env_steps += static_cast<long long>(tr.steps.size());
    if (tr.success) ++wins;
  }
  return static_cast<double>(wins) / episodes;
}

struct TrainResult {
  std::vector<SoftmaxPolicy> policies;
  Critics critics;
  std::vector<MessageFunction> message_functions;
  MetricsLog log;
  double final_eval_rate = 0.0;
  long long env_steps = 0;   ///< training steps
  long long eval_steps = 0;  ///< evaluation steps
  int episodes = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void guard_finite(const std::vector<SoftmaxPolicy>& policies, int iteration) {
  for (std::size_t i = 0; i < policies.size(); ++i)
    for (const auto& [h, theta] : policies[i].table())
      for (double x : theta)
        if (!std::isfinite(x))
          throw DivergenceError("training diverged at iteration " + std::to_string(iteration) + ": agent " +
                                std::to_string(i) + " history " + std::to_string(h) + " has a non-finite logit");
}

// Stream tags for evaluation RNGs, kept apart from the training stream.
constexpr std::uint64_t kEvalStream = 0x6576616cULL;
constexpr std::uint64_t kFinalStream = 0x66696e61ULL;

}  // namespace detail

/**
 * @brief On-policy actor-critic loop. Each iteration collects episodes with
 * message exchange, fills a fresh buffer, takes `update_epochs` actor steps,
 * one critic sweep and (for communicating estimators) one message-table step.
 */
template <Environment E>
TrainResult train(E& env, const TrainConfig& cfg, Rng& rng) {
  cfg.check();
  const int n = env.num_agents();
  const auto codecs = make_codecs(env);
  TrainResult res;
  std::vector<int> actions(n);
  for (int i = 0; i < n; ++i) {
    actions[i] = env.num_actions(i);
    res.policies.emplace_back(actions[i]);
  }
  res.critics.local.resize(n);
  res.critics.comm.resize(n);
  std::unique_ptr<MessageFunctionChannel> channel;
  if (cfg.communicates()) {
    std::vector<MessageFunction> fns;
    for (int j = 0; j < n; ++j)
      fns.emplace_back(cfg.message_alphabet, cfg.message_init, mix_seed(cfg.seed, 1000 + j));
    channel = std::make_unique<MessageFunctionChannel>(std::move(fns));
  }
  std::vector<Adam> adam(n);
  ReplayBuffer buf(n);
  int next_eval = cfg.eval_every;

  for (int it = 0; it < cfg.iterations; ++it) {
    if (cfg.max_env_steps && res.env_steps >= cfg.max_env_steps) break;
    buf.clear();
    for (int e = 0; e < cfg.episodes_per_iteration; ++e) {
      if (cfg.max_env_steps && res.env_steps >= cfg.max_env_steps) break;
      const auto tr = sample_episode(env, codecs, res.policies, channel.get(), rng);
      std::vector<std::vector<std::vector<double>>> rows;
      rows.reserve(tr.steps.size());
      for (const auto& st : tr.steps) rows.push_back(detail::step_rows(cfg.estimator, res.critics, actions, st));
      buf.insert(tr, rows);
      res.env_steps += static_cast<long long>(tr.steps.size());
      ++res.episodes;
    }
    if (buf.empty()) break;

    MetricsRow row;
    row.seed = cfg.seed;
    row.iteration = it;
    row.grad_norms.assign(n, 0.0);
    try {
      for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
        for (int i = 0; i < n; ++i) {
          double aloss = 0.0, kloss = 0.0;
          const auto g = buffer_gradient(buf, i, res.policies[i], cfg.estimator, cfg.hp, &aloss, &kloss);
          if (epoch == 0) {
            row.grad_norms[i] = l2_norm(g);
            row.actor_loss += aloss / n;
            row.kl_loss += kloss / n;
          }
          if (cfg.optimizer == Optimizer::adam)
            adam[i].step(res.policies[i], g, cfg.actor_lr);
          else
            apply_gradient(res.policies[i], g, cfg.actor_lr);
        }
        detail::guard_finite(res.policies, it);
      }
      row.critic_loss = critic_update(res.critics, buf, res.policies, cfg.estimator, cfg.critic_lr, env.gamma());
      if (channel && cfg.learn_messages)
        update_message_function(channel->functions(), buf, res.critics.comm, cfg.comm_lr);
    } catch (const DivergenceError&) {
      throw;
    } catch (const std::domain_error& err) {
      throw DivergenceError("training diverged at iteration " + std::to_string(it) + ": " + err.what());
    }

    if (res.episodes >= next_eval) {
      while (next_eval <= res.episodes) next_eval += cfg.eval_every;
      Rng eval_rng(mix_seed(mix_seed(cfg.seed, detail::kEvalStream), static_cast<std::uint64_t>(it)));
      row.eval_rate = evaluate(res.policies, env, cfg.eval_episodes, eval_rng, &res.eval_steps);
    }
    res.log.append(std::move(row));
  }

  Rng final_rng(mix_seed(cfg.seed, detail::kFinalStream));
  res.final_eval_rate = evaluate(res.policies, env, cfg.final_eval_episodes, final_rng, &res.eval_steps);
  if (channel) res.message_functions = channel->functions();
  return res;
}

}  // namespace dccda
