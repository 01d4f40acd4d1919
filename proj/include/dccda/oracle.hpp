#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dccda/comm.hpp"
#include "dccda/critics.hpp"
#include "dccda/enumeration.hpp"
#include "dccda/estimators.hpp"

namespace dccda {

/// Which critic feeds the estimator of one agent.
enum class CriticSource {
  centralized,    ///< Q(h, a)
  local,          ///< Q_i(h_i, a_i)
  communicating,  ///< Q_i(h_i, a_i, m_{-i}) from a channel
  noisy,          ///< surrogate Q(h, a, eps_i) under a NoiseModel
};

/// Everything the estimator sees besides its own action: h_i and the critic row over a_i.
struct GradientContext {
  HistoryKey h = 0;
  std::vector<double> q;
  double weight = 0.0;
};

struct GradientMoments {
  PolicyGradient mean;
  double second_moment = 0.0;
  double variance = 0.0;
  PolicyGradient coordinate_variance;
  /// E_c[(E_a[Q S])^2 / E_a[S]], the variance removed by the optimal baseline.
  double baseline_reduction = 0.0;
};

/**
 * @brief Exact on-policy quantities of a fixed policy profile by backward
 * induction over the outcome tree. Steps are weighted uniformly when moments
 * are aggregated over time.
 */
class ExactOracle {
 public:
  ExactOracle(const TabularDecPomdp& model, std::vector<SoftmaxPolicy> policies,
              std::size_t node_budget = kDefaultNodeBudget)
      : model_(model), policies_(std::move(policies)), tree_(build_outcome_tree(model_, policies_, node_budget)) {
    compute_joint_q();
  }
  ExactOracle(const ExactOracle&) = delete;
  ExactOracle& operator=(const ExactOracle&) = delete;

  const TabularDecPomdp& model() const { return model_; }
  const std::vector<SoftmaxPolicy>& policies() const { return policies_; }
  const OutcomeTree& tree() const { return tree_; }
  int horizon() const { return static_cast<int>(tree_.depths.size()); }

  /// Q(h, a) at node `n` of depth `t`.
  double joint_q(int t, std::size_t n, int ja) const { return joint_q_[t][n][ja]; }

  double expected_return() const {
    double v = 0.0;
    for (std::size_t n = 0; n < tree_.depths[0].size(); ++n) v += tree_.depths[0][n].prob * joint_v_[0][n];
    return v;
  }

  CentralizedQ joint_q_table() const {
    CentralizedQ q;
    for (std::size_t t = 0; t < tree_.depths.size(); ++t)
      for (std::size_t n = 0; n < tree_.depths[t].size(); ++n)
        for (int ja = 0; ja < model_.num_joint_actions(); ++ja) q.set({tree_.depths[t][n].keys, ja}, joint_q_[t][n][ja]);
    return q;
  }

  /**
   * @brief Communicating critic of agent i: Q_i(h_i,a_i,m) = E[R | h_i,a_i,m]
   * + gamma E[sum_{a',m'} pi_i(a'|h'_i) p(m'|.) Q_i(h'_i,a',m')]. A null
   * channel gives the local critic Q_i(h_i, a_i) (empty message).
   */
  CommQ comm_q(int i, const CommChannel* channel) const {
    const auto& m = model_;
    const int A = m.num_joint_actions();
    std::vector<bool> include(m.num_agents, channel != nullptr);
    include[i] = false;
    CommQ result;
    std::vector<double> v_next;
    for (int t = horizon() - 1; t >= 0; --t) {
      struct Acc {
        double num = 0.0, den = 0.0, fut = 0.0;
      };
      std::unordered_map<CommKey, Acc, KeyHash> acc;
      const auto& nodes = tree_.depths[t];
      for (const auto& node : nodes) {
        for (int ja = 0; ja < A; ++ja) {
          const auto a = m.split_action(ja);
          const double w0 = node.prob * node.action_probs[ja];
          double fut = 0.0;
          if (!node.children.empty())
            for (const auto& [c, po] : node.children[ja]) fut += po * v_next[c];
          for (auto& [msgs, pm] : joint_message_distribution(*channel_or_silent(channel), node.keys, a, include)) {
            auto& e = acc[CommKey{node.keys[i], a[i], msgs}];
            const double w = w0 * pm;
            e.num += w * node.reward[ja];
            e.den += w;
            e.fut += w * fut;
          }
        }
      }
      for (const auto& [k, e] : acc) result.set(k, (e.num + m.gamma * e.fut) / e.den);
      std::vector<double> v_cur(nodes.size(), 0.0);
      for (std::size_t n = 0; n < nodes.size(); ++n) {
        const auto& node = nodes[n];
        for (int ja = 0; ja < A; ++ja) {
          const auto a = m.split_action(ja);
          double inner = 0.0;
          for (auto& [msgs, pm] : joint_message_distribution(*channel_or_silent(channel), node.keys, a, include))
            inner += pm * result.lookup({node.keys[i], a[i], msgs});
          v_cur[n] += node.action_probs[ja] * inner;
        }
      }
      v_next = std::move(v_cur);
    }
    return result;
  }

  /// Surrogate critic values [t][node][ja][eps index] under `noise`.
  std::vector<std::vector<std::vector<std::vector<double>>>> surrogate_q(const NoiseModel& noise) const {
    noise.check();
    for (const auto& row : model_.reward)
      for (double r : row)
        if (r != noise.r_plus && r != noise.r_minus)
          throw std::invalid_argument("surrogate Q needs binary rewards; found " + std::to_string(r));
    const auto& m = model_;
    const int A = m.num_joint_actions(), E = static_cast<int>(noise.noise_set.size());
    std::vector<std::vector<std::vector<std::vector<double>>>> q(horizon());
    std::vector<double> v_next;
    for (int t = horizon() - 1; t >= 0; --t) {
      const auto& nodes = tree_.depths[t];
      q[t].assign(nodes.size(), std::vector<std::vector<double>>(A, std::vector<double>(E)));
      std::vector<double> v_cur(nodes.size(), 0.0);
      for (std::size_t n = 0; n < nodes.size(); ++n) {
        const auto& node = nodes[n];
        for (int ja = 0; ja < A; ++ja) {
          double fut = 0.0;
          if (!node.children.empty())
            for (const auto& [c, po] : node.children[ja]) fut += po * v_next[c];
          for (int k = 0; k < E; ++k) {
            double r = 0.0;
            for (int s = 0; s < m.num_states; ++s)
              if (node.belief[s] != 0.0) r += node.belief[s] * surrogate_reward(m.reward[s][ja], noise.noise_set[k], noise);
            q[t][n][ja][k] = r + m.gamma * fut;
            v_cur[n] += node.action_probs[ja] * noise.dist[k] * q[t][n][ja][k];
          }
        }
      }
      v_next = std::move(v_cur);
    }
    return q;
  }

  SurrogateQ surrogate_q_table(const NoiseModel& noise) const {
    auto q = surrogate_q(noise);
    SurrogateQ out;
    for (std::size_t t = 0; t < q.size(); ++t)
      for (std::size_t n = 0; n < q[t].size(); ++n)
        for (std::size_t ja = 0; ja < q[t][n].size(); ++ja)
          for (std::size_t k = 0; k < q[t][n][ja].size(); ++k)
            out.set({tree_.depths[t][n].keys, static_cast<int>(ja), static_cast<int>(k)}, q[t][n][ja][k]);
    return out;
  }

  /**
   * @brief Enumerates the contexts (h_i, critic row over a_i) agent i's
   * estimator can face, with probability weights summing to 1.
   */
  std::vector<GradientContext> contexts(CriticSource source, int i, const CommChannel* channel = nullptr,
                                        const NoiseModel* noise = nullptr) const {
    const auto& m = model_;
    const int A = m.num_joint_actions(), Ai = m.actions_per_agent[i];
    const double step_weight = 1.0 / horizon();
    CommQ cq;
    if (source == CriticSource::communicating) {
      if (!channel) throw std::invalid_argument("communicating critic needs a channel");
      cq = comm_q(i, channel);
    } else if (source == CriticSource::local) {
      cq = comm_q(i, nullptr);
    }
    std::vector<std::vector<std::vector<std::vector<double>>>> sq;
    if (source == CriticSource::noisy) {
      if (!noise) throw std::invalid_argument("noisy critic needs a noise model");
      sq = surrogate_q(*noise);
    }
    std::vector<bool> include(m.num_agents, true);
    include[i] = false;

    std::vector<GradientContext> out;
    for (int t = 0; t < horizon(); ++t) {
      for (std::size_t n = 0; n < tree_.depths[t].size(); ++n) {
        const auto& node = tree_.depths[t][n];
        for (int ja = 0; ja < A; ++ja) {
          auto a = m.split_action(ja);
          if (a[i] != 0) continue;  // ja ranges over a_{-i}
          double p_others = 1.0;
          for (int j = 0; j < m.num_agents; ++j)
            if (j != i) p_others *= node.agent_probs[j][a[j]];
          const double w = step_weight * node.prob * p_others;
          std::vector<int> row_ja(Ai);
          for (int b = 0; b < Ai; ++b) {
            a[i] = b;
            row_ja[b] = m.joint_action(a);
          }
          a[i] = 0;
          switch (source) {
            case CriticSource::centralized: {
              GradientContext c{node.keys[i], std::vector<double>(Ai), w};
              for (int b = 0; b < Ai; ++b) c.q[b] = joint_q_[t][n][row_ja[b]];
              out.push_back(std::move(c));
              break;
            }
            case CriticSource::local: {
              GradientContext c{node.keys[i], std::vector<double>(Ai), w};
              for (int b = 0; b < Ai; ++b) c.q[b] = cq.lookup({node.keys[i], b, {}});
              out.push_back(std::move(c));
              break;
            }
            case CriticSource::communicating: {
              for (auto& [msgs, pm] : joint_message_distribution(*channel, node.keys, a, include)) {
                GradientContext c{node.keys[i], std::vector<double>(Ai), w * pm};
                for (int b = 0; b < Ai; ++b) c.q[b] = cq.lookup({node.keys[i], b, msgs});
                out.push_back(std::move(c));
              }
              break;
            }
            case CriticSource::noisy: {
              for (std::size_t k = 0; k < noise->noise_set.size(); ++k) {
                if (noise->dist[k] == 0.0) continue;
                GradientContext c{node.keys[i], std::vector<double>(Ai), w * noise->dist[k]};
                for (int b = 0; b < Ai; ++b) c.q[b] = sq[t][n][row_ja[b]][k];
                out.push_back(std::move(c));
              }
              break;
            }
          }
        }
      }
    }
    return out;
  }

 private:
  /// Channel whose senders never speak; used when only the local view is needed.
  struct Silent : CommChannel {
    std::vector<std::pair<MessageId, double>> distribution(int, HistoryKey, int) const override { return {{0, 1.0}}; }
  };

  static const CommChannel* channel_or_silent(const CommChannel* c) {
    static const Silent silent;
    return c ? c : &silent;
  }

  void compute_joint_q() {
    const int A = model_.num_joint_actions();
    joint_q_.resize(horizon());
    joint_v_.resize(horizon());
    for (int t = horizon() - 1; t >= 0; --t) {
      const auto& nodes = tree_.depths[t];
      joint_q_[t].assign(nodes.size(), std::vector<double>(A));
      joint_v_[t].assign(nodes.size(), 0.0);
      for (std::size_t n = 0; n < nodes.size(); ++n) {
        for (int ja = 0; ja < A; ++ja) {
          double fut = 0.0;
          if (!nodes[n].children.empty())
            for (const auto& [c, po] : nodes[n].children[ja]) fut += po * joint_v_[t + 1][c];
          joint_q_[t][n][ja] = nodes[n].reward[ja] + model_.gamma * fut;
          joint_v_[t][n] += nodes[n].action_probs[ja] * joint_q_[t][n][ja];
        }
      }
    }
  }

  TabularDecPomdp model_;
  std::vector<SoftmaxPolicy> policies_;
  OutcomeTree tree_;
  std::vector<std::vector<std::vector<double>>> joint_q_;
  std::vector<std::vector<double>> joint_v_;
};

/// Exact mean, total variance and per-coordinate variance of one estimator.
inline GradientMoments moments_from_contexts(const std::vector<GradientContext>& contexts, const SoftmaxPolicy& pi,
                                             EstimatorKind kind, const HyperParams& hp, double baseline_scale = 1.0) {
  GradientMoments out;
  PolicyGradient coord_sq;
  for (const auto& c : contexts) {
    if (c.weight == 0.0) continue;
    const auto theta = pi.logits(c.h);
    const auto probs = softmax(theta);
    double num = 0.0, den = 0.0;
    for (std::size_t a = 0; a < probs.size(); ++a) {
      const double s = inner_product_from_probs(probs, static_cast<int>(a));
      num += probs[a] * c.q[a] * s;
      den += probs[a] * s;
    }
    if (den > 0.0) out.baseline_reduction += c.weight * num * num / std::max(den, hp.eta);
    auto& mean = out.mean[c.h];
    auto& sq = coord_sq[c.h];
    if (mean.empty()) {
      mean.assign(probs.size(), 0.0);
      sq.assign(probs.size(), 0.0);
    }
    for (std::size_t a = 0; a < probs.size(); ++a) {
      const auto g = estimator_values(kind, theta, probs, c.q, static_cast<int>(a), hp, baseline_scale);
      const double w = c.weight * probs[a];
      for (std::size_t k = 0; k < g.size(); ++k) {
        mean[k] += w * g[k];
        sq[k] += w * g[k] * g[k];
        out.second_moment += w * g[k] * g[k];
      }
    }
  }
  double mean_sq = 0.0;
  for (const auto& [h, row] : out.mean) {
    auto& var = out.coordinate_variance[h];
    var.resize(row.size());
    for (std::size_t k = 0; k < row.size(); ++k) {
      mean_sq += row[k] * row[k];
      var[k] = coord_sq[h][k] - row[k] * row[k];
    }
  }
  out.variance = out.second_moment - mean_sq;
  return out;
}

inline CriticSource default_source(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::ctde: return CriticSource::centralized;
    case EstimatorKind::dtde: return CriticSource::local;
    default: return CriticSource::communicating;
  }
}

/// Convenience wrapper; a noise model switches communicating estimators to the surrogate critic.
inline GradientMoments exact_gradient_moments(EstimatorKind kind, const ExactOracle& oracle, int i,
                                              const CommChannel* channel = nullptr, const NoiseModel* noise = nullptr,
                                              const HyperParams& hp = {}) {
  CriticSource src = default_source(kind);
  if (src == CriticSource::communicating && noise) src = CriticSource::noisy;
  return moments_from_contexts(oracle.contexts(src, i, channel, noise), oracle.policies()[i], kind, hp);
}

inline CentralizedQ exact_q_joint(const TabularDecPomdp& m, const std::vector<SoftmaxPolicy>& policies) {
  return ExactOracle(m, policies).joint_q_table();
}

inline std::vector<CommQ> exact_q_comm(const TabularDecPomdp& m, const std::vector<SoftmaxPolicy>& policies,
                                       const CommChannel& channel) {
  ExactOracle oracle(m, policies);
  std::vector<CommQ> out;
  for (int i = 0; i < m.num_agents; ++i) out.push_back(oracle.comm_q(i, &channel));
  return out;
}

inline SurrogateQ exact_surrogate_q(const TabularDecPomdp& m, const std::vector<SoftmaxPolicy>& policies,
                                    const NoiseModel& noise) {
  return ExactOracle(m, policies).surrogate_q_table(noise);
}

/// Policies with independent random logits on every history the codecs can produce.
inline std::vector<SoftmaxPolicy> make_random_policies(const TabularDecPomdp& m, std::uint64_t seed,
                                                       double scale = 2.0) {
  Rng rng(seed);
  auto codecs = make_codecs(m);
  std::vector<SoftmaxPolicy> out;
  for (int i = 0; i < m.num_agents; ++i) {
    SoftmaxPolicy pi(m.actions_per_agent[i]);
    for (HistoryKey h = 0; h < codecs[i].size(); ++h) {
      std::vector<double> theta(m.actions_per_agent[i]);
      for (auto& x : theta) x = scale * (2.0 * uniform01(rng) - 1.0);
      pi.set_logits(h, theta);
    }
    out.push_back(std::move(pi));
  }
  return out;
}

}  // namespace dccda
