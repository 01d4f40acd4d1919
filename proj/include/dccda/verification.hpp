#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dccda/comm.hpp"
#include "dccda/decpomdp.hpp"
#include "dccda/estimators.hpp"
#include "dccda/oracle.hpp"
#include "dccda/parallel.hpp"

namespace dccda {

struct VerificationReport {
  std::string claim;
  int instances = 0;
  double max_violation = -std::numeric_limits<double>::infinity();
  double tolerance = 0.0;
  bool pass = true;
  nlohmann::json witness;
  nlohmann::json details = nlohmann::json::object();

  /// Records one measured violation; the first one above tolerance becomes the witness.
  void observe(double violation, const nlohmann::json& where) {
    if (violation > max_violation) max_violation = violation;
    if (std::isnan(violation) || violation > tolerance) {
      if (pass) witness = where;
      pass = false;
    }
  }
  void finish() {
    if (max_violation == -std::numeric_limits<double>::infinity()) max_violation = 0.0;
  }
};

inline void to_json(nlohmann::json& j, const VerificationReport& r) {
  j = nlohmann::json{{"claim", r.claim},       {"instances", r.instances}, {"max_violation", r.max_violation},
                     {"tolerance", r.tolerance}, {"pass", r.pass},          {"details", r.details}};
  if (!r.pass) j["witness"] = r.witness;
}

/// A model, a fixed policy profile and the channel its critics communicate over.
struct Instance {
  std::string label;
  TabularDecPomdp model;
  std::vector<SoftmaxPolicy> policies;
  std::shared_ptr<const CommChannel> channel;
  /// When set, communicating estimators use the surrogate critic under this noise.
  std::optional<NoiseModel> noise;
};

struct BatchConfig {
  int count = 100;
  std::uint64_t seed = 0;
  int num_agents = 2;
  int max_states = 4;
  int num_actions = 2;
  int num_observations = 2;
  int max_horizon = 3;
  bool binary_rewards = false;
  double reward_min = -1.0;
  double reward_max = 1.0;
};

/// Random perfect-decoder instances with sizes cycling through the configured ranges.
inline std::vector<Instance> make_batch(const BatchConfig& c) {
  if (c.count < 1) throw std::invalid_argument("verification batch must not be empty");
  std::vector<Instance> out;
  for (int k = 0; k < c.count; ++k) {
    const std::uint64_t s = mix_seed(c.seed, k);
    RandomModelConfig mc;
    mc.num_agents = c.num_agents;
    mc.num_states = 1 + static_cast<int>(s % c.max_states);
    mc.num_actions = c.num_actions;
    mc.num_observations = c.num_observations;
    mc.horizon = 1 + static_cast<int>((s >> 8) % c.max_horizon);
    mc.binary_rewards = c.binary_rewards;
    mc.reward_min = c.reward_min;
    mc.reward_max = c.reward_max;
    Instance inst;
    inst.label = "random-" + std::to_string(k);
    inst.model = make_random_decpomdp(mc, s);
    inst.policies = make_random_policies(inst.model, mix_seed(s, 1));
    inst.channel = std::make_shared<PerfectDecoderChannel>(inst.model.actions_per_agent);
    out.push_back(std::move(inst));
  }
  return out;
}

/**
 * @brief Horizon-1 coordination game (reward 1 iff both actions match) whose
 * receiver gets the sender's (h, a) together with a reward-noise draw; the
 * communicating critic is the surrogate, unbiased but noise dependent.
 */
inline Instance make_noisy_message_witness(double e = 0.25) {
  Instance inst;
  inst.label = "noisy-message-witness";
  auto& m = inst.model;
  m.num_agents = 2;
  m.num_states = 1;
  m.init_dist = {1.0};
  m.actions_per_agent = {2, 2};
  m.obs_per_agent = {1, 1};
  m.transition = {Table2(4, {1.0})};
  m.observation = {Table2(4, {1.0})};
  m.init_observation = {{1.0}};
  m.reward = {{1.0, 0.0, 0.0, 1.0}};
  m.gamma = 1.0;
  m.horizon = 1;
  SoftmaxPolicy p0(2), p1(2);
  p0.set_logits(0, {0.4, -0.3});
  p1.set_logits(0, {-0.2, 0.5});
  inst.policies = {p0, p1};
  inst.channel = std::make_shared<PerfectDecoderChannel>(m.actions_per_agent);
  inst.noise = NoiseModel::with_rate(e, 1.0, 0.0);
  return inst;
}

/// Same game with a deterministic (perfect-decoder) channel: the equality case.
inline Instance make_deterministic_message_witness() {
  Instance inst = make_noisy_message_witness();
  inst.label = "deterministic-message-witness";
  inst.noise.reset();
  return inst;
}

/// Message carries only the sender's action, so distinct histories share a message.
inline std::shared_ptr<const CommChannel> make_lossy_channel() {
  return std::make_shared<FunctionChannel>([](int, HistoryKey, int a) { return static_cast<MessageId>(a); });
}

namespace detail {

inline nlohmann::json where(const Instance& inst, int agent) { return {{"instance", inst.label}, {"agent", agent}}; }

inline double max_abs_diff(const PolicyGradient& a, const PolicyGradient& b) {
  double d = 0.0;
  for (const auto& [h, row] : a) {
    auto it = b.find(h);
    for (std::size_t k = 0; k < row.size(); ++k) d = std::max(d, std::abs(row[k] - (it == b.end() ? 0.0 : it->second[k])));
  }
  for (const auto& [h, row] : b)
    if (!a.count(h))
      for (double x : row) d = std::max(d, std::abs(x));
  return d;
}

}  // namespace detail

/// max |Q(h,a) - E_m[Q_i(h_i,a_i,m)]| over every reachable (h, a) and agent.
inline VerificationReport verify_critic_equivalence(const std::vector<Instance>& batch, double tol = 1e-9) {
  VerificationReport r;
  r.claim = "critic_equivalence";
  r.tolerance = tol;
  std::vector<VerificationReport> parts(batch.size());
  parallel_for(batch.size(), [&](std::size_t k) {
    const auto& inst = batch[k];
    auto& part = parts[k];
    part.tolerance = tol;
    ExactOracle oracle(inst.model, inst.policies);
    const auto& m = inst.model;
    for (int i = 0; i < m.num_agents; ++i) {
      auto cq = oracle.comm_q(i, inst.channel.get());
      std::vector<bool> include(m.num_agents, true);
      include[i] = false;
      for (int t = 0; t < oracle.horizon(); ++t)
        for (std::size_t n = 0; n < oracle.tree().depths[t].size(); ++n) {
          const auto& node = oracle.tree().depths[t][n];
          for (int ja = 0; ja < m.num_joint_actions(); ++ja) {
            auto a = m.split_action(ja);
            double em = 0.0;
            for (auto& [msgs, p] : joint_message_distribution(*inst.channel, node.keys, a, include))
              em += p * cq.lookup({node.keys[i], a[i], msgs});
            const double q = oracle.joint_q(t, n, ja);
            part.observe(std::abs(q - em), {{"instance", inst.label}, {"agent", i}, {"depth", t},
                                            {"history", node.keys}, {"joint_action", ja}, {"q_joint", q},
                                            {"q_comm_mean", em}});
          }
        }
    }
    if (m.num_agents == 1 || oracle.horizon() == 0) part.observe(0.0, {});
  });
  for (std::size_t k = 0; k < parts.size(); ++k) {
    ++r.instances;
    if (!parts[k].pass && r.pass) {
      r.pass = false;
      r.witness = parts[k].witness;
    }
    r.max_violation = std::max(r.max_violation, parts[k].max_violation);
  }
  r.finish();
  return r;
}

/// Per-instance, per-agent variances of the estimators used by the variance-ordering checks.
struct VarianceProfile {
  std::vector<double> ctde, dccda, dtde;
};

inline VarianceProfile variance_profile(const Instance& inst, const HyperParams& hp = {}) {
  ExactOracle oracle(inst.model, inst.policies);
  const NoiseModel* noise = inst.noise ? &*inst.noise : nullptr;
  VarianceProfile v;
  for (int i = 0; i < inst.model.num_agents; ++i) {
    v.ctde.push_back(exact_gradient_moments(EstimatorKind::ctde, oracle, i, nullptr, nullptr, hp).variance);
    v.dtde.push_back(exact_gradient_moments(EstimatorKind::dtde, oracle, i, nullptr, nullptr, hp).variance);
    v.dccda.push_back(exact_gradient_moments(EstimatorKind::dccda, oracle, i, inst.channel.get(), noise, hp).variance);
  }
  return v;
}

/// Var(DCCDA) >= Var(CTDE) - tol; details carry the largest and smallest gap seen.
inline VerificationReport verify_variance_ordering(const std::vector<Instance>& batch, double tol = 1e-9) {
  VerificationReport r;
  r.claim = "variance_ordering";
  r.tolerance = tol;
  std::vector<VarianceProfile> prof(batch.size());
  parallel_for(batch.size(), [&](std::size_t k) { prof[k] = variance_profile(batch[k]); });
  double max_gap = -INFINITY, min_gap = INFINITY;
  nlohmann::json informational = nlohmann::json::array();
  for (std::size_t k = 0; k < batch.size(); ++k) {
    ++r.instances;
    for (std::size_t i = 0; i < prof[k].ctde.size(); ++i) {
      const double gap = prof[k].dccda[i] - prof[k].ctde[i];
      max_gap = std::max(max_gap, gap);
      min_gap = std::min(min_gap, gap);
      auto w = detail::where(batch[k], static_cast<int>(i));
      w["var_ctde"] = prof[k].ctde[i];
      w["var_dccda"] = prof[k].dccda[i];
      r.observe(-gap, w);
    }
  }
  r.details["max_gap"] = max_gap;
  r.details["min_gap"] = min_gap;
  r.finish();
  return r;
}

/// E_eps[surrogate(r)] = r for both rewards and each rate.
inline VerificationReport verify_surrogate_reward(const std::vector<double>& rates, double r_plus = 1.0, double r_minus = 0.0,
                                        double tol = 1e-12) {
  VerificationReport r;
  r.claim = "surrogate_reward";
  r.tolerance = tol;
  for (double e : rates) {
    ++r.instances;
    for (auto n : {NoiseModel::with_rate(e, r_plus, r_minus), NoiseModel::uniform(2, -2 + static_cast<int>(e * 5), r_plus, r_minus)}) {
      if (!(n.rate() < 0.5)) continue;
      for (double rt : {r_plus, r_minus}) {
        double mean = 0.0;
        for (std::size_t k = 0; k < n.noise_set.size(); ++k) mean += n.dist[k] * surrogate_reward(rt, n.noise_set[k], n);
        r.observe(std::abs(mean - rt), {{"rate", n.rate()}, {"reward", rt}, {"mean", mean}});
      }
    }
  }
  r.finish();
  return r;
}

struct NoiseReports {
  VerificationReport mean;
  VerificationReport ordering;
};

/// E_eps[Q_hat] = Q (mean) and Var(noisy DCCDA) >= Var(CTDE) (ordering).
inline NoiseReports verify_surrogate_critic(const std::vector<Instance>& batch, const NoiseModel& noise,
                                           double mean_tol = 1e-10, double var_tol = 1e-9) {
  NoiseReports out;
  out.mean.claim = "surrogate_critic_mean";
  out.mean.tolerance = mean_tol;
  out.ordering.claim = "noisy_variance_ordering";
  out.ordering.tolerance = var_tol;
  std::vector<NoiseReports> parts(batch.size());
  parallel_for(batch.size(), [&](std::size_t k) {
    const auto& inst = batch[k];
    auto& p = parts[k];
    p.mean.tolerance = mean_tol;
    p.ordering.tolerance = var_tol;
    ExactOracle oracle(inst.model, inst.policies);
    auto sq = oracle.surrogate_q(noise);
    const auto& m = inst.model;
    for (int t = 0; t < oracle.horizon(); ++t)
      for (std::size_t n = 0; n < sq[t].size(); ++n)
        for (int ja = 0; ja < m.num_joint_actions(); ++ja) {
          double mean = 0.0;
          for (std::size_t e = 0; e < noise.noise_set.size(); ++e) mean += noise.dist[e] * sq[t][n][ja][e];
          p.mean.observe(std::abs(mean - oracle.joint_q(t, n, ja)),
                           {{"instance", inst.label}, {"depth", t}, {"joint_action", ja}});
        }
    for (int i = 0; i < m.num_agents; ++i) {
      const double v_ctde = exact_gradient_moments(EstimatorKind::ctde, oracle, i).variance;
      const double v_noise = exact_gradient_moments(EstimatorKind::dccda, oracle, i, nullptr, &noise).variance;
      auto w = detail::where(inst, i);
      w["var_ctde"] = v_ctde;
      w["var_noisy"] = v_noise;
      p.ordering.observe(v_ctde - v_noise, w);
    }
  });
  double min_gap = INFINITY;
  for (auto& p : parts) {
    for (auto pair : {std::pair{&out.mean, &p.mean}, std::pair{&out.ordering, &p.ordering}}) {
      auto [dst, src] = pair;
      ++dst->instances;
      dst->max_violation = std::max(dst->max_violation, src->max_violation);
      if (!src->pass && dst->pass) {
        dst->pass = false;
        dst->witness = src->witness;
      }
    }
    min_gap = std::min(min_gap, -p.ordering.max_violation);
  }
  out.ordering.details["rate"] = noise.rate();
  out.ordering.details["min_gap"] = min_gap;
  out.mean.finish();
  out.ordering.finish();
  return out;
}

inline const std::vector<double>& delta_grid() {
  static const std::vector<double> grid{-0.5, -0.2, -0.1, -0.01, 0.01, 0.1, 0.2, 0.5};
  return grid;
}

struct BaselineReports {
  VerificationReport variance_reduction;
  VerificationReport optimality;
  VerificationReport identity;
  VerificationReport unbiasedness;
};

/**
 * @brief Optimal-baseline claims on every instance and agent: variance
 * reduction, optimality against the delta grid, the decomposition identity,
 * and equal means with and without the baseline.
 */
inline BaselineReports verify_optimal_baseline(const std::vector<Instance>& batch, double tol = 1e-9,
                                                        const HyperParams& hp = {}) {
  BaselineReports out;
  out.variance_reduction.claim = "baseline_variance_reduction";
  out.optimality.claim = "baseline_optimality";
  out.identity.claim = "variance_identity";
  out.unbiasedness.claim = "unbiasedness";
  for (auto* r : {&out.variance_reduction, &out.optimality, &out.identity, &out.unbiasedness}) r->tolerance = tol;
  std::vector<BaselineReports> parts(batch.size());
  std::vector<int> strict(batch.size(), 0);
  parallel_for(batch.size(), [&](std::size_t k) {
    const auto& inst = batch[k];
    auto& p = parts[k];
    for (auto* r : {&p.variance_reduction, &p.optimality, &p.identity, &p.unbiasedness}) r->tolerance = tol;
    ExactOracle oracle(inst.model, inst.policies);
    const NoiseModel* noise = inst.noise ? &*inst.noise : nullptr;
    for (int i = 0; i < inst.model.num_agents; ++i) {
      const auto src = noise ? CriticSource::noisy : CriticSource::communicating;
      const auto ctx = oracle.contexts(src, i, inst.channel.get(), noise);
      const auto& pi = inst.policies[i];
      const auto plain = moments_from_contexts(ctx, pi, EstimatorKind::dccda, hp);
      const auto ob = moments_from_contexts(ctx, pi, EstimatorKind::dccda_ob, hp);
      auto w = detail::where(inst, i);
      w["var_dccda"] = plain.variance;
      w["var_ob"] = ob.variance;
      p.variance_reduction.observe(ob.variance - plain.variance, w);
      p.identity.observe(std::abs(ob.variance - (plain.variance - plain.baseline_reduction)), w);
      p.unbiasedness.observe(detail::max_abs_diff(ob.mean, plain.mean), w);
      for (double d : delta_grid()) {
        const auto perturbed = moments_from_contexts(ctx, pi, EstimatorKind::dccda_ob, hp, 1.0 + d);
        auto wd = w;
        wd["delta"] = d;
        wd["var_perturbed"] = perturbed.variance;
        p.optimality.observe(ob.variance - perturbed.variance, wd);
        if (perturbed.variance - ob.variance > 1e-12) ++strict[k];
      }
    }
  });
  int strict_total = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    strict_total += strict[k];
    auto& p = parts[k];
    for (auto pair : {std::pair{&out.variance_reduction, &p.variance_reduction}, std::pair{&out.optimality, &p.optimality},
                      std::pair{&out.identity, &p.identity}, std::pair{&out.unbiasedness, &p.unbiasedness}}) {
      auto [dst, src] = pair;
      ++dst->instances;
      dst->max_violation = std::max(dst->max_violation, src->max_violation);
      if (!src->pass && dst->pass) {
        dst->pass = false;
        dst->witness = src->witness;
      }
    }
  }
  out.optimality.details["strict_perturbations"] = strict_total;
  for (auto* r : {&out.variance_reduction, &out.optimality, &out.identity, &out.unbiasedness}) r->finish();
  return out;
}

/// Analytic score and KL gradients against central differences on random configurations.
inline VerificationReport verify_finite_differences(int configs, std::uint64_t seed, double step = 1e-5,
                                                    double tol = 1e-6) {
  VerificationReport r;
  r.claim = "finite_differences";
  r.tolerance = tol;
  Rng rng(seed);
  auto log_prob = [](const std::vector<double>& th, int a) { return std::log(softmax(th)[a]); };
  auto neg_kl = [](const std::vector<double>& th, const std::vector<double>& q, double alpha) {
    return kl_from_logits(th, q, alpha).loss;
  };
  auto rel = [](const std::vector<double>& an, const std::vector<double>& fd) {
    double err = 0.0, ref = 0.0;
    for (std::size_t k = 0; k < an.size(); ++k) {
      err = std::max(err, std::abs(an[k] - fd[k]));
      ref = std::max({ref, std::abs(fd[k]), std::abs(an[k])});
    }
    return ref > 1e-8 ? err / ref : err;
  };
  for (int c = 0; c < configs; ++c) {
    ++r.instances;
    const int n = 2 + static_cast<int>(rng() % 4);
    std::vector<double> theta(n), q(n);
    for (auto& x : theta) x = 4.0 * uniform01(rng) - 2.0;
    for (auto& x : q) x = 6.0 * uniform01(rng) - 3.0;
    const double alpha = 0.1 + 2.0 * uniform01(rng);
    const int a = static_cast<int>(rng() % n);
    std::vector<double> fd_score(n), fd_kl(n);
    for (int k = 0; k < n; ++k) {
      auto up = theta, dn = theta;
      up[k] += step;
      dn[k] -= step;
      fd_score[k] = (log_prob(up, a) - log_prob(dn, a)) / (2 * step);
      fd_kl[k] = (neg_kl(up, q, alpha) - neg_kl(dn, q, alpha)) / (2 * step);
    }
    r.observe(rel(score_from_probs(softmax(theta), a), fd_score), {{"config", c}, {"term", "score"}});
    r.observe(rel(kl_from_logits(theta, q, alpha).gradient, fd_kl), {{"config", c}, {"term", "kl"}});
  }
  r.finish();
  return r;
}

}  // namespace dccda
