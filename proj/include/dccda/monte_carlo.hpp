#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "dccda/environment.hpp"
#include "dccda/oracle.hpp"
#include "dccda/parallel.hpp"
#include "dccda/verification.hpp"

namespace dccda {

struct McResult {
  std::string instance;
  std::string estimator;
  int agent = 0;
  long samples = 0;
  double oracle_variance = 0.0;
  double empirical_variance = 0.0;
  double standard_error = 0.0;
  double z = 0.0;
  bool pass = false;
};

inline void to_json(nlohmann::json& j, const McResult& r) {
  j = nlohmann::json{{"instance", r.instance},
                     {"estimator", r.estimator},
                     {"agent", r.agent},
                     {"samples", r.samples},
                     {"oracle_variance", r.oracle_variance},
                     {"empirical_variance", r.empirical_variance},
                     {"standard_error", r.standard_error},
                     {"z", r.z},
                     {"pass", r.pass}};
}

struct McConfig {
  long samples = 1'000'000;
  std::uint64_t seed = 0;
  double z_limit = 4.0;
  HyperParams hp;
};

/// Random binary-reward instances with a stochastic 3-symbol channel and a 0.25 reward-noise model.
inline std::vector<Instance> make_mc_batch(int count, std::uint64_t seed) {
  BatchConfig c;
  c.count = count;
  c.seed = seed;
  c.binary_rewards = true;
  auto batch = make_batch(c);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    std::vector<MessageFunction> fns;
    for (int j = 0; j < batch[k].model.num_agents; ++j)
      fns.emplace_back(3, RowInit::random, mix_seed(seed, 1000 + 10 * k + j));
    batch[k].channel = std::make_shared<MessageFunctionChannel>(std::move(fns));
    batch[k].noise = NoiseModel::with_rate(0.25, 1.0, -1.0);
    batch[k].label = "mc-" + std::to_string(k);
  }
  return batch;
}

/**
 * @brief Samples real episodes, picks one step uniformly, and compares the
 * empirical variance of each estimator with the exact one. The standard error
 * is that of the mean of ||g - E g||^2.
 */
inline std::vector<McResult> monte_carlo_check(const Instance& inst, const McConfig& cfg) {
  const auto& m = inst.model;
  ExactOracle oracle(m, inst.policies);
  const int n = m.num_agents;
  const auto jq = oracle.joint_q_table();
  std::vector<CommQ> cq, lq;
  for (int i = 0; i < n; ++i) {
    cq.push_back(oracle.comm_q(i, inst.channel.get()));
    lq.push_back(oracle.comm_q(i, nullptr));
  }
  SurrogateQ sq;
  if (inst.noise) sq = oracle.surrogate_q_table(*inst.noise);

  struct Track {
    std::string name;
    EstimatorKind kind = EstimatorKind::ctde;
    CriticSource source = CriticSource::centralized;
    int agent = 0;
    GradientMoments exact;
    double mean_norm_sq = 0.0;
    double sum_d = 0.0, sum_d2 = 0.0, sum_sq = 0.0;
    PolicyGradient sum_g;
  };
  std::vector<Track> tracks;
  const std::vector<std::tuple<std::string, EstimatorKind, CriticSource>> kinds{
      {"ctde", EstimatorKind::ctde, CriticSource::centralized},
      {"dtde", EstimatorKind::dtde, CriticSource::local},
      {"dccda", EstimatorKind::dccda, CriticSource::communicating},
      {"dccda-ob", EstimatorKind::dccda_ob, CriticSource::communicating},
      {"dccda-ob-kl", EstimatorKind::dccda_ob_kl, CriticSource::communicating},
      {"dccda-noise", EstimatorKind::dccda, CriticSource::noisy}};
  for (int i = 0; i < n; ++i)
    for (const auto& [name, kind, src] : kinds) {
      if (src == CriticSource::noisy && !inst.noise) continue;
      Track t;
      t.name = name;
      t.kind = kind;
      t.source = src;
      t.agent = i;
      t.exact = moments_from_contexts(oracle.contexts(src, i, inst.channel.get(), inst.noise ? &*inst.noise : nullptr),
                                      inst.policies[i], kind, cfg.hp);
      for (const auto& [h, row] : t.exact.mean)
        for (double x : row) t.mean_norm_sq += x * x;
      tracks.push_back(std::move(t));
    }

  TabularSimulator sim(m);
  const auto codecs = make_codecs(m);
  Rng rng(cfg.seed);
  std::vector<double> q;
  for (long s = 0; s < cfg.samples; ++s) {
    const Trajectory tr = sample_episode(sim, codecs, inst.policies, inst.channel.get(), rng);
    const auto& rec = tr.steps[rng() % tr.steps.size()];
    const int eps_index = inst.noise ? sample_categorical(inst.noise->dist, rng) : 0;
    for (auto& t : tracks) {
      const int i = t.agent;
      const HistoryKey h = rec.history[i];
      const int Ai = m.actions_per_agent[i];
      q.assign(Ai, 0.0);
      auto a = rec.joint_action;
      switch (t.source) {
        case CriticSource::centralized:
          for (int b = 0; b < Ai; ++b) {
            a[i] = b;
            q[b] = jq.lookup({rec.history, m.joint_action(a)});
          }
          break;
        case CriticSource::local:
          for (int b = 0; b < Ai; ++b) q[b] = lq[i].lookup({h, b, {}});
          break;
        case CriticSource::communicating: {
          const auto recv = broadcast(rec.messages, i, n);
          for (int b = 0; b < Ai; ++b) q[b] = cq[i].lookup({h, b, recv.ids});
          break;
        }
        case CriticSource::noisy:
          for (int b = 0; b < Ai; ++b) {
            a[i] = b;
            q[b] = sq.lookup({rec.history, m.joint_action(a), eps_index});
          }
          break;
      }
      const auto theta = inst.policies[i].logits(h);
      const auto g = estimator_values(t.kind, theta, rec.policy[i], q, rec.joint_action[i], cfg.hp);
      auto it = t.exact.mean.find(h);
      double d = t.mean_norm_sq, gsq = 0.0;
      for (int k = 0; k < Ai; ++k) {
        const double mu = it == t.exact.mean.end() ? 0.0 : it->second[k];
        d += (g[k] - mu) * (g[k] - mu) - mu * mu;
        gsq += g[k] * g[k];
      }
      t.sum_d += d;
      t.sum_d2 += d * d;
      t.sum_sq += gsq;
      auto& acc = t.sum_g[h];
      if (acc.empty()) acc.assign(Ai, 0.0);
      for (int k = 0; k < Ai; ++k) acc[k] += g[k];
    }
  }

  std::vector<McResult> out;
  const double N = static_cast<double>(cfg.samples);
  for (const auto& t : tracks) {
    McResult r;
    r.instance = inst.label;
    r.estimator = t.name;
    r.agent = t.agent;
    r.samples = cfg.samples;
    r.oracle_variance = t.exact.variance;
    double mean_sq = 0.0;
    for (const auto& [h, row] : t.sum_g)
      for (double x : row) mean_sq += (x / N) * (x / N);
    r.empirical_variance = (t.sum_sq / N - mean_sq) * N / (N - 1.0);
    const double md = t.sum_d / N;
    r.standard_error = std::sqrt(std::max(t.sum_d2 / N - md * md, 0.0) / N);
    const double diff = r.empirical_variance - r.oracle_variance;
    r.z = r.standard_error > 0.0 ? diff / r.standard_error : (std::abs(diff) < 1e-12 ? 0.0 : INFINITY);
    r.pass = std::abs(r.z) <= cfg.z_limit;
    out.push_back(r);
  }
  return out;
}

inline std::vector<McResult> monte_carlo_batch(const std::vector<Instance>& batch, const McConfig& cfg) {
  std::vector<std::vector<McResult>> parts(batch.size());
  parallel_for(batch.size(), [&](std::size_t k) {
    McConfig c = cfg;
    c.seed = mix_seed(cfg.seed, k);
    parts[k] = monte_carlo_check(batch[k], c);
  });
  std::vector<McResult> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace dccda
