#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "dccda/critics.hpp"
#include "dccda/softmax_policy.hpp"

namespace dccda {

struct HyperParams {
  double alpha = 1.0;  ///< KL target temperature
  double beta = 0.01;  ///< KL scaling factor
  double eta = 1e-12;  ///< baseline denominator floor

  void check() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
    if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
    if (!(eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");
  }
};

/// b* = sum_a pi Q S / max(sum_a pi S, eta) for one context.
inline double optimal_baseline_values(const std::vector<double>& probs, const std::vector<double>& q, double eta) {
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    const double s = inner_product_from_probs(probs, static_cast<int>(a));
    num += probs[a] * q[a] * s;
    den += probs[a] * s;
  }
  if (eta == 0.0 && den <= 0.0) throw std::domain_error("optimal baseline: zero denominator with eta = 0");
  // A constant row is its own baseline; returning it exactly keeps the advantage at 0.0.
  if (!q.empty() && std::all_of(q.begin(), q.end(), [&](double x) { return x == q.front(); })) return q.front();
  return num / std::max(den, eta);
}

struct KlTerm {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// -KL(pi || softmax(q / alpha)) and its logit gradient, q held constant.
inline KlTerm kl_from_logits(const std::vector<double>& theta, const std::vector<double>& q, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("kl_regularizer: alpha must be > 0");
  const std::size_t n = theta.size();
  auto log_softmax = [n](const std::vector<double>& z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double x : z) sum += std::exp(x - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = z[k] - lse;
    return out;
  };
  std::vector<double> scaled(n);
  for (std::size_t k = 0; k < n; ++k) scaled[k] = q[k] / alpha;
  const auto log_pi = log_softmax(theta);
  const auto log_p = log_softmax(scaled);
  std::vector<double> d(n);
  double kl = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    d[k] = log_pi[k] - log_p[k];
    kl += std::exp(log_pi[k]) * d[k];
  }
  KlTerm out;
  out.loss = -kl;
  out.gradient.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.gradient[k] = -std::exp(log_pi[k]) * (d[k] - kl);
  return out;
}

enum class BaselineMode { none, optimal };

/**
 * @brief Single-sample gradient (q[a] - b) * score(a) + beta * grad KL at one
 * context, where q holds the critic values of every own action.
 */
inline std::vector<double> estimator_values(EstimatorKind kind, const std::vector<double>& theta,
                                            const std::vector<double>& probs, const std::vector<double>& q, int a,
                                            const HyperParams& hp, double baseline_scale = 1.0) {
  double b = 0.0;
  if (kind == EstimatorKind::dccda_ob || kind == EstimatorKind::dccda_ob_kl)
    b = baseline_scale * optimal_baseline_values(probs, q, hp.eta);
  auto g = score_from_probs(probs, a);
  for (auto& x : g) x *= q[a] - b;
  if (kind == EstimatorKind::dccda_ob_kl && hp.beta != 0.0) {
    auto kl = kl_from_logits(theta, q, hp.alpha);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += hp.beta * kl.gradient[k];
  }
  return g;
}

inline std::vector<double> comm_q_values(const CommQ& q, HistoryKey h, const ReceivedMessages& m, int num_actions) {
  std::vector<double> v(num_actions);
  for (int a = 0; a < num_actions; ++a) v[a] = q.lookup({h, a, m.ids});
  return v;
}

inline GradientSample scaled_score_sample(const SoftmaxPolicy& pi, HistoryKey h, int a, double scale,
                                          EstimatorKind tag) {
  auto g = log_prob_gradient(pi, h, a);
  for (auto& x : g.values) x *= scale;
  g.tag = tag;
  return g;
}

inline GradientSample g_ctde(const CentralizedQ& q, const SoftmaxPolicy& pi_i, const JointKey& ha, int i, int a_i) {
  return scaled_score_sample(pi_i, ha.h.at(i), a_i, q.lookup(ha), EstimatorKind::ctde);
}

inline GradientSample g_dtde(const LocalQ& q, const SoftmaxPolicy& pi_i, HistoryKey h_i, int a_i) {
  return scaled_score_sample(pi_i, h_i, a_i, q.lookup({h_i, a_i}), EstimatorKind::dtde);
}

inline GradientSample g_dccda(const CommQ& q, const SoftmaxPolicy& pi_i, HistoryKey h_i, int a_i,
                              const ReceivedMessages& m) {
  return scaled_score_sample(pi_i, h_i, a_i, q.lookup({h_i, a_i, m.ids}), EstimatorKind::dccda);
}

inline double optimal_baseline(const CommQ& q, const SoftmaxPolicy& pi_i, HistoryKey h_i, const ReceivedMessages& m,
                               double eta = 1e-12) {
  return optimal_baseline_values(action_distribution(pi_i, h_i), comm_q_values(q, h_i, m, pi_i.num_actions()), eta);
}

inline GradientSample g_dccda_ob(const CommQ& q, const SoftmaxPolicy& pi_i, HistoryKey h_i, int a_i,
                                 const ReceivedMessages& m, double eta = 1e-12) {
  const double b = optimal_baseline(q, pi_i, h_i, m, eta);
  return scaled_score_sample(pi_i, h_i, a_i, q.lookup({h_i, a_i, m.ids}) - b, EstimatorKind::dccda_ob);
}

inline KlTerm kl_regularizer(const SoftmaxPolicy& pi_i, const CommQ& q, HistoryKey h_i, const ReceivedMessages& m,
                             double alpha) {
  return kl_from_logits(pi_i.logits(h_i), comm_q_values(q, h_i, m, pi_i.num_actions()), alpha);
}

inline GradientSample g_dccda_ob_kl(const CommQ& q, const SoftmaxPolicy& pi_i, HistoryKey h_i, int a_i,
                                    const ReceivedMessages& m, const HyperParams& hp) {
  hp.check();
  GradientSample g = g_dccda_ob(q, pi_i, h_i, a_i, m, hp.eta);
  g.tag = EstimatorKind::dccda_ob_kl;
  if (hp.beta != 0.0) {
    auto kl = kl_regularizer(pi_i, q, h_i, m, hp.alpha);
    for (std::size_t k = 0; k < g.values.size(); ++k) g.values[k] += hp.beta * kl.gradient[k];
  }
  return g;
}

}  // namespace dccda
