#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dccda/history.hpp"
#include "dccda/rng.hpp"

namespace dccda {

enum class EstimatorKind { ctde, dtde, dccda, dccda_ob, dccda_ob_kl };

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::ctde: return "ctde";
    case EstimatorKind::dtde: return "dtde";
    case EstimatorKind::dccda: return "dccda";
    case EstimatorKind::dccda_ob: return "dccda-ob";
    case EstimatorKind::dccda_ob_kl: return "dccda-ob-kl";
  }
  return "?";
}

inline EstimatorKind estimator_from_string(const std::string& s) {
  for (auto k : {EstimatorKind::ctde, EstimatorKind::dtde, EstimatorKind::dccda, EstimatorKind::dccda_ob,
                 EstimatorKind::dccda_ob_kl})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown estimator '" + s + "'");
}

/// Gradient restricted to the logits of one history.
struct GradientSample {
  HistoryKey history = 0;
  int action = 0;
  std::vector<double> values;
  EstimatorKind tag = EstimatorKind::dccda;
};

inline std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) sum += (p[k] = std::exp(logits[k] - mx));
  for (auto& x : p) x /= sum;
  return p;
}

/// Tabular softmax policy; unseen histories have zero logits.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy() = default;
  explicit SoftmaxPolicy(int num_actions) : num_actions_(num_actions) {
    if (num_actions < 1) throw std::invalid_argument("SoftmaxPolicy: need at least one action");
  }

  int num_actions() const { return num_actions_; }

  std::vector<double> logits(HistoryKey h) const {
    auto it = table_.find(h);
    return it == table_.end() ? std::vector<double>(num_actions_, 0.0) : it->second;
  }

  void set_logits(HistoryKey h, std::vector<double> theta) {
    if (static_cast<int>(theta.size()) != num_actions_) throw std::invalid_argument("set_logits: wrong width");
    table_[h] = std::move(theta);
  }

  std::vector<double>& mutable_logits(HistoryKey h) {
    auto it = table_.find(h);
    if (it == table_.end()) it = table_.emplace(h, std::vector<double>(num_actions_, 0.0)).first;
    return it->second;
  }

  const std::unordered_map<HistoryKey, std::vector<double>>& table() const { return table_; }

  bool operator==(const SoftmaxPolicy& o) const { return num_actions_ == o.num_actions_ && table_ == o.table_; }

 private:
  int num_actions_ = 1;
  std::unordered_map<HistoryKey, std::vector<double>> table_;
};

inline std::vector<double> action_distribution(const SoftmaxPolicy& pi, HistoryKey h) {
  return softmax(pi.logits(h));
}

inline void check_action(const SoftmaxPolicy& pi, int a) {
  if (a < 0 || a >= pi.num_actions()) throw std::invalid_argument("invalid action index " + std::to_string(a));
}

/// Score 1{k=a} - pi_k given the distribution.
inline std::vector<double> score_from_probs(const std::vector<double>& probs, int a) {
  std::vector<double> g(probs.size());
  for (std::size_t k = 0; k < probs.size(); ++k) g[k] = (static_cast<int>(k) == a ? 1.0 : 0.0) - probs[k];
  // 1 - pi_a summed from the other entries keeps precision when pi_a is near 1.
  double rest = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k)
    if (static_cast<int>(k) != a) rest += probs[k];
  g[a] = rest;
  return g;
}

inline GradientSample log_prob_gradient(const SoftmaxPolicy& pi, HistoryKey h, int a) {
  check_action(pi, a);
  return GradientSample{h, a, score_from_probs(action_distribution(pi, h), a), EstimatorKind::dccda};
}

/// S(a) = sum_k (1{k=a} - pi_k)^2.
inline double inner_product_from_probs(const std::vector<double>& probs, int a) {
  double s = 0.0;
  for (double g : score_from_probs(probs, a)) s += g * g;
  return s;
}

inline double grad_inner_product(const SoftmaxPolicy& pi, HistoryKey h, int a) {
  check_action(pi, a);
  return inner_product_from_probs(action_distribution(pi, h), a);
}

inline int sample_action(const SoftmaxPolicy& pi, HistoryKey h, Rng& rng) {
  return sample_categorical(action_distribution(pi, h), rng);
}

/// Sparse gradient over histories; ordered so traversal is deterministic.
using PolicyGradient = std::map<HistoryKey, std::vector<double>>;

inline void accumulate(PolicyGradient& acc, const GradientSample& g, double weight = 1.0) {
  auto& row = acc[g.history];
  if (row.empty()) row.assign(g.values.size(), 0.0);
  for (std::size_t k = 0; k < row.size(); ++k) row[k] += weight * g.values[k];
}

inline double l2_norm(const PolicyGradient& g) {
  double s = 0.0;
  for (const auto& [h, row] : g)
    for (double x : row) s += x * x;
  return std::sqrt(s);
}

inline void check_finite(const PolicyGradient& g) {
  for (const auto& [h, row] : g)
    for (double x : row)
      if (!std::isfinite(x)) throw std::domain_error("non-finite gradient at history " + std::to_string(h));
}

/// Plain SGD ascent step.
inline void apply_gradient(SoftmaxPolicy& pi, const PolicyGradient& g, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("apply_gradient: learning rate must be > 0");
  check_finite(g);
  for (const auto& [h, row] : g) {
    bool zero = std::all_of(row.begin(), row.end(), [](double x) { return x == 0.0; });
    if (zero) continue;
    auto& theta = pi.mutable_logits(h);
    for (std::size_t k = 0; k < row.size(); ++k) theta[k] += lr * row[k];
  }
}

/// Adam ascent with per-history moment state.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(SoftmaxPolicy& pi, const PolicyGradient& g, double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be > 0");
    check_finite(g);
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (const auto& [h, row] : g) {
      auto& m = m_[h];
      auto& v = v_[h];
      if (m.empty()) {
        m.assign(row.size(), 0.0);
        v.assign(row.size(), 0.0);
      }
      bool zero_state = true;
      for (std::size_t k = 0; k < row.size(); ++k) {
        m[k] = b1_ * m[k] + (1.0 - b1_) * row[k];
        v[k] = b2_ * v[k] + (1.0 - b2_) * row[k] * row[k];
        if (m[k] != 0.0) zero_state = false;
      }
      if (zero_state) continue;
      auto& theta = pi.mutable_logits(h);
      for (std::size_t k = 0; k < row.size(); ++k) theta[k] += lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }

 private:
  double b1_, b2_, eps_;
  long t_ = 0;
  std::map<HistoryKey, std::vector<double>> m_, v_;
};

inline void to_json(nlohmann::json& j, const SoftmaxPolicy& pi) {
  std::map<HistoryKey, std::vector<double>> sorted(pi.table().begin(), pi.table().end());
  nlohmann::json logits = nlohmann::json::object();
  for (const auto& [h, row] : sorted) logits[std::to_string(h)] = row;
  j = nlohmann::json{{"num_actions", pi.num_actions()}, {"logits", logits}};
}

inline void from_json(const nlohmann::json& j, SoftmaxPolicy& pi) {
  pi = SoftmaxPolicy(j.at("num_actions").get<int>());
  for (const auto& [k, v] : j.at("logits").items()) pi.set_logits(std::stoull(k), v.get<std::vector<double>>());
}

}  // namespace dccda
