#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dccda/decpomdp.hpp"
#include "dccda/history.hpp"
#include "dccda/rng.hpp"
#include "dccda/softmax_policy.hpp"

namespace dccda {

using MessageId = std::uint64_t;

/// Messages received by one agent, ordered by sender index (sender excluded).
struct ReceivedMessages {
  std::vector<MessageId> ids;
  bool operator==(const ReceivedMessages&) const = default;
};

inline ReceivedMessages broadcast(const std::vector<MessageId>& all, int receiver, int num_agents) {
  if (static_cast<int>(all.size()) != num_agents)
    throw std::invalid_argument("broadcast: expected " + std::to_string(num_agents) + " messages");
  if (receiver < 0 || receiver >= num_agents) throw std::invalid_argument("broadcast: bad receiver");
  ReceivedMessages out;
  for (int j = 0; j < num_agents; ++j)
    if (j != receiver) out.ids.push_back(all[j]);
  return out;
}

enum class RowInit { strict, uniform, random };

/// Tabular message distribution f(m | h, a) of one sender.
class MessageFunction {
 public:
  MessageFunction() = default;
  MessageFunction(int alphabet, RowInit init = RowInit::uniform, std::uint64_t seed = 0)
      : alphabet_(alphabet), init_(init), seed_(seed) {
    if (alphabet < 1) throw std::invalid_argument("MessageFunction: empty alphabet");
  }

  int alphabet() const { return alphabet_; }
  RowInit init() const { return init_; }

  bool has_row(HistoryKey h, int a) const { return rows_.count({h, a}) > 0; }

  std::vector<double> row(HistoryKey h, int a) const {
    auto it = rows_.find({h, a});
    if (it != rows_.end()) return it->second;
    return default_row(h, a);
  }

  void set_row(HistoryKey h, int a, std::vector<double> probs) {
    if (static_cast<int>(probs.size()) != alphabet_) throw std::invalid_argument("set_row: wrong width");
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw std::invalid_argument("set_row: negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("set_row: row does not sum to 1");
    rows_[{h, a}] = std::move(probs);
  }

  /// Score-function ascent on log f(m|h,a): rows move in logit space and are renormalized.
  void ascend(HistoryKey h, int a, const std::vector<double>& logit_step) {
    auto probs = row(h, a);
    std::vector<double> z(alphabet_);
    for (int k = 0; k < alphabet_; ++k)
      z[k] = (probs[k] > 0.0 ? std::log(probs[k]) : -INFINITY) + logit_step[k];
    auto p = softmax(z);
    for (double x : p)
      if (!std::isfinite(x)) throw std::domain_error("message function update produced a non-finite row");
    rows_[{h, a}] = std::move(p);
  }

  const std::map<std::pair<HistoryKey, int>, std::vector<double>>& rows() const { return rows_; }

 private:
  std::vector<double> default_row(HistoryKey h, int a) const {
    switch (init_) {
      case RowInit::strict:
        throw std::out_of_range("message function has no row for (" + std::to_string(h) + "," + std::to_string(a) +
                                ")");
      case RowInit::uniform:
        return std::vector<double>(alphabet_, 1.0 / alphabet_);
      case RowInit::random: {
        Rng rng(mix_seed(mix_seed(seed_, h), static_cast<std::uint64_t>(a)));
        return detail::random_simplex(alphabet_, rng);
      }
    }
    return {};
  }

  int alphabet_ = 1;
  RowInit init_ = RowInit::uniform;
  std::uint64_t seed_ = 0;
  std::map<std::pair<HistoryKey, int>, std::vector<double>> rows_;
};

inline MessageId sample_message(const MessageFunction& f, HistoryKey h, int a, Rng& rng) {
  if (!f.has_row(h, a) && f.init() == RowInit::strict)
    throw std::out_of_range("sample_message: missing row (" + std::to_string(h) + "," + std::to_string(a) + ")");
  return static_cast<MessageId>(sample_categorical(f.row(h, a), rng));
}

/// Source of p(m_j | h_j, a_j) for each sender j.
class CommChannel {
 public:
  virtual ~CommChannel() = default;
  virtual std::vector<std::pair<MessageId, double>> distribution(int sender, HistoryKey h, int a) const = 0;

  virtual MessageId sample(int sender, HistoryKey h, int a, Rng& rng) const {
    auto dist = distribution(sender, h, a);
    if (dist.size() == 1) return dist.front().first;
    std::vector<double> p;
    p.reserve(dist.size());
    for (const auto& [m, q] : dist) p.push_back(q);
    return dist[sample_categorical(p, rng)].first;
  }
};

/// Injective message (h_j, a_j) -> h_j * |A_j| + a_j.
class PerfectDecoderChannel : public CommChannel {
 public:
  explicit PerfectDecoderChannel(std::vector<int> actions_per_agent) : actions_(std::move(actions_per_agent)) {}

  MessageId encode(int sender, HistoryKey h, int a) const {
    return static_cast<MessageId>(h) * actions_.at(sender) + static_cast<MessageId>(a);
  }
  std::pair<HistoryKey, int> decode(int sender, MessageId m) const {
    const auto A = static_cast<MessageId>(actions_.at(sender));
    return {static_cast<HistoryKey>(m / A), static_cast<int>(m % A)};
  }

  std::vector<std::pair<MessageId, double>> distribution(int sender, HistoryKey h, int a) const override {
    return {{encode(sender, h, a), 1.0}};
  }

 private:
  std::vector<int> actions_;
};

/// Deterministic message rule m_j = fn(j, h_j, a_j); used for lossy channels.
class FunctionChannel : public CommChannel {
 public:
  using Fn = std::function<MessageId(int, HistoryKey, int)>;
  explicit FunctionChannel(Fn fn) : fn_(std::move(fn)) {}
  std::vector<std::pair<MessageId, double>> distribution(int sender, HistoryKey h, int a) const override {
    return {{fn_(sender, h, a), 1.0}};
  }

 private:
  Fn fn_;
};

/// Channel backed by one MessageFunction per sender.
class MessageFunctionChannel : public CommChannel {
 public:
  explicit MessageFunctionChannel(std::vector<MessageFunction> fns) : fns_(std::move(fns)) {}

  std::vector<std::pair<MessageId, double>> distribution(int sender, HistoryKey h, int a) const override {
    auto row = fns_.at(sender).row(h, a);
    std::vector<std::pair<MessageId, double>> out;
    for (std::size_t m = 0; m < row.size(); ++m)
      if (row[m] > 0.0) out.emplace_back(static_cast<MessageId>(m), row[m]);
    return out;
  }

  MessageId sample(int sender, HistoryKey h, int a, Rng& rng) const override {
    return sample_message(fns_.at(sender), h, a, rng);
  }

  std::vector<MessageFunction>& functions() { return fns_; }
  const std::vector<MessageFunction>& functions() const { return fns_; }

 private:
  std::vector<MessageFunction> fns_;
};

/// Messages agent i receives when every sender reports its exact (h_j, a_j).
inline ReceivedMessages perfect_decoder_channel(const std::vector<HistoryKey>& joint_history,
                                                const std::vector<int>& joint_action, int receiver,
                                                const PerfectDecoderChannel& channel) {
  const int n = static_cast<int>(joint_history.size());
  std::vector<MessageId> all(n);
  for (int j = 0; j < n; ++j) all[j] = channel.encode(j, joint_history[j], joint_action[j]);
  return broadcast(all, receiver, n);
}

/**
 * @brief Binary reward noise: the reward flips when the noise value falls
 * below the threshold. The flip rate e is derived from the distribution.
 */
struct NoiseModel {
  std::vector<int> noise_set;
  std::vector<double> dist;
  int threshold = 0;
  double r_plus = 1.0;
  double r_minus = 0.0;

  double rate() const {
    double e = 0.0;
    for (std::size_t k = 0; k < noise_set.size(); ++k)
      if (noise_set[k] < threshold) e += dist[k];
    return e;
  }

  bool flips(int eps) const { return eps < threshold; }

  void check() const {
    if (noise_set.empty() || noise_set.size() != dist.size())
      throw std::invalid_argument("NoiseModel: noise set and distribution differ in size");
    double sum = 0.0;
    for (double p : dist) {
      if (!(p >= 0.0)) throw std::invalid_argument("NoiseModel: negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("NoiseModel: distribution does not sum to 1");
    if (!(rate() < 0.5)) throw std::domain_error("NoiseModel: noise rate must be < 0.5");
  }

  /// Uniform over {-k..k}; e = (threshold + k) / (2k + 1) for threshold in [-k, k+1].
  static NoiseModel uniform(int k, int threshold, double r_plus = 1.0, double r_minus = 0.0) {
    NoiseModel n;
    for (int v = -k; v <= k; ++v) n.noise_set.push_back(v);
    n.dist.assign(n.noise_set.size(), 1.0 / static_cast<double>(n.noise_set.size()));
    n.threshold = threshold;
    n.r_plus = r_plus;
    n.r_minus = r_minus;
    return n;
  }

  /// Two-point set {-1, 0} with threshold 0, so p(-1) = e exactly; e = 0 keeps only {0}.
  static NoiseModel with_rate(double e, double r_plus = 1.0, double r_minus = 0.0) {
    if (!(e >= 0.0 && e < 0.5)) throw std::domain_error("NoiseModel: noise rate must be in [0, 0.5)");
    NoiseModel n;
    n.noise_set = e > 0.0 ? std::vector<int>{-1, 0} : std::vector<int>{0};
    n.dist = e > 0.0 ? std::vector<double>{e, 1.0 - e} : std::vector<double>{1.0};
    n.threshold = 0;
    n.r_plus = r_plus;
    n.r_minus = r_minus;
    return n;
  }
};

inline void check_binary(double r, const NoiseModel& noise) {
  if (r != noise.r_plus && r != noise.r_minus)
    throw std::invalid_argument("reward " + std::to_string(r) + " is not one of the binary pair");
}

inline double flip(double r, const NoiseModel& noise) { return r == noise.r_plus ? noise.r_minus : noise.r_plus; }

inline double corrupt_reward(double r_true, int eps, const NoiseModel& noise) {
  check_binary(r_true, noise);
  return noise.flips(eps) ? flip(r_true, noise) : r_true;
}

/// Unbiased correction applied to the observed (noisy) reward.
inline double surrogate_of_observed(double r_observed, const NoiseModel& noise) {
  const double e = noise.rate();
  if (!(e < 0.5)) throw std::domain_error("surrogate reward undefined for noise rate >= 0.5");
  const double other = flip(r_observed, noise);
  return ((1.0 - e) * r_observed - e * other) / (1.0 - 2.0 * e);
}

inline double surrogate_reward(double r_true, int eps, const NoiseModel& noise) {
  return surrogate_of_observed(corrupt_reward(r_true, eps, noise), noise);
}

inline void to_json(nlohmann::json& j, const NoiseModel& n) {
  j = nlohmann::json{{"noise_set", n.noise_set}, {"dist", n.dist},       {"threshold", n.threshold},
                     {"r_plus", n.r_plus},       {"r_minus", n.r_minus}, {"rate", n.rate()}};
}

inline void from_json(const nlohmann::json& j, NoiseModel& n) {
  j.at("noise_set").get_to(n.noise_set);
  j.at("dist").get_to(n.dist);
  j.at("threshold").get_to(n.threshold);
  j.at("r_plus").get_to(n.r_plus);
  j.at("r_minus").get_to(n.r_minus);
}

inline void to_json(nlohmann::json& j, const MessageFunction& f) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [key, row] : f.rows()) rows.push_back({{"h", key.first}, {"a", key.second}, {"p", row}});
  j = nlohmann::json{{"alphabet", f.alphabet()}, {"rows", rows}};
}

}  // namespace dccda
