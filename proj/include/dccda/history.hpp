#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dccda {

using HistoryKey = std::uint64_t;

/// Alternating sequence (o_0, a_0, o_1, ..., o_t) of one agent.
struct AgentHistory {
  std::vector<int> entries;

  int time() const { return static_cast<int>(entries.size()) / 2; }
  int last_observation() const { return entries.back(); }
  bool operator==(const AgentHistory&) const = default;
};

/// Per-agent histories at a common time step.
struct JointHistory {
  std::vector<AgentHistory> per_agent;
};

/**
 * @brief Mixed-radix history encoding.
 *
 * Level t holds |O|*(|A||O|)^t keys starting at a level offset, so keys are
 * injective across lengths. With window k > 0 only the last k (action,
 * observation) pairs are kept and all longer histories fold onto level k.
 */
class HistoryCodec {
 public:
  HistoryCodec() = default;
  HistoryCodec(int num_observations, int num_actions, int max_level, int window = 0)
      : num_obs_(num_observations), num_actions_(num_actions), window_(window) {
    if (num_observations < 1 || num_actions < 1 || max_level < 0 || window < 0)
      throw std::invalid_argument("HistoryCodec: bad sizes");
    const int levels = window > 0 ? window : max_level;
    const std::uint64_t radix = static_cast<std::uint64_t>(num_obs_) * num_actions_;
    std::uint64_t count = num_obs_;
    std::uint64_t offset = 0;
    for (int t = 0; t <= levels; ++t) {
      offsets_.push_back(offset);
      counts_.push_back(count);
      if (offset > kLimit - count) throw std::overflow_error("HistoryCodec: key space overflow");
      offset += count;
      if (t < levels) {
        if (count > kLimit / radix) throw std::overflow_error("HistoryCodec: key space overflow");
        count *= radix;
      }
    }
    size_ = offset;
  }

  int num_observations() const { return num_obs_; }
  int num_actions() const { return num_actions_; }
  int window() const { return window_; }
  int max_level() const { return static_cast<int>(counts_.size()) - 1; }
  std::uint64_t size() const { return size_; }
  std::uint64_t level_size(int t) const { return counts_.at(t); }
  std::uint64_t level_offset(int t) const { return offsets_.at(t); }

  HistoryKey initial(int obs) const {
    check_obs(obs);
    return static_cast<HistoryKey>(obs);
  }

  HistoryKey extend(HistoryKey key, int action, int obs) const {
    check_obs(obs);
    if (action < 0 || action >= num_actions_) throw std::out_of_range("HistoryCodec: action out of range");
    const int t = level(key);
    std::uint64_t index = key - offsets_[t];
    index = (index * num_actions_ + action) * num_obs_ + obs;
    if (t + 1 <= max_level()) return offsets_[t + 1] + index;
    if (window_ == 0) throw std::out_of_range("HistoryCodec: history longer than horizon");
    return offsets_[t] + index % counts_[t];
  }

  int level(HistoryKey key) const {
    if (key >= size_) throw std::out_of_range("HistoryCodec: unknown key " + std::to_string(key));
    int t = 0;
    while (t + 1 < static_cast<int>(offsets_.size()) && key >= offsets_[t + 1]) ++t;
    return t;
  }

  HistoryKey encode(const AgentHistory& h) const {
    if (h.entries.empty() || h.entries.size() % 2 == 0)
      throw std::invalid_argument("HistoryCodec: history must start and end with an observation");
    HistoryKey key = initial(h.entries[0]);
    for (std::size_t k = 1; k + 1 < h.entries.size(); k += 2) key = extend(key, h.entries[k], h.entries[k + 1]);
    return key;
  }

  /// Inverse of encode; windowed keys decode to the retained suffix.
  AgentHistory decode(HistoryKey key) const {
    const int t = level(key);
    std::uint64_t index = key - offsets_[t];
    std::vector<int> rev;
    for (int k = 0; k < t; ++k) {
      rev.push_back(static_cast<int>(index % num_obs_));
      index /= num_obs_;
      rev.push_back(static_cast<int>(index % num_actions_));
      index /= num_actions_;
    }
    rev.push_back(static_cast<int>(index));
    return AgentHistory{std::vector<int>(rev.rbegin(), rev.rend())};
  }

 private:
  static constexpr std::uint64_t kLimit = std::numeric_limits<std::uint64_t>::max() / 4;

  void check_obs(int obs) const {
    if (obs < 0 || obs >= num_obs_) throw std::out_of_range("HistoryCodec: observation out of range");
  }

  int num_obs_ = 1;
  int num_actions_ = 1;
  int window_ = 0;
  std::vector<std::uint64_t> offsets_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t size_ = 0;
};

/// Hash for vectors of integral keys (joint histories, message tuples).
struct VectorHash {
  template <class T>
  std::size_t operator()(const std::vector<T>& v) const {
    std::size_t h = 0xcbf29ce484222325ULL;
    for (const auto& x : v) {
      h ^= std::hash<T>{}(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }
};

}  // namespace dccda
