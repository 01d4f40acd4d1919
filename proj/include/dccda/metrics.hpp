#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dccda/rng.hpp"

namespace dccda {

/// Shortest form that round-trips a double (17 significant digits).
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s.empty() || s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

struct MetricsRow {
  std::uint64_t seed = 0;
  int iteration = 0;
  std::vector<double> grad_norms;
  std::optional<double> eval_rate;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double kl_loss = 0.0;
};

/// Per-iteration training metrics; rows strictly increase in (seed, iteration).
class MetricsLog {
 public:
  void append(MetricsRow row) {
    if (!rows_.empty()) {
      const auto& last = rows_.back();
      if (row.seed < last.seed || (row.seed == last.seed && row.iteration <= last.iteration))
        throw std::invalid_argument("MetricsLog rows must increase in (seed, iteration)");
    }
    rows_.push_back(std::move(row));
  }

  const std::vector<MetricsRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  std::string to_csv() const {
    std::ostringstream out;
    const std::size_t agents = rows_.empty() ? 0 : rows_.front().grad_norms.size();
    out << "seed,iteration";
    for (std::size_t i = 0; i < agents; ++i) out << ",grad_norm_" << i;
    out << ",eval_rate,actor_loss,critic_loss,kl_loss\n";
    for (const auto& r : rows_) {
      out << r.seed << ',' << r.iteration;
      for (double g : r.grad_norms) out << ',' << format_double(g);
      out << ',' << (r.eval_rate ? format_double(*r.eval_rate) : "") << ',' << format_double(r.actor_loss) << ','
          << format_double(r.critic_loss) << ',' << format_double(r.kl_loss) << '\n';
    }
    return out.str();
  }

  static MetricsLog from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty metrics csv");
    const auto header = split(line);
    std::size_t agents = 0;
    for (const auto& h : header)
      if (h.rfind("grad_norm_", 0) == 0) ++agents;
    if (header.size() != agents + 6) throw std::invalid_argument("unexpected metrics csv header");
    MetricsLog log;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split(line);
      if (f.size() != header.size()) throw std::invalid_argument("malformed metrics csv row");
      MetricsRow r;
      r.seed = std::stoull(f[0]);
      r.iteration = std::stoi(f[1]);
      for (std::size_t i = 0; i < agents; ++i) r.grad_norms.push_back(parse_double(f[2 + i]));
      if (!f[2 + agents].empty()) r.eval_rate = parse_double(f[2 + agents]);
      r.actor_loss = parse_double(f[3 + agents]);
      r.critic_loss = parse_double(f[4 + agents]);
      r.kl_loss = parse_double(f[5 + agents]);
      log.append(std::move(r));
    }
    return log;
  }

  /// Mean over agents and iterations in [begin, end) of the gradient L2 norm.
  double mean_grad_norm(int begin = 0, int end = std::numeric_limits<int>::max()) const {
    double s = 0.0;
    long n = 0;
    for (const auto& r : rows_)
      if (r.iteration >= begin && r.iteration < end)
        for (double g : r.grad_norms) {
          s += g;
          ++n;
        }
    if (n == 0) throw std::invalid_argument("no metrics rows in the requested window");
    return s / n;
  }

  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    out.push_back(cur);
    return out;
  }

 private:
  std::vector<MetricsRow> rows_;
};

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample (n-1) or population standard deviation.
inline double standard_deviation(const std::vector<double>& v, bool sample = true) {
  const std::size_t n = v.size();
  if (n < (sample ? 2u : 1u)) throw std::invalid_argument("standard deviation needs more values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(sample ? n - 1 : n));
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Std across seeds of each seed's mean gradient norm over [begin, end).
inline double gradient_norm_std(const std::vector<MetricsLog>& per_seed, int begin = 0,
                                int end = std::numeric_limits<int>::max(), bool sample = true) {
  if (per_seed.size() < 2) throw std::invalid_argument("gradient_norm_std needs at least 2 seeds");
  std::vector<double> means;
  for (const auto& log : per_seed) means.push_back(log.mean_grad_norm(begin, end));
  return standard_deviation(means, sample);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap of the median.
inline Interval bootstrap_median_ci(const std::vector<double>& v, int resamples = 10000, std::uint64_t seed = 0,
                                    double level = 0.95) {
  if (v.empty()) throw std::invalid_argument("bootstrap of empty sample");
  Rng rng(seed);
  std::vector<double> stats(resamples), draw(v.size());
  for (int b = 0; b < resamples; ++b) {
    for (auto& x : draw) x = v[rng() % v.size()];
    stats[b] = median(draw);
  }
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::clamp(q * (resamples - 1), 0.0, double(resamples - 1)) + 0.5);
    return stats[std::min<std::size_t>(idx, stats.size() - 1)];
  };
  return {at(tail), at(1.0 - tail)};
}

/// One-sided sign test p-value for "a > b" over paired samples; ties are dropped.
inline double sign_test_p(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("sign test needs paired samples");
  int wins = 0, n = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] == b[k]) continue;
    ++n;
    if (a[k] > b[k]) ++wins;
  }
  if (n == 0) return 1.0;
  // P(X >= wins) for X ~ Binomial(n, 1/2).
  double p = 0.0, c = 1.0;
  for (int k = 0; k <= n; ++k) {
    if (k > 0) c = c * (n - k + 1) / k;
    if (k >= wins) p += c;
  }
  return p / std::pow(2.0, n);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace dccda
