#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "dccda/coordination_bandit.hpp"
#include "dccda/metrics.hpp"
#include "dccda/parallel.hpp"
#include "dccda/traffic_junction.hpp"
#include "dccda/trainer.hpp"
#include "dccda/verification.hpp"

namespace dccda {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- verification

struct VerifyConfig {
  int batch = 100;
  std::uint64_t seed = 0;
  double tol = 1e-9;
  int noise_batch = 50;
  int fd_configs = 100;
  /// Replace the channel with one that only forwards the sender's action (expected to fail).
  bool lossy_channel = false;
};

struct SuiteResult {
  std::vector<VerificationReport> reports;
  int exit_code = 0;

  std::string to_csv() const {
    std::ostringstream out;
    out << "claim,instances,max_violation,tolerance,pass\n";
    for (const auto& r : reports)
      out << r.claim << ',' << r.instances << ',' << format_double(r.max_violation) << ','
          << format_double(r.tolerance) << ',' << (r.pass ? 1 : 0) << '\n';
    return out.str();
  }
};

/// Strict-gap and equality witnesses for the CTDE versus DCCDA variance ordering.
inline VerificationReport verify_variance_witnesses(double strict_gap = 1e-6, double equality_tol = 1e-12) {
  VerificationReport r;
  r.claim = "variance_witnesses";
  r.tolerance = 0.0;
  const auto noisy = variance_profile(make_noisy_message_witness());
  const auto exact = variance_profile(make_deterministic_message_witness());
  double best_gap = -INFINITY, worst_equality = 0.0;
  for (std::size_t i = 0; i < noisy.ctde.size(); ++i) best_gap = std::max(best_gap, noisy.dccda[i] - noisy.ctde[i]);
  for (std::size_t i = 0; i < exact.ctde.size(); ++i)
    worst_equality = std::max(worst_equality, std::abs(exact.dccda[i] - exact.ctde[i]));
  r.instances = 2;
  r.observe(strict_gap - best_gap, {{"instance", "noisy-message-witness"}, {"gap", best_gap}});
  r.observe(worst_equality - equality_tol, {{"instance", "deterministic-message-witness"}, {"gap", worst_equality}});
  r.details["strict_gap"] = best_gap;
  r.details["equality_gap"] = worst_equality;
  r.finish();
  return r;
}

inline SuiteResult run_verification_suite(const VerifyConfig& c, const std::optional<fs::path>& out_dir = {}) {
  if (c.batch < 1 || c.noise_batch < 1) throw std::invalid_argument("verification batch must not be empty");
  if (!(c.tol > 0.0)) throw std::invalid_argument("tolerance must be > 0");
  BatchConfig bc;
  bc.count = c.batch;
  bc.seed = c.seed;
  const auto batch = make_batch(bc);
  SuiteResult res;
  auto add = [&](VerificationReport r, const std::string& suffix = "") {
    r.claim += suffix;
    res.reports.push_back(std::move(r));
  };

  if (c.lossy_channel) {
    auto lossy = batch;
    for (auto& inst : lossy) inst.channel = make_lossy_channel();
    add(verify_critic_equivalence(lossy, c.tol), "-lossy");
  } else {
    add(verify_critic_equivalence(batch, c.tol));
  }
  add(verify_variance_ordering(batch, c.tol));
  add(verify_variance_witnesses());
  const std::vector<double> rates{0.0, 0.1, 0.25, 0.4};
  add(verify_surrogate_reward(rates, 1.0, 0.0), "-r01");
  add(verify_surrogate_reward(rates, 1.0, -1.0), "-r11");
  BatchConfig nb = bc;
  nb.count = c.noise_batch;
  nb.seed = mix_seed(c.seed, 0x6e6f697365ULL);
  nb.binary_rewards = true;
  nb.reward_min = 0.0;
  const auto binary = make_batch(nb);
  for (double e : {0.1, 0.25, 0.4}) {
    auto nr = verify_surrogate_critic(binary, NoiseModel::with_rate(e), 1e-10, c.tol);
    char tag[16];
    std::snprintf(tag, sizeof tag, "-e%g", e);
    add(nr.mean, tag);
    add(nr.ordering, tag);
  }
  auto br = verify_optimal_baseline(batch, c.tol);
  add(br.variance_reduction);
  add(br.optimality);
  add(br.identity);
  add(br.unbiasedness);
  add(verify_finite_differences(c.fd_configs, c.seed, 1e-5, 1e-6));

  for (const auto& r : res.reports)
    if (!r.pass) res.exit_code = 1;
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_text((*out_dir / "verification.csv").string(), res.to_csv());
    write_text((*out_dir / "verification.json").string(), nlohmann::json(res.reports).dump(2) + "\n");
  }
  return res;
}

// ---------------------------------------------------------------- training runs

/**
 * @brief Environment description:
 *   {"type": "coordination_bandit"}
 *   {"type": "traffic_junction", <TrafficJunctionConfig fields>}
 *   {"type": "tabular", "model": {...}, "success_threshold": 0}
 */
inline TrainResult run_training(const nlohmann::json& env, const TrainConfig& cfg) {
  const auto type = env.value("type", std::string("coordination_bandit"));
  Rng rng(mix_seed(cfg.seed, 0x747261696eULL));
  if (type == "coordination_bandit") {
    const auto model = make_coordination_bandit();
    TabularSimulator sim(model);
    return train(sim, cfg, rng);
  }
  if (type == "traffic_junction") {
    TrafficJunctionLite tj(env.get<TrafficJunctionConfig>());
    return train(tj, cfg, rng);
  }
  if (type == "tabular") {
    const auto model = env.at("model").get<TabularDecPomdp>();
    TabularSimulator sim(model, env.value("success_threshold", 0.0));
    return train(sim, cfg, rng);
  }
  throw std::invalid_argument("unknown environment type '" + type + "'");
}

struct ExperimentConfig {
  nlohmann::json environment = {{"type", "coordination_bandit"}};
  TrainConfig train;
  std::vector<EstimatorKind> estimators;  ///< empty: train.estimator only
  std::vector<double> alphas;             ///< empty: train.hp.alpha only
  std::vector<double> betas;              ///< empty: train.hp.beta only
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "runs";

  void check() const {
    train.check();
    if (seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
    for (double a : alphas)
      if (!(a > 0.0)) throw std::invalid_argument("alpha grid values must be > 0");
    for (double b : betas)
      if (!(b >= 0.0)) throw std::invalid_argument("beta grid values must be >= 0");
  }
};

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::set<std::string> known = {"environment", "train", "estimators", "alphas",
                                              "betas",       "seeds", "out_dir"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument("unknown experiment config key '" + k + "'");
  c = ExperimentConfig{};
  if (j.contains("environment")) c.environment = j["environment"];
  if (j.contains("train")) c.train = j["train"].get<TrainConfig>();
  if (j.contains("estimators"))
    for (const auto& e : j["estimators"]) c.estimators.push_back(estimator_from_string(e.get<std::string>()));
  if (j.contains("alphas")) {
    c.alphas = j["alphas"].get<std::vector<double>>();
    if (c.alphas.empty()) throw std::invalid_argument("alpha grid must not be empty");
  }
  if (j.contains("betas")) {
    c.betas = j["betas"].get<std::vector<double>>();
    if (c.betas.empty()) throw std::invalid_argument("beta grid must not be empty");
  }
  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    c.seeds.clear();
    if (s.is_number_integer()) {
      const int n = s.get<int>();
      if (n < 1) throw std::invalid_argument("seeds must be >= 1");
      for (int k = 0; k < n; ++k) c.seeds.push_back(static_cast<std::uint64_t>(k));
    } else {
      c.seeds = s.get<std::vector<std::uint64_t>>();
    }
  }
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  c.check();
}

inline ExperimentConfig load_experiment(const std::string& path) {
  return nlohmann::json::parse(read_text(path)).get<ExperimentConfig>();
}

struct SweepRow {
  EstimatorKind estimator = EstimatorKind::dccda;
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double final_eval_rate = 0.0;
  double mean_grad_norm = 0.0;
  double grad_norm_std = 0.0;  ///< across the cell's seeds; NaN with a single seed
  long long env_steps = 0;
  std::string log;  ///< metrics CSV path relative to the run directory
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<MetricsLog> logs;  ///< parallel to rows

  std::string to_csv() const {
    std::ostringstream out;
    out << "estimator,alpha,beta,seed,final_eval_rate,mean_grad_norm,grad_norm_std,env_steps,log\n";
    for (const auto& r : rows)
      out << to_string(r.estimator) << ',' << format_double(r.alpha) << ',' << format_double(r.beta) << ',' << r.seed
          << ',' << format_double(r.final_eval_rate) << ',' << format_double(r.mean_grad_norm) << ','
          << format_double(r.grad_norm_std) << ',' << r.env_steps << ',' << r.log << '\n';
    return out.str();
  }

  static SweepResult from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("estimator,alpha,beta,seed", 0) != 0)
      throw std::invalid_argument("not a sweep csv");
    SweepResult out;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = MetricsLog::split(line);
      if (f.size() != 9) throw std::invalid_argument("malformed sweep csv row");
      SweepRow r;
      r.estimator = estimator_from_string(f[0]);
      r.alpha = parse_double(f[1]);
      r.beta = parse_double(f[2]);
      r.seed = std::stoull(f[3]);
      r.final_eval_rate = parse_double(f[4]);
      r.mean_grad_norm = parse_double(f[5]);
      r.grad_norm_std = parse_double(f[6]);
      r.env_steps = std::stoll(f[7]);
      r.log = f[8];
      out.rows.push_back(std::move(r));
    }
    return out;
  }
};

inline std::string cell_name(EstimatorKind k, double alpha, double beta) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s_alpha%g_beta%g", to_string(k).c_str(), alpha, beta);
  return buf;
}

/**
 * @brief Runs estimators x alphas x betas x seeds. Every cell writes its
 * per-seed metrics CSVs to its own subdirectory; `sweep.csv` lists one row per
 * run in grid order, so the output does not depend on the worker count.
 */
inline SweepResult run_sweep(const ExperimentConfig& c, int workers = worker_count()) {
  c.check();
  const auto estimators = c.estimators.empty() ? std::vector<EstimatorKind>{c.train.estimator} : c.estimators;
  const auto alphas = c.alphas.empty() ? std::vector<double>{c.train.hp.alpha} : c.alphas;
  const auto betas = c.betas.empty() ? std::vector<double>{c.train.hp.beta} : c.betas;
  SweepResult res;
  for (auto k : estimators)
    for (double a : alphas)
      for (double b : betas)
        for (auto s : c.seeds) {
          SweepRow r;
          r.estimator = k;
          r.alpha = a;
          r.beta = b;
          r.seed = s;
          r.log = cell_name(k, a, b) + "/seed_" + std::to_string(s) + ".csv";
          res.rows.push_back(r);
        }
  res.logs.resize(res.rows.size());
  const fs::path root(c.out_dir);
  parallel_for(
      res.rows.size(),
      [&](std::size_t idx) {
        auto& r = res.rows[idx];
        TrainConfig tc = c.train;
        tc.estimator = r.estimator;
        tc.hp.alpha = r.alpha;
        tc.hp.beta = r.beta;
        tc.seed = r.seed;
        auto out = run_training(c.environment, tc);
        r.final_eval_rate = out.final_eval_rate;
        r.env_steps = out.env_steps + out.eval_steps;
        r.mean_grad_norm = out.log.empty() ? 0.0 : out.log.mean_grad_norm();
        const fs::path file = root / r.log;
        fs::create_directories(file.parent_path());
        write_text(file.string(), out.log.to_csv());
        res.logs[idx] = std::move(out.log);
      },
      workers);

  // Per-cell gradient-norm std across seeds.
  const std::size_t per_cell = c.seeds.size();
  for (std::size_t first = 0; first < res.rows.size(); first += per_cell) {
    double sd = std::numeric_limits<double>::quiet_NaN();
    if (per_cell >= 2) {
      std::vector<double> means;
      for (std::size_t k = first; k < first + per_cell; ++k) means.push_back(res.rows[k].mean_grad_norm);
      sd = standard_deviation(means);
    }
    for (std::size_t k = first; k < first + per_cell; ++k) res.rows[k].grad_norm_std = sd;
  }
  fs::create_directories(root);
  write_text((root / "sweep.csv").string(), res.to_csv());
  return res;
}

// ---------------------------------------------------------------- reporting

struct MethodSummary {
  EstimatorKind estimator = EstimatorKind::dccda;
  double alpha = 0.0;
  double beta = 0.0;
  int seeds = 0;
  double median_rate = 0.0;
  Interval ci;
  double grad_norm_std = 0.0;  ///< NaN with a single seed
  std::vector<double> rates;   ///< in seed order
};

struct Report {
  std::vector<MethodSummary> methods;

  std::string to_csv() const {
    std::ostringstream out;
    out << "estimator,alpha,beta,seeds,median_eval_rate,ci_low,ci_high,grad_norm_std\n";
    for (const auto& m : methods)
      out << to_string(m.estimator) << ',' << format_double(m.alpha) << ',' << format_double(m.beta) << ','
          << m.seeds << ',' << format_double(m.median_rate) << ',' << format_double(m.ci.lo) << ','
          << format_double(m.ci.hi) << ',' << format_double(m.grad_norm_std) << '\n';
    return out.str();
  }

  std::string to_table() const {
    std::ostringstream out;
    char line[200];
    std::snprintf(line, sizeof line, "%-12s %8s %8s %5s %8s %19s %12s\n", "estimator", "alpha", "beta", "seeds",
                  "median", "95% CI", "gnorm_std");
    out << line;
    for (const auto& m : methods) {
      std::snprintf(line, sizeof line, "%-12s %8g %8g %5d %8.4f [%8.4f, %8.4f] %12.6g\n", to_string(m.estimator).c_str(),
                    m.alpha, m.beta, m.seeds, m.median_rate, m.ci.lo, m.ci.hi, m.grad_norm_std);
      out << line;
    }
    return out.str();
  }
};

/**
 * @brief Summarizes a run directory: per (estimator, alpha, beta) the median
 * final eval rate over seeds, a seeded 10,000-resample bootstrap CI and the
 * gradient-norm std recomputed from the per-seed metrics logs over
 * [window_begin, window_end).
 */
inline Report report(const fs::path& dir, std::uint64_t bootstrap_seed = 0, int window_begin = 0,
                     int window_end = std::numeric_limits<int>::max(), bool population_std = false) {
  const fs::path index = dir / "sweep.csv";
  if (!fs::exists(index)) throw std::runtime_error("missing " + index.string());
  const auto sweep = SweepResult::from_csv(read_text(index.string()));
  if (sweep.rows.empty()) throw std::runtime_error("no completed runs in " + dir.string());
  Report rep;
  std::map<std::tuple<int, double, double>, std::size_t> slot;
  std::vector<std::vector<MetricsLog>> logs;
  for (const auto& r : sweep.rows) {
    const auto key = std::make_tuple(static_cast<int>(r.estimator), r.alpha, r.beta);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, rep.methods.size()).first;
      MethodSummary m;
      m.estimator = r.estimator;
      m.alpha = r.alpha;
      m.beta = r.beta;
      rep.methods.push_back(m);
      logs.emplace_back();
    }
    const fs::path log = dir / r.log;
    if (!fs::exists(log)) throw std::runtime_error("missing metrics log " + log.string());
    logs[it->second].push_back(MetricsLog::from_csv(read_text(log.string())));
    rep.methods[it->second].rates.push_back(r.final_eval_rate);
  }
  for (std::size_t k = 0; k < rep.methods.size(); ++k) {
    auto& m = rep.methods[k];
    m.seeds = static_cast<int>(m.rates.size());
    m.median_rate = median(m.rates);
    m.ci = bootstrap_median_ci(m.rates, 10000, bootstrap_seed);
    m.grad_norm_std = m.seeds >= 2 ? gradient_norm_std(logs[k], window_begin, window_end, !population_std)
                                   : std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

}  // namespace dccda
