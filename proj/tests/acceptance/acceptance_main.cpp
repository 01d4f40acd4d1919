// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dccda/experiment.hpp"
#include "dccda/monte_carlo.hpp"

using namespace dccda;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Gate {
  int failures = 0;
  void line(int id, bool pass, const std::string& what) {
    std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, what.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool files_identical(const fs::path& a, const fs::path& b, int& compared) {
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    const auto other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || read_text(e.path().string()) != read_text(other.string())) return false;
    ++compared;
  }
  return compared > 0;
}

struct Comparison {
  double median_base = 0.0, median_kl = 0.0, p = 1.0, std_base = 0.0, std_kl = 0.0;
  long long max_steps = 0;
  bool pass() const { return median_kl >= median_base && p < 0.1 && std_kl < std_base && max_steps <= 200000; }
};

Comparison compare_methods(const SweepResult& res) {
  std::vector<double> base, kl;
  std::vector<MetricsLog> base_logs, kl_logs;
  Comparison c;
  for (std::size_t k = 0; k < res.rows.size(); ++k) {
    const auto& r = res.rows[k];
    c.max_steps = std::max(c.max_steps, r.env_steps);
    if (r.estimator == EstimatorKind::dccda) {
      base.push_back(r.final_eval_rate);
      base_logs.push_back(res.logs[k]);
    } else if (r.estimator == EstimatorKind::dccda_ob_kl) {
      kl.push_back(r.final_eval_rate);
      kl_logs.push_back(res.logs[k]);
    }
  }
  c.median_base = median(base);
  c.median_kl = median(kl);
  c.p = sign_test_p(kl, base);
  c.std_base = gradient_norm_std(base_logs);
  c.std_kl = gradient_norm_std(kl_logs);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance gate"};
  std::string out_dir = "acceptance_runs";
  std::string config_dir = DCCDA_CONFIG_DIR;
  app.add_option("--out", out_dir, "scratch directory for run outputs");
  app.add_option("--configs", config_dir, "directory holding bandit.json and traffic_junction.json");
  CLI11_PARSE(app, argc, argv);
  const fs::path out(out_dir);
  fs::remove_all(out);
  fs::create_directories(out);
  Gate gate;

  // 1-2: critic equivalence and variance ordering on one batch of 100 instances.
  BatchConfig bc;
  bc.count = 100;
  bc.seed = 0;
  auto t0 = Clock::now();
  const auto batch = make_batch(bc);
  const auto equivalence = verify_critic_equivalence(batch, 1e-9);
  const double equivalence_time = seconds_since(t0);
  gate.line(1, equivalence.pass && equivalence_time < 60.0,
            fmt("max |Q - E_m Q_i| = %.3g over %d instances (tol 1e-9), %.2f s (limit 60 s)", equivalence.max_violation,
                equivalence.instances, equivalence_time));

  const auto ordering = verify_variance_ordering(batch, 1e-9);
  const auto witnesses = verify_variance_witnesses(1e-6, 1e-12);
  gate.line(2, ordering.pass && witnesses.pass,
            fmt("min Var(DCCDA) - Var(CTDE) = %.3g (tol -1e-9); strict witness gap %.6g (> 1e-6); "
                "deterministic-message gap %.3g (<= 1e-12)",
                ordering.details["min_gap"].get<double>(), witnesses.details["strict_gap"].get<double>(),
                witnesses.details["equality_gap"].get<double>()));

  // 3: surrogate reward is unbiased.
  const std::vector<double> rates{0.0, 0.1, 0.25, 0.4};
  const auto l2a = verify_surrogate_reward(rates, 1.0, 0.0, 1e-12);
  const auto l2b = verify_surrogate_reward(rates, 1.0, -1.0, 1e-12);
  gate.line(3, l2a.pass && l2b.pass,
            fmt("max |E surrogate - r| = %.3g for rewards {0,1} and %.3g for {-1,1} (tol 1e-12)", l2a.max_violation,
                l2b.max_violation));

  // 4: surrogate critic mean and noisy variance ordering.
  {
    bool pass = true;
    double worst_mean = 0.0, worst_var = -INFINITY;
    for (double e : {0.1, 0.25, 0.4}) {
      BatchConfig nb;
      nb.count = 50;
      nb.seed = mix_seed(17, static_cast<std::uint64_t>(e * 100));
      nb.binary_rewards = true;
      nb.reward_min = 0.0;
      const auto r = verify_surrogate_critic(make_batch(nb), NoiseModel::with_rate(e), 1e-10, 1e-9);
      pass = pass && r.mean.pass && r.ordering.pass;
      worst_mean = std::max(worst_mean, r.mean.max_violation);
      worst_var = std::max(worst_var, r.ordering.max_violation);
    }
    gate.line(4, pass,
              fmt("max |E_eps Qhat - Q| = %.3g (tol 1e-10); max Var(CTDE) - Var(DCCDA-noise) = %.3g (tol 1e-9) over "
                  "3 x 50 instances",
                  worst_mean, worst_var));
  }

  // 5-6: optimal baseline.
  const auto base = verify_optimal_baseline(batch, 1e-9);
  gate.line(5, base.variance_reduction.pass && base.optimality.pass && base.identity.pass,
            fmt("max Var(OB) - Var(DCCDA) = %.3g; worst perturbed-baseline margin %.3g; identity error %.3g (tol 1e-9)",
                base.variance_reduction.max_violation, base.optimality.max_violation, base.identity.max_violation));
  gate.line(6, base.unbiasedness.pass,
            fmt("max ||E g_OB - E g_DCCDA||_inf = %.3g (tol 1e-9)", base.unbiasedness.max_violation));

  // 7: analytic gradients against central differences.
  const auto fd = verify_finite_differences(100, 0, 1e-5, 1e-6);
  gate.line(7, fd.pass, fmt("max relative error %.3g over %d configurations (tol 1e-6)", fd.max_violation, fd.instances));

  // 8: sampled variances against the oracle.
  {
    t0 = Clock::now();
    McConfig mc;
    mc.samples = 1'000'000;
    mc.seed = 8;
    const auto results = monte_carlo_batch(make_mc_batch(10, 8), mc);
    const double secs = seconds_since(t0);
    bool pass = secs < 300.0 && !results.empty();
    double worst_z = 0.0;
    for (const auto& r : results) {
      pass = pass && r.pass;
      worst_z = std::max(worst_z, std::abs(r.z));
    }
    nlohmann::json dump = results;
    write_text((out / "monte_carlo.json").string(), dump.dump(2) + "\n");
    gate.line(8, pass,
              fmt("%zu estimator/agent checks, max |z| = %.3f (limit 4), %.1f s (limit 300 s)", results.size(), worst_z,
                  secs));
  }

  // 9: training direction on the bandit and on Traffic-Junction-lite.
  SweepResult bandit_run;
  {
    t0 = Clock::now();
    auto bandit_cfg = load_experiment((fs::path(config_dir) / "bandit.json").string());
    bandit_cfg.out_dir = (out / "bandit").string();
    bandit_run = run_sweep(bandit_cfg);
    const auto b = compare_methods(bandit_run);
    auto tj_cfg = load_experiment((fs::path(config_dir) / "traffic_junction.json").string());
    tj_cfg.out_dir = (out / "traffic_junction").string();
    const auto t = compare_methods(run_sweep(tj_cfg));
    const double secs = seconds_since(t0);
    gate.line(9, b.pass() && t.pass() && secs < 1800.0,
              fmt("bandit: median %.4f vs %.4f, sign p = %.4f, gnorm std %.5g vs %.5g; traffic junction: median %.4f vs "
                  "%.4f, sign p = %.4f, gnorm std %.5g vs %.5g (OB-KL vs DCCDA); max %lld env steps per run; %.0f s",
                  b.median_kl, b.median_base, b.p, b.std_kl, b.std_base, t.median_kl, t.median_base, t.p, t.std_kl,
                  t.std_base, std::max(b.max_steps, t.max_steps), secs));
  }

  // 10: byte-identical CSVs on re-runs, including a different worker count.
  {
    int compared = 0;
    auto bandit_cfg = load_experiment((fs::path(config_dir) / "bandit.json").string());
    bandit_cfg.out_dir = (out / "bandit_rerun").string();
    run_sweep(bandit_cfg, 1);
    bool pass = files_identical(out / "bandit", out / "bandit_rerun", compared);
    VerifyConfig vc;
    vc.batch = 20;
    run_verification_suite(vc, out / "verify_a");
    run_verification_suite(vc, out / "verify_b");
    pass = pass && files_identical(out / "verify_a", out / "verify_b", compared);
    const auto ra = report(out / "bandit"), rb = report(out / "bandit_rerun");
    pass = pass && ra.to_csv() == rb.to_csv();
    gate.line(10, pass, fmt("%d CSV files compared byte for byte across re-runs", compared));
  }

  std::printf("%s: %d of 10 criteria failed\n", gate.failures ? "FAIL" : "PASS", gate.failures);
  return gate.failures ? 1 : 0;
}
