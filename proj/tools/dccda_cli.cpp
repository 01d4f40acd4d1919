#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dccda/experiment.hpp"

using namespace dccda;

namespace {

int print_report(const fs::path& dir, std::uint64_t bootstrap_seed, int begin, int end, bool population) {
  const auto rep = report(dir, bootstrap_seed, begin, end, population);
  write_text((dir / "report.csv").string(), rep.to_csv());
  std::cout << rep.to_table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Communicating-critic policy gradients: exact checks, training and reporting"};
  app.require_subcommand(1);

  VerifyConfig vc;
  std::string verify_out;
  auto* verify = app.add_subcommand("verify", "run the exact-oracle verification suite");
  verify->add_option("--batch", vc.batch, "random instances per batch")->capture_default_str();
  verify->add_option("--seed", vc.seed, "batch seed")->capture_default_str();
  verify->add_option("--tol", vc.tol, "tolerance of the exact checks")->capture_default_str();
  verify->add_option("--noise-batch", vc.noise_batch, "binary-reward instances per noise rate")->capture_default_str();
  verify->add_option("--fd-configs", vc.fd_configs, "finite-difference configurations")->capture_default_str();
  verify->add_flag("--lossy", vc.lossy_channel, "use an action-only channel for the critic-equivalence check");
  verify->add_option("--out", verify_out, "directory for verification.csv and verification.json");

  std::string train_config, train_out;
  std::optional<std::uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "train every configured estimator with the config's alpha and beta");
  train_cmd->add_option("--config", train_config, "experiment JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "run directory (overrides out_dir)");
  train_cmd->add_option("--seed", train_seed, "single seed (overrides seeds)");

  std::string sweep_config, sweep_out;
  int workers = worker_count();
  auto* sweep = app.add_subcommand("sweep", "run the alpha x beta x seed grid");
  sweep->add_option("--config", sweep_config, "experiment JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_out, "run directory (overrides out_dir)");
  sweep->add_option("--workers", workers, "parallel runs (default from DCCDA_WORKERS)");

  std::string report_dir;
  std::uint64_t bootstrap_seed = 0;
  int window_begin = 0, window_end = std::numeric_limits<int>::max();
  bool population = false;
  auto* rep = app.add_subcommand("report", "summarize a run directory");
  rep->add_option("dir", report_dir, "run directory containing sweep.csv")->required();
  rep->add_option("--bootstrap-seed", bootstrap_seed)->capture_default_str();
  rep->add_option("--window-begin", window_begin, "first iteration of the gradient-norm window");
  rep->add_option("--window-end", window_end, "one past the last iteration of the window");
  rep->add_flag("--population-std", population, "divide by n instead of n - 1");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) {
      std::optional<fs::path> out;
      if (!verify_out.empty()) out = verify_out;
      const auto res = run_verification_suite(vc, out);
      for (const auto& r : res.reports) {
        std::printf("%-4s %-26s instances=%-4d max_violation=%.3g tol=%.3g\n", r.pass ? "PASS" : "FAIL", r.claim.c_str(),
                    r.instances, r.max_violation, r.tolerance);
        if (!r.pass) std::printf("     witness: %s\n", r.witness.dump().c_str());
      }
      return res.exit_code;
    }
    if (*train_cmd || *sweep) {
      auto cfg = load_experiment(*train_cmd ? train_config : sweep_config);
      const auto& out = *train_cmd ? train_out : sweep_out;
      if (!out.empty()) cfg.out_dir = out;
      if (*train_cmd) {
        cfg.alphas.clear();
        cfg.betas.clear();
        if (train_seed) cfg.seeds = {*train_seed};
      }
      run_sweep(cfg, workers);
      return print_report(cfg.out_dir, 0, 0, std::numeric_limits<int>::max(), false);
    }
    return print_report(report_dir, bootstrap_seed, window_begin, window_end, population);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
