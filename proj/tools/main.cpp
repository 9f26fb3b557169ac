#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "curaloop/error.hpp"
#include "curaloop/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;

curaloop::ExperimentConfig load(const std::string& path, unsigned workers) {
  curaloop::ExperimentConfig cfg = curaloop::load_experiment(path);
  if (workers > 0) cfg.workers = workers;
  return cfg;
}

std::vector<curaloop::PoolSize> parse_pools(const std::vector<std::string>& items) {
  std::vector<curaloop::PoolSize> pools;
  for (const std::string& s : items) {
    if (s == "inf") {
      pools.push_back(curaloop::PoolSize::infinite());
      continue;
    }
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || k < 1) curaloop::fail(curaloop::ErrorCode::ValidationError, "--K: bad pool size '" + s + "'");
    pools.push_back(curaloop::PoolSize::finite(k));
  }
  return pools;
}

void print_check(const curaloop::VerifyCheck& c) {
  std::cout << curaloop::to_string(c.status) << (c.heuristic ? "*" : "") << "  " << c.id;
  if (c.status != curaloop::CheckStatus::Skipped) {
    std::cout << "  measured=" << curaloop::format_number(c.measured) << " bound=" << curaloop::format_number(c.bound);
  }
  if (!c.note.empty()) std::cout << "  (" << c.note << ")";
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curaloop: curated retraining dynamics lab"};
  app.require_subcommand(1);
  unsigned workers = 0;
  app.add_option("-j,--workers", workers, "Worker threads (overrides the config)");

  std::string config_path;
  std::string out_dir;

  CLI::App* run = app.add_subcommand("run", "Run the configured trajectory and write CSV/JSON reports");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("-o,--out", out_dir, "Output directory")->required();

  CLI::App* verify = app.add_subcommand("verify", "Check every applicable invariant on the config");
  verify->add_option("config", config_path, "Experiment config (JSON)")->required();
  verify->add_option("-o,--out", out_dir, "Also write verify.json here");

  std::vector<double> alphas;
  std::vector<std::string> pools;
  std::vector<double> etas;
  CLI::App* sweep = app.add_subcommand("sweep", "Sweep alpha / K / eta and write sweep.csv");
  sweep->add_option("config", config_path, "Template config (JSON)")->required();
  sweep->add_option("-o,--out", out_dir, "Output directory")->required();
  sweep->add_option("--alpha", alphas, "Alpha values")->delimiter(',');
  sweep->add_option("--K", pools, "Pool sizes (integers or inf)")->delimiter(',');
  sweep->add_option("--eta", etas, "Perturbation sizes")->delimiter(',');

  double tv_tol = 0.01;
  CLI::App* mc = app.add_subcommand("mc-check", "Compare the sampled loop with the population loop");
  mc->add_option("config", config_path, "Experiment config with a montecarlo block")->required();
  mc->add_option("-o,--out", out_dir, "Output directory");
  mc->add_option("--tv-tol", tv_tol, "Per-step TV tolerance")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    const curaloop::ExperimentConfig cfg = load(config_path, workers);
    if (run->parsed()) {
      const curaloop::RunOutputs out = curaloop::run_experiment(cfg, out_dir);
      std::cout << "wrote " << out.trajectory_csv.string() << '\n' << "wrote " << out.summary_json.string() << '\n';
      if (out.stability_csv) std::cout << "wrote " << out.stability_csv->string() << '\n';
      return kExitOk;
    }
    if (verify->parsed()) {
      const curaloop::VerifyReport report = curaloop::verify_theorems(cfg);
      for (const auto& c : report.checks) print_check(c);
      std::cout << "superalignment: " << report.superalignment << '\n'
                << "overall: " << (report.overall ? "pass" : "fail") << '\n';
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        curaloop::write_file_atomic(std::filesystem::path(out_dir) / "verify.json", curaloop::verify_report_json(report));
      }
      return report.overall ? kExitOk : kExitCheckFailed;
    }
    if (sweep->parsed()) {
      curaloop::SweepGrid grid{alphas, parse_pools(pools), etas};
      const auto rows = curaloop::sweep(cfg, grid, std::filesystem::path(out_dir));
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.status == "ok" ? 0 : 1;
      std::cout << rows.size() << " points, " << failed << " not ok; wrote "
                << (std::filesystem::path(out_dir) / "sweep.csv").string() << '\n';
      return kExitOk;
    }
    if (mc->parsed()) {
      std::optional<std::filesystem::path> dir;
      if (!out_dir.empty()) dir = out_dir;
      const curaloop::McCheckResult r = curaloop::mc_check(cfg, tv_tol, dir);
      std::cout << "chi-square " << curaloop::format_number(r.round_fit.statistic) << " (dof " << r.round_fit.dof
                << ", 1% critical " << curaloop::format_number(r.round_fit.critical_value) << ")"
                << (r.round_fit.reject_at_1pct ? " rejected" : " not rejected") << '\n';
      for (std::size_t t = 0; t < r.loop_tv.size(); ++t) {
        std::cout << "t=" << t << " tv=" << curaloop::format_number(r.loop_tv[t]) << '\n';
      }
      std::cout << "overall: " << (r.passed ? "pass" : "fail") << '\n';
      return r.passed ? kExitOk : kExitCheckFailed;
    }
  } catch (const curaloop::Error& e) {
    std::cerr << "curaloop: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "curaloop: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
