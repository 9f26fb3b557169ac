#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "curaloop/error.hpp"
#include "curaloop/experiment.hpp"
#include "experiment_detail.hpp"
#include "curaloop/fixed_points.hpp"
#include "curaloop/montecarlo.hpp"
#include "curaloop/parallel.hpp"
#include "curaloop/rng.hpp"

namespace curaloop {

using ojson = nlohmann::ordered_json;

std::string format_number(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

namespace detail {

ojson metric_json(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  return value;
}

ojson metric_json(const MetricValue& value) {
  if (value.is_infinite()) return "inf";
  return value.value();
}

ojson assumption_json(const AssumptionReport& r) {
  ojson j;
  j["holds"] = r.holds;
  j["margin"] = metric_json(r.margin);
  j["detail"] = r.detail;
  return j;
}

LimitOutcome compute_limit(const ExperimentConfig& cfg, const PreferenceModel& model, const RegimeConfig& rc) {
  LimitOutcome out;
  const Density p0 = cfg.initial_density();
  try {
    switch (rc.regime()) {
      case Regime::PureFinite:
      case Regime::PureInfinite:
        out.limit = pure_limit(p0, model);
        break;
      case Regime::MixedFinite:
        if (!model.noise().is_stationary()) {
          out.note = "UnsupportedNoise: the finite-pool kernel needs the noise law";
        } else if (!is_contractive(rc.pool().k(), rc.alpha())) {
          out.note = "NotContractive: alpha <= (K-1)/K";
        } else {
          out.limit = fixed_point_regime_iii(rc, model, 1e-12);
        }
        break;
      case Regime::MixedInfinite:
        out.limit = fixed_point_regime_iv(model, rc.reference(), rc.alpha(), 1e-12);
        break;
    }
  } catch (const Error& e) {
    out.note = e.what();
  }
  return out;
}

}  // namespace detail

std::string trajectory_csv(const std::vector<TrajectoryRecord>& records) {
  std::string out = "t,exp_reward,var_reward,h_t,mass_on_A,step_tv,tv_to_limit,kl_star_to_pt,hilbert_to_limit\n";
  const auto cell = [&out](const std::optional<MetricValue>& m) {
    out += ',';
    if (m) out += m->is_infinite() ? std::string("inf") : format_number(m->value());
  };
  for (const TrajectoryRecord& r : records) {
    out += std::to_string(r.t);
    out += ',' + format_number(r.exp_reward);
    out += ',' + format_number(r.var_reward);
    out += ',' + format_number(r.h_t);
    out += ',' + format_number(r.mass_on_A);
    cell(r.step_tv);
    cell(r.tv_to_limit);
    cell(r.kl_star_to_pt);
    cell(r.hilbert_to_limit);
    out += '\n';
  }
  return out;
}

namespace {

ojson pool_json(const PoolSize& pool) {
  if (pool.is_infinite()) return "inf";
  return pool.k();
}

ojson limit_json(const FixedPointResult& fp) {
  ojson j;
  j["kind"] = to_string(fp.kind);
  j["density"] = fp.density.values();
  if (fp.c_star) j["c_star"] = *fp.c_star;
  if (fp.w_star) j["w_star"] = *fp.w_star;
  j["residual"] = fp.residual;
  j["iterations"] = fp.iterations;
  return j;
}

// The perturbation actually used for a sweep point at a given eta.
std::optional<PerturbationSpec> spec_at_eta(const ExperimentConfig& cfg, std::optional<double> eta) {
  if (!eta) return cfg.perturbation_spec();
  ExperimentConfig copy = cfg;
  if (!copy.perturbation) copy.perturbation = PerturbationBlock{};
  PerturbationBlock& block = *copy.perturbation;
  if (block.mode == PerturbationBlock::Mode::Explicit) {
    const double norm = block.eta;
    if (norm > 0.0) {
      for (double& d : block.delta_r) d *= *eta / norm;
    }
  }
  block.eta = *eta;
  return copy.perturbation_spec();
}

}  // namespace

RunOutputs run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const PreferenceModel model = cfg.model();
  const Density p0 = cfg.initial_density();
  const RegimeConfig rc = cfg.regime_config();
  const std::optional<Density> ref = cfg.reference_density();

  ojson summary;
  summary["schema_version"] = kSchemaVersion;
  summary["name"] = cfg.name;
  summary["regime"] = to_string(rc.regime());
  summary["alpha"] = cfg.alpha;
  summary["K"] = pool_json(cfg.pool);
  summary["kernel"] = cfg.kernel.kind == KernelChoice::Kind::Exact ? "exact" : "mc";
  summary["seed"] = cfg.seed;
  summary["q_star"] = model.q_star();
  summary["maximizer_set"] = model.maximizer_set();

  ojson assumptions;
  assumptions["A1"] = detail::assumption_json(check_assumption_A1(model, p0));
  if (ref) {
    assumptions["A2"] = detail::assumption_json(check_assumption_A2(p0, *ref));
    if (cfg.alpha > 0.0) assumptions["A3"] = detail::assumption_json(check_assumption_A3(model, *ref, cfg.alpha));
  }
  if (rc.regime() == Regime::MixedFinite) {
    ojson contraction;
    contraction["rho"] = contraction_rate(cfg.pool.k(), cfg.alpha);
    contraction["contractive"] = is_contractive(cfg.pool.k(), cfg.alpha);
    assumptions["contraction"] = contraction;
  }
  summary["assumptions"] = assumptions;

  const detail::LimitOutcome limit = detail::compute_limit(cfg, model, rc);
  if (limit.limit) {
    summary["limit"] = limit_json(*limit.limit);
  } else {
    summary["limit"] = nullptr;
    summary["limit_note"] = limit.note;
  }

  std::optional<Density> finite_limit;
  if (rc.regime() == Regime::MixedFinite && limit.limit) finite_limit = limit.limit->density;
  const std::vector<TrajectoryRecord> records = run_trajectory(p0, rc, model, cfg.t_max, cfg.stop_tol, finite_limit);
  const TrajectoryRecord& last = records.back();
  ojson traj;
  traj["records"] = records.size();
  traj["iterations"] = records.size() - 1;
  traj["converged"] = last.step_tv && !last.step_tv->is_infinite() && last.step_tv->value() < cfg.stop_tol;
  traj["final_exp_reward"] = last.exp_reward;
  traj["final_var_reward"] = last.var_reward;
  traj["final_mass_on_A"] = last.mass_on_A;
  traj["final_step_tv"] = last.step_tv ? detail::metric_json(*last.step_tv) : ojson(nullptr);
  traj["final_tv_to_limit"] = last.tv_to_limit ? detail::metric_json(*last.tv_to_limit) : ojson(nullptr);
  traj["final_density"] = last.density.values();
  summary["trajectory"] = traj;

  std::filesystem::create_directories(out_dir);
  RunOutputs outputs;
  outputs.trajectory_csv = out_dir / "trajectory.csv";
  outputs.summary_json = out_dir / "summary.json";

  std::string stability_text;
  if (const auto spec = cfg.perturbation_spec()) {
    const PerturbedPairResult pair = run_perturbed_pair(p0, rc, model, *spec, cfg.t_max);
    stability_text = "t,d_tv_pair\n";
    for (std::size_t t = 0; t < pair.d_tv.size(); ++t) {
      stability_text += std::to_string(t) + "," + format_number(pair.d_tv[t]) + "\n";
    }
    stability_text += "inf," + format_number(pair.d_tv_limit) + "\n";
    ojson stab;
    switch (cfg.perturbation->mode) {
      case PerturbationBlock::Mode::Adversarial: stab["mode"] = "adversarial"; break;
      case PerturbationBlock::Mode::Random: stab["mode"] = "random"; break;
      case PerturbationBlock::Mode::Explicit: stab["mode"] = "explicit"; break;
    }
    stab["eta"] = spec->eta();
    stab["delta_r"] = spec->delta_r();
    stab["d_tv_limit"] = pair.d_tv_limit;
    stab["sup_d_tv"] = pair.sup_d_tv;
    if (rc.regime() == Regime::MixedFinite && is_contractive(cfg.pool.k(), cfg.alpha)) {
      const double bound = stability_bound_regime_iii(cfg.pool.k(), cfg.alpha, spec->eta());
      stab["bound"] = bound;
      stab["within_bound"] = pair.sup_d_tv <= bound + 1e-9;
    }
    summary["stability"] = stab;
    outputs.stability_csv = out_dir / "stability.csv";
  }

  write_file_atomic(outputs.trajectory_csv, trajectory_csv(records));
  write_file_atomic(outputs.summary_json, summary.dump(2) + "\n");
  if (outputs.stability_csv) write_file_atomic(*outputs.stability_csv, stability_text);
  return outputs;
}

namespace {

SweepRow run_point(ExperimentConfig cfg, std::size_t index, double alpha, PoolSize pool, std::optional<double> eta) {
  SweepRow row;
  row.point = index;
  row.alpha = alpha;
  row.pool = pool;
  row.eta = eta;
  cfg.alpha = alpha;
  cfg.pool = pool;
  cfg.workers = 1;
  try {
    if (alpha > 0.0 && !cfg.p_ref) fail(ErrorCode::InvalidArgument, "p_ref required when alpha > 0");
    if (pool.is_infinite() && cfg.kernel.kind == KernelChoice::Kind::MonteCarlo) cfg.kernel = KernelChoice::exact();
    const PreferenceModel model = cfg.model();
    const RegimeConfig rc = cfg.regime_config();
    if (rc.regime() == Regime::MixedFinite && !is_contractive(pool.k(), alpha)) {
      fail(ErrorCode::NotContractive, "alpha <= (K-1)/K");
    }
    const detail::LimitOutcome limit = detail::compute_limit(cfg, model, rc);
    std::optional<Density> finite_limit;
    if (rc.regime() == Regime::MixedFinite && limit.limit) finite_limit = limit.limit->density;
    const auto records = run_trajectory(cfg.initial_density(), rc, model, cfg.t_max, cfg.stop_tol, finite_limit);
    const TrajectoryRecord& last = records.back();
    row.iterations = records.size() - 1;
    row.converged = last.step_tv && !last.step_tv->is_infinite() && last.step_tv->value() < cfg.stop_tol;
    row.final_exp_reward = last.exp_reward;
    row.final_step_tv = last.step_tv ? last.step_tv->value() : 0.0;
    row.tv_to_limit = last.tv_to_limit;
    if (eta || cfg.perturbation) {
      if (const auto spec = spec_at_eta(cfg, eta)) {
        row.stability_sup = run_perturbed_pair(cfg.initial_density(), rc, model, *spec, cfg.t_max).sup_d_tv;
      }
    }
    row.status = "ok";
  } catch (const Error& e) {
    row.status = std::string(to_string(e.code()));
  }
  return row;
}

}  // namespace

std::vector<SweepRow> sweep(const ExperimentConfig& base, const SweepGrid& grid,
                            const std::optional<std::filesystem::path>& out_dir) {
  const std::vector<double> alphas = grid.alphas.empty() ? std::vector<double>{base.alpha} : grid.alphas;
  const std::vector<PoolSize> pools = grid.pools.empty() ? std::vector<PoolSize>{base.pool} : grid.pools;
  std::vector<std::optional<double>> etas;
  for (double e : grid.etas) etas.emplace_back(e);
  if (etas.empty()) etas.emplace_back(std::nullopt);

  struct Point {
    double alpha;
    PoolSize pool;
    std::optional<double> eta;
  };
  std::vector<Point> points;
  for (double a : alphas) {
    for (const PoolSize& k : pools) {
      for (const auto& e : etas) points.push_back({a, k, e});
    }
  }
  if (points.empty()) fail(ErrorCode::InvalidArgument, "empty sweep grid");

  std::vector<SweepRow> rows(points.size());
  parallel_for(points.size(), base.workers, [&](std::size_t i) {
    rows[i] = run_point(base, i, points[i].alpha, points[i].pool, points[i].eta);
  });
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_file_atomic(*out_dir / "sweep.csv", sweep_csv(rows));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "point,alpha,K,eta,status,converged,iterations,final_exp_reward,final_step_tv,tv_to_limit,stability_sup\n";
  for (const SweepRow& r : rows) {
    out += std::to_string(r.point) + ',' + format_number(r.alpha) + ',' + r.pool.to_string() + ',';
    if (r.eta) out += format_number(*r.eta);
    out += ',' + r.status + ',';
    if (r.status == "ok") {
      out += std::string(r.converged ? "true" : "false") + ',' + std::to_string(r.iterations) + ',' +
             format_number(r.final_exp_reward) + ',' + format_number(r.final_step_tv) + ',';
      if (r.tv_to_limit) out += r.tv_to_limit->is_infinite() ? std::string("inf") : format_number(r.tv_to_limit->value());
      out += ',';
      if (r.stability_sup) out += format_number(*r.stability_sup);
    } else {
      out += ",,,,,";
    }
    out += '\n';
  }
  return out;
}

McCheckResult mc_check(const ExperimentConfig& cfg, double tv_tolerance,
                       const std::optional<std::filesystem::path>& out_dir) {
  if (!cfg.montecarlo) fail(ErrorCode::ValidationError, "montecarlo: block required for mc-check");
  if (cfg.pool.is_infinite()) fail(ErrorCode::ValidationError, "montecarlo: no finite-sample simulator for the infinite pool");
  const MonteCarloBlock& mc = *cfg.montecarlo;
  const PreferenceModel model = cfg.model();
  const Density p0 = cfg.initial_density();
  const int k = cfg.pool.k();

  McCheckResult result;
  result.tv_tolerance = tv_tolerance;
  const EmpiricalHistogram hist = curation_round(p0, model, k, mc.n_rounds, mix64(cfg.seed ^ 0x6d63686bull), cfg.workers);
  result.round_fit = gof_chi_square(hist, curated_density(p0, kernel_finite_exact(p0, model, k)));

  const RegimeConfig rc = cfg.regime_config();
  const RegimeConfig exact = RegimeConfig::make(cfg.alpha, cfg.pool, cfg.reference_density(), KernelChoice::exact(),
                                                cfg.seed, cfg.workers);
  const FiniteSampleTrajectory sampled = finite_sample_trajectory(p0, rc, model, mc.n_per_round, mc.steps, cfg.seed);
  Density population = p0;
  for (std::size_t t = 0; t <= mc.steps; ++t) {
    if (t > 0) population = update_once(population, exact, model);
    result.loop_tv.push_back(tv_distance(sampled.densities[t], population).value());
  }
  result.passed = !result.round_fit.reject_at_1pct;
  for (double tv : result.loop_tv) result.passed = result.passed && tv <= tv_tolerance;

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    std::string csv = "t,tv_sampled_vs_population\n";
    for (std::size_t t = 0; t < result.loop_tv.size(); ++t) {
      csv += std::to_string(t) + ',' + format_number(result.loop_tv[t]) + '\n';
    }
    write_file_atomic(*out_dir / "mc_check.csv", csv);
    ojson j;
    j["chi_square"] = {{"statistic", detail::metric_json(result.round_fit.statistic)},
                       {"dof", result.round_fit.dof},
                       {"critical_value_1pct", result.round_fit.critical_value},
                       {"rejected", result.round_fit.reject_at_1pct}};
    j["n_rounds"] = mc.n_rounds;
    j["n_per_round"] = mc.n_per_round;
    j["T"] = mc.steps;
    j["tv_tolerance"] = tv_tolerance;
    j["max_loop_tv"] = *std::max_element(result.loop_tv.begin(), result.loop_tv.end());
    j["passed"] = result.passed;
    write_file_atomic(*out_dir / "mc_check.json", j.dump(2) + "\n");
  }
  return result;
}

}  // namespace curaloop
