#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "curaloop/fixed_points.hpp"
#include "curaloop/measure_space.hpp"
#include "curaloop/preference_model.hpp"
#include "curaloop/retraining_dynamics.hpp"

namespace curaloop {

/// Additive reward perturbation with its sup norm.
class PerturbationSpec {
 public:
  explicit PerturbationSpec(std::vector<double> delta_r);
  static PerturbationSpec zero(std::size_t n) { return PerturbationSpec(std::vector<double>(n, 0.0)); }

  [[nodiscard]] const std::vector<double>& delta_r() const noexcept { return delta_r_; }
  [[nodiscard]] double eta() const noexcept { return eta_; }

 private:
  std::vector<double> delta_r_;
  double eta_ = 0.0;
};

/// Reward r + delta_r; Q becomes Q * exp(delta_r) for every noise kind.
PreferenceModel perturb_model(const PreferenceModel& model, const PerturbationSpec& spec);

/// iid uniform perturbation in [-eta, eta] per state.
PerturbationSpec random_perturbation(std::size_t n, double eta, std::uint64_t seed);

/// The explicit instability construction: lift the band
/// E = {Q* - delta <= Q < Q*} to Q*, push the maximizers down by eta, leave
/// the rest alone. Throws HypothesisViolated naming the failed condition.
PerturbationSpec adversarial_delta_r(const PreferenceModel& model, const Density& p0, double eta, double delta);

struct InstabilityReport {
  PerturbationSpec spec;
  Density limit_unperturbed;
  Density limit_perturbed;
  double tv = 0.0;
  bool disjoint_maximizers = false;
};

/// Pure-regime limits under the original and perturbed rewards and their TV
/// distance. The eta/delta form uses adversarial_delta_r.
InstabilityReport instability_experiment(const PreferenceModel& model, const Density& p0, double eta, double delta);
InstabilityReport instability_experiment(const PreferenceModel& model, const Density& p0,
                                         const PerturbationSpec& spec);

/// eta rho / (4 (1 - rho)) with rho = K (1 - alpha). Throws NotContractive.
double stability_bound_regime_iii(int k, double alpha, double eta);

struct PerturbedPairResult {
  std::vector<Density> unperturbed;
  std::vector<Density> perturbed;
  /// d_TV between the two trajectories at t = 0..t_max.
  std::vector<double> d_tv;
  /// d_TV between the two limits (t = infinity).
  double d_tv_limit = 0.0;
  /// max over d_tv and d_tv_limit.
  double sup_d_tv = 0.0;
};

/// Runs both trajectories for exactly t_max updates from the same p0 and
/// compares them step by step and at their limits. Mixed regimes use the
/// exact kernel; pure regimes are accepted and compare their restricted
/// limits, which is where instability shows up.
PerturbedPairResult run_perturbed_pair(const Density& p0, const RegimeConfig& config, const PreferenceModel& model,
                                       const PerturbationSpec& spec, std::size_t t_max, double fixed_point_tol = 1e-13);

struct KernelPerturbationReport {
  double max_deviation = 0.0;
  double bound = 0.0;
  bool holds = false;
};

/// max_x |H_{p,perturbed} - H_{p}| against (K/2) eta.
KernelPerturbationReport kernel_perturbation_check(const Density& p, const PreferenceModel& model, int k,
                                                   const PerturbationSpec& spec);

struct A4Report {
  AssumptionReport report;
  /// Lower bound on the supremum of the perturbed thresholds.
  double sup_threshold_lower_bound = 0.0;
  std::vector<double> probe_thresholds;
  bool heuristic = true;
};

/// Probes the perturbed fixed-point threshold at delta_r = 0 and at n_probe
/// random sign patterns in {-eta*, +eta*}^n. "holds" is only a heuristic;
/// "fails" is definitive.
A4Report check_assumption_A4(const PreferenceModel& model, const Density& p_ref, double alpha, double eta_star,
                             std::size_t n_probe, std::uint64_t seed, unsigned workers = 1);

}  // namespace curaloop
