#include "curaloop/perturbation_lab.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "curaloop/error.hpp"
#include "curaloop/parallel.hpp"
#include "curaloop/rng.hpp"

namespace curaloop {

PerturbationSpec::PerturbationSpec(std::vector<double> delta_r) : delta_r_(std::move(delta_r)) {
  for (double d : delta_r_) {
    if (!std::isfinite(d)) fail(ErrorCode::InvalidArgument, "reward perturbation must be finite");
    eta_ = std::max(eta_, std::abs(d));
  }
}

PreferenceModel perturb_model(const PreferenceModel& model, const PerturbationSpec& spec) {
  require_length(*model.space(), spec.delta_r().size(), "reward perturbation");
  std::vector<double> reward = model.reward();
  for (std::size_t i = 0; i < reward.size(); ++i) reward[i] += spec.delta_r()[i];
  if (model.noise().kind() == NoiseModel::Kind::DirectQ) {
    std::vector<double> q = model.q_values();
    for (std::size_t i = 0; i < q.size(); ++i) q[i] *= std::exp(spec.delta_r()[i]);
    return build_preference(model.space(), std::move(reward), NoiseModel::direct_q(std::move(q)));
  }
  return build_preference(model.space(), std::move(reward), model.noise());
}

PerturbationSpec random_perturbation(std::size_t n, double eta, std::uint64_t seed) {
  if (!(eta >= 0.0)) fail(ErrorCode::InvalidArgument, "eta must be >= 0");
  StreamRng rng(seed, 0x5eed0fd17ull);
  std::vector<double> delta(n);
  for (double& d : delta) d = eta * (2.0 * rng.uniform() - 1.0);
  return PerturbationSpec(std::move(delta));
}

PerturbationSpec adversarial_delta_r(const PreferenceModel& model, const Density& p0, double eta, double delta) {
  if (!same_space(*model.space(), *p0.space())) fail(ErrorCode::SpaceMismatch, "model and p0 differ in space");
  if (!(eta > 0.0) || !(delta > 0.0)) fail(ErrorCode::HypothesisViolated, "eta and delta must be > 0");
  const auto& q = model.q_values();
  const double q_star = model.q_star();

  StateMask band(q.size(), false);
  for (std::size_t i = 0; i < q.size(); ++i) band[i] = !model.is_maximizer(i) && q[i] >= q_star - delta;
  const double band_mass = p0.mass(band);
  if (!(band_mass > 0.0)) {
    fail(ErrorCode::HypothesisViolated, "p0 puts no mass on the band {Q* - delta <= Q < Q*}");
  }
  if ((q_star - delta) * std::exp(eta) < q_star) {
    fail(ErrorCode::HypothesisViolated, "(Q* - delta) * exp(eta) < Q*: eta cannot lift the band to Q*");
  }

  std::vector<double> shift(q.size(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (band[i]) {
      shift[i] = std::min(std::log(q_star / q[i]), eta);
    } else if (model.is_maximizer(i)) {
      shift[i] = -eta;
    }
  }
  PerturbationSpec spec(std::move(shift));

  const PreferenceModel moved = perturb_model(model, spec);
  for (std::size_t i : moved.maximizer_set()) {
    if (model.is_maximizer(i)) fail(ErrorCode::HypothesisViolated, "perturbed maximizers overlap the original ones");
  }
  if (!(p0.mass(moved.maximizer_mask()) > 0.0)) {
    fail(ErrorCode::HypothesisViolated, "p0 puts no mass on the perturbed maximizer set");
  }
  return spec;
}

InstabilityReport instability_experiment(const PreferenceModel& model, const Density& p0,
                                         const PerturbationSpec& spec) {
  const PreferenceModel moved = perturb_model(model, spec);
  Density base = pure_limit(p0, model).density;
  Density shifted = pure_limit(p0, moved).density;
  bool disjoint = true;
  for (std::size_t i : moved.maximizer_set()) disjoint = disjoint && !model.is_maximizer(i);
  const double tv = tv_distance(base, shifted).value();
  return InstabilityReport{spec, std::move(base), std::move(shifted), tv, disjoint};
}

InstabilityReport instability_experiment(const PreferenceModel& model, const Density& p0, double eta, double delta) {
  return instability_experiment(model, p0, adversarial_delta_r(model, p0, eta, delta));
}

double stability_bound_regime_iii(int k, double alpha, double eta) {
  const double rho = contraction_rate(k, alpha);
  if (!(rho < 1.0)) fail(ErrorCode::NotContractive, "alpha must exceed (K-1)/K");
  if (!(eta >= 0.0)) fail(ErrorCode::InvalidArgument, "eta must be >= 0");
  return eta * rho / (4.0 * (1.0 - rho));
}

namespace {

Density limit_for(const Density& p0, const RegimeConfig& config, const PreferenceModel& model, double tol) {
  switch (config.regime()) {
    case Regime::PureFinite:
    case Regime::PureInfinite:
      return pure_limit(p0, model).density;
    case Regime::MixedFinite:
      return fixed_point_regime_iii(config, model, tol).density;
    case Regime::MixedInfinite:
      return fixed_point_regime_iv(model, config.reference(), config.alpha(), std::max(tol, 1e-12)).density;
  }
  fail(ErrorCode::InvalidArgument, "unknown regime");
}

}  // namespace

PerturbedPairResult run_perturbed_pair(const Density& p0, const RegimeConfig& config, const PreferenceModel& model,
                                       const PerturbationSpec& spec, std::size_t t_max, double fixed_point_tol) {
  const PreferenceModel moved = perturb_model(model, spec);
  const RegimeConfig exact = RegimeConfig::make(config.alpha(), config.pool(), config.p_ref(), KernelChoice::exact(),
                                                config.seed(), config.workers());
  PerturbedPairResult out;
  out.unperturbed.push_back(p0);
  out.perturbed.push_back(p0);
  out.d_tv.push_back(0.0);
  for (std::size_t t = 0; t < t_max; ++t) {
    out.unperturbed.push_back(update_once(out.unperturbed.back(), exact, model));
    out.perturbed.push_back(update_once(out.perturbed.back(), exact, moved));
    out.d_tv.push_back(tv_distance(out.unperturbed.back(), out.perturbed.back()).value());
  }
  const Density lim0 = limit_for(p0, exact, model, fixed_point_tol);
  const Density lim1 = limit_for(p0, exact, moved, fixed_point_tol);
  out.d_tv_limit = tv_distance(lim0, lim1).value();
  out.sup_d_tv = std::max(out.d_tv_limit, *std::max_element(out.d_tv.begin(), out.d_tv.end()));
  return out;
}

KernelPerturbationReport kernel_perturbation_check(const Density& p, const PreferenceModel& model, int k,
                                                   const PerturbationSpec& spec) {
  const PreferenceModel moved = perturb_model(model, spec);
  const KernelEstimate h0 = kernel_finite_exact(p, model, k);
  const KernelEstimate h1 = kernel_finite_exact(p, moved, k);
  KernelPerturbationReport report;
  for (std::size_t i = 0; i < p.size(); ++i) {
    report.max_deviation = std::max(report.max_deviation, std::abs(h1.h_values[i] - h0.h_values[i]));
  }
  report.bound = 0.5 * static_cast<double>(k) * spec.eta();
  report.holds = report.max_deviation <= report.bound + 1e-10;
  return report;
}

A4Report check_assumption_A4(const PreferenceModel& model, const Density& p_ref, double alpha, double eta_star,
                             std::size_t n_probe, std::uint64_t seed, unsigned workers) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::AlphaOutOfRange, "alpha must be in (0,1)");
  if (!(eta_star > 0.0)) fail(ErrorCode::InvalidArgument, "eta_star must be > 0");
  const std::size_t n = model.space()->size();
  std::vector<double> thresholds(n_probe + 1, 0.0);
  const StreamRng root(seed, 0xa4a4a4ull);
  parallel_for(thresholds.size(), workers, [&](std::size_t probe) {
    if (probe == 0) {
      thresholds[0] = a3_threshold(model, p_ref);
      return;
    }
    StreamRng rng = root.split(probe);
    std::vector<double> signs(n);
    for (double& s : signs) s = (rng() >> 63) != 0 ? eta_star : -eta_star;
    thresholds[probe] = a3_threshold(perturb_model(model, PerturbationSpec(std::move(signs))), p_ref);
  });

  A4Report out;
  out.probe_thresholds = thresholds;
  out.sup_threshold_lower_bound = *std::max_element(thresholds.begin(), thresholds.end());
  std::ostringstream os;
  os << "alpha = " << alpha << ", probed sup threshold >= " << out.sup_threshold_lower_bound << " over "
     << thresholds.size() << " probes (heuristic)";
  out.report = {"A4", alpha > out.sup_threshold_lower_bound, alpha - out.sup_threshold_lower_bound, os.str()};
  return out;
}

}  // namespace curaloop
