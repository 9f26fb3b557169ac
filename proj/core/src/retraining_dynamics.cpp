#include "curaloop/retraining_dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "curaloop/error.hpp"
#include "curaloop/fixed_points.hpp"
#include "curaloop/rng.hpp"

namespace curaloop {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::PureFinite: return "pure_finite";
    case Regime::PureInfinite: return "pure_infinite";
    case Regime::MixedFinite: return "mixed_finite";
    case Regime::MixedInfinite: return "mixed_infinite";
  }
  return "unknown";
}

RegimeConfig RegimeConfig::make(double alpha, PoolSize pool, std::optional<Density> p_ref, KernelChoice kernel,
                                std::uint64_t seed, unsigned workers) {
  if (!(alpha >= 0.0 && alpha < 1.0)) fail(ErrorCode::AlphaOutOfRange, "alpha must be in [0,1)");
  if (alpha > 0.0 && !p_ref) fail(ErrorCode::InvalidArgument, "alpha > 0 requires a reference density");
  if (kernel.kind == KernelChoice::Kind::MonteCarlo) {
    if (pool.is_infinite()) fail(ErrorCode::InvalidArgument, "the infinite pool has no Monte Carlo kernel");
    if (kernel.n_samples < 100) fail(ErrorCode::InvalidArgument, "Monte Carlo kernel needs n_samples >= 100");
  }
  return RegimeConfig(alpha, pool, std::move(p_ref), kernel, seed, std::max(1u, workers));
}

const Density& RegimeConfig::reference() const {
  if (!p_ref_) fail(ErrorCode::InvalidArgument, "configuration has no reference density");
  return *p_ref_;
}

Regime RegimeConfig::regime() const noexcept {
  if (alpha_ > 0.0) return pool_.is_infinite() ? Regime::MixedInfinite : Regime::MixedFinite;
  return pool_.is_infinite() ? Regime::PureInfinite : Regime::PureFinite;
}

KernelEstimate compute_kernel(const Density& p, const RegimeConfig& config, const PreferenceModel& model,
                              std::uint64_t step) {
  if (config.pool().is_infinite()) return kernel_infinite(p, model);
  if (config.kernel().kind == KernelChoice::Kind::MonteCarlo) {
    const std::uint64_t seed = mix64(config.seed() ^ mix64(step));
    return kernel_finite_mc(p, model, config.pool().k(), config.kernel().n_samples, seed, config.workers());
  }
  return kernel_finite_exact(p, model, config.pool().k());
}

Density apply_update(const Density& p, const KernelEstimate& kernel, const RegimeConfig& config) {
  Density curated = curated_density(p, kernel);
  if (!config.is_mixed()) return curated;
  const Density& ref = config.reference();
  require_same_space(p, ref);
  const double a = config.alpha();
  std::vector<double> raw(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) raw[i] = a * ref[i] + (1.0 - a) * curated[i];
  return make_density(p.space(), raw);
}

Density update_once(const Density& p, const RegimeConfig& config, const PreferenceModel& model, std::uint64_t step) {
  if (!same_space(*p.space(), *model.space())) fail(ErrorCode::SpaceMismatch, "density and model differ in space");
  return apply_update(p, compute_kernel(p, config, model, step), config);
}

std::vector<double> reweighted_density(const Density& p, const Density& p_ref) {
  require_same_space(p, p_ref);
  std::vector<double> w(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p_ref[i] > 0.0) {
      w[i] = p[i] / p_ref[i];
    } else if (p[i] > 0.0) {
      fail(ErrorCode::SupportViolation, "p charges state " + p.space()->labels()[i] + " outside the support of p_ref");
    }
  }
  return w;
}

double ref_inner_q(std::span<const double> f, const PreferenceModel& model, const Density& p_ref) {
  require_length(*p_ref.space(), f.size(), "reweighted density");
  const auto& q = model.q_values();
  double total = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) total += f[i] * q[i] * p_ref.mass(i);
  return total;
}

std::vector<double> update_reweighted(std::span<const double> w, const Density& p_ref, const PreferenceModel& model,
                                      double alpha) {
  const double norm = ref_inner_q(w, model, p_ref);
  if (!(norm > 0.0)) fail(ErrorCode::AllZero, "reweighted density has no mass under p_ref");
  const auto& q = model.q_values();
  std::vector<double> next(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (p_ref[i] > 0.0) next[i] = alpha + (1.0 - alpha) * q[i] * w[i] / norm;
  }
  return next;
}

namespace {

struct KnownLimit {
  std::optional<Density> density;
  std::optional<std::vector<double>> w_star;
};

KnownLimit find_limit(const Density& p0, const RegimeConfig& config, const PreferenceModel& model,
                      const std::optional<Density>& mixed_finite_limit) {
  KnownLimit limit;
  switch (config.regime()) {
    case Regime::PureFinite:
    case Regime::PureInfinite:
      if (check_assumption_A1(model, p0).holds) limit.density = pure_limit(p0, model).density;
      break;
    case Regime::MixedInfinite:
      if (check_assumption_A3(model, config.reference(), config.alpha()).holds) {
        FixedPointResult fp = fixed_point_regime_iv(model, config.reference(), config.alpha());
        limit.density = fp.density;
        limit.w_star = std::move(fp.w_star);
      }
      break;
    case Regime::MixedFinite:
      limit.density = mixed_finite_limit;
      break;
  }
  return limit;
}

MetricValue hilbert_to_w_star(const Density& p, const Density& p_ref, const std::vector<double>& w_star) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p_ref[i] == 0.0 && p[i] > 0.0) return MetricValue::infinity();
  }
  return hilbert_metric(reweighted_density(p, p_ref), w_star, p_ref.support());
}

}  // namespace

std::vector<TrajectoryRecord> run_trajectory(const Density& p0, const RegimeConfig& config,
                                             const PreferenceModel& model, std::size_t t_max, double stop_tol,
                                             const std::optional<Density>& mixed_finite_limit) {
  if (t_max == 0) fail(ErrorCode::TMaxZero, "t_max must be >= 1");
  if (!(stop_tol > 0.0)) fail(ErrorCode::InvalidArgument, "stop_tol must be > 0");
  if (!same_space(*p0.space(), *model.space())) fail(ErrorCode::SpaceMismatch, "p0 and model differ in space");
  if (mixed_finite_limit) require_same_space(p0, *mixed_finite_limit);

  const KnownLimit limit = find_limit(p0, config, model, mixed_finite_limit);
  const bool pure = !config.is_mixed();
  const auto& on_a = model.maximizer_mask();

  std::vector<TrajectoryRecord> records;
  Density p = p0;
  std::optional<MetricValue> step_tv;
  for (std::size_t t = 0;; ++t) {
    const KernelEstimate kernel = compute_kernel(p, config, model, t);
    const RewardStats stats = exp_reward_stats(p, model);
    double h_t = 0.0;
    for (std::size_t i : model.maximizer_set()) h_t = std::max(h_t, kernel.h_values[i]);

    TrajectoryRecord rec{t,    p, stats.mean, stats.variance, h_t, p.mass(on_a), std::nullopt, std::nullopt,
                         std::nullopt, step_tv};
    if (limit.density) {
      rec.tv_to_limit = tv_distance(p, *limit.density);
      if (pure) rec.kl_star_to_pt = kl_divergence(*limit.density, p);
    }
    if (limit.w_star) rec.hilbert_to_limit = hilbert_to_w_star(p, config.reference(), *limit.w_star);
    records.push_back(std::move(rec));

    if (t == t_max) break;
    if (step_tv && step_tv->value() < stop_tol) break;
    Density next = apply_update(p, kernel, config);
    step_tv = tv_distance(next, p);
    p = std::move(next);
  }
  return records;
}

}  // namespace curaloop
