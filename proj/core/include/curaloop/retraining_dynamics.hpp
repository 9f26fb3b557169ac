#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curaloop/choice_kernel.hpp"
#include "curaloop/measure_space.hpp"
#include "curaloop/preference_model.hpp"

namespace curaloop {

/// The four retraining regimes: pure or mixed with the reference density,
/// crossed with a finite or infinite candidate pool.
enum class Regime { PureFinite, PureInfinite, MixedFinite, MixedInfinite };
std::string to_string(Regime regime);

struct KernelChoice {
  enum class Kind { Exact, MonteCarlo };
  Kind kind = Kind::Exact;
  std::size_t n_samples = 0;

  static KernelChoice exact() { return {}; }
  static KernelChoice monte_carlo(std::size_t n_samples) { return {Kind::MonteCarlo, n_samples}; }
};

class RegimeConfig {
 public:
  /// Throws AlphaOutOfRange unless alpha in [0,1); InvalidArgument when
  /// alpha > 0 and p_ref is missing.
  static RegimeConfig make(double alpha, PoolSize pool, std::optional<Density> p_ref,
                           KernelChoice kernel = KernelChoice::exact(), std::uint64_t seed = 0,
                           unsigned workers = 1);

  [[nodiscard]] double alpha() const noexcept { return alpha_; }
  [[nodiscard]] PoolSize pool() const noexcept { return pool_; }
  [[nodiscard]] const std::optional<Density>& p_ref() const noexcept { return p_ref_; }
  /// Reference density; throws when absent.
  [[nodiscard]] const Density& reference() const;
  [[nodiscard]] const KernelChoice& kernel() const noexcept { return kernel_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] unsigned workers() const noexcept { return workers_; }
  [[nodiscard]] Regime regime() const noexcept;
  [[nodiscard]] bool is_mixed() const noexcept { return alpha_ > 0.0; }

 private:
  RegimeConfig(double alpha, PoolSize pool, std::optional<Density> p_ref, KernelChoice kernel, std::uint64_t seed,
               unsigned workers)
      : alpha_(alpha), pool_(pool), p_ref_(std::move(p_ref)), kernel_(kernel), seed_(seed), workers_(workers) {}

  double alpha_;
  PoolSize pool_;
  std::optional<Density> p_ref_;
  KernelChoice kernel_;
  std::uint64_t seed_;
  unsigned workers_;
};

/// Kernel at p for the configured pool and method. `step` selects the
/// random stream for Monte Carlo kernels.
KernelEstimate compute_kernel(const Density& p, const RegimeConfig& config, const PreferenceModel& model,
                              std::uint64_t step = 0);

/// alpha * p_ref + (1 - alpha) * p * H.
Density apply_update(const Density& p, const KernelEstimate& kernel, const RegimeConfig& config);

Density update_once(const Density& p, const RegimeConfig& config, const PreferenceModel& model,
                    std::uint64_t step = 0);

struct TrajectoryRecord {
  std::size_t t = 0;
  Density density;
  double exp_reward = 0.0;
  double var_reward = 0.0;
  /// Kernel value on the maximizer set at p_t.
  double h_t = 0.0;
  double mass_on_A = 0.0;
  std::optional<MetricValue> tv_to_limit;
  std::optional<MetricValue> kl_star_to_pt;
  std::optional<MetricValue> hilbert_to_limit;
  /// d_TV(p_t, p_{t-1}); absent at t = 0.
  std::optional<MetricValue> step_tv;
};

/// Iterates update_once until t_max updates or until a step moves less than
/// stop_tol in TV. Records include t = 0. Known limits are attached when
/// available: the pure-regime limit (when A1 holds), the mixed
/// infinite-pool fixed point (when A3 holds), or `mixed_finite_limit`.
std::vector<TrajectoryRecord> run_trajectory(const Density& p0, const RegimeConfig& config,
                                             const PreferenceModel& model, std::size_t t_max,
                                             double stop_tol = 1e-12,
                                             const std::optional<Density>& mixed_finite_limit = std::nullopt);

/// w = p / p_ref on the support of p_ref, zero elsewhere; a density with
/// respect to the p_ref-weighted measure. Throws SupportViolation.
std::vector<double> reweighted_density(const Density& p, const Density& p_ref);

/// <f, Q>_ref = sum_i f_i Q_i p_ref_i w_i.
double ref_inner_q(std::span<const double> f, const PreferenceModel& model, const Density& p_ref);

/// One mixed infinite-pool step in reweighted coordinates:
/// alpha + (1 - alpha) Q w / <w, Q>_ref on the support of p_ref.
std::vector<double> update_reweighted(std::span<const double> w, const Density& p_ref,
                                      const PreferenceModel& model, double alpha);

}  // namespace curaloop
