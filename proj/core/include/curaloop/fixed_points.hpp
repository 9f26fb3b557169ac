#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "curaloop/measure_space.hpp"
#include "curaloop/preference_model.hpp"
#include "curaloop/retraining_dynamics.hpp"

namespace curaloop {

enum class LimitKind { Pure, MixedFinite, MixedInfinite };
std::string to_string(LimitKind kind);

struct FixedPointResult {
  /// The limit density (w_star * p_ref for the mixed infinite-pool case).
  Density density;
  std::optional<std::vector<double>> w_star;
  std::optional<double> c_star;
  double residual = 0.0;
  std::size_t iterations = 0;
  LimitKind kind = LimitKind::Pure;
};

/// p0 restricted to the maximizer set and renormalized. Throws
/// AssumptionA1Violated when p0 puts no mass there.
FixedPointResult pure_limit(const Density& p0, const PreferenceModel& model);

/// Root of u(c) = sum_i alpha / (1 - (1 - alpha) Q_i / c) p_ref_i w_i = 1 on
/// ((1 - alpha) Q*, Q*] by bisection; u is strictly decreasing there.
double solve_c_star(const PreferenceModel& model, const Density& p_ref, double alpha, double tol = 1e-12);

/// w*(x) = alpha / (1 - (1 - alpha) Q(x) / c*).
FixedPointResult fixed_point_regime_iv(const PreferenceModel& model, const Density& p_ref, double alpha,
                                       double tol = 1e-12);

/// Banach iteration of the mixed finite-pool map from `start` (p_ref by
/// default), stopped by the a-posteriori bound so that the returned density
/// is within tol of the true fixed point in TV. Always uses the exact kernel.
FixedPointResult fixed_point_regime_iii(const RegimeConfig& config, const PreferenceModel& model,
                                        double tol = 1e-12, std::size_t t_max = 100000,
                                        const std::optional<Density>& start = std::nullopt);

/// TV Lipschitz constant K (1 - alpha) of the mixed finite-pool map.
double contraction_rate(int k, double alpha);

/// Whether K (1 - alpha) < 1, i.e. alpha > (K - 1) / K.
bool is_contractive(int k, double alpha);

}  // namespace curaloop
