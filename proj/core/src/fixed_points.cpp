#include "curaloop/fixed_points.hpp"

#include <cmath>
#include <limits>

#include "curaloop/error.hpp"

namespace curaloop {

std::string to_string(LimitKind kind) {
  switch (kind) {
    case LimitKind::Pure: return "pure";
    case LimitKind::MixedFinite: return "mixed_finite";
    case LimitKind::MixedInfinite: return "mixed_infinite";
  }
  return "unknown";
}

FixedPointResult pure_limit(const Density& p0, const PreferenceModel& model) {
  const AssumptionReport a1 = check_assumption_A1(model, p0);
  if (!a1.holds) fail(ErrorCode::AssumptionA1Violated, a1.detail);
  std::vector<double> raw(p0.size(), 0.0);
  for (std::size_t i : model.maximizer_set()) raw[i] = p0[i];
  return FixedPointResult{make_density(p0.space(), raw), std::nullopt, std::nullopt, 0.0, 0, LimitKind::Pure};
}

namespace {

// u(c) - the p_ref mass of the candidate fixed point with normalizer c.
double fixed_point_mass(const PreferenceModel& model, const Density& p_ref, double alpha, double c) {
  const auto& q = model.q_values();
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double mass = p_ref.mass(i);
    if (mass == 0.0) continue;
    total += alpha / (1.0 - (1.0 - alpha) * q[i] / c) * mass;
  }
  return total;
}

}  // namespace

double solve_c_star(const PreferenceModel& model, const Density& p_ref, double alpha, double tol) {
  const AssumptionReport a3 = check_assumption_A3(model, p_ref, alpha);
  if (!a3.holds) fail(ErrorCode::AssumptionA3Violated, a3.detail);
  if (!(tol > 0.0)) fail(ErrorCode::InvalidArgument, "tol must be > 0");

  const double q_star = model.q_star();
  double hi = q_star;
  double u_hi = fixed_point_mass(model, p_ref, alpha, hi);
  if (u_hi >= 1.0 - tol) return q_star;

  double lo = (1.0 - alpha) * q_star * (1.0 + 1e-15);
  double u_lo = fixed_point_mass(model, p_ref, alpha, lo);
  if (!(u_lo > 1.0)) {
    fail(ErrorCode::BracketFailure, "u does not exceed 1 at the lower end of the bracket");
  }

  constexpr int kMaxIterations = 200;
  for (int it = 0; it < kMaxIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double u_mid = fixed_point_mass(model, p_ref, alpha, mid);
    if (u_mid > u_lo || u_mid < u_hi) fail(ErrorCode::BracketFailure, "u is not decreasing across the bracket");
    if (u_mid > 1.0) {
      lo = mid;
      u_lo = u_mid;
    } else {
      hi = mid;
      u_hi = u_mid;
    }
    if (hi - lo <= 1e-14 * hi && std::abs(u_mid - 1.0) <= tol) break;
  }
  const double c = std::abs(u_lo - 1.0) < std::abs(u_hi - 1.0) ? lo : hi;
  const double residual = std::abs(fixed_point_mass(model, p_ref, alpha, c) - 1.0);
  if (residual > tol) {
    fail(ErrorCode::BracketFailure, "bisection stalled with |u(c) - 1| = " + std::to_string(residual));
  }
  return c;
}

FixedPointResult fixed_point_regime_iv(const PreferenceModel& model, const Density& p_ref, double alpha, double tol) {
  const double c = solve_c_star(model, p_ref, alpha, tol);
  const auto& q = model.q_values();
  std::vector<double> w(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) w[i] = alpha / (1.0 - (1.0 - alpha) * q[i] / c);

  std::vector<double> raw(q.size());
  double ref_mass = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    raw[i] = w[i] * p_ref[i];
    ref_mass += w[i] * p_ref.mass(i);
  }
  const double inner = ref_inner_q(w, model, p_ref);
  if (std::abs(ref_mass - 1.0) > 10.0 * tol || std::abs(inner - c) > 10.0 * tol * std::max(1.0, c)) {
    fail(ErrorCode::BracketFailure, "fixed point fails self-consistency");
  }

  Density density = make_density(p_ref.space(), raw);
  const RegimeConfig config = RegimeConfig::make(alpha, PoolSize::infinite(), p_ref);
  const double residual = tv_distance(update_once(density, config, model), density).value();
  return FixedPointResult{std::move(density), std::move(w), c, residual, 0, LimitKind::MixedInfinite};
}

double contraction_rate(int k, double alpha) { return static_cast<double>(k) * (1.0 - alpha); }

bool is_contractive(int k, double alpha) { return contraction_rate(k, alpha) < 1.0; }

FixedPointResult fixed_point_regime_iii(const RegimeConfig& config, const PreferenceModel& model, double tol,
                                        std::size_t t_max, const std::optional<Density>& start) {
  if (config.regime() != Regime::MixedFinite) {
    fail(ErrorCode::InvalidArgument, "fixed_point_regime_iii needs alpha > 0 and a finite pool");
  }
  const int k = config.pool().k();
  const double rho = contraction_rate(k, config.alpha());
  if (!(rho < 1.0)) {
    fail(ErrorCode::NotContractive, "alpha must exceed (K-1)/K; K(1-alpha) = " + std::to_string(rho));
  }
  if (!(tol > 0.0)) fail(ErrorCode::InvalidArgument, "tol must be > 0");

  const RegimeConfig exact = RegimeConfig::make(config.alpha(), config.pool(), config.reference(),
                                                KernelChoice::exact(), config.seed(), config.workers());
  const double step_bound = rho > 0.0 ? tol * (1.0 - rho) / rho : std::numeric_limits<double>::infinity();

  Density p = start.value_or(config.reference());
  for (std::size_t t = 1; t <= t_max; ++t) {
    Density next = update_once(p, exact, model);
    const double step = tv_distance(next, p).value();
    p = std::move(next);
    if (step < step_bound) {
      const double residual = tv_distance(update_once(p, exact, model), p).value();
      return FixedPointResult{std::move(p), std::nullopt, std::nullopt, residual, t, LimitKind::MixedFinite};
    }
  }
  fail(ErrorCode::MaxIterations, "contraction iteration did not settle within t_max steps");
}

}  // namespace curaloop
