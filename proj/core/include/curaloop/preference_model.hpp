#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "curaloop/measure_space.hpp"

namespace curaloop {

/// Law of the per-rater preference noise added to the reward.
///
/// Zero and StationaryDiscrete have the same one-point marginal at every
/// state. DirectQ skips the noise law entirely and takes the averaged
/// utility per state from the caller; it only supports operations that
/// depend on the noise through that average.
class NoiseModel {
 public:
  enum class Kind { Zero, StationaryDiscrete, DirectQ };

  static NoiseModel zero();
  static NoiseModel stationary(std::vector<double> support, std::vector<double> probs);
  static NoiseModel direct_q(std::vector<double> q_values);

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] bool is_stationary() const noexcept { return kind_ != Kind::DirectQ; }
  /// Noise atoms; {0} for Zero. Empty for DirectQ.
  [[nodiscard]] const std::vector<double>& support() const noexcept { return support_; }
  [[nodiscard]] const std::vector<double>& probs() const noexcept { return probs_; }
  [[nodiscard]] const std::vector<double>& direct_values() const noexcept { return direct_; }
  /// E[exp(noise)] for the stationary kinds.
  [[nodiscard]] double mean_exp() const;

 private:
  Kind kind_ = Kind::Zero;
  std::vector<double> support_;
  std::vector<double> probs_;
  std::vector<double> direct_;
};

std::string to_string(NoiseModel::Kind kind);

class PreferenceModel {
 public:
  [[nodiscard]] const SpacePtr& space() const noexcept { return space_; }
  [[nodiscard]] const std::vector<double>& reward() const noexcept { return reward_; }
  [[nodiscard]] const NoiseModel& noise() const noexcept { return noise_; }
  /// Heterogeneity-averaged utility Q per state.
  [[nodiscard]] const std::vector<double>& q_values() const noexcept { return q_; }
  [[nodiscard]] double q_star() const noexcept { return q_star_; }
  [[nodiscard]] double q_min() const noexcept { return q_min_; }
  /// Indices attaining q_star (relative tolerance 1e-12), ascending.
  [[nodiscard]] const std::vector<std::size_t>& maximizer_set() const noexcept { return maximizers_; }
  [[nodiscard]] const StateMask& maximizer_mask() const noexcept { return in_max_; }
  [[nodiscard]] bool is_maximizer(std::size_t i) const { return in_max_[i]; }

 private:
  friend PreferenceModel build_preference(const SpacePtr&, std::vector<double>, NoiseModel);

  SpacePtr space_;
  std::vector<double> reward_;
  NoiseModel noise_;
  std::vector<double> q_;
  double q_star_ = 0.0;
  double q_min_ = 0.0;
  std::vector<std::size_t> maximizers_;
  StateMask in_max_;
};

inline constexpr double kMaximizerRelTol = 1e-12;

/// Throws NonFiniteReward, NonPositiveQ, SpaceMismatch.
PreferenceModel build_preference(const SpacePtr& space, std::vector<double> reward, NoiseModel noise);

struct AssumptionReport {
  std::string name;
  bool holds = false;
  /// Signed slack; strictly positive exactly when the assumption holds.
  double margin = 0.0;
  std::string detail;
};

/// Positive initial mass on the maximizer set; margin is that mass.
AssumptionReport check_assumption_A1(const PreferenceModel& model, const Density& p0);
/// Support of p0 inside support of p_ref; margin is max p0/p_ref when it holds.
AssumptionReport check_assumption_A2(const Density& p0, const Density& p_ref);
/// alpha above the inverse of a3_integral; margin is alpha - threshold.
AssumptionReport check_assumption_A3(const PreferenceModel& model, const Density& p_ref, double alpha);

/// sum_i Q*/(Q* - Q_i) p_ref_i w_i; infinite when p_ref charges the maximizer set.
MetricValue a3_integral(const PreferenceModel& model, const Density& p_ref);
/// 1 / a3_integral, 0 when the integral is infinite.
double a3_threshold(const PreferenceModel& model, const Density& p_ref);

struct RewardStats {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and variance of Q under p.
RewardStats exp_reward_stats(const Density& p, const PreferenceModel& model);
double mass_on_maximizers(const Density& p, const PreferenceModel& model);

}  // namespace curaloop
