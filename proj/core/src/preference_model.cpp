#include "curaloop/preference_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "curaloop/error.hpp"

namespace curaloop {

NoiseModel NoiseModel::zero() {
  NoiseModel m;
  m.kind_ = Kind::Zero;
  m.support_ = {0.0};
  m.probs_ = {1.0};
  return m;
}

NoiseModel NoiseModel::stationary(std::vector<double> support, std::vector<double> probs) {
  if (support.empty() || support.size() != probs.size()) {
    fail(ErrorCode::InvalidArgument, "noise support and probabilities must be nonempty and equal in length");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < support.size(); ++j) {
    if (!std::isfinite(support[j])) fail(ErrorCode::InvalidArgument, "noise support values must be finite");
    if (!(probs[j] >= 0.0)) fail(ErrorCode::InvalidArgument, "noise probabilities must be nonnegative");
    total += probs[j];
  }
  if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::InvalidArgument, "noise probabilities must sum to 1");
  NoiseModel m;
  m.kind_ = Kind::StationaryDiscrete;
  m.support_ = std::move(support);
  m.probs_ = std::move(probs);
  return m;
}

NoiseModel NoiseModel::direct_q(std::vector<double> q_values) {
  for (double q : q_values) {
    if (!(q > 0.0) || !std::isfinite(q)) fail(ErrorCode::NonPositiveQ, "direct utilities must be finite and > 0");
  }
  NoiseModel m;
  m.kind_ = Kind::DirectQ;
  m.direct_ = std::move(q_values);
  return m;
}

double NoiseModel::mean_exp() const {
  if (kind_ == Kind::DirectQ) fail(ErrorCode::UnsupportedNoise, "DirectQ has no noise law");
  double total = 0.0;
  for (std::size_t j = 0; j < support_.size(); ++j) total += probs_[j] * std::exp(support_[j]);
  return total;
}

std::string to_string(NoiseModel::Kind kind) {
  switch (kind) {
    case NoiseModel::Kind::Zero: return "zero";
    case NoiseModel::Kind::StationaryDiscrete: return "stationary_discrete";
    case NoiseModel::Kind::DirectQ: return "direct_q";
  }
  return "unknown";
}

PreferenceModel build_preference(const SpacePtr& space, std::vector<double> reward, NoiseModel noise) {
  if (!space) fail(ErrorCode::InvalidArgument, "null state space");
  require_length(*space, reward.size(), "reward");
  for (double r : reward) {
    if (!std::isfinite(r)) fail(ErrorCode::NonFiniteReward, "rewards must be finite");
  }

  PreferenceModel m;
  m.space_ = space;
  m.q_.resize(space->size());
  if (noise.kind() == NoiseModel::Kind::DirectQ) {
    require_length(*space, noise.direct_values().size(), "direct utilities");
    m.q_ = noise.direct_values();
  } else {
    const double noise_factor = noise.mean_exp();
    for (std::size_t i = 0; i < reward.size(); ++i) m.q_[i] = std::exp(reward[i]) * noise_factor;
  }
  for (double q : m.q_) {
    if (!std::isfinite(q)) fail(ErrorCode::NonFiniteReward, "utility overflows");
    if (!(q > 0.0)) fail(ErrorCode::NonPositiveQ, "utility must be strictly positive");
  }
  m.reward_ = std::move(reward);
  m.noise_ = std::move(noise);
  m.q_star_ = *std::max_element(m.q_.begin(), m.q_.end());
  m.q_min_ = *std::min_element(m.q_.begin(), m.q_.end());
  m.in_max_.assign(m.q_.size(), false);
  const double cut = m.q_star_ * (1.0 - kMaximizerRelTol);
  for (std::size_t i = 0; i < m.q_.size(); ++i) {
    if (m.q_[i] >= cut) {
      m.in_max_[i] = true;
      m.maximizers_.push_back(i);
    }
  }
  return m;
}

AssumptionReport check_assumption_A1(const PreferenceModel& model, const Density& p0) {
  if (!same_space(*model.space(), *p0.space())) fail(ErrorCode::SpaceMismatch, "model and p0 differ in space");
  const double mass = p0.mass(model.maximizer_mask());
  AssumptionReport report{"A1", mass > 0.0, mass, ""};
  std::ostringstream os;
  os << "initial mass on maximizer set = " << mass;
  report.detail = os.str();
  return report;
}

AssumptionReport check_assumption_A2(const Density& p0, const Density& p_ref) {
  require_same_space(p0, p_ref);
  double ratio = 0.0;
  for (std::size_t i = 0; i < p0.size(); ++i) {
    if (p0[i] == 0.0) continue;
    if (p_ref[i] == 0.0) {
      return {"A2", false, 0.0, "p0 charges state " + p0.space()->labels()[i] + " where p_ref vanishes"};
    }
    ratio = std::max(ratio, p0[i] / p_ref[i]);
  }
  std::ostringstream os;
  os << "max density ratio p0/p_ref = " << ratio;
  return {"A2", true, ratio, os.str()};
}

MetricValue a3_integral(const PreferenceModel& model, const Density& p_ref) {
  if (!same_space(*model.space(), *p_ref.space())) fail(ErrorCode::SpaceMismatch, "model and p_ref differ in space");
  const auto& q = model.q_values();
  const double q_star = model.q_star();
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double mass = p_ref.mass(i);
    if (mass == 0.0) continue;
    if (model.is_maximizer(i)) return MetricValue::infinity();
    total += q_star / (q_star - q[i]) * mass;
  }
  return MetricValue::finite(total);
}

double a3_threshold(const PreferenceModel& model, const Density& p_ref) {
  const MetricValue integral = a3_integral(model, p_ref);
  return integral.is_infinite() ? 0.0 : 1.0 / integral.value();
}

AssumptionReport check_assumption_A3(const PreferenceModel& model, const Density& p_ref, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::AlphaOutOfRange, "alpha must be in (0,1)");
  const double threshold = a3_threshold(model, p_ref);
  std::ostringstream os;
  os << "alpha = " << alpha << ", threshold = " << threshold;
  return {"A3", alpha > threshold, alpha - threshold, os.str()};
}

RewardStats exp_reward_stats(const Density& p, const PreferenceModel& model) {
  if (!same_space(*model.space(), *p.space())) fail(ErrorCode::SpaceMismatch, "model and density differ in space");
  const auto& q = model.q_values();
  const double mean = expectation(p, q);
  double variance = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double d = q[i] - mean;
    variance += d * d * p.mass(i);
  }
  return {mean, variance};
}

double mass_on_maximizers(const Density& p, const PreferenceModel& model) {
  if (!same_space(*model.space(), *p.space())) fail(ErrorCode::SpaceMismatch, "model and density differ in space");
  return p.mass(model.maximizer_mask());
}

}  // namespace curaloop
