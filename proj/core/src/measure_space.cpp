#include "curaloop/measure_space.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "curaloop/error.hpp"

namespace curaloop {

StateSpace::StateSpace(std::vector<std::string> labels, std::vector<double> weights)
    : labels_(std::move(labels)), weights_(std::move(weights)) {
  if (weights_.empty()) fail(ErrorCode::InvalidArgument, "state space must have at least one state");
  if (labels_.size() != weights_.size()) {
    fail(ErrorCode::InvalidArgument, "labels and weights differ in length");
  }
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      fail(ErrorCode::InvalidArgument, "baseline weights must be finite and strictly positive");
    }
  }
  std::set<std::string> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size()) fail(ErrorCode::InvalidArgument, "state labels must be unique");
}

SpacePtr StateSpace::make(std::vector<std::string> labels, std::vector<double> weights) {
  return std::make_shared<const StateSpace>(std::move(labels), std::move(weights));
}

SpacePtr StateSpace::counting(std::size_t n) {
  std::vector<std::string> labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) labels.push_back("s" + std::to_string(i));
  return make(std::move(labels), std::vector<double>(n, 1.0));
}

bool same_space(const StateSpace& a, const StateSpace& b) noexcept { return &a == &b || a == b; }

void require_same_space(const Density& a, const Density& b) {
  if (!same_space(*a.space(), *b.space())) fail(ErrorCode::SpaceMismatch, "densities live on different spaces");
}

void require_length(const StateSpace& space, std::size_t n, const char* what) {
  if (n != space.size()) {
    fail(ErrorCode::SpaceMismatch, std::string(what) + " has " + std::to_string(n) + " entries, space has " +
                                       std::to_string(space.size()));
  }
}

Density make_density(const SpacePtr& space, std::span<const double> raw) {
  if (!space) fail(ErrorCode::InvalidArgument, "null state space");
  require_length(*space, raw.size(), "raw density");
  double total = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) fail(ErrorCode::InvalidArgument, "density entries must be finite");
    if (raw[i] < 0.0) fail(ErrorCode::NegativeEntry, "density entry " + std::to_string(i) + " is negative");
    total += raw[i] * space->weight(i);
  }
  if (!(total > 0.0)) fail(ErrorCode::AllZero, "density has no mass");
  std::vector<double> values(raw.begin(), raw.end());
  for (double& v : values) v /= total;
  return Density(space, std::move(values));
}

double Density::mass(const StateMask& mask) const {
  double total = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    if (mask[i]) total += mass(i);
  }
  return total;
}

StateMask Density::support() const {
  StateMask mask(size());
  for (std::size_t i = 0; i < size(); ++i) mask[i] = values_[i] > 0.0;
  return mask;
}

MetricValue MetricValue::finite(double v) {
  if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::InvalidArgument, "finite metric values must be >= 0");
  MetricValue m;
  m.value_ = v;
  return m;
}

MetricValue tv_distance(const Density& p, const Density& q) {
  require_same_space(p, q);
  const auto w = p.space()->weights();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]) * w[i];
  return MetricValue::finite(std::clamp(0.5 * total, 0.0, 1.0));
}

MetricValue kl_divergence(const Density& p, const Density& q) {
  require_same_space(p, q);
  const auto w = p.space()->weights();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return MetricValue::infinity();
    total += p[i] * std::log(p[i] / q[i]) * w[i];
  }
  // Gibbs: negative values are pure cancellation error.
  return MetricValue::finite(std::max(total, 0.0));
}

MetricValue hilbert_metric(std::span<const double> u, std::span<const double> v, const StateMask& support) {
  if (u.size() != v.size() || u.size() != support.size()) {
    fail(ErrorCode::SpaceMismatch, "hilbert_metric arguments differ in length");
  }
  double beta_uv = 0.0;
  double beta_vu = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!support[i]) continue;
    if (u[i] < 0.0 || v[i] < 0.0) fail(ErrorCode::NegativeEntry, "hilbert_metric needs nonnegative vectors");
    if (u[i] == 0.0 && v[i] == 0.0) continue;
    if (u[i] == 0.0 || v[i] == 0.0) return MetricValue::infinity();
    any = true;
    beta_uv = std::max(beta_uv, u[i] / v[i]);
    beta_vu = std::max(beta_vu, v[i] / u[i]);
  }
  if (!any) fail(ErrorCode::EmptySupport, "hilbert_metric support has no informative state");
  return MetricValue::finite(std::max(std::log(beta_uv * beta_vu), 0.0));
}

double expectation(const Density& p, std::span<const double> f) {
  require_length(*p.space(), f.size(), "expectation integrand");
  const auto w = p.space()->weights();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += f[i] * p[i] * w[i];
  return total;
}

}  // namespace curaloop
