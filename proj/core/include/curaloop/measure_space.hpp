#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace curaloop {

/// Finite state space with a strictly positive baseline weight per state.
class StateSpace {
 public:
  StateSpace(std::vector<std::string> labels, std::vector<double> weights);

  static std::shared_ptr<const StateSpace> make(std::vector<std::string> labels,
                                                std::vector<double> weights);
  /// n states labelled s0..s{n-1}, unit weights.
  static std::shared_ptr<const StateSpace> counting(std::size_t n);

  [[nodiscard]] std::size_t size() const noexcept { return weights_.size(); }
  [[nodiscard]] const std::vector<std::string>& labels() const noexcept { return labels_; }
  [[nodiscard]] std::span<const double> weights() const noexcept { return weights_; }
  [[nodiscard]] double weight(std::size_t i) const { return weights_[i]; }

  bool operator==(const StateSpace&) const = default;

 private:
  std::vector<std::string> labels_;
  std::vector<double> weights_;
};

using SpacePtr = std::shared_ptr<const StateSpace>;
/// Per-state membership flags.
using StateMask = std::vector<bool>;

/// Nonnegative per-state values whose weighted sum is one: a density with
/// respect to the space's baseline weights. Only constructible through
/// make_density, which enforces the normalization.
class Density {
 public:
  [[nodiscard]] const SpacePtr& space() const noexcept { return space_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  /// Probability of state i: value times baseline weight.
  [[nodiscard]] double mass(std::size_t i) const { return values_[i] * space_->weight(i); }
  [[nodiscard]] double mass(const StateMask& mask) const;
  [[nodiscard]] StateMask support() const;

 private:
  friend Density make_density(const SpacePtr&, std::span<const double>);
  Density(SpacePtr space, std::vector<double> values) : space_(std::move(space)), values_(std::move(values)) {}

  SpacePtr space_;
  std::vector<double> values_;
};

/// Rescales raw so that sum(values * weights) == 1.
/// Throws AllZero, NegativeEntry, InvalidArgument (non-finite entry) or
/// SpaceMismatch (length).
Density make_density(const SpacePtr& space, std::span<const double> raw);
inline Density make_density(const SpacePtr& space, std::initializer_list<double> raw) {
  return make_density(space, std::span<const double>(raw.begin(), raw.size()));
}

bool same_space(const StateSpace& a, const StateSpace& b) noexcept;
void require_same_space(const Density& a, const Density& b);
void require_length(const StateSpace& space, std::size_t n, const char* what);

/// A nonnegative discrepancy that may legitimately be +infinity.
class MetricValue {
 public:
  constexpr MetricValue() = default;
  static MetricValue finite(double v);
  static constexpr MetricValue infinity() noexcept {
    MetricValue m;
    m.value_ = std::numeric_limits<double>::infinity();
    return m;
  }

  [[nodiscard]] constexpr bool is_infinite() const noexcept {
    return value_ == std::numeric_limits<double>::infinity();
  }
  [[nodiscard]] constexpr bool is_finite() const noexcept { return !is_infinite(); }
  /// Raw value; +inf for the infinite marker.
  [[nodiscard]] constexpr double value() const noexcept { return value_; }

  constexpr auto operator<=>(const MetricValue&) const = default;

 private:
  double value_ = 0.0;
};

MetricValue tv_distance(const Density& p, const Density& q);
/// KL(p || q) with 0 log 0 = 0; +inf when p charges a state q does not.
MetricValue kl_divergence(const Density& p, const Density& q);
/// log(beta(u,v) * beta(v,u)) over the masked states. States where both u
/// and v vanish carry no projective information and are skipped.
MetricValue hilbert_metric(std::span<const double> u, std::span<const double> v, const StateMask& support);
double expectation(const Density& p, std::span<const double> f);

}  // namespace curaloop
