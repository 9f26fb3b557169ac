#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curaloop/measure_space.hpp"
#include "curaloop/preference_model.hpp"
#include "curaloop/rng.hpp"

namespace curaloop {

/// Candidate-pool size: a finite K >= 1 or the infinite-pool limit.
class PoolSize {
 public:
  static PoolSize finite(int k);
  static constexpr PoolSize infinite() noexcept { return PoolSize(); }

  [[nodiscard]] constexpr bool is_infinite() const noexcept { return k_ == 0; }
  [[nodiscard]] constexpr bool is_finite() const noexcept { return k_ != 0; }
  /// Finite pool size. Precondition: is_finite().
  [[nodiscard]] int k() const;
  [[nodiscard]] std::string to_string() const;

  constexpr bool operator==(const PoolSize&) const = default;

 private:
  constexpr PoolSize() = default;
  int k_ = 0;
};

struct Atom {
  double value = 0.0;
  double mass = 0.0;
};

/// Finite law on positive reals, atoms sorted by value. Atoms closer than
/// the relative merge tolerance are fused (mass-weighted value).
class ValueDistribution {
 public:
  static constexpr double kMergeRelTol = 1e-12;

  ValueDistribution() = default;
  static ValueDistribution from_atoms(std::vector<Atom> atoms, double merge_rel_tol = kMergeRelTol);
  /// The point mass at zero: the law of an empty sum.
  static ValueDistribution zero_sum();

  [[nodiscard]] const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  [[nodiscard]] std::size_t size() const noexcept { return atoms_.size(); }
  [[nodiscard]] double total_mass() const noexcept;

  /// Law of the sum of independent draws from *this and other. Throws
  /// SupportOverflow once the merged support exceeds cap.
  [[nodiscard]] ValueDistribution convolve(const ValueDistribution& other, std::size_t cap,
                                           double merge_rel_tol = kMergeRelTol) const;

 private:
  std::vector<Atom> atoms_;
};

enum class KernelMethod { ExactK, MonteCarloK, InfinitePool };
std::string to_string(KernelMethod method);

struct KernelEstimate {
  std::vector<double> h_values;
  KernelMethod method = KernelMethod::ExactK;
  PoolSize pool = PoolSize::infinite();
  /// Per-state standard errors; MonteCarloK only.
  std::optional<std::vector<double>> std_errors;
};

/// Law of exp(r(X) + eps) for X ~ p and independent stationary noise.
/// Throws UnsupportedNoise for DirectQ models.
ValueDistribution utility_distribution(const Density& p, const PreferenceModel& model);

struct ExactKernelOptions {
  std::size_t support_cap = 2'000'000;
  double merge_rel_tol = ValueDistribution::kMergeRelTol;
};

/// H_p^K(x) = E[K u/(u + S)] with u the utility of x and S the sum of K-1
/// i.i.d. competitor utilities, evaluated through the exact law of S.
KernelEstimate kernel_finite_exact(const Density& p, const PreferenceModel& model, int k,
                                   const ExactKernelOptions& options = {});

/// Same expectation by simulation. Streams are fixed per (state, block), so
/// the result depends on the seed only, never on `workers`.
KernelEstimate kernel_finite_mc(const Density& p, const PreferenceModel& model, int k, std::size_t n_samples,
                                std::uint64_t seed, unsigned workers = 1);

/// Q(x) / E_p[Q].
KernelEstimate kernel_infinite(const Density& p, const PreferenceModel& model);

/// Plackett-Luce top choice: index k with probability u_k / sum(u).
std::size_t pl_select(std::span<const double> utilities, StreamRng& rng);

/// p * H, the density of the curated sample. For deterministic kernels the
/// product must already be normalized up to 1e-8 (NormalizationDrift).
Density curated_density(const Density& p, const KernelEstimate& kernel);

}  // namespace curaloop
