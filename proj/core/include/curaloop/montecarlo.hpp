#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "curaloop/measure_space.hpp"
#include "curaloop/preference_model.hpp"
#include "curaloop/retraining_dynamics.hpp"

namespace curaloop {

struct EmpiricalHistogram {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
};

/// Histogram as a density with respect to the baseline weights. Throws
/// DegenerateRound when total is zero.
Density histogram_density(const SpacePtr& space, const EmpiricalHistogram& hist);

/// n_rounds independent curation rounds at p: K candidates, iid noise per
/// candidate, Plackett-Luce pick; counts the winners. Rounds are grouped in
/// fixed blocks with their own streams, so the result depends only on seed.
EmpiricalHistogram curation_round(const Density& p, const PreferenceModel& model, int k, std::size_t n_rounds,
                                  std::uint64_t seed, unsigned workers = 1);

struct SelectionIdentityEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo estimate of E[sum_j p~_j 1_B(X_j)] over iid K-tuples, with
/// p~_j the Plackett-Luce choice probabilities.
SelectionIdentityEstimate selection_identity_estimate(const Density& p, const PreferenceModel& model, int k,
                                                      const StateMask& subset, std::size_t n_rounds,
                                                      std::uint64_t seed);

struct FiniteSampleTrajectory {
  std::vector<EmpiricalHistogram> histograms;
  /// Fitted densities, starting with p0.
  std::vector<Density> densities;
};

/// The sampled loop: per step, n_per_round curated samples, then the fit
/// alpha * p_ref + (1 - alpha) * histogram density (the empirical maximizer
/// of the retraining objective over all densities on a finite space).
FiniteSampleTrajectory finite_sample_trajectory(const Density& p0, const RegimeConfig& config,
                                                const PreferenceModel& model, std::size_t n_per_round,
                                                std::size_t steps, std::uint64_t seed);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double critical_value = 0.0;
  bool reject_at_1pct = false;
};

/// Pearson goodness of fit at the 1% level. Cells whose expected count is
/// below 5 are pooled; observations in zero-probability cells reject
/// outright. Throws InsufficientData when fewer than two cells remain.
ChiSquareResult gof_chi_square(const EmpiricalHistogram& observed, const Density& expected);

}  // namespace curaloop
