#include "curaloop/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>

#include "curaloop/choice_kernel.hpp"
#include "curaloop/error.hpp"
#include "curaloop/parallel.hpp"
#include "curaloop/rng.hpp"

namespace curaloop {
namespace {

constexpr std::size_t kRoundsPerBlock = 8192;

// Everything needed to play one curation round: samplers for candidate
// states and noise atoms, plus rewards shifted so utilities lie in (0, 1].
struct RoundSampler {
  RoundSampler(const Density& p, const PreferenceModel& model) : reward(model.reward()), noise(model.noise()) {
    if (!same_space(*p.space(), *model.space())) fail(ErrorCode::SpaceMismatch, "density and model differ in space");
    if (!noise.is_stationary()) fail(ErrorCode::UnsupportedNoise, "finite-sample curation needs the noise law");
    std::vector<double> masses(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) masses[i] = p.mass(i);
    states = DiscreteSampler(masses);
    noise_atoms = DiscreteSampler(noise.probs());
    shift = *std::max_element(reward.begin(), reward.end()) +
            *std::max_element(noise.support().begin(), noise.support().end());
  }

  // Fills candidates/utilities for one round of size k.
  void draw(StreamRng& rng, int k, std::vector<std::size_t>& candidates, std::vector<double>& utilities) const {
    for (int c = 0; c < k; ++c) {
      const std::size_t y = states(rng);
      candidates[c] = y;
      utilities[c] = std::exp(reward[y] + noise.support()[noise_atoms(rng)] - shift);
    }
  }

  const std::vector<double>& reward;
  const NoiseModel& noise;
  DiscreteSampler states;
  DiscreteSampler noise_atoms;
  double shift = 0.0;
};

}  // namespace

Density histogram_density(const SpacePtr& space, const EmpiricalHistogram& hist) {
  require_length(*space, hist.counts.size(), "histogram");
  if (hist.total == 0) fail(ErrorCode::DegenerateRound, "histogram is empty");
  std::vector<double> raw(hist.counts.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<double>(hist.counts[i]) / (static_cast<double>(hist.total) * space->weight(i));
  }
  return make_density(space, raw);
}

EmpiricalHistogram curation_round(const Density& p, const PreferenceModel& model, int k, std::size_t n_rounds,
                                  std::uint64_t seed, unsigned workers) {
  if (k < 1) fail(ErrorCode::InvalidArgument, "K must be >= 1");
  if (n_rounds < 1) fail(ErrorCode::InvalidArgument, "n_rounds must be >= 1");
  const RoundSampler sampler(p, model);
  const std::size_t n_blocks = (n_rounds + kRoundsPerBlock - 1) / kRoundsPerBlock;
  std::vector<std::vector<std::uint64_t>> block_counts(n_blocks, std::vector<std::uint64_t>(p.size(), 0));
  const StreamRng root(seed, 0xc0a7edull);

  parallel_for(n_blocks, workers, [&](std::size_t b) {
    StreamRng rng = root.split(b);
    std::vector<std::size_t> candidates(k);
    std::vector<double> utilities(k);
    const std::size_t end = std::min(n_rounds, (b + 1) * kRoundsPerBlock);
    for (std::size_t n = b * kRoundsPerBlock; n < end; ++n) {
      sampler.draw(rng, k, candidates, utilities);
      ++block_counts[b][candidates[pl_select(utilities, rng)]];
    }
  });

  EmpiricalHistogram hist;
  hist.counts.assign(p.size(), 0);
  for (const auto& counts : block_counts) {
    for (std::size_t i = 0; i < counts.size(); ++i) hist.counts[i] += counts[i];
  }
  hist.total = n_rounds;
  return hist;
}

SelectionIdentityEstimate selection_identity_estimate(const Density& p, const PreferenceModel& model, int k,
                                                      const StateMask& subset, std::size_t n_rounds,
                                                      std::uint64_t seed) {
  if (k < 1 || n_rounds < 2) fail(ErrorCode::InvalidArgument, "need K >= 1 and at least two rounds");
  require_length(*p.space(), subset.size(), "subset mask");
  const RoundSampler sampler(p, model);
  StreamRng rng(seed, 0x5e1ec7ull);
  std::vector<std::size_t> candidates(k);
  std::vector<double> utilities(k);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t n = 1; n <= n_rounds; ++n) {
    sampler.draw(rng, k, candidates, utilities);
    double total = 0.0;
    double hit = 0.0;
    for (int c = 0; c < k; ++c) {
      total += utilities[c];
      if (subset[candidates[c]]) hit += utilities[c];
    }
    const double value = hit / total;
    const double delta = value - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (value - mean);
  }
  const double variance = m2 / static_cast<double>(n_rounds - 1);
  return {mean, std::sqrt(variance / static_cast<double>(n_rounds))};
}

FiniteSampleTrajectory finite_sample_trajectory(const Density& p0, const RegimeConfig& config,
                                                const PreferenceModel& model, std::size_t n_per_round,
                                                std::size_t steps, std::uint64_t seed) {
  if (config.pool().is_infinite()) {
    fail(ErrorCode::InvalidArgument, "no finite-sample simulator for the infinite pool");
  }
  FiniteSampleTrajectory out;
  out.densities.push_back(p0);
  for (std::size_t t = 0; t < steps; ++t) {
    const Density& current = out.densities.back();
    EmpiricalHistogram hist =
        curation_round(current, model, config.pool().k(), n_per_round, mix64(seed ^ mix64(t + 1)), config.workers());
    if (hist.total == 0) fail(ErrorCode::DegenerateRound, "curation round produced no samples");
    const Density curated = histogram_density(current.space(), hist);
    if (config.is_mixed()) {
      const Density& ref = config.reference();
      std::vector<double> raw(current.size());
      for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = config.alpha() * ref[i] + (1.0 - config.alpha()) * curated[i];
      }
      out.densities.push_back(make_density(current.space(), raw));
    } else {
      out.densities.push_back(curated);
    }
    out.histograms.push_back(std::move(hist));
  }
  return out;
}

ChiSquareResult gof_chi_square(const EmpiricalHistogram& observed, const Density& expected) {
  require_length(*expected.space(), observed.counts.size(), "histogram");
  if (observed.total == 0) fail(ErrorCode::InsufficientData, "empty histogram");
  const double total = static_cast<double>(observed.total);

  struct Cell {
    double expected;
    double observed;
  };
  std::vector<Cell> cells;
  bool impossible_hit = false;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double e = total * expected.mass(i);
    const double o = static_cast<double>(observed.counts[i]);
    if (e == 0.0) {
      impossible_hit = impossible_hit || o > 0.0;
      continue;
    }
    cells.push_back({e, o});
  }

  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.expected < b.expected; });
  std::vector<Cell> pooled;
  Cell small{0.0, 0.0};
  for (const Cell& c : cells) {
    if (c.expected < 5.0) {
      small.expected += c.expected;
      small.observed += c.observed;
    } else {
      pooled.push_back(c);
    }
  }
  if (small.expected > 0.0) {
    if (small.expected < 5.0 && !pooled.empty()) {
      pooled.front().expected += small.expected;
      pooled.front().observed += small.observed;
    } else {
      pooled.push_back(small);
    }
  }

  ChiSquareResult result;
  result.dof = static_cast<int>(pooled.size()) - 1;
  if (result.dof < 1) fail(ErrorCode::InsufficientData, "fewer than two cells after pooling");
  for (const Cell& c : pooled) {
    const double d = c.observed - c.expected;
    result.statistic += d * d / c.expected;
  }
  if (impossible_hit) result.statistic = std::numeric_limits<double>::infinity();
  result.critical_value =
      boost::math::quantile(boost::math::chi_squared(static_cast<double>(result.dof)), 0.99);
  result.reject_at_1pct = result.statistic > result.critical_value;
  return result;
}

}  // namespace curaloop
