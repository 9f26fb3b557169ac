#include "curaloop/choice_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "curaloop/error.hpp"
#include "curaloop/parallel.hpp"

namespace curaloop {

PoolSize PoolSize::finite(int k) {
  if (k < 1) fail(ErrorCode::InvalidArgument, "pool size K must be >= 1");
  PoolSize p;
  p.k_ = k;
  return p;
}

int PoolSize::k() const {
  if (is_infinite()) fail(ErrorCode::InvalidArgument, "infinite pool has no finite K");
  return k_;
}

std::string PoolSize::to_string() const { return is_infinite() ? "inf" : std::to_string(k_); }

std::string to_string(KernelMethod method) {
  switch (method) {
    case KernelMethod::ExactK: return "exact";
    case KernelMethod::MonteCarloK: return "monte_carlo";
    case KernelMethod::InfinitePool: return "infinite_pool";
  }
  return "unknown";
}

namespace {

// Fuses runs of atoms whose values agree to within merge_rel_tol.
std::vector<Atom> compress_sorted(const std::vector<Atom>& sorted, double merge_rel_tol) {
  std::vector<Atom> out;
  out.reserve(sorted.size());
  for (const Atom& a : sorted) {
    if (a.mass == 0.0) continue;
    if (!out.empty() && a.value - out.back().value <= merge_rel_tol * a.value) {
      Atom& g = out.back();
      const double mass = g.mass + a.mass;
      g.value = (g.value * g.mass + a.value * a.mass) / mass;
      g.mass = mass;
    } else {
      out.push_back(a);
    }
  }
  return out;
}

std::vector<Atom> merge_sorted(const std::vector<Atom>& a, const std::vector<Atom>& b, double merge_rel_tol) {
  std::vector<Atom> merged;
  merged.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(merged),
             [](const Atom& x, const Atom& y) { return x.value < y.value; });
  return compress_sorted(merged, merge_rel_tol);
}

void require_stationary(const PreferenceModel& model, const char* op) {
  if (!model.noise().is_stationary()) {
    fail(ErrorCode::UnsupportedNoise, std::string(op) + " needs the full noise law; DirectQ only fixes its mean");
  }
}

void require_model_space(const Density& p, const PreferenceModel& model) {
  if (!same_space(*p.space(), *model.space())) fail(ErrorCode::SpaceMismatch, "density and model differ in space");
}

// Log of the common factor divided out of every utility. Choice ratios are
// unaffected; the shifted utilities lie in (0, 1].
double utility_log_shift(const PreferenceModel& model) {
  const auto& r = model.reward();
  const auto& e = model.noise().support();
  return *std::max_element(r.begin(), r.end()) + *std::max_element(e.begin(), e.end());
}

ValueDistribution shifted_utility_distribution(const Density& p, const PreferenceModel& model, double log_shift) {
  const auto& r = model.reward();
  const auto& noise = model.noise();
  std::vector<Atom> atoms;
  atoms.reserve(p.size() * noise.support().size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double mass = p.mass(i);
    if (mass == 0.0) continue;
    for (std::size_t j = 0; j < noise.support().size(); ++j) {
      if (noise.probs()[j] == 0.0) continue;
      atoms.push_back({std::exp(r[i] + noise.support()[j] - log_shift), mass * noise.probs()[j]});
    }
  }
  return ValueDistribution::from_atoms(std::move(atoms));
}

}  // namespace

ValueDistribution ValueDistribution::from_atoms(std::vector<Atom> atoms, double merge_rel_tol) {
  for (const Atom& a : atoms) {
    if (!(a.value >= 0.0) || !std::isfinite(a.value)) fail(ErrorCode::InvalidArgument, "atom values must be finite, >= 0");
    if (!(a.mass >= 0.0)) fail(ErrorCode::NegativeEntry, "atom masses must be nonnegative");
  }
  std::sort(atoms.begin(), atoms.end(), [](const Atom& x, const Atom& y) { return x.value < y.value; });
  ValueDistribution d;
  d.atoms_ = compress_sorted(atoms, merge_rel_tol);
  return d;
}

ValueDistribution ValueDistribution::zero_sum() {
  ValueDistribution d;
  d.atoms_ = {{0.0, 1.0}};
  return d;
}

double ValueDistribution::total_mass() const noexcept {
  double total = 0.0;
  for (const Atom& a : atoms_) total += a.mass;
  return total;
}

ValueDistribution ValueDistribution::convolve(const ValueDistribution& other, std::size_t cap,
                                              double merge_rel_tol) const {
  std::vector<Atom> result;
  std::vector<Atom> shifted(atoms_.size());
  for (const Atom& b : other.atoms_) {
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      shifted[i] = {atoms_[i].value + b.value, atoms_[i].mass * b.mass};
    }
    result = merge_sorted(result, shifted, merge_rel_tol);
    if (result.size() > cap) {
      fail(ErrorCode::SupportOverflow, "convolution support exceeds " + std::to_string(cap) +
                                           " atoms; use the Monte Carlo kernel");
    }
  }
  ValueDistribution d;
  d.atoms_ = std::move(result);
  return d;
}

ValueDistribution utility_distribution(const Density& p, const PreferenceModel& model) {
  require_model_space(p, model);
  require_stationary(model, "utility_distribution");
  return shifted_utility_distribution(p, model, 0.0);
}

KernelEstimate kernel_finite_exact(const Density& p, const PreferenceModel& model, int k,
                                   const ExactKernelOptions& options) {
  require_model_space(p, model);
  require_stationary(model, "kernel_finite_exact");
  KernelEstimate est;
  est.method = KernelMethod::ExactK;
  est.pool = PoolSize::finite(k);
  est.h_values.assign(p.size(), 1.0);
  if (k == 1) return est;

  const double log_shift = utility_log_shift(model);
  const ValueDistribution base = shifted_utility_distribution(p, model, log_shift);
  ValueDistribution competitors = base;
  for (int step = 2; step < k; ++step) {
    competitors = competitors.convolve(base, options.support_cap, options.merge_rel_tol);
  }
  if (competitors.size() > options.support_cap) {
    fail(ErrorCode::SupportOverflow, "competitor-sum support exceeds the cap");
  }

  const auto& r = model.reward();
  const auto& noise = model.noise();
  const double kd = static_cast<double>(k);
  // H depends on the state only through its reward.
  std::map<double, double> by_reward;
  for (std::size_t x = 0; x < p.size(); ++x) {
    if (auto it = by_reward.find(r[x]); it != by_reward.end()) {
      est.h_values[x] = it->second;
      continue;
    }
    double h = 0.0;
    for (std::size_t j = 0; j < noise.support().size(); ++j) {
      if (noise.probs()[j] == 0.0) continue;
      const double u = std::exp(r[x] + noise.support()[j] - log_shift);
      double inner = 0.0;
      for (const Atom& s : competitors.atoms()) inner += s.mass * (u / (u + s.value));
      h += noise.probs()[j] * inner;
    }
    est.h_values[x] = kd * h;
    by_reward.emplace(r[x], est.h_values[x]);
  }
  return est;
}

KernelEstimate kernel_finite_mc(const Density& p, const PreferenceModel& model, int k, std::size_t n_samples,
                                std::uint64_t seed, unsigned workers) {
  require_model_space(p, model);
  require_stationary(model, "kernel_finite_mc");
  if (n_samples < 100) fail(ErrorCode::InvalidArgument, "Monte Carlo kernel needs n_samples >= 100");
  KernelEstimate est;
  est.method = KernelMethod::MonteCarloK;
  est.pool = PoolSize::finite(k);
  est.h_values.assign(p.size(), 1.0);
  est.std_errors = std::vector<double>(p.size(), 0.0);
  if (k == 1) return est;

  constexpr std::size_t kBlock = 4096;
  const std::size_t n_blocks = (n_samples + kBlock - 1) / kBlock;
  const std::size_t n_states = p.size();
  const double log_shift = utility_log_shift(model);
  const auto& r = model.reward();
  const auto& noise = model.noise();

  std::vector<double> masses(n_states);
  for (std::size_t i = 0; i < n_states; ++i) masses[i] = p.mass(i);
  const DiscreteSampler draw_state(masses);
  const DiscreteSampler draw_noise(noise.probs());
  const double kd = static_cast<double>(k);

  struct BlockStats {
    double count = 0.0;
    double mean = 0.0;
    double m2 = 0.0;
  };
  std::vector<BlockStats> blocks(n_states * n_blocks);
  const StreamRng root(seed);

  parallel_for(blocks.size(), workers, [&](std::size_t task) {
    const std::size_t x = task / n_blocks;
    const std::size_t b = task % n_blocks;
    StreamRng rng = root.split(x).split(b);
    const std::size_t begin = b * kBlock;
    const std::size_t end = std::min(n_samples, begin + kBlock);
    BlockStats s;
    for (std::size_t n = begin; n < end; ++n) {
      const double u = std::exp(r[x] + noise.support()[draw_noise(rng)] - log_shift);
      double sum = 0.0;
      for (int c = 1; c < k; ++c) {
        const std::size_t y = draw_state(rng);
        sum += std::exp(r[y] + noise.support()[draw_noise(rng)] - log_shift);
      }
      const double value = kd * u / (u + sum);
      s.count += 1.0;
      const double delta = value - s.mean;
      s.mean += delta / s.count;
      s.m2 += delta * (value - s.mean);
    }
    blocks[task] = s;
  });

  for (std::size_t x = 0; x < n_states; ++x) {
    BlockStats total;
    for (std::size_t b = 0; b < n_blocks; ++b) {
      const BlockStats& s = blocks[x * n_blocks + b];
      const double count = total.count + s.count;
      const double delta = s.mean - total.mean;
      total.mean += delta * s.count / count;
      total.m2 += s.m2 + delta * delta * total.count * s.count / count;
      total.count = count;
    }
    est.h_values[x] = total.mean;
    const double variance = total.count > 1.0 ? total.m2 / (total.count - 1.0) : 0.0;
    (*est.std_errors)[x] = std::sqrt(variance / total.count);
  }
  return est;
}

KernelEstimate kernel_infinite(const Density& p, const PreferenceModel& model) {
  require_model_space(p, model);
  const auto& q = model.q_values();
  const double mean = expectation(p, q);
  KernelEstimate est;
  est.method = KernelMethod::InfinitePool;
  est.pool = PoolSize::infinite();
  est.h_values.resize(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) est.h_values[i] = q[i] / mean;
  return est;
}

std::size_t pl_select(std::span<const double> utilities, StreamRng& rng) {
  if (utilities.empty()) fail(ErrorCode::InvalidArgument, "pl_select needs at least one candidate");
  double total = 0.0;
  for (double u : utilities) {
    if (!(u > 0.0) || !std::isfinite(u)) fail(ErrorCode::NonPositiveUtility, "utilities must be finite and > 0");
    total += u;
  }
  const double target = rng.uniform() * total;
  double running = 0.0;
  for (std::size_t k = 0; k < utilities.size(); ++k) {
    running += utilities[k];
    if (target < running) return k;
  }
  return utilities.size() - 1;
}

Density curated_density(const Density& p, const KernelEstimate& kernel) {
  require_length(*p.space(), kernel.h_values.size(), "kernel");
  std::vector<double> raw(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    raw[i] = p[i] * kernel.h_values[i];
    total += raw[i] * p.space()->weight(i);
  }
  if (kernel.method != KernelMethod::MonteCarloK && !(std::abs(total - 1.0) < 1e-8)) {
    fail(ErrorCode::NormalizationDrift, "E_p[H] deviates from 1 by " + std::to_string(total - 1.0));
  }
  return make_density(p.space(), raw);
}

}  // namespace curaloop
