#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "curaloop/error.hpp"
#include "curaloop/experiment.hpp"
#include "curaloop/fixed_points.hpp"
#include "curaloop/montecarlo.hpp"
#include "curaloop/rng.hpp"
#include "experiment_detail.hpp"

namespace curaloop {

std::string to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::Skipped: return "skipped";
  }
  return "unknown";
}

const VerifyCheck* VerifyReport::find(std::string_view id) const {
  for (const VerifyCheck& c : checks) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Density random_density(const SpacePtr& space, StreamRng& rng, double zero_prob = 0.0) {
  std::vector<double> raw(space->size());
  bool any = false;
  for (double& v : raw) {
    v = rng.uniform() < zero_prob ? 0.0 : 0.05 + rng.uniform();
    any = any || v > 0.0;
  }
  if (!any) raw[rng() % raw.size()] = 1.0;
  return make_density(space, raw);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// Everything the checks share, built once.
struct Context {
  const ExperimentConfig& cfg;
  PreferenceModel model;
  Density p0;
  std::optional<Density> ref;
  RegimeConfig exact;
  Regime regime;
  bool stationary;
  StreamRng root;
  std::vector<TrajectoryRecord> records;
  detail::LimitOutcome limit;

  explicit Context(const ExperimentConfig& c)
      : cfg(c),
        model(c.model()),
        p0(c.initial_density()),
        ref(c.reference_density()),
        exact(RegimeConfig::make(c.alpha, c.pool, c.reference_density(), KernelChoice::exact(), c.seed, 1)),
        regime(exact.regime()),
        stationary(model.noise().is_stationary()),
        root(c.seed, 0x7e21f7ull) {
    limit = detail::compute_limit(c, model, exact);
    std::optional<Density> finite_limit;
    if (regime == Regime::MixedFinite && limit.limit) finite_limit = limit.limit->density;
    if (stationary || c.pool.is_infinite() || c.pool.k() == 1) {
      records = run_trajectory(p0, exact, model, c.t_max, c.stop_tol, finite_limit);
    }
  }

  [[nodiscard]] StreamRng rng_for(std::uint64_t check) const { return root.split(check); }
  [[nodiscard]] bool pure() const { return regime == Regime::PureFinite || regime == Regime::PureInfinite; }
  [[nodiscard]] bool finite_kernel_available() const { return stationary; }
  /// Pool sizes to exercise the finite kernel with.
  [[nodiscard]] std::vector<int> kernel_ks() const {
    if (cfg.pool.is_finite()) return {cfg.pool.k()};
    return {2, 3, 4};
  }
};

class Builder {
 public:
  void add(std::string id, std::string claim, bool pass, double measured, double bound, std::string note = {},
           bool heuristic = false) {
    VerifyCheck c;
    c.id = std::move(id);
    c.claim = std::move(claim);
    c.status = pass ? CheckStatus::Pass : CheckStatus::Fail;
    c.measured = measured;
    c.bound = bound;
    c.slack = bound - measured;
    c.heuristic = heuristic;
    c.note = std::move(note);
    report.checks.push_back(std::move(c));
  }

  // measured <= bound.
  void at_most(std::string id, std::string claim, double measured, double bound, std::string note = {}) {
    const bool pass = measured <= bound;
    add(std::move(id), std::move(claim), pass, measured, bound, std::move(note));
  }

  void skip(std::string id, std::string claim, std::string note) {
    VerifyCheck c;
    c.id = std::move(id);
    c.claim = std::move(claim);
    c.status = CheckStatus::Skipped;
    c.note = std::move(note);
    report.checks.push_back(std::move(c));
  }

  // Runs body; a library error turns into a failed check.
  void guarded(const std::string& id, const std::string& claim, const std::function<void()>& body) {
    const std::size_t before = report.checks.size();
    try {
      body();
    } catch (const Error& e) {
      report.checks.resize(before);
      add(id, claim, false, kInf, 0.0, e.what());
    }
  }

  VerifyReport report;
};

// ---- measure_space ----

void metric_checks(const Context& ctx, Builder& b) {
  const SpacePtr& space = ctx.p0.space();
  b.guarded("metric.tv_axioms", "tv is a metric with values in [0,1]", [&] {
    StreamRng rng = ctx.rng_for(1);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Density p = random_density(space, rng, 0.3);
      const Density q = random_density(space, rng, 0.3);
      const Density r = random_density(space, rng, 0.3);
      const double pq = tv_distance(p, q).value();
      worst = std::max(worst, std::abs(pq - tv_distance(q, p).value()));
      worst = std::max(worst, tv_distance(p, r).value() - pq - tv_distance(q, r).value());
      worst = std::max(worst, tv_distance(p, p).value());
      worst = std::max({worst, -pq, pq - 1.0});
      if (pq <= 1e-12 && max_abs_diff(p.values(), q.values()) > 1e-9) worst = std::max(worst, 1.0);
    }
    b.at_most("metric.tv_axioms", "tv is a metric with values in [0,1]", worst, 1e-12);
  });

  b.guarded("metric.kl_nonnegative", "KL(p,q) >= 0 with equality iff p = q", [&] {
    StreamRng rng = ctx.rng_for(2);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Density p = random_density(space, rng, 0.3);
      const Density q = random_density(space, rng);
      const double kl = kl_divergence(p, q).value();
      worst = std::max({worst, -kl, kl_divergence(p, p).value()});
      if (kl == 0.0 && max_abs_diff(p.values(), q.values()) > 1e-9) worst = std::max(worst, 1.0);
    }
    b.at_most("metric.kl_nonnegative", "KL(p,q) >= 0 with equality iff p = q", worst, 1e-12);
  });

  b.guarded("metric.hilbert_projective", "Hilbert metric is scale invariant and satisfies the triangle inequality",
            [&] {
              StreamRng rng = ctx.rng_for(3);
              const StateMask all(space->size(), true);
              double worst = 0.0;
              for (int i = 0; i < 50; ++i) {
                const Density u = random_density(space, rng);
                const Density v = random_density(space, rng);
                const Density w = random_density(space, rng);
                const double lambda = std::exp(4.0 * rng.uniform() - 2.0);
                std::vector<double> scaled(u.values().begin(), u.values().end());
                for (double& x : scaled) x *= lambda;
                const double uv = hilbert_metric(u.values(), v.values(), all).value();
                worst = std::max(worst, std::abs(hilbert_metric(scaled, v.values(), all).value() - uv) /
                                            std::max(1.0, uv));
                worst = std::max(worst, hilbert_metric(u.values(), w.values(), all).value() - uv -
                                            hilbert_metric(v.values(), w.values(), all).value());
              }
              b.at_most("metric.hilbert_projective",
                        "Hilbert metric is scale invariant and satisfies the triangle inequality", worst, 1e-12);
            });

  b.guarded("metric.hilbert_controls_tv", "d_H(p_n, p) -> 0 forces tv(p_n, p) -> 0", [&] {
    StreamRng rng = ctx.rng_for(4);
    const StateMask all(space->size(), true);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      const Density p = random_density(space, rng);
      const Density q = random_density(space, rng);
      double previous_tv = kInf;
      for (int n = 1; n <= 40; ++n) {
        const double eps = std::ldexp(1.0, -n);
        std::vector<double> mix(p.size());
        for (std::size_t j = 0; j < mix.size(); ++j) mix[j] = (1.0 - eps) * p[j] + eps * q[j];
        const Density pn = make_density(space, mix);
        const double dh = hilbert_metric(pn.values(), p.values(), all).value();
        const double tv = tv_distance(pn, p).value();
        if (dh <= 1e-8) worst = std::max(worst, tv - 1e-8);
        worst = std::max(worst, tv - previous_tv - 1e-15);
        previous_tv = tv;
      }
    }
    b.at_most("metric.hilbert_controls_tv", "d_H(p_n, p) -> 0 forces tv(p_n, p) -> 0", worst, 0.0);
  });
}

// ---- preference_model ----

void preference_checks(const Context& ctx, Builder& b) {
  const std::size_t n = ctx.p0.size();
  b.guarded("preference.shift_invariance", "a constant reward shift leaves the maximizer set unchanged", [&] {
    double mismatches = 0.0;
    for (double c : {-3.7, 2.5, 10.0}) {
      const PreferenceModel shifted = perturb_model(ctx.model, PerturbationSpec(std::vector<double>(n, c)));
      if (shifted.maximizer_set() != ctx.model.maximizer_set()) mismatches += 1.0;
    }
    b.at_most("preference.shift_invariance", "a constant reward shift leaves the maximizer set unchanged", mismatches,
              0.0);
  });

  if (!ctx.stationary) {
    b.skip("preference.q_factorization", "Q(x)/Q(y) = exp(r(x) - r(y)) under stationary noise",
           "direct_q has no noise law");
  } else {
    const auto& q = ctx.model.q_values();
    const auto& r = ctx.model.reward();
    double worst = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
      for (std::size_t y = 0; y < n; ++y) worst = std::max(worst, std::abs(q[x] / q[y] / std::exp(r[x] - r[y]) - 1.0));
    }
    b.at_most("preference.q_factorization", "Q(x)/Q(y) = exp(r(x) - r(y)) under stationary noise", worst, 1e-12);
  }

  if (ctx.model.maximizer_set().size() == n) {
    b.skip("preference.a3_threshold_monotone", "moving reference mass onto A never raises the A3 threshold",
           "every state is a maximizer");
  } else {
    b.guarded("preference.a3_threshold_monotone", "moving reference mass onto A never raises the A3 threshold", [&] {
      StreamRng rng = ctx.rng_for(5);
      double worst = 0.0;
      for (int i = 0; i < 50; ++i) {
        const Density ref = random_density(ctx.p0.space(), rng);
        std::vector<double> moved(ref.values().begin(), ref.values().end());
        const double frac = rng.uniform();
        double taken = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (!ctx.model.is_maximizer(j)) {
            taken += frac * ref.mass(j);
            moved[j] *= 1.0 - frac;
          }
        }
        const std::size_t target = ctx.model.maximizer_set().front();
        moved[target] += taken / ctx.p0.space()->weight(target);
        const double before = a3_threshold(ctx.model, ref);
        const double after = a3_threshold(ctx.model, make_density(ctx.p0.space(), moved));
        worst = std::max(worst, after - before);
      }
      b.at_most("preference.a3_threshold_monotone", "moving reference mass onto A never raises the A3 threshold",
                worst, 1e-15);
    });
  }
}

// ---- choice_kernel ----

void kernel_checks(const Context& ctx, Builder& b) {
  const SpacePtr& space = ctx.p0.space();
  const std::size_t n = ctx.p0.size();

  b.guarded("kernel.normalization", "E_p[H] = 1 for the exact and infinite-pool kernels", [&] {
    StreamRng rng = ctx.rng_for(10);
    double worst = 0.0;
    for (int i = 0; i <= 20; ++i) {
      const Density p = i == 0 ? ctx.p0 : random_density(space, rng, 0.2);
      std::vector<KernelEstimate> kernels{kernel_infinite(p, ctx.model)};
      if (ctx.stationary) {
        for (int k : ctx.kernel_ks()) kernels.push_back(kernel_finite_exact(p, ctx.model, k));
      }
      for (const KernelEstimate& h : kernels) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += p.mass(j) * h.h_values[j];
        worst = std::max(worst, std::abs(mean - 1.0));
      }
    }
    b.at_most("kernel.normalization", "E_p[H] = 1 for the exact and infinite-pool kernels", worst, 1e-10);
  });

  if (!ctx.stationary) {
    for (const char* id : {"kernel.bounds", "kernel.shift_invariance", "kernel.large_k_limit", "kernel.mc_consistency",
                           "kernel.sampler_agreement", "kernel.selection_identity"}) {
      b.skip(id, "finite-pool kernel property", "direct_q has no noise law");
    }
    return;
  }

  b.guarded("kernel.bounds", "0 < H <= K, and H depends on x only through r(x)", [&] {
    StreamRng rng = ctx.rng_for(11);
    double worst = 0.0;
    for (int i = 0; i <= 20; ++i) {
      const Density p = i == 0 ? ctx.p0 : random_density(space, rng, 0.2);
      for (int k : ctx.kernel_ks()) {
        const auto h = kernel_finite_exact(p, ctx.model, k).h_values;
        for (std::size_t x = 0; x < n; ++x) {
          if (!(h[x] > 0.0)) worst = std::max(worst, 1.0);
          worst = std::max(worst, h[x] - static_cast<double>(k) - 1e-12);
          for (std::size_t y = 0; y < n; ++y) {
            if (ctx.model.reward()[x] == ctx.model.reward()[y]) worst = std::max(worst, rel_diff(h[x], h[y]) - 1e-12);
          }
        }
      }
    }
    b.at_most("kernel.bounds", "0 < H <= K, and H depends on x only through r(x)", worst, 0.0);
  });

  b.guarded("kernel.shift_invariance", "a constant reward shift leaves H unchanged", [&] {
    double worst = 0.0;
    for (double c : {-2.0, 0.75, 5.0}) {
      const PreferenceModel shifted = perturb_model(ctx.model, PerturbationSpec(std::vector<double>(n, c)));
      for (int k : ctx.kernel_ks()) {
        const auto h0 = kernel_finite_exact(ctx.p0, ctx.model, k).h_values;
        const auto h1 = kernel_finite_exact(ctx.p0, shifted, k).h_values;
        for (std::size_t x = 0; x < n; ++x) worst = std::max(worst, rel_diff(h0[x], h1[x]));
      }
      const auto i0 = kernel_infinite(ctx.p0, ctx.model).h_values;
      const auto i1 = kernel_infinite(ctx.p0, shifted).h_values;
      for (std::size_t x = 0; x < n; ++x) worst = std::max(worst, rel_diff(i0[x], i1[x]));
    }
    b.at_most("kernel.shift_invariance", "a constant reward shift leaves H unchanged", worst, 1e-12);
  });

  {
    const auto h_inf = kernel_infinite(ctx.p0, ctx.model).h_values;
    std::vector<double> deviations;
    std::string note;
    for (int k : {2, 4, 8, 16}) {
      try {
        deviations.push_back(max_abs_diff(kernel_finite_exact(ctx.p0, ctx.model, k).h_values, h_inf));
      } catch (const Error& e) {
        note = "stopped at K = " + std::to_string(k) + ": " + e.what();
        break;
      }
    }
    if (deviations.size() < 3) {
      b.skip("kernel.large_k_limit", "H^K approaches H^inf as K grows", note);
    } else {
      double increases = 0.0;
      for (std::size_t i = 1; i < deviations.size(); ++i) {
        if (deviations[i] > deviations[i - 1] + 1e-15) increases += 1.0;
      }
      std::ostringstream os;
      os << "max |H^K - H^inf| at K = 2,4,8,16:";
      for (double d : deviations) os << ' ' << d;
      if (!note.empty()) os << "; " << note;
      b.at_most("kernel.large_k_limit", "H^K approaches H^inf as K grows", increases, 0.0, os.str());
    }
  }

  b.guarded("kernel.mc_consistency", "|MC - exact| <= 5 standard errors on at least 95% of states", [&] {
    StreamRng rng = ctx.rng_for(12);
    std::size_t hits = 0;
    std::size_t total = 0;
    for (int i = 0; i < 20; ++i) {
      const Density p = i == 0 ? ctx.p0 : random_density(space, rng, 0.2);
      for (int k : ctx.kernel_ks()) {
        const auto exact = kernel_finite_exact(p, ctx.model, k);
        const auto mc = kernel_finite_mc(p, ctx.model, k, 20000, rng(), 1);
        for (std::size_t x = 0; x < n; ++x) {
          ++total;
          if (std::abs(mc.h_values[x] - exact.h_values[x]) <= 5.0 * (*mc.std_errors)[x] + 1e-12) ++hits;
        }
      }
    }
    const double frac = static_cast<double>(hits) / static_cast<double>(total);
    b.add("kernel.mc_consistency", "|MC - exact| <= 5 standard errors on at least 95% of states", frac >= 0.95, frac,
          0.95);
  });

  b.guarded("kernel.sampler_agreement", "curation rounds follow p * H (chi-square at 1%)", [&] {
    const int k = ctx.kernel_ks().front();
    const Density expected = curated_density(ctx.p0, kernel_finite_exact(ctx.p0, ctx.model, k));
    std::size_t rejections = 0;
    std::size_t seeds = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const EmpiricalHistogram hist = curation_round(ctx.p0, ctx.model, k, 100000, mix64(ctx.cfg.seed + s), 1);
      try {
        if (gof_chi_square(hist, expected).reject_at_1pct) ++rejections;
        ++seeds;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::InsufficientData) throw;
      }
    }
    if (seeds == 0) {
      b.skip("kernel.sampler_agreement", "curation rounds follow p * H (chi-square at 1%)",
             "p0 * H has a single cell");
      return;
    }
    b.at_most("kernel.sampler_agreement", "curation rounds follow p * H (chi-square at 1%)",
              static_cast<double>(rejections), 0.05 * static_cast<double>(seeds),
              std::to_string(rejections) + " of " + std::to_string(seeds) + " seeds rejected");
  });

  b.guarded("kernel.selection_identity", "mean of sum_j p~_j 1_B(X_j) equals S_p(B)", [&] {
    StreamRng rng = ctx.rng_for(13);
    const int k = ctx.kernel_ks().front();
    const auto h = kernel_finite_exact(ctx.p0, ctx.model, k).h_values;
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      StateMask subset(n, false);
      subset[rng() % n] = true;
      for (std::size_t x = 0; x < n; ++x) subset[x] = subset[x] || (rng() & 1u) != 0;
      double target = 0.0;
      for (std::size_t x = 0; x < n; ++x) {
        if (subset[x]) target += ctx.p0.mass(x) * h[x];
      }
      const auto est = selection_identity_estimate(ctx.p0, ctx.model, k, subset, 100000, rng());
      const double z = std::abs(est.mean - target) / std::max(est.std_error, 1e-300);
      worst = std::max(worst, std::abs(est.mean - target) <= 1e-12 ? 0.0 : z);
    }
    b.at_most("kernel.selection_identity", "mean of sum_j p~_j 1_B(X_j) equals S_p(B)", worst, 5.0,
              "measured in standard errors");
  });
}

// ---- retraining_dynamics ----

// E_p0[Q H] - E_p0[Q] for the configured pool: Cov(Q, H^K) for finite K,
// Var(Q)/E(Q) for the infinite pool.
double covariance_gain(const Context& ctx, const PreferenceModel& model) {
  const RewardStats s0 = exp_reward_stats(ctx.p0, model);
  if (ctx.cfg.pool.is_infinite()) return s0.variance / s0.mean;
  const auto h = kernel_finite_exact(ctx.p0, model, ctx.cfg.pool.k()).h_values;
  double eqh = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) eqh += ctx.p0.mass(i) * model.q_values()[i] * h[i];
  return eqh - s0.mean;
}

void dynamics_checks(const Context& ctx, Builder& b) {
  const auto& rec = ctx.records;
  const bool a1 = check_assumption_A1(ctx.model, ctx.p0).holds;

  if (ctx.regime == Regime::PureFinite && !rec.empty()) {
    double worst = 0.0;
    for (std::size_t t = 1; t < rec.size(); ++t) worst = std::max(worst, rec[t - 1].exp_reward - rec[t].exp_reward);
    b.at_most("dynamics.monotone_reward", "expected reward never decreases in the pure finite-pool regime", worst,
              1e-10);
  } else {
    b.skip("dynamics.monotone_reward", "expected reward never decreases in the pure finite-pool regime",
           "regime is " + to_string(ctx.regime));
  }

  if (ctx.regime == Regime::PureInfinite) {
    double worst = 0.0;
    for (std::size_t t = 1; t < rec.size(); ++t) {
      const auto& a = rec[t - 1];
      worst = std::max(worst, std::abs(rec[t].exp_reward - a.exp_reward - a.var_reward / a.exp_reward));
    }
    b.at_most("dynamics.one_step_identity", "C_{t+1} = C_t + Var_t / C_t", worst, 1e-10);

    double closed = 0.0;
    const auto& q = ctx.model.q_values();
    for (std::size_t t = 0; t < rec.size() && t <= 50; ++t) {
      std::vector<double> raw(ctx.p0.size());
      double top = -kInf;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (ctx.p0[i] > 0.0) top = std::max(top, static_cast<double>(t) * std::log(q[i]));
      }
      for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = ctx.p0[i] > 0.0 ? ctx.p0[i] * std::exp(static_cast<double>(t) * std::log(q[i]) - top) : 0.0;
      }
      closed = std::max(closed, max_abs_diff(make_density(ctx.p0.space(), raw).values(), rec[t].density.values()));
    }
    b.at_most("dynamics.closed_form", "p_t is p_0 Q^t renormalized", closed, 1e-10);
  } else {
    const std::string why = "regime is " + to_string(ctx.regime);
    b.skip("dynamics.one_step_identity", "C_{t+1} = C_t + Var_t / C_t", why);
    b.skip("dynamics.closed_form", "p_t is p_0 Q^t renormalized", why);
  }

  if (ctx.pure() && !rec.empty()) {
    double worst = 0.0;
    double product = rec.front().mass_on_A;
    for (std::size_t t = 1; t < rec.size(); ++t) {
      product *= rec[t - 1].h_t;
      worst = std::max(worst, std::abs(rec[t].mass_on_A - product));
    }
    b.at_most("dynamics.mass_product_law", "P_t(A) = P_0(A) prod_s h_s", worst, 1e-10);
  } else {
    b.skip("dynamics.mass_product_law", "P_t(A) = P_0(A) prod_s h_s", "mixed regime");
  }

  const char* kl_claims[] = {"h_t tends to 1", "KL(p_* || p_t) = -log P_t(A)",
                             "KL(p_* || p_t) decreases strictly to zero"};
  if (ctx.pure() && a1 && !rec.empty()) {
    b.at_most("dynamics.h_t_limit", kl_claims[0], rec.back().h_t - 1.0, 1e-6,
              "h_t at t = " + std::to_string(rec.back().t));
    double identity = 0.0;
    double violations = 0.0;
    for (std::size_t t = 0; t < rec.size(); ++t) {
      const double kl = rec[t].kl_star_to_pt->value();
      identity = std::max(identity, std::abs(kl + std::log(rec[t].mass_on_A)));
      if (t > 0) {
        const double prev = rec[t - 1].kl_star_to_pt->value();
        if (kl > prev + 1e-15 || (kl > 1e-12 && !(kl < prev))) violations += 1.0;
      }
    }
    b.at_most("dynamics.kl_identity", kl_claims[1], identity, 1e-10);
    const double final_kl = rec.back().kl_star_to_pt->value();
    b.add("dynamics.kl_decreasing", kl_claims[2], violations == 0.0 && final_kl < 1e-8, final_kl, 1e-8,
          std::to_string(static_cast<int>(violations)) + " non-decreasing steps");
  } else {
    const std::string why = ctx.pure() ? "A1 fails" : "mixed regime";
    b.skip("dynamics.h_t_limit", kl_claims[0], why);
    b.skip("dynamics.kl_identity", kl_claims[1], why);
    b.skip("dynamics.kl_decreasing", kl_claims[2], why);
  }

  const char* coord_claim = "p- and w-coordinate iterations agree in the mixed infinite-pool regime";
  if (ctx.regime == Regime::MixedInfinite && check_assumption_A2(ctx.p0, *ctx.ref).holds) {
    b.guarded("dynamics.reweighted_coordinates", coord_claim, [&] {
      std::vector<double> w = reweighted_density(ctx.p0, *ctx.ref);
      Density p = ctx.p0;
      double worst = 0.0;
      for (std::size_t t = 0; t < std::min<std::size_t>(ctx.cfg.t_max, 200); ++t) {
        p = update_once(p, ctx.exact, ctx.model);
        w = update_reweighted(w, *ctx.ref, ctx.model, ctx.cfg.alpha);
        const auto from_p = reweighted_density(p, *ctx.ref);
        for (std::size_t i = 0; i < w.size(); ++i) worst = std::max(worst, rel_diff(from_p[i], w[i]));
      }
      b.at_most("dynamics.reweighted_coordinates", coord_claim, worst, 1e-12);
    });
  } else {
    b.skip("dynamics.reweighted_coordinates", coord_claim,
           ctx.regime == Regime::MixedInfinite ? "A2 fails" : "regime is " + to_string(ctx.regime));
  }

  const char* lb3 = "reward lower bound with covariance of Q and H (mixed finite pool, p_ref = p0)";
  const char* lb4 = "reward lower bound with Var(Q)/E(Q) (mixed infinite pool, p_ref = p0)";
  const char* floor_claim = "R_t - R_0 >= (1 - alpha)^(t-1) D_1 with D_1 = (1 - alpha) Cov(Q, H) at p0";
  const bool ref_is_p0 = ctx.cfg.reference_is_initial();
  std::string why;
  if (ctx.pure()) {
    why = "regime is " + to_string(ctx.regime);
  } else if (ctx.regime == Regime::MixedFinite && !ctx.stationary) {
    why = "direct_q has no noise law";
  } else if (!ref_is_p0) {
    why = "p_ref differs from p0";
  } else if (!ctx.limit.limit) {
    why = ctx.limit.note;
    if (ctx.regime == Regime::MixedFinite && contraction_rate(ctx.cfg.pool.k(), ctx.cfg.alpha) == 1.0) why = "boundary";
  } else if (!(exp_reward_stats(ctx.p0, ctx.model).mean < ctx.model.q_star())) {
    why = "E_p0[Q] = Q*";
  }
  if (why.empty() && !rec.empty()) {
    const double alpha = ctx.cfg.alpha;
    const double gain = covariance_gain(ctx, ctx.model);
    double stated = -kInf;
    double floor = -kInf;
    for (const auto& r : rec) {
      const double t = static_cast<double>(r.t);
      const double bound = rec.front().exp_reward + (1.0 - alpha) / alpha * (1.0 - std::pow(1.0 - alpha, t)) * gain;
      stated = std::max(stated, bound - r.exp_reward);
      if (r.t > 0) {
        const double d1 = (1.0 - alpha) * gain;
        floor = std::max(floor, rec.front().exp_reward + std::pow(1.0 - alpha, t - 1.0) * d1 - r.exp_reward);
      }
    }
    if (ctx.regime == Regime::MixedFinite) {
      b.at_most("dynamics.reward_lower_bound_finite", lb3, stated, 1e-9);
      b.skip("dynamics.reward_lower_bound_infinite", lb4, "regime is " + to_string(ctx.regime));
    } else {
      b.skip("dynamics.reward_lower_bound_finite", lb3, "regime is " + to_string(ctx.regime));
      b.at_most("dynamics.reward_lower_bound_infinite", lb4, stated, 1e-9);
    }
    b.at_most("dynamics.reward_gain_floor", floor_claim, floor, 1e-9);
  } else {
    b.skip("dynamics.reward_lower_bound_finite", lb3, why);
    b.skip("dynamics.reward_lower_bound_infinite", lb4, why);
    b.skip("dynamics.reward_gain_floor", floor_claim, why);
  }
}

// ---- fixed_points ----

void fixed_point_checks(const Context& ctx, Builder& b) {
  const SpacePtr& space = ctx.p0.space();
  const double alpha = ctx.cfg.alpha;
  const char* contraction_claim = "d_TV(Tw, Tu) <= K (1 - alpha) d_TV(w, u)";
  const char* envelope_claim = "d_TV(p_t, p_fix) <= rho^t d_TV(p_0, p_fix)";
  const char* starts_claim = "fixed points from different starts agree within 2 tol";

  if (ctx.regime == Regime::MixedFinite && ctx.stationary) {
    const int k = ctx.cfg.pool.k();
    const double rho = contraction_rate(k, alpha);
    std::string skip_reason;
    if (std::abs(rho - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) {
      skip_reason = "boundary";
    } else if (!(rho < 1.0)) {
      skip_reason = "not contractive";
    }
    if (!skip_reason.empty()) {
      b.skip("fixed_point.operator_contraction", contraction_claim, skip_reason);
      b.skip("fixed_point.geometric_envelope", envelope_claim, skip_reason);
      b.skip("fixed_point.start_independence", starts_claim, skip_reason);
    } else {
      b.guarded("fixed_point.operator_contraction", contraction_claim, [&] {
        StreamRng rng = ctx.rng_for(20);
        double worst = -kInf;
        for (int i = 0; i < 100; ++i) {
          const Density w = random_density(space, rng, 0.2);
          const Density u = random_density(space, rng, 0.2);
          const double lhs = tv_distance(update_once(w, ctx.exact, ctx.model), update_once(u, ctx.exact, ctx.model)).value();
          worst = std::max(worst, lhs - rho * tv_distance(w, u).value());
        }
        b.at_most("fixed_point.operator_contraction", contraction_claim, worst, 1e-10);
      });

      b.guarded("fixed_point.geometric_envelope", envelope_claim, [&] {
        if (!ctx.limit.limit) fail(ErrorCode::InvalidArgument, ctx.limit.note);
        const Density& fix = ctx.limit.limit->density;
        StreamRng rng = ctx.rng_for(21);
        double worst = -kInf;
        for (int s = 0; s < 4; ++s) {
          Density p = s == 0 ? ctx.p0 : random_density(space, rng, 0.2);
          const double d0 = tv_distance(p, fix).value();
          for (std::size_t t = 0; t <= std::min<std::size_t>(ctx.cfg.t_max, 200); ++t) {
            if (t > 0) p = update_once(p, ctx.exact, ctx.model);
            worst = std::max(worst, tv_distance(p, fix).value() - std::pow(rho, static_cast<double>(t)) * d0);
          }
        }
        b.at_most("fixed_point.geometric_envelope", envelope_claim, worst, 1e-9);
      });

      b.guarded("fixed_point.start_independence", starts_claim, [&] {
        StreamRng rng = ctx.rng_for(22);
        std::vector<Density> fixes;
        for (int s = 0; s < 3; ++s) {
          fixes.push_back(fixed_point_regime_iii(ctx.exact, ctx.model, 1e-12, 100000, random_density(space, rng, 0.2)).density);
        }
        double worst = 0.0;
        for (std::size_t i = 0; i < fixes.size(); ++i) {
          for (std::size_t j = i + 1; j < fixes.size(); ++j) worst = std::max(worst, tv_distance(fixes[i], fixes[j]).value());
        }
        b.at_most("fixed_point.start_independence", starts_claim, worst, 2e-12);
      });
    }
  } else {
    const std::string why = ctx.regime == Regime::MixedFinite ? "direct_q has no noise law" : "regime is " + to_string(ctx.regime);
    b.skip("fixed_point.operator_contraction", contraction_claim, why);
    b.skip("fixed_point.geometric_envelope", envelope_claim, why);
    b.skip("fixed_point.start_independence", starts_claim, why);
  }

  const char* lip_claim = "d_TV(S_w, S_u) <= K d_TV(w, u) for the curation step";
  if (ctx.cfg.pool.is_finite() && ctx.stationary) {
    b.guarded("fixed_point.curation_lipschitz", lip_claim, [&] {
      const int k = ctx.cfg.pool.k();
      StreamRng rng = ctx.rng_for(23);
      double worst = -kInf;
      for (int i = 0; i < 100; ++i) {
        const Density w = random_density(space, rng, 0.2);
        const Density u = random_density(space, rng, 0.2);
        const Density sw = curated_density(w, kernel_finite_exact(w, ctx.model, k));
        const Density su = curated_density(u, kernel_finite_exact(u, ctx.model, k));
        worst = std::max(worst, tv_distance(sw, su).value() - k * tv_distance(w, u).value());
      }
      b.at_most("fixed_point.curation_lipschitz", lip_claim, worst, 1e-10);
    });
  } else {
    b.skip("fixed_point.curation_lipschitz", lip_claim, ctx.cfg.pool.is_finite() ? "direct_q has no noise law" : "infinite pool");
  }

  const char* residual_claim = "one update moves the computed fixed point by < 10 tol";
  if ((ctx.regime == Regime::MixedFinite || ctx.regime == Regime::MixedInfinite) && ctx.limit.limit) {
    const Density& fix = ctx.limit.limit->density;
    const double moved = tv_distance(update_once(fix, ctx.exact, ctx.model), fix).value();
    b.at_most("fixed_point.residual", residual_claim, moved, 1e-11);
  } else {
    b.skip("fixed_point.residual", residual_claim, ctx.pure() ? "pure regime" : ctx.limit.note);
  }

  const char* bracket_claim = "(1 - alpha) Q* < c* <= Q* and <w*, Q>_ref = c*";
  const char* hilbert_claim = "Hilbert distance to w* is finite from t = 1 and strictly decreasing";
  if (ctx.regime == Regime::MixedInfinite && ctx.limit.limit) {
    const FixedPointResult& fp = *ctx.limit.limit;
    const double c = *fp.c_star;
    const double qs = ctx.model.q_star();
    const double consistency = std::abs(ref_inner_q(*fp.w_star, ctx.model, *ctx.ref) - c);
    const bool in_bracket = (1.0 - alpha) * qs < c && c <= qs;
    b.add("fixed_point.c_star_bracket", bracket_claim, in_bracket && consistency <= 1e-9, consistency, 1e-9,
          in_bracket ? "" : "c* outside ((1-alpha)Q*, Q*]");

    if (!check_assumption_A2(ctx.p0, *ctx.ref).holds) {
      b.skip("fixed_point.hilbert_convergence", hilbert_claim, "A2 fails");
    } else {
      const auto& rec = ctx.records;
      double violations = 0.0;
      for (std::size_t t = 1; t < rec.size(); ++t) {
        if (!rec[t].hilbert_to_limit || rec[t].hilbert_to_limit->is_infinite()) {
          violations += 1.0;
          continue;
        }
        if (t < 2) continue;
        const double now = rec[t].hilbert_to_limit->value();
        const double prev = rec[t - 1].hilbert_to_limit->value();
        if (now > prev + 1e-12 || (prev > 1e-9 && !(now < prev))) violations += 1.0;
      }
      const double last = rec.back().hilbert_to_limit ? rec.back().hilbert_to_limit->value() : kInf;
      b.add("fixed_point.hilbert_convergence", hilbert_claim, violations == 0.0 && last < 1e-8, last, 1e-8,
            std::to_string(static_cast<int>(violations)) + " monotonicity violations");
    }
  } else {
    const std::string why = ctx.regime == Regime::MixedInfinite ? ctx.limit.note : "regime is " + to_string(ctx.regime);
    b.skip("fixed_point.c_star_bracket", bracket_claim, why);
    b.skip("fixed_point.hilbert_convergence", hilbert_claim, why);
  }
}

// ---- perturbation_lab ----

// Largest decrease of E_p[Q] (perturbed Q) along the perturbed trajectory;
// steps that still move by more than 1e-10 in TV must increase strictly.
double improvement_violation(const Context& ctx, const PreferenceModel& moved) {
  const auto rec = run_trajectory(ctx.p0, ctx.exact, moved, std::min<std::size_t>(ctx.cfg.t_max, 500), ctx.cfg.stop_tol);
  double worst = -kInf;
  for (std::size_t t = 1; t < rec.size(); ++t) {
    const double drop = rec[t - 1].exp_reward - rec[t].exp_reward;
    const bool moving = rec[t].step_tv && rec[t].step_tv->value() > 1e-10;
    worst = std::max(worst, moving && !(drop < 0.0) ? std::max(drop, 1.0) : drop);
  }
  return worst;
}

void perturbation_checks(const Context& ctx, Builder& b) {
  const std::size_t n = ctx.p0.size();
  const double alpha = ctx.cfg.alpha;
  const auto& block = ctx.cfg.perturbation;

  const char* instab_claim = "adversarial perturbation moves the pure limit by TV = 1 while both runs converge";
  if (!ctx.pure()) {
    b.skip("perturbation.instability", instab_claim, "mixed regime");
  } else if (!block || block->mode != PerturbationBlock::Mode::Adversarial) {
    b.skip("perturbation.instability", instab_claim, "no adversarial perturbation configured");
  } else {
    b.guarded("perturbation.instability", instab_claim, [&] {
      const InstabilityReport rep = instability_experiment(ctx.model, ctx.p0, block->eta, block->delta);
      const PreferenceModel moved = perturb_model(ctx.model, rep.spec);
      double worst_kl = 0.0;
      for (const PreferenceModel* m : {&ctx.model, &moved}) {
        if (!ctx.stationary && ctx.cfg.pool.is_finite() && ctx.cfg.pool.k() > 1) continue;
        const auto rec = run_trajectory(ctx.p0, ctx.exact, *m, ctx.cfg.t_max, ctx.cfg.stop_tol);
        worst_kl = std::max(worst_kl, rec.back().kl_star_to_pt->value());
      }
      const double gap = std::abs(rep.tv - 1.0);
      std::ostringstream os;
      os << "tv = " << rep.tv << ", worst terminal KL = " << worst_kl;
      b.add("perturbation.instability", instab_claim, gap <= 1e-12 && worst_kl < 1e-8 && rep.disjoint_maximizers, rep.tv,
            1.0, os.str());
    });
  }

  const char* klip_claim = "max |H_perturbed - H| <= (K/2) ||dr||_inf";
  if (!ctx.stationary) {
    b.skip("perturbation.kernel_lipschitz", klip_claim, "direct_q has no noise law");
  } else {
    b.guarded("perturbation.kernel_lipschitz", klip_claim, [&] {
      StreamRng rng = ctx.rng_for(30);
      double worst = -kInf;
      for (int i = 0; i < 20; ++i) {
        const Density p = i == 0 ? ctx.p0 : random_density(ctx.p0.space(), rng, 0.2);
        const double eta = std::pow(10.0, -2.0 + 2.0 * rng.uniform());
        const PerturbationSpec spec = random_perturbation(n, eta, rng());
        for (int k : ctx.kernel_ks()) {
          const KernelPerturbationReport r = kernel_perturbation_check(p, ctx.model, k, spec);
          worst = std::max(worst, r.max_deviation - r.bound);
        }
      }
      b.at_most("perturbation.kernel_lipschitz", klip_claim, worst, 1e-10);
    });
  }

  const char* s3_claim = "sup_t d_TV(p_t perturbed, p_t) <= eta rho / (4 (1 - rho))";
  const bool contractive_iii = ctx.regime == Regime::MixedFinite && ctx.stationary &&
                               contraction_rate(ctx.cfg.pool.k(), alpha) < 1.0 - 4.0 * std::numeric_limits<double>::epsilon();
  if (contractive_iii) {
    b.guarded("perturbation.stability_finite", s3_claim, [&] {
      StreamRng rng = ctx.rng_for(31);
      const std::size_t horizon = std::min<std::size_t>(ctx.cfg.t_max, 200);
      double worst = -kInf;
      std::vector<double> etas{0.01, 0.05, 0.1};
      if (block && block->eta > 0.0) etas.push_back(block->eta);
      for (double eta : etas) {
        for (int d = 0; d < 5; ++d) {
          const PerturbationSpec spec = random_perturbation(n, eta, rng());
          const auto pair = run_perturbed_pair(ctx.p0, ctx.exact, ctx.model, spec, horizon);
          worst = std::max(worst, pair.sup_d_tv - stability_bound_regime_iii(ctx.cfg.pool.k(), alpha, spec.eta()));
        }
      }
      b.at_most("perturbation.stability_finite", s3_claim, worst, 1e-9);
    });
  } else {
    b.skip("perturbation.stability_finite", s3_claim,
           ctx.regime == Regime::MixedFinite ? (ctx.stationary ? "boundary or not contractive" : "direct_q has no noise law")
                                             : "regime is " + to_string(ctx.regime));
  }

  const char* s4_claim = "sup_t d_TV shrinks with eta in {0.1, 0.01, 0.001} and is < 0.05 at 0.001";
  const char* a4_claim = "probed perturbed thresholds stay below alpha";
  if (ctx.regime == Regime::MixedInfinite && ctx.limit.limit) {
    b.guarded("perturbation.stability_infinite", s4_claim, [&] {
      std::vector<double> direction(n);
      if (block && block->mode != PerturbationBlock::Mode::Adversarial) {
        direction = ctx.cfg.perturbation_spec()->delta_r();
      } else {
        for (std::size_t i = 0; i < n; ++i) direction[i] = i % 2 == 0 ? 1.0 : -1.0;
      }
      double norm = 0.0;
      for (double d : direction) norm = std::max(norm, std::abs(d));
      if (norm == 0.0) direction.assign(n, 1.0), norm = 1.0;
      std::vector<double> sups;
      for (double eta : {0.1, 0.01, 0.001}) {
        std::vector<double> dr(direction);
        for (double& d : dr) d *= eta / norm;
        sups.push_back(run_perturbed_pair(ctx.p0, ctx.exact, ctx.model, PerturbationSpec(dr), ctx.cfg.t_max).sup_d_tv);
      }
      const bool decreasing = sups[1] < sups[0] && sups[2] < sups[1];
      std::ostringstream os;
      os << "sup at eta = 0.1, 0.01, 0.001: " << sups[0] << ' ' << sups[1] << ' ' << sups[2];
      b.add("perturbation.stability_infinite", s4_claim, decreasing && sups[2] < 0.05, sups[2], 0.05, os.str());
    });

    b.guarded("perturbation.a4_probe", a4_claim, [&] {
      const double eta_star = block && block->eta > 0.0 ? block->eta : 0.1;
      const A4Report r = check_assumption_A4(ctx.model, *ctx.ref, alpha, eta_star, 64, ctx.cfg.seed, 1);
      b.add("perturbation.a4_probe", a4_claim, r.report.holds, r.sup_threshold_lower_bound, alpha, r.report.detail,
            true);
    });
  } else {
    const std::string why = ctx.regime == Regime::MixedInfinite ? ctx.limit.note : "regime is " + to_string(ctx.regime);
    b.skip("perturbation.stability_infinite", s4_claim, why);
    b.skip("perturbation.a4_probe", a4_claim, why);
  }

  const char* mono_claim = "E_p[Q] increases strictly along the perturbed trajectory";
  if ((ctx.regime == Regime::MixedFinite && ctx.stationary) || ctx.regime == Regime::MixedInfinite) {
    if (!ctx.cfg.reference_is_initial()) {
      b.skip("superalignment.monotone_perturbed", mono_claim, "p_ref differs from p0");
    } else {
      b.guarded("superalignment.monotone_perturbed", mono_claim, [&] {
        const auto spec = block ? ctx.cfg.perturbation_spec() : random_perturbation(n, 0.1, mix64(ctx.cfg.seed ^ 0x5a5a));
        b.at_most("superalignment.monotone_perturbed", mono_claim, improvement_violation(ctx, perturb_model(ctx.model, *spec)),
                  1e-12);
      });
    }
  } else {
    b.skip("superalignment.monotone_perturbed", mono_claim,
           ctx.pure() ? "pure regime" : "direct_q has no noise law");
  }
}

// ---- montecarlo ----

void montecarlo_checks(const Context& ctx, Builder& b) {
  const char* det_claim = "identical seeds give identical histograms for any worker count";
  const char* loop_claim = "the sampled loop stays within TV 0.01 of the population loop";
  if (!ctx.stationary) {
    b.skip("montecarlo.determinism", det_claim, "direct_q has no noise law");
    b.skip("montecarlo.finite_sample_loop", loop_claim, "direct_q has no noise law");
    return;
  }
  b.guarded("montecarlo.determinism", det_claim, [&] {
    const int k = ctx.kernel_ks().front();
    double mismatches = 0.0;
    const auto h1 = curation_round(ctx.p0, ctx.model, k, 50000, ctx.cfg.seed, 1);
    const auto h4 = curation_round(ctx.p0, ctx.model, k, 50000, ctx.cfg.seed, 4);
    if (h1.counts != h4.counts) mismatches += 1.0;
    const auto m1 = kernel_finite_mc(ctx.p0, ctx.model, k, 10000, ctx.cfg.seed, 1);
    const auto m4 = kernel_finite_mc(ctx.p0, ctx.model, k, 10000, ctx.cfg.seed, 4);
    if (m1.h_values != m4.h_values || *m1.std_errors != *m4.std_errors) mismatches += 1.0;
    b.at_most("montecarlo.determinism", det_claim, mismatches, 0.0);
  });

  if (!ctx.cfg.montecarlo) {
    b.skip("montecarlo.finite_sample_loop", loop_claim, "no montecarlo block");
  } else {
    b.guarded("montecarlo.finite_sample_loop", loop_claim, [&] {
      ExperimentConfig single = ctx.cfg;
      single.workers = 1;
      const McCheckResult r = mc_check(single, 0.01);
      const double worst = *std::max_element(r.loop_tv.begin(), r.loop_tv.end());
      b.at_most("montecarlo.finite_sample_loop", loop_claim, worst, 0.01);
    });
  }
}

}  // namespace

VerifyReport verify_theorems(const ExperimentConfig& config) {
  const Context ctx(config);
  Builder b;
  metric_checks(ctx, b);
  preference_checks(ctx, b);
  kernel_checks(ctx, b);
  dynamics_checks(ctx, b);
  fixed_point_checks(ctx, b);
  perturbation_checks(ctx, b);
  montecarlo_checks(ctx, b);

  VerifyReport report = std::move(b.report);
  for (const VerifyCheck& c : report.checks) {
    if (!c.heuristic && c.status == CheckStatus::Fail) report.overall = false;
  }

  const auto status_of = [&](std::string_view id) {
    const VerifyCheck* c = report.find(id);
    return c ? c->status : CheckStatus::Skipped;
  };
  if (ctx.pure()) {
    if (status_of("perturbation.instability") == CheckStatus::Pass) report.superalignment = "not-superaligned";
  } else {
    const CheckStatus mono = status_of("superalignment.monotone_perturbed");
    const CheckStatus stab = status_of(ctx.regime == Regime::MixedFinite ? "perturbation.stability_finite"
                                                                         : "perturbation.stability_infinite");
    if (mono == CheckStatus::Pass && stab == CheckStatus::Pass) {
      report.superalignment = "superaligned";
    } else if (mono == CheckStatus::Fail || stab == CheckStatus::Fail) {
      report.superalignment = "not-superaligned";
    }
  }
  return report;
}

std::string verify_report_json(const VerifyReport& report) {
  nlohmann::ordered_json j;
  j["overall"] = report.overall ? "pass" : "fail";
  j["superalignment"] = report.superalignment;
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const VerifyCheck& c : report.checks) {
    nlohmann::ordered_json e;
    e["id"] = c.id;
    e["claim"] = c.claim;
    e["status"] = to_string(c.status);
    if (c.status != CheckStatus::Skipped) {
      e["measured"] = detail::metric_json(c.measured);
      e["bound"] = detail::metric_json(c.bound);
      e["slack"] = detail::metric_json(c.slack);
    }
    e["heuristic"] = c.heuristic;
    if (!c.note.empty()) e["note"] = c.note;
    checks.push_back(e);
  }
  j["checks"] = checks;
  return j.dump(2) + "\n";
}

}  // namespace curaloop
