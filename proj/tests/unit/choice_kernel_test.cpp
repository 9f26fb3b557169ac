#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "curaloop/choice_kernel.hpp"
#include "curaloop/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace curaloop;
using testing_support::density;
using testing_support::random_density;
using testing_support::random_model;
using testing_support::random_space;
using testing_support::two_state;

namespace {

PreferenceModel two_state_model() { return build_preference(two_state(), {std::log(2.0), 0.0}, NoiseModel::zero()); }

double normalization(const Density& p, const KernelEstimate& h) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += p.mass(i) * h.h_values[i];
  return total;
}

}  // namespace

TEST(PoolSize, Basics) {
  EXPECT_EQ(PoolSize::finite(3).k(), 3);
  EXPECT_TRUE(PoolSize::infinite().is_infinite());
  EXPECT_EQ(PoolSize::infinite().to_string(), "inf");
  EXPECT_THROW(PoolSize::finite(0), Error);
  EXPECT_THROW((void)PoolSize::infinite().k(), Error);
}

TEST(UtilityDistribution, Examples) {
  const auto s = two_state();
  const auto law = utility_distribution(density(s, {0.5, 0.5}), two_state_model());
  ASSERT_EQ(law.size(), 2u);
  EXPECT_NEAR(law.atoms()[0].value, 1.0, 1e-15);
  EXPECT_NEAR(law.atoms()[0].mass, 0.5, 1e-15);
  EXPECT_NEAR(law.atoms()[1].value, 2.0, 1e-15);

  const double l2 = std::log(2.0);
  const PreferenceModel noisy = build_preference(s, {0, 0}, NoiseModel::stationary({-l2, l2}, {0.5, 0.5}));
  const auto merged = utility_distribution(density(s, {0.3, 0.7}), noisy);
  ASSERT_EQ(merged.size(), 2u);
  EXPECT_NEAR(merged.atoms()[0].value, 0.5, 1e-15);
  EXPECT_NEAR(merged.atoms()[0].mass, 0.5, 1e-15);
  EXPECT_NEAR(merged.atoms()[1].value, 2.0, 1e-15);

  EXPECT_EQ(utility_distribution(density(s, {1, 0}), two_state_model()).size(), 1u);
}

TEST(UtilityDistribution, DirectQUnsupported) {
  const PreferenceModel m = build_preference(two_state(), {0, 0}, NoiseModel::direct_q({2, 1}));
  try {
    utility_distribution(density(two_state(), {0.5, 0.5}), m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedNoise);
  }
}

TEST(ValueDistribution, ConvolutionAndCap) {
  const auto a = ValueDistribution::from_atoms({{1.0, 0.5}, {2.0, 0.5}});
  const auto sum = a.convolve(a, 100);
  ASSERT_EQ(sum.size(), 3u);
  EXPECT_NEAR(sum.atoms()[1].value, 3.0, 1e-15);
  EXPECT_NEAR(sum.atoms()[1].mass, 0.5, 1e-15);
  EXPECT_NEAR(sum.total_mass(), 1.0, 1e-15);
  try {
    (void)sum.convolve(sum, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SupportOverflow);
  }
  EXPECT_EQ(ValueDistribution::zero_sum().convolve(a, 10).size(), 2u);
}

TEST(ExactKernel, TwoStateK2) {
  const auto h = kernel_finite_exact(density(two_state(), {0.5, 0.5}), two_state_model(), 2);
  EXPECT_NEAR(h.h_values[0], 7.0 / 6.0, 1e-14);
  EXPECT_NEAR(h.h_values[1], 5.0 / 6.0, 1e-14);
  EXPECT_EQ(h.method, KernelMethod::ExactK);
}

TEST(ExactKernel, K1AndConstantQAreIdentity) {
  StreamRng rng(301, 0);
  const auto space = random_space(5, rng);
  const PreferenceModel m = random_model(space, 2, rng);
  const Density p = random_density(space, rng);
  for (double v : kernel_finite_exact(p, m, 1).h_values) EXPECT_EQ(v, 1.0);
  const PreferenceModel flat = build_preference(space, std::vector<double>(5, 0.7), m.noise());
  for (int k : {2, 3, 5}) {
    for (double v : kernel_finite_exact(p, flat, k).h_values) EXPECT_NEAR(v, 1.0, 1e-13);
  }
}

TEST(ExactKernel, MatchesBruteForceEnumeration) {
  StreamRng rng(302, 0);
  double worst = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto space = random_space(2 + trial % 3, rng);
    const PreferenceModel m = random_model(space, trial % 3, rng);
    const Density p = random_density(space, rng, 0.2);
    for (int k = 1; k <= 3; ++k) {
      const auto got = kernel_finite_exact(p, m, k).h_values;
      const auto want = oracles::brute_force_kernel(p, m, k);
      for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(ExactKernel, SupportCapOverflow) {
  StreamRng rng(303, 0);
  const auto space = random_space(8, rng);
  const PreferenceModel m = random_model(space, 2, rng);
  ExactKernelOptions options;
  options.support_cap = 50;
  try {
    kernel_finite_exact(random_density(space, rng), m, 4, options);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SupportOverflow);
  }
}

TEST(InfiniteKernel, Examples) {
  const auto s = two_state();
  const auto h = kernel_infinite(density(s, {0.5, 0.5}), two_state_model());
  EXPECT_NEAR(h.h_values[0], 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(h.h_values[1], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(kernel_infinite(density(s, {0, 1}), two_state_model()).h_values[1], 1.0, 1e-15);
}

TEST(McKernel, AgreesWithExact) {
  const Density p = density(two_state(), {0.5, 0.5});
  const auto mc = kernel_finite_mc(p, two_state_model(), 2, 1'000'000, 17);
  ASSERT_TRUE(mc.std_errors.has_value());
  EXPECT_LT(std::abs(mc.h_values[0] - 7.0 / 6.0), 4.0 * (*mc.std_errors)[0]);
  EXPECT_EQ(mc.method, KernelMethod::MonteCarloK);
}

TEST(McKernel, K1IsExact) {
  const auto mc = kernel_finite_mc(density(two_state(), {0.5, 0.5}), two_state_model(), 1, 1000, 3);
  EXPECT_EQ(mc.h_values, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(*mc.std_errors, (std::vector<double>{0.0, 0.0}));
}

TEST(McKernel, DeterministicAcrossWorkers) {
  StreamRng rng(304, 0);
  const auto space = random_space(6, rng);
  const PreferenceModel m = random_model(space, 2, rng);
  const Density p = random_density(space, rng);
  const auto a = kernel_finite_mc(p, m, 4, 20000, 99, 1);
  const auto b = kernel_finite_mc(p, m, 4, 20000, 99, 1);
  const auto c = kernel_finite_mc(p, m, 4, 20000, 99, 4);
  EXPECT_EQ(a.h_values, b.h_values);
  EXPECT_EQ(a.h_values, c.h_values);
  EXPECT_EQ(*a.std_errors, *c.std_errors);
  EXPECT_NE(a.h_values, kernel_finite_mc(p, m, 4, 20000, 100, 1).h_values);
  EXPECT_THROW(kernel_finite_mc(p, m, 4, 99, 1), Error);
}

TEST(KernelProperties, NormalizationAndBounds) {
  StreamRng rng(305, 0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto space = random_space(2 + trial % 7, rng);
    const PreferenceModel m = random_model(space, trial % 3, rng);
    const Density p = random_density(space, rng, 0.25);
    const int k = 1 + trial % 6;
    const auto exact = kernel_finite_exact(p, m, k);
    const auto inf = kernel_infinite(p, m);
    worst = std::max({worst, std::abs(normalization(p, exact) - 1.0), std::abs(normalization(p, inf) - 1.0)});
    for (double v : exact.h_values) {
      EXPECT_GT(v, 0.0);
      EXPECT_LE(v, k * (1 + 1e-14));
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(KernelProperties, RewardShiftInvariance) {
  StreamRng rng(306, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto space = random_space(3 + trial % 4, rng);
    const PreferenceModel m = random_model(space, 2, rng);
    const Density p = random_density(space, rng);
    std::vector<double> shifted = m.reward();
    for (double& r : shifted) r += 1.7;
    const PreferenceModel ms = build_preference(space, shifted, m.noise());
    const auto a = kernel_finite_exact(p, m, 3).h_values;
    const auto b = kernel_finite_exact(p, ms, 3).h_values;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * a[i]);
  }
}

TEST(KernelProperties, OrderedByUtilityUnderZeroNoise) {
  StreamRng rng(307, 0);
  const auto space = random_space(6, rng);
  const PreferenceModel m = random_model(space, 0, rng);
  const auto h = kernel_finite_exact(random_density(space, rng), m, 4).h_values;
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (std::size_t j = 0; j < h.size(); ++j) {
      if (m.q_values()[i] > m.q_values()[j]) EXPECT_GT(h[i], h[j]);
    }
  }
}

TEST(KernelProperties, LargePoolApproachesInfinitePool) {
  StreamRng rng(308, 0);
  const auto space = random_space(3, rng);
  const PreferenceModel m = random_model(space, 2, rng);
  const Density p = random_density(space, rng);
  const auto inf = kernel_infinite(p, m).h_values;
  double first = 0.0;
  double last = INFINITY;
  for (int k : {2, 4, 8, 16}) {
    const auto h = kernel_finite_exact(p, m, k).h_values;
    double gap = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) gap = std::max(gap, std::abs(h[i] - inf[i]));
    EXPECT_LT(gap, last);
    if (k == 2) first = gap;
    last = gap;
  }
  // the gap shrinks roughly like 1/K
  EXPECT_LT(last, first / 4);
}

TEST(PlSelect, Frequencies) {
  StreamRng rng(309, 0);
  const std::vector<double> u{3.0, 1.0};
  const int n = 100000;
  int zero = 0;
  for (int i = 0; i < n; ++i) zero += pl_select(u, rng) == 0 ? 1 : 0;
  const double sigma = std::sqrt(0.75 * 0.25 / n);
  EXPECT_LT(std::abs(zero / static_cast<double>(n) - 0.75), 4 * sigma);

  const std::vector<double> even{1.0, 1.0};
  int first = 0;
  for (int i = 0; i < n; ++i) first += pl_select(even, rng) == 0 ? 1 : 0;
  // chi-square with one dof, 1% critical value 6.635
  const double d = first - n / 2.0;
  EXPECT_LT(2 * d * d / (n / 2.0), 6.635);
}

TEST(PlSelect, Errors) {
  StreamRng rng(310, 0);
  const std::vector<double> bad{1.0, 0.0};
  try {
    pl_select(bad, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveUtility);
  }
  EXPECT_THROW(pl_select(std::vector<double>{}, rng), Error);
}

TEST(CuratedDensity, Examples) {
  const auto s = two_state();
  const Density p = density(s, {0.5, 0.5});
  const auto exact = kernel_finite_exact(p, two_state_model(), 2);
  const Density c = curated_density(p, exact);
  EXPECT_NEAR(c[0], 7.0 / 12.0, 1e-15);
  EXPECT_NEAR(c[1], 5.0 / 12.0, 1e-15);
  const Density c2 = curated_density(p, kernel_infinite(p, two_state_model()));
  EXPECT_NEAR(c2[0], 2.0 / 3.0, 1e-15);
  const Density same = curated_density(p, kernel_finite_exact(p, two_state_model(), 1));
  EXPECT_EQ(same[0], 0.5);
}

TEST(CuratedDensity, DriftIsAnError) {
  const Density p = density(two_state(), {0.5, 0.5});
  KernelEstimate off;
  off.h_values = {1.2, 1.0};
  off.method = KernelMethod::ExactK;
  off.pool = PoolSize::finite(2);
  try {
    curated_density(p, off);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NormalizationDrift);
  }
}
