#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "curaloop/error.hpp"
#include "curaloop/fixed_points.hpp"
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

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(PureLimit, Examples) {
  const auto s = two_state();
  const auto lim = pure_limit(density(s, {0.5, 0.5}), two_state_model());
  EXPECT_EQ(lim.density[0], 1.0);
  EXPECT_EQ(lim.density[1], 0.0);
  EXPECT_EQ(lim.residual, 0.0);
  const PreferenceModel flat = build_preference(s, {0, 0}, NoiseModel::zero());
  EXPECT_NEAR(pure_limit(density(s, {0.3, 0.7}), flat).density[0], 0.3, 1e-15);
  EXPECT_EQ(code_of([&] { pure_limit(density(s, {0, 1}), two_state_model()); }), ErrorCode::AssumptionA1Violated);
}

TEST(SolveCStar, QuadraticOracle) {
  const Density u = density(two_state(), {0.5, 0.5});
  EXPECT_NEAR(solve_c_star(two_state_model(), u, 0.5), oracles::two_state_c_star(), 1e-12);
  EXPECT_NEAR(oracles::two_state_c_star(), 1.6403882032022075, 1e-15);
}

TEST(SolveCStar, Errors) {
  const Density off = density(two_state(), {0, 1});
  EXPECT_EQ(code_of([&] { solve_c_star(two_state_model(), off, 0.4); }), ErrorCode::AssumptionA3Violated);
  EXPECT_EQ(code_of([&] { solve_c_star(two_state_model(), off, 1.0); }), ErrorCode::AlphaOutOfRange);
}

TEST(SolveCStar, PointMassOnArgmax) {
  const Density top = density(two_state(), {1, 0});
  for (double alpha : {0.1, 0.5, 0.9}) {
    const auto fp = fixed_point_regime_iv(two_state_model(), top, alpha);
    EXPECT_NEAR(*fp.c_star, 2.0, 1e-12);
    EXPECT_NEAR((*fp.w_star)[0], 1.0, 1e-11);
  }
}

TEST(FixedPointIV, TwoStateFixture) {
  const Density u = density(two_state(), {0.5, 0.5});
  const auto fp = fixed_point_regime_iv(two_state_model(), u, 0.5);
  const double c = oracles::two_state_c_star();
  EXPECT_NEAR(*fp.c_star, c, 1e-9);
  // w* = alpha / (1 - (1 - alpha) Q / c*)
  EXPECT_NEAR((*fp.w_star)[0], 0.5 / (1 - 0.5 * 2 / c), 1e-9);
  EXPECT_NEAR((*fp.w_star)[1], 0.5 / (1 - 0.5 / c), 1e-9);
  EXPECT_NEAR((*fp.w_star)[0], 1.280776, 1e-6);
  EXPECT_NEAR(ref_inner_q(*fp.w_star, two_state_model(), u), c, 1e-9);
  EXPECT_GT(c, 0.5 * 2.0);
  EXPECT_LE(c, 2.0);
  EXPECT_EQ(fp.kind, LimitKind::MixedInfinite);
}

TEST(FixedPointIV, ConstantAndNearOneAlpha) {
  const auto s = two_state();
  const Density u = density(s, {0.5, 0.5});
  const PreferenceModel flat = build_preference(s, {0.4, 0.4}, NoiseModel::zero());
  const auto fp = fixed_point_regime_iv(flat, u, 0.3);
  EXPECT_NEAR(*fp.c_star, std::exp(0.4), 1e-11);
  EXPECT_NEAR((*fp.w_star)[1], 1.0, 1e-10);
  const auto near = fixed_point_regime_iv(two_state_model(), u, 0.999);
  for (double w : *near.w_star) EXPECT_NEAR(w, 1.0, 1e-2);
}

TEST(FixedPointIV, RandomInstancesAreFixed) {
  StreamRng rng(500, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto space = random_space(2 + trial % 6, rng);
    const PreferenceModel m = random_model(space, trial % 3, rng);
    const Density ref = random_density(space, rng);
    const double alpha = 0.05 + 0.9 * rng.uniform();
    const auto fp = fixed_point_regime_iv(m, ref, alpha);
    const auto again = update_reweighted(*fp.w_star, ref, m, alpha);
    for (std::size_t i = 0; i < again.size(); ++i) EXPECT_NEAR(again[i], (*fp.w_star)[i], 1e-10);
    EXPECT_GT(*fp.c_star, (1 - alpha) * m.q_star());
    EXPECT_LE(*fp.c_star, m.q_star() * (1 + 1e-15));
  }
}

TEST(ContractionRate, Examples) {
  EXPECT_NEAR(contraction_rate(2, 0.6), 0.8, 1e-15);
  EXPECT_EQ(contraction_rate(2, 0.5), 1.0);
  EXPECT_EQ(contraction_rate(1, 0.0), 1.0);
  EXPECT_TRUE(is_contractive(2, 0.6));
  EXPECT_FALSE(is_contractive(2, 0.5));
  EXPECT_FALSE(is_contractive(1, 0.0));
}

TEST(FixedPointIII, TwoStateConverges) {
  const Density u = density(two_state(), {0.5, 0.5});
  const auto cfg = RegimeConfig::make(0.6, PoolSize::finite(2), u);
  const auto fp = fixed_point_regime_iii(cfg, two_state_model(), 1e-12);
  EXPECT_LT(fp.residual, 1e-12);
  const Density again = update_once(fp.density, cfg, two_state_model());
  EXPECT_LT(tv_distance(again, fp.density).value(), 1e-12);
  EXPECT_EQ(fp.kind, LimitKind::MixedFinite);
}

TEST(FixedPointIII, NotContractive) {
  const Density u = density(two_state(), {0.5, 0.5});
  EXPECT_EQ(code_of([&] {
              fixed_point_regime_iii(RegimeConfig::make(0.5, PoolSize::finite(2), u), two_state_model());
            }),
            ErrorCode::NotContractive);
}

TEST(FixedPointIII, ConstantQGivesReference) {
  StreamRng rng(501, 0);
  const auto space = random_space(4, rng);
  const PreferenceModel flat = build_preference(space, std::vector<double>(4, 0.0), NoiseModel::zero());
  const Density ref = random_density(space, rng);
  const auto fp = fixed_point_regime_iii(RegimeConfig::make(0.8, PoolSize::finite(3), ref), flat);
  EXPECT_LT(tv_distance(fp.density, ref).value(), 1e-12);
}

TEST(FixedPointIII, StartIndependent) {
  StreamRng rng(502, 0);
  const auto space = random_space(5, rng);
  const PreferenceModel m = random_model(space, 2, rng);
  const Density ref = random_density(space, rng);
  const auto cfg = RegimeConfig::make(0.75, PoolSize::finite(3), ref);
  const double tol = 1e-11;
  std::vector<Density> limits;
  for (int i = 0; i < 3; ++i) limits.push_back(fixed_point_regime_iii(cfg, m, tol, 100000, random_density(space, rng)).density);
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) EXPECT_LE(tv_distance(limits[i], limits[j]).value(), 2 * tol);
  }
}
