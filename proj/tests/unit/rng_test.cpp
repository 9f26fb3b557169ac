#include <array>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "curaloop/error.hpp"
#include "curaloop/rng.hpp"

using curaloop::DiscreteSampler;
using curaloop::StreamRng;

// Known-answer vectors from the Random123 reference set.
TEST(Philox, KnownAnswerZero) {
  const auto out = curaloop::philox4x32_10({0, 0, 0, 0}, {0, 0});
  const std::array<std::uint32_t, 4> want{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u};
  EXPECT_EQ(out, want);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = curaloop::philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                           {0xffffffffu, 0xffffffffu});
  const std::array<std::uint32_t, 4> want{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu};
  EXPECT_EQ(out, want);
}

TEST(Philox, KnownAnswerPi) {
  const auto out = curaloop::philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                           {0xa4093822u, 0x299f31d0u});
  const std::array<std::uint32_t, 4> want{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u};
  EXPECT_EQ(out, want);
}

TEST(StreamRng, SameSeedSameStream) {
  StreamRng a(42, 7);
  StreamRng b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(StreamRng, StreamsAndSeedsDiffer) {
  StreamRng a(42, 7);
  StreamRng b(42, 8);
  StreamRng c(43, 7);
  int same_ab = 0;
  int same_ac = 0;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    same_ab += x == b() ? 1 : 0;
    same_ac += x == c() ? 1 : 0;
  }
  EXPECT_EQ(same_ab, 0);
  EXPECT_EQ(same_ac, 0);
}

TEST(StreamRng, SplitIsDeterministicAndDistinct) {
  const StreamRng root(5, 0);
  std::set<std::uint64_t> streams;
  for (std::uint64_t c = 0; c < 1000; ++c) streams.insert(root.split(c).stream());
  EXPECT_EQ(streams.size(), 1000u);
  StreamRng x = root.split(3);
  StreamRng y = root.split(3);
  EXPECT_EQ(x(), y());
}

TEST(StreamRng, UniformInUnitIntervalWithMeanHalf) {
  StreamRng rng(1, 2);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // sd of the mean is sqrt(1/12/n) ~ 6.5e-4
  EXPECT_NEAR(sum / n, 0.5, 4e-3);
}

TEST(DiscreteSampler, RejectsBadWeights) {
  const std::vector<double> negative{1.0, -0.5};
  const std::vector<double> zeros{0.0, 0.0};
  try {
    DiscreteSampler s(negative);
    FAIL();
  } catch (const curaloop::Error& e) {
    EXPECT_EQ(e.code(), curaloop::ErrorCode::NegativeEntry);
  }
  try {
    DiscreteSampler s(zeros);
    FAIL();
  } catch (const curaloop::Error& e) {
    EXPECT_EQ(e.code(), curaloop::ErrorCode::AllZero);
  }
}

TEST(DiscreteSampler, FrequenciesAndZeroWeight) {
  const std::vector<double> w{1.0, 0.0, 3.0};
  const DiscreteSampler s(w);
  StreamRng rng(9, 9);
  std::array<int, 3> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[s(rng)];
  EXPECT_EQ(counts[1], 0);
  // index 0 has p = 0.25, sd of frequency ~ 1.4e-3
  EXPECT_NEAR(counts[0] / static_cast<double>(n), 0.25, 7e-3);
}
