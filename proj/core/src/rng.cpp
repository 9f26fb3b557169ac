#include "curaloop/rng.hpp"

#include <algorithm>

#include "curaloop/error.hpp"

namespace curaloop {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

StreamRng::StreamRng(std::uint64_t seed, std::uint64_t stream) noexcept : seed_(seed), stream_(stream) {}

StreamRng StreamRng::split(std::uint64_t child) const noexcept {
  return StreamRng(seed_, mix64(stream_ ^ mix64(child + 0x632BE59BD9B4E019ull)));
}

void StreamRng::refill() noexcept {
  const std::array<std::uint32_t, 4> counter{
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
      static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                         static_cast<std::uint32_t>(seed_ >> 32)};
  buffer_ = philox4x32_10(counter, key);
  ++block_;
  used_ = 0;
}

StreamRng::result_type StreamRng::operator()() noexcept {
  if (used_ > 2) refill();
  const std::uint64_t lo = buffer_[used_];
  const std::uint64_t hi = buffer_[used_ + 1];
  used_ += 2;
  return (hi << 32) | lo;
}

double StreamRng::uniform() noexcept {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

DiscreteSampler::DiscreteSampler(std::span<const double> weights) {
  if (weights.empty()) fail(ErrorCode::InvalidArgument, "sampler needs at least one weight");
  cumulative_.reserve(weights.size());
  double running = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) fail(ErrorCode::NegativeEntry, "sampler weights must be nonnegative");
    running += w;
    cumulative_.push_back(running);
  }
  if (!(running > 0.0)) fail(ErrorCode::AllZero, "sampler weights sum to zero");
}

std::size_t DiscreteSampler::operator()(StreamRng& rng) const noexcept {
  const double target = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  // Zero-weight cells never win: upper_bound skips runs of equal cumulative values.
  if (it == cumulative_.end()) --it;
  return static_cast<std::size_t>(it - cumulative_.begin());
}

}  // namespace curaloop
