#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace curaloop {

/// Philox4x32-10 block function. Pure: maps (counter, key) to four words.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// 64-bit finalizer used to hash stream paths into stream identifiers.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Counter-based random stream.
///
/// A stream is identified by (seed, stream id); the n-th output is a pure
/// function of those and n, so any number of workers can draw from
/// pre-assigned streams and get byte-identical results. `split` derives a
/// child stream deterministically, which is how per-state, per-block and
/// per-step streams are laid out.
class StreamRng {
 public:
  using result_type = std::uint64_t;

  explicit StreamRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  [[nodiscard]] StreamRng split(std::uint64_t child) const noexcept;

  result_type operator()() noexcept;
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t stream() const noexcept { return stream_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

/// Inverse-CDF sampler over a finite set of nonnegative weights.
class DiscreteSampler {
 public:
  DiscreteSampler() = default;
  explicit DiscreteSampler(std::span<const double> weights);

  std::size_t operator()(StreamRng& rng) const noexcept;
  [[nodiscard]] std::size_t size() const noexcept { return cumulative_.size(); }

 private:
  std::vector<double> cumulative_;
};

}  // namespace curaloop
