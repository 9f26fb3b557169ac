#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "curaloop/measure_space.hpp"
#include "curaloop/preference_model.hpp"
#include "curaloop/rng.hpp"

namespace testing_support {

// Smallest useful stop tolerance: trajectories run to t_max unless a step
// is exactly stationary.
inline constexpr double kNoEarlyStop = 1e-300;

inline curaloop::SpacePtr two_state() { return curaloop::StateSpace::make({"a", "b"}, {1.0, 1.0}); }

inline curaloop::Density density(const curaloop::SpacePtr& s, std::vector<double> raw) {
  return curaloop::make_density(s, raw);
}

// Random density; each entry is zero with probability zero_prob (at least one
// entry stays positive).
inline curaloop::Density random_density(const curaloop::SpacePtr& space, curaloop::StreamRng& rng,
                                        double zero_prob = 0.0) {
  std::vector<double> raw(space->size());
  bool any = false;
  for (double& v : raw) {
    v = rng.uniform() < zero_prob ? 0.0 : 0.05 + rng.uniform();
    any = any || v > 0.0;
  }
  if (!any) raw[0] = 1.0;
  return curaloop::make_density(space, raw);
}

inline curaloop::SpacePtr random_space(std::size_t n, curaloop::StreamRng& rng) {
  std::vector<std::string> labels;
  std::vector<double> pi;
  for (std::size_t i = 0; i < n; ++i) {
    labels.push_back("x" + std::to_string(i));
    pi.push_back(0.25 + 2.0 * rng.uniform());
  }
  return curaloop::StateSpace::make(labels, pi);
}

// Random stationary model: rewards in [-1, 1], m noise atoms in [-0.5, 0.5].
inline curaloop::PreferenceModel random_model(const curaloop::SpacePtr& space, std::size_t m,
                                              curaloop::StreamRng& rng) {
  std::vector<double> reward(space->size());
  for (double& r : reward) r = 2.0 * rng.uniform() - 1.0;
  if (m == 0) return curaloop::build_preference(space, reward, curaloop::NoiseModel::zero());
  std::vector<double> support(m);
  std::vector<double> probs(m);
  for (std::size_t j = 0; j < m; ++j) {
    support[j] = rng.uniform() - 0.5 + 0.01 * static_cast<double>(j);
    probs[j] = 0.1 + rng.uniform();
  }
  double total = 0.0;
  for (double p : probs) total += p;
  for (double& p : probs) p /= total;
  return curaloop::build_preference(space, reward, curaloop::NoiseModel::stationary(support, probs));
}

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(CURALOOP_EXPERIMENTS_DIR) / name;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("curaloop_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
