#pragma once

// Independent reference computations used by the unit and acceptance tests.
// They share no code with the library beyond the data types.

#include <cmath>
#include <cstddef>
#include <vector>

#include "curaloop/measure_space.hpp"
#include "curaloop/preference_model.hpp"

namespace oracles {

// H_p^K by literal enumeration of every (state, noise)^(K-1) competitor
// tuple and every noise atom of the focal state.
inline std::vector<double> brute_force_kernel(const curaloop::Density& p, const curaloop::PreferenceModel& model,
                                              int k) {
  struct Item {
    double prob;
    double utility;
  };
  const auto& support = model.noise().support();
  const auto& probs = model.noise().probs();
  std::vector<Item> items;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < support.size(); ++j) {
      items.push_back({p.mass(i) * probs[j], std::exp(model.reward()[i] + support[j])});
    }
  }
  const int competitors = k - 1;
  std::vector<double> h(p.size(), 0.0);
  for (std::size_t x = 0; x < p.size(); ++x) {
    for (std::size_t j = 0; j < support.size(); ++j) {
      const double u = std::exp(model.reward()[x] + support[j]);
      std::vector<std::size_t> idx(competitors, 0);
      while (true) {
        double prob = probs[j];
        double sum = 0.0;
        for (int c = 0; c < competitors; ++c) {
          prob *= items[idx[c]].prob;
          sum += items[idx[c]].utility;
        }
        h[x] += prob * k * u / (u + sum);
        int c = 0;
        while (c < competitors && ++idx[c] == items.size()) idx[c++] = 0;
        if (c == competitors) break;
      }
    }
  }
  return h;
}

// c* for Q = (2, 1), uniform p_ref, alpha = 0.5. Clearing denominators in
// 0.25 / (1 - Q0 / (2c)) + 0.25 / (1 - Q1 / (2c)) = 1 gives
// c^2 - 2.25 c + 1 = 0; the root in (1, 2] is the larger one.
inline double two_state_c_star() { return (2.25 + std::sqrt(2.25 * 2.25 - 4.0)) / 2.0; }

}  // namespace oracles
