#pragma once

#include <cstdint>
#include <limits>

#include "aimh/types.hpp"

namespace aimh {

/// xoshiro256++ generator. Small state so that one stream per walker (or per
/// replica, in the hundreds of thousands) stays cheap to create and copy.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// A new independent stream keyed by `tag`. Does not advance *this.
  Rng derive(std::uint64_t tag) const;

  double uniform();  // [0, 1)
  double normal();
  Vector normal_vector(Eigen::Index n);

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Stream for one walker at one step. A walker's draws depend only on
/// (seed, walker, step), never on how many other walkers run or in what order.
Rng stream_for(std::uint64_t seed, std::uint64_t walker, std::uint64_t step);

}  // namespace aimh
