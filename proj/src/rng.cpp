#include "aimh/rng.hpp"

#include <bit>
#include <cmath>
#include <random>

namespace aimh {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
  for (auto& word : s_) word = splitmix64(seed);
}

Rng::result_type Rng::operator()() {
  const std::uint64_t result = std::rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

Rng Rng::derive(std::uint64_t tag) const {
  std::uint64_t mix = tag ^ 0x5851f42d4c957f2dULL;
  for (const auto word : s_) {
    std::uint64_t w = word ^ mix;
    mix = splitmix64(w);
  }
  return Rng(mix);
}

double Rng::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(*this);
}

Vector Rng::normal_vector(Eigen::Index n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(*this);
  return v;
}

Rng stream_for(std::uint64_t seed, std::uint64_t walker, std::uint64_t step) {
  std::uint64_t state = seed;
  std::uint64_t key = splitmix64(state);
  state = key ^ (walker * 0xd1b54a32d192ed03ULL);
  key = splitmix64(state);
  state = key ^ (step * 0x8cb92ba72f3d8dd7ULL);
  return Rng(splitmix64(state));
}

}  // namespace aimh
