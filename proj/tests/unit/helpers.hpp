#pragma once

#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "aimh/error.hpp"
#include "aimh/rng.hpp"
#include "aimh/types.hpp"

#define CHECK_THROWS_KIND(expr, expected_kind)                   \
  do {                                                           \
    bool caught_ = false;                                        \
    try {                                                        \
      (void)(expr);                                              \
    } catch (const aimh::Error& e_) {                            \
      caught_ = true;                                            \
      CHECK_MESSAGE(e_.kind() == (expected_kind), e_.what());    \
    }                                                            \
    CHECK_MESSAGE(caught_, "no aimh::Error from " #expr);        \
  } while (0)

namespace testing {

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Random point of the open simplex, entries bounded away from 0.
inline aimh::Vector random_simplex(Eigen::Index k, aimh::Rng& rng) {
  aimh::Vector p(k);
  for (Eigen::Index i = 0; i < k; ++i) p[i] = 0.05 + rng.uniform();
  return p / p.sum();
}

}  // namespace testing
