#pragma once

#include <cstdint>
#include <vector>

#include "fnn/funcore.hpp"
#include "fnn/random.hpp"

namespace fnn::test {

inline std::vector<double> normals(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = sd * rng.normal();
  return v;
}

inline MultiCurve random_curves(std::size_t channels, std::size_t length, std::uint64_t seed) {
  return MultiCurve(Grid(length), channels, normals(channels * length, seed));
}

inline Curve random_curve(std::size_t length, std::uint64_t seed) {
  return Curve(Grid(length), normals(length, seed));
}

}  // namespace fnn::test
