#pragma once

#include <cstdint>
#include <vector>

#include "nhk/tensor.hpp"

namespace nhk {

struct Interval {
  double lo = -1.0;
  double hi = 1.0;
  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
};

/// Scrambled Halton points in a box: the base-p radical inverse sequence,
/// shifted modulo 1 by a random offset drawn from a seeded mt19937_64
/// (Cranley-Patterson rotation). Identical (box, n, seed) gives identical points.
std::vector<VectorXd> sample_box(const std::vector<Interval>& box, int n, std::uint64_t seed);

/// Uniform doubles in [0,1) from a seeded mt19937_64, platform independent.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed);
  ~UniformStream();
  UniformStream(const UniformStream&) = delete;
  UniformStream& operator=(const UniformStream&) = delete;
  double next();
  double next(double lo, double hi) { return lo + (hi - lo) * next(); }

 private:
  struct Impl;
  Impl* impl_;
};

}  // namespace nhk
