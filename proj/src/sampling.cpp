#include "nhk/sampling.hpp"

#include <cmath>
#include <random>

namespace nhk {

namespace {

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};

double radical_inverse(std::uint64_t index, int base) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (index > 0) {
    r += static_cast<double>(index % base) * f;
    index /= base;
    f *= inv;
  }
  return r;
}

double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

}  // namespace

struct UniformStream::Impl {
  std::mt19937_64 gen;
};

UniformStream::UniformStream(std::uint64_t seed) : impl_(new Impl{std::mt19937_64(seed)}) {}
UniformStream::~UniformStream() { delete impl_; }
double UniformStream::next() { return to_unit(impl_->gen()); }

std::vector<VectorXd> sample_box(const std::vector<Interval>& box, int n, std::uint64_t seed) {
  const int dim = static_cast<int>(box.size());
  UniformStream rng(seed);
  std::vector<double> shift(dim);
  for (int d = 0; d < dim; ++d) shift[d] = rng.next();
  std::vector<VectorXd> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    VectorXd p(dim);
    for (int d = 0; d < dim; ++d) {
      double u = radical_inverse(static_cast<std::uint64_t>(i + 1), kPrimes[d % 24]) + shift[d];
      u -= std::floor(u);
      p[d] = box[d].lo + box[d].width() * u;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace nhk
