#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

namespace nhk {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Dense rank-3 array stored row-major: t(i, j, k) = data[(i * d1 + j) * d2 + k].
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int d0, int d1, int d2) : d0_(d0), d1_(d1), d2_(d2), data_(static_cast<std::size_t>(d0 * d1 * d2), 0.0) {}

  double& operator()(int i, int j, int k) { return data_[(static_cast<std::size_t>(i) * d1_ + j) * d2_ + k]; }
  double operator()(int i, int j, int k) const { return data_[(static_cast<std::size_t>(i) * d1_ + j) * d2_ + k]; }

  int dim0() const { return d0_; }
  int dim1() const { return d1_; }
  int dim2() const { return d2_; }
  bool empty() const { return data_.empty(); }
  const std::vector<double>& data() const { return data_; }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
  }

 private:
  int d0_ = 0, d1_ = 0, d2_ = 0;
  std::vector<double> data_;
};

inline double max_abs(const MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace nhk
