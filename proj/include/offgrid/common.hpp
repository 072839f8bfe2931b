#pragma once

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <string>

namespace offgrid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// A documented precondition of an operation does not hold. The CLI maps this
// to exit code 2.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical breakdown: degenerate metric, singular system, quadrature failure.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Conjugate exponent q = p/(p-1), with q = inf for p = 1.
inline double conjugate_exponent(double p) {
  if (p <= 1.0) return kInf;
  if (p == kInf) return 1.0;
  return p / (p - 1.0);
}

}  // namespace offgrid
