#pragma once

// Grid kernels shared by the solver, the noise statistics and the
// certificate checks. Each has an OpenMP version and a plain serial version
// kept as the test reference.

#include <vector>

#include "offgrid/dictionary.hpp"
#include "offgrid/measure.hpp"

namespace offgrid {

class CovariantKernel;

namespace kernels {

// Column g holds phi^[order](thetas[g]); T x G.
Mat tabulate(const Dictionary& dict, const std::vector<double>& thetas, int order);
Mat tabulate_serial(const Dictionary& dict, const std::vector<double>& thetas, int order);

// out(g) = || data * table.col(g) ||_{L^q(nu)}.
Vec correlation_norms(const Mat& data, const Mat& table, const DiscreteMeasure& nu, double q);
Vec correlation_norms_serial(const Mat& data, const Mat& table, const DiscreteMeasure& nu, double q);

}  // namespace kernels

struct GridTable {
  std::vector<double> theta;
  double step = 0.0;
  int order = 0;
  Mat phi;  // T x G
};

GridTable make_grid_table(const CovariantKernel& metric, const Dictionary& dict, double step, int order);

struct SupResult {
  double value = 0.0;
  double theta = 0.0;
};

// sup_theta || data * phi^[order](theta) ||_{L^q(nu)}: grid argmax (ties to the
// smaller theta) followed by a Brent polish between the grid neighbours.
SupResult grid_sup(const Mat& data, const Dictionary& dict, const DiscreteMeasure& nu, double q,
                   const GridTable& table, bool polish = true);

}  // namespace offgrid
