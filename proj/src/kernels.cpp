#include "offgrid/kernels.hpp"

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>

#include "offgrid/kernel.hpp"

namespace offgrid {
namespace kernels {

namespace {
constexpr Index kBlock = 64;

Vec column(const Dictionary& dict, double theta, int order) {
  return order == 0 ? normalized_feature(dict, theta) : covariant_frame(dict, theta).phi[order];
}
}  // namespace

Mat tabulate(const Dictionary& dict, const std::vector<double>& thetas, int order) {
  if (order < 0 || order > 3) throw std::out_of_range("tabulate order must be 0..3");
  const Index G = static_cast<Index>(thetas.size());
  Mat out(dict.size(), G);
#pragma omp parallel for schedule(dynamic, 16)
  for (Index g = 0; g < G; ++g) out.col(g) = column(dict, thetas[g], order);
  return out;
}

Mat tabulate_serial(const Dictionary& dict, const std::vector<double>& thetas, int order) {
  if (order < 0 || order > 3) throw std::out_of_range("tabulate order must be 0..3");
  Mat out(dict.size(), static_cast<Index>(thetas.size()));
  for (size_t g = 0; g < thetas.size(); ++g) out.col(static_cast<Index>(g)) = column(dict, thetas[g], order);
  return out;
}

// Blocks have a fixed width so the floating-point result does not depend on
// the thread count.
Vec correlation_norms(const Mat& data, const Mat& table, const DiscreteMeasure& nu, double q) {
  if (data.cols() != table.rows() || data.rows() != nu.size()) throw std::invalid_argument("correlation_norms: shape mismatch");
  const Index G = table.cols();
  const Index blocks = (G + kBlock - 1) / kBlock;
  Vec out(G);
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < blocks; ++b) {
    const Index start = b * kBlock;
    const Index width = std::min(kBlock, G - start);
    const Mat C = data * table.middleCols(start, width);
    for (Index g = 0; g < width; ++g) out(start + g) = lp_norm(C.col(g), nu, q);
  }
  return out;
}

Vec correlation_norms_serial(const Mat& data, const Mat& table, const DiscreteMeasure& nu, double q) {
  if (data.cols() != table.rows() || data.rows() != nu.size()) throw std::invalid_argument("correlation_norms: shape mismatch");
  const Index n = data.rows(), T = data.cols(), G = table.cols();
  Vec out(G);
  Vec c(n);
  for (Index g = 0; g < G; ++g) {
    for (Index z = 0; z < n; ++z) {
      double s = 0.0;
      for (Index t = 0; t < T; ++t) s += data(z, t) * table(t, g);
      c(z) = s;
    }
    out(g) = lp_norm(c, nu, q);
  }
  return out;
}

}  // namespace kernels

GridTable make_grid_table(const CovariantKernel& metric, const Dictionary& dict, double step, int order) {
  GridTable t;
  t.theta = metric.metric_grid(step);
  t.step = step;
  t.order = order;
  t.phi = kernels::tabulate(dict, t.theta, order);
  return t;
}

SupResult grid_sup(const Mat& data, const Dictionary& dict, const DiscreteMeasure& nu, double q,
                   const GridTable& table, bool polish) {
  const Vec vals = kernels::correlation_norms(data, table.phi, nu, q);
  Index best = 0;
  for (Index g = 1; g < vals.size(); ++g)
    if (vals(g) > vals(best)) best = g;
  SupResult out{vals(best), table.theta[best]};
  if (!polish || out.value == 0.0) return out;

  const Index G = vals.size();
  const double lo = table.theta[std::max<Index>(best - 1, 0)];
  const double hi = table.theta[std::min<Index>(best + 1, G - 1)];
  auto f = [&](double th) {
    const Vec phi = table.order == 0 ? normalized_feature(dict, th) : covariant_frame(dict, th).phi[table.order];
    return lp_norm(data * phi, nu, q);
  };
  if (hi > lo) {
    auto res = boost::math::tools::brent_find_minima([&](double th) { return -f(th); }, lo, hi, 48);
    if (-res.second > out.value) out = {-res.second, res.first};
  }
  return out;
}

}  // namespace offgrid
