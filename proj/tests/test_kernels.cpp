#include <omp.h>

#include <random>

#include "doctest.h"
#include "offgrid/kernel.hpp"
#include "offgrid/kernels.hpp"

using namespace offgrid;

namespace {

Mat gaussian_data(int n, Index T, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Mat out(n, T);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
  return out;
}

}  // namespace

TEST_CASE("parallel tabulate equals the serial reference") {
  auto d = make_gaussian_location(0.03, uniform_samples(0, 1, 200), DomainInterval(0.1, 0.9));
  KernelModel m(d);
  const auto grid = m.metric_grid(0.05);
  for (int order = 0; order <= 3; ++order) CHECK(kernels::tabulate(*d, grid, order) == kernels::tabulate_serial(*d, grid, order));
  CHECK_THROWS(kernels::tabulate(*d, grid, 4));
}

TEST_CASE("correlation norms: blocked parallel, serial and naive agree") {
  auto d = make_fourier_lowpass(8, DomainInterval(0, 1));
  KernelModel m(d);
  const auto grid = m.metric_grid(0.03);
  const Mat table = kernels::tabulate(*d, grid, 1);
  DiscreteMeasure nu(Vec::LinSpaced(5, 0.5, 2.5));
  const Mat data = gaussian_data(5, d->size(), 3);
  for (double q : {1.0, 2.0, kInf}) {
    const Vec par = kernels::correlation_norms(data, table, nu, q);
    const Vec ser = kernels::correlation_norms_serial(data, table, nu, q);
    CHECK((par - ser).cwiseAbs().maxCoeff() <= 1e-12 * ser.maxCoeff());
    for (Index g : {Index(0), Index(17), table.cols() - 1}) {
      const Vec c = data * table.col(g);
      CHECK(par(g) == doctest::Approx(lp_norm(c, nu, q)).epsilon(1e-13));
    }
  }
}

TEST_CASE("correlation norms do not depend on the thread count") {
  auto d = make_gaussian_location(0.02, uniform_samples(0, 1, 300), DomainInterval(0.1, 0.9));
  KernelModel m(d);
  const Mat table = kernels::tabulate(*d, m.metric_grid(0.02), 0);
  const Mat data = gaussian_data(3, 300, 5);
  DiscreteMeasure nu = DiscreteMeasure::uniform(3);
  omp_set_num_threads(1);
  const Vec one = kernels::correlation_norms(data, table, nu, 2.0);
  omp_set_num_threads(4);
  const Vec four = kernels::correlation_norms(data, table, nu, 2.0);
  omp_set_num_threads(1);
  CHECK(one == four);
}

TEST_CASE("grid_sup matches a brute-force fine grid") {
  auto d = make_gaussian_location(0.04, uniform_samples(0, 1, 128), DomainInterval(0.1, 0.9));
  KernelModel m(d);
  DiscreteMeasure nu = DiscreteMeasure::uniform(4);
  const Mat data = gaussian_data(4, 128, 9);
  for (int order = 0; order <= 2; ++order) {
    const GridTable coarse = make_grid_table(m, *d, 0.1, order);
    const GridTable fine = make_grid_table(m, *d, 0.0005, order);
    const SupResult polished = grid_sup(data, *d, nu, 2.0, coarse, true);
    const SupResult raw = grid_sup(data, *d, nu, 2.0, coarse, false);
    const double brute = kernels::correlation_norms_serial(data, fine.phi, nu, 2.0).maxCoeff();
    CHECK(polished.value >= raw.value);
    CHECK(polished.value >= brute - 1e-9);
    CHECK(polished.value <= brute * (1 + 1e-6));
  }
}

TEST_CASE("grid_sup of zero data is zero at the first grid point") {
  auto d = make_fourier_lowpass(3, DomainInterval(0, 1));
  KernelModel m(d);
  const GridTable t = make_grid_table(m, *d, 0.1, 0);
  const SupResult r = grid_sup(Mat::Zero(2, d->size()), *d, DiscreteMeasure::uniform(2), 2.0, t);
  CHECK(r.value == 0.0);
  CHECK(r.theta == 0.0);
}
