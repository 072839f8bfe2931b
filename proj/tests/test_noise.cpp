#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "offgrid/noise.hpp"

using namespace offgrid;

TEST_CASE("streams are reproducible and distinct") {
  auto a = make_stream(5, 1, 2, 3), b = make_stream(5, 1, 2, 3), c = make_stream(5, 1, 2, 4);
  const auto xa = a(), xb = b(), xc = c();
  CHECK(xa == xb);
  CHECK(xa != xc);
  CHECK(make_stream(1ULL << 40, 0)() != make_stream(0, 0)());
}

TEST_CASE("noise has the configured variance and a stable row layout") {
  NoiseModel nm{0.7, 0.25, 9};
  const Mat W = sample_noise(nm, 20, 5000, 3);
  const double var = W.squaredNorm() / static_cast<double>(W.size());
  const double expect = 0.49 * 0.25;
  // Sample variance of 1e5 normals: relative sd about 0.0045.
  CHECK(var == doctest::Approx(expect).epsilon(0.02));
  CHECK(std::abs(W.mean()) < 4 * std::sqrt(expect / W.size()));
  // Row z does not depend on how many rows follow.
  CHECK(sample_noise(nm, 2, 5000, 3).row(1) == W.row(1));
  CHECK(sample_noise(nm, 2, 50, 3) != sample_noise(nm, 2, 50, 4));
  CHECK_THROWS_AS(sample_noise(NoiseModel{-1, 1, 1}, 1, 1), PreconditionError);
}

TEST_CASE("tail functions match high-precision values") {
  CHECK(f_tail(1, 2) + 4 / std::numbers::sqrt2 * g_tail(1, 2) == doctest::Approx(3.11992946608554799).epsilon(1e-13));
  CHECK(F_tail(4) == doctest::Approx(0.0732625555549367212).epsilon(1e-13));
  CHECK(g_tail(4, 4) == doctest::Approx(16 * std::exp(-2.0)).epsilon(1e-13));
  CHECK(log_g_tail(300, 400) == doctest::Approx(150 * std::log(400.0) - 200 - std::lgamma(150.0)));
  CHECK_THROWS_AS(f_tail(1, 0), std::domain_error);
}

TEST_CASE("chi2 bound precondition") {
  Chi2BoundInputs in;
  in.n = 3;
  in.sigma = 2;
  in.delta_T = 0.5;
  CHECK(chi2_threshold(in) == doctest::Approx(4 * 2.0));
  CHECK_THROWS_AS(chi2_bound(7.9, in), std::domain_error);
  const double x = 8.0 / 2.0;
  CHECK(chi2_bound(8.0, in) ==
        doctest::Approx(f_tail(3, x) + 4 * in.diam / std::pow(2.0, 1.5) * g_tail(3, x)));
}

TEST_CASE("kappa and failure probabilities") {
  CHECK(kappa_p2(100, 4, 0.5, 0.01, 1, 4, 2) ==
        doctest::Approx(2 * 0.5 * std::sqrt(0.04) / 4 * (1 + std::sqrt(1 + std::log(100.0) / 4))));
  CHECK(kappa_p1(100, 0.5, 0.01, 4, 3) == doctest::Approx(3 * 0.5 * std::sqrt(0.01 * std::log(100.0)) / 4));
  CHECK_THROWS_AS(kappa_p2(1.0, 4, 1, 1, 1, 1, 1), PreconditionError);
  CHECK(failure_prob_p2(100, 4, 3, 1) == doctest::Approx(0.01 + 3 * F_tail(4) / 10));
  CHECK(failure_prob_p1(100, 4, 3, 2) ==
        doctest::Approx(2 * 4 * std::max(3 / (100 * std::sqrt(std::log(100.0))), 0.01)));
}

TEST_CASE("event constants are consistent") {
  const auto lim = gaussian_limit(0.05, DomainInterval(0.1, 0.9));
  const CertificateConstants cc = certificate_constants(*lim, 0.5, 1.0);
  const TheoreticalConstants t = event_constants(cc, 3.0, 15.0);
  CHECK(t.C_cal > 0);
  CHECK(t.C_cal < 1);
  CHECK(t.C_prime == 1.0);
  CHECK(t.C1 * t.C1_prime == doctest::Approx(std::sqrt(2.0)));
  CHECK(t.C2_prime == doctest::Approx(4 * std::sqrt(6.0)));
  CHECK(t.C2 == doctest::Approx(12 * std::sqrt(6.0)));
  CHECK(t.C4 == 3.0);
  CHECK(t.C0 == doctest::Approx(6 * t.C_big));
}

TEST_CASE("sup_stat equals the brute-force supremum") {
  auto d = make_gaussian_location(0.05, uniform_samples(0, 1, 64), DomainInterval(0.1, 0.9));
  KernelModel m(d);
  DiscreteMeasure nu = DiscreteMeasure::uniform(3);
  const Mat W = sample_noise(NoiseModel{1, 1, 4}, 3, 64, 0);
  for (int i = 0; i <= 2; ++i) {
    const GridTable fine = make_grid_table(m, *d, 0.0005, i);
    const double brute = kernels::correlation_norms_serial(W, fine.phi, nu, 2.0).maxCoeff();
    const double s = sup_stat(W, m, nu, i, 2.0, 0.05);
    CHECK(s >= brute - 1e-9);
    CHECK(s <= brute * (1 + 1e-6));
  }
  const GridTable t1 = make_grid_table(m, *d, 0.05, 1);
  CHECK_THROWS_AS(sup_stat(W, *d, nu, 0, 2.0, t1), std::invalid_argument);
}

TEST_CASE("chi2 bound dominates the empirical tail (small Monte Carlo)") {
  auto d = make_gaussian_location(0.05, uniform_samples(0, 1, 64), DomainInterval(0.1, 0.9));
  KernelModel m(d);
  const int n = 3, R = 1500;
  DiscreteMeasure nu = DiscreteMeasure::uniform(n);
  const GridTable table = make_grid_table(m, *d, 0.05, 0);
  NoiseModel nm{1.0, 1.0, 21};
  std::vector<double> Y(R);
  for (int r = 0; r < R; ++r) {
    const double M = sup_stat(sample_noise(nm, n, 64, r), *d, nu, 0, 2.0, table);
    Y[r] = M * M;
  }
  Chi2BoundInputs in;
  in.n = n;
  in.diam = m.diameter();
  const double u0 = chi2_threshold(in);
  for (double u : {u0, 1.5 * u0, 2 * u0, 3 * u0}) {
    const double frac = std::count_if(Y.begin(), Y.end(), [&](double y) { return y > u; }) / double(R);
    const double se = std::sqrt(std::max(frac * (1 - frac), 1.0 / R) / R);
    CHECK(frac <= chi2_bound(u, in) + 3 * se);
  }
}
