#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "offgrid/dictionary.hpp"
#include "offgrid/measure.hpp"

using namespace offgrid;

namespace {
Vec v(std::initializer_list<double> xs) {
  Vec out(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) out(i++) = x;
  return out;
}
}  // namespace

TEST_CASE("lp_norm matches hand values") {
  DiscreteMeasure nu(v({1.0, 2.0}));
  CHECK(lp_norm(v({3, 4}), nu, 1.0) == doctest::Approx(3 + 8));
  CHECK(lp_norm(v({3, 4}), nu, 2.0) == doctest::Approx(std::sqrt(9 + 32.0)));
  CHECK(lp_norm(v({3, -4}), nu, kInf) == 4.0);
  CHECK(lp_norm(v({3, 4}), nu, 3.0) == doctest::Approx(std::cbrt(27 + 128.0)));
}

TEST_CASE("L-infinity ignores atoms of zero weight") {
  DiscreteMeasure nu(v({1.0, 0.0, 1.0}));
  CHECK(lp_norm(v({1, 100, -2}), nu, kInf) == 2.0);
  CHECK(lp_norm(v({1, 100, -2}), nu, 2.0) == doctest::Approx(std::sqrt(5.0)));
}

TEST_CASE("measure preconditions") {
  CHECK_THROWS_AS(DiscreteMeasure(v({0.0, 0.0})), PreconditionError);
  CHECK_THROWS_AS(DiscreteMeasure(v({1.0, -1.0})), PreconditionError);
  CHECK_THROWS_AS(DiscreteMeasure(std::vector<int>{1, 1}, v({1.0, 1.0})), PreconditionError);
  DiscreteMeasure nu(std::vector<int>{5, 9}, v({0.5, 1.5}));
  CHECK(nu.mass() == 2.0);
  CHECK(nu.index(1) == 9);
}

TEST_CASE("mixed norm sums column norms") {
  DiscreteMeasure nu = DiscreteMeasure::uniform(2);
  Mat B(2, 2);
  B << 3, 1, 4, -1;
  CHECK(mixed_norm(B, nu, 2.0) == doctest::Approx(5 + std::sqrt(2.0)));
  CHECK(mixed_norm(B, nu, 1.0) == doctest::Approx(7 + 2));
  CHECK_THROWS(mixed_norm(B, nu, 3.0));
}

TEST_CASE("dual_unit attains the dual norm") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  Vec a(5);
  for (auto& x : a) x = 0.2 + std::abs(normal(rng));
  DiscreteMeasure nu(a);
  for (double p : {1.0, 1.5, 2.0}) {
    Vec f(5);
    for (auto& x : f) x = normal(rng);
    const Vec w = dual_unit(f, nu, p);
    const double inner = (a.array() * w.array() * f.array()).sum();
    CHECK(inner == doctest::Approx(lp_norm(f, nu, p)).epsilon(1e-12));
    CHECK(lp_norm(w, nu, conjugate_exponent(p)) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("log-convexity interpolation of L^q norms") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    Vec a(6), f(6);
    for (auto& x : a) x = 0.1 + std::abs(normal(rng));
    for (auto& x : f) x = normal(rng);
    DiscreteMeasure nu(a);
    for (double q : {3.0, 4.0, 8.0}) {
      const double lhs = lp_norm(f, nu, q);
      const double rhs = std::pow(lp_norm(f, nu, 2.0), 2.0 / q) * std::pow(lp_norm(f, nu, kInf), (q - 2.0) / q);
      CHECK(lhs <= rhs + 1e-12);
    }
  }
}

TEST_CASE("synthesis and prediction error") {
  auto d = make_gaussian_location(0.05, uniform_samples(0, 1, 64), DomainInterval(0.1, 0.9));
  DiscreteMeasure nu(v({1.0, 3.0}));
  Mat B(2, 2);
  B << 1, -2, 0.5, 1;
  MixtureParams truth(B, v({0.3, 0.6}));
  CHECK(prediction_error(truth, truth, *d, nu) == 0.0);

  // Direct oracle: R = nu(Z)^{-1/2} (sum_z a_z ||diff_z||^2)^{1/2}.
  MixtureParams other(B * 0.5, v({0.3, 0.6}));
  const Mat diff = synthesize(truth, *d, nu).data - synthesize(other, *d, nu).data;
  double acc = 0.0;
  for (int z = 0; z < 2; ++z) acc += nu.weight(z) * diff.row(z).squaredNorm();
  CHECK(prediction_error(other, truth, *d, nu) == doctest::Approx(std::sqrt(acc / 4.0)).epsilon(1e-14));
  CHECK_THROWS_AS(synthesize(MixtureParams(B, v({0.3, 0.95})), *d, nu), PreconditionError);
}

TEST_CASE("CSV round trips are exact") {
  Mat B(2, 3);
  B << 0.1, -1e-17, 3.0, 1.0 / 3.0, 2.5e300, -7;
  MixtureParams m(B, v({0.2, 0.5, 0.7}));
  std::stringstream ss;
  write_mixture_csv(ss, m);
  const MixtureParams back = read_mixture_csv(ss);
  CHECK(back.B == m.B);
  CHECK(back.theta == m.theta);

  SignalSet y(B, DiscreteMeasure(std::vector<int>{4, 8}, v({1, 1})));
  std::stringstream s2;
  write_signal_csv(s2, y);
  std::vector<int> idx;
  CHECK(read_signal_csv(s2, &idx) == B);
  CHECK(idx == std::vector<int>{4, 8});
}
