#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "offgrid/solver.hpp"

using namespace offgrid;

namespace {

Mat randn(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Mat M(r, c);
  for (Index i = 0; i < M.size(); ++i) M.data()[i] = normal(rng);
  return M;
}

double column_norm(const Vec& b, const Vec& a, int p) {
  return p == 2 ? std::sqrt((a.array() * b.array().square()).sum()) : (a.array() * b.array().abs()).sum();
}

// Cyclic block coordinate descent: each column update is the exact minimizer
// with the others fixed. Slow but independent of the accelerated solver.
Mat coordinate_descent(const Mat& Y, const Mat& Phi, const Vec& a, double kappa, int p, int sweeps) {
  const Index n = Y.rows(), K = Phi.rows();
  const double kn = kappa * a.sum();
  const Mat G = Phi * Phi.transpose();
  const Mat C = Y * Phi.transpose();
  Mat B = Mat::Zero(n, K);
  for (int sw = 0; sw < sweeps; ++sw)
    for (Index k = 0; k < K; ++k) {
      const Vec r = (C.col(k) - B * G.col(k) + B.col(k) * G(k, k)) / G(k, k);
      const double thr = kn / G(k, k);
      if (p == 2) {
        const double nr = column_norm(r, a, 2);
        B.col(k) = nr <= thr ? Vec::Zero(n) : Vec(r * (1 - thr / nr));
      } else {
        B.col(k) = r.unaryExpr([thr](double v) { return v > thr ? v - thr : (v < -thr ? v + thr : 0.0); });
      }
    }
  return B;
}

// Largest violation of the subgradient optimality conditions, scaled by kappa.
double kkt_violation(const Mat& Y, const Mat& Phi, const Vec& a, double kappa, int p, const Mat& B) {
  const double mass = a.sum();
  const Mat grad = (B * Phi - Y) * Phi.transpose() / mass;  // per unit weight
  double worst = 0.0;
  for (Index k = 0; k < B.cols(); ++k) {
    const Vec g = grad.col(k);
    const Vec b = B.col(k);
    if (p == 2) {
      const double nb = column_norm(b, a, 2);
      if (nb > 0) worst = std::max(worst, (g + kappa * b / nb).cwiseAbs().maxCoeff() / kappa);
      else worst = std::max(worst, column_norm(g, a, 2) / kappa - 1);
    } else {
      for (Index z = 0; z < b.size(); ++z) {
        if (b(z) != 0) worst = std::max(worst, std::abs(g(z) + kappa * (b(z) > 0 ? 1 : -1)) / kappa);
        else worst = std::max(worst, std::abs(g(z)) / kappa - 1);
      }
    }
  }
  return worst;
}

std::shared_ptr<KernelModel> gaussian_model(Index T = 128) {
  return std::make_shared<KernelModel>(make_gaussian_location(0.05, uniform_samples(0, 1, T), DomainInterval(0.1, 0.9)));
}

}  // namespace

TEST_CASE("objective equals direct summation") {
  auto m = gaussian_model();
  std::mt19937_64 rng(1);
  DiscreteMeasure nu(Vec::LinSpaced(3, 0.5, 1.5));
  const Mat Y = randn(3, 128, rng);
  const Mat B = randn(3, 2, rng);
  Vec th(2);
  th << 0.3, 0.6;
  for (int p : {1, 2}) {
    double fid = 0.0;
    for (int z = 0; z < 3; ++z) {
      Vec pred = Vec::Zero(128);
      for (int k = 0; k < 2; ++k) pred += B(z, k) * normalized_feature(m->dictionary(), th(k));
      fid += nu.weight(z) * (Y.row(z).transpose() - pred).squaredNorm();
    }
    double pen = 0.0;
    for (int k = 0; k < 2; ++k) pen += column_norm(B.col(k), nu.weights(), p);
    const double expect = fid / (2 * nu.mass()) + 0.3 * pen;
    CHECK(objective(Y, B, th, m->dictionary(), nu, 0.3, p) == doctest::Approx(expect).epsilon(1e-13));
    CHECK(objective_features(Y, B, feature_matrix(m->dictionary(), th), nu, 0.3, p) ==
          doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("group prox is the exact proximal map") {
  std::mt19937_64 rng(2);
  DiscreteMeasure nu(Vec::LinSpaced(4, 0.5, 2.0));
  const Vec& a = nu.weights();
  const Mat B = randn(4, 3, rng), G = randn(4, 3, rng);
  const double step = 0.4, kn = 0.8;
  for (int p : {1, 2}) {
    const Mat X = group_prox_step(B, G, step, kn, p, nu);
    const Mat V = B - step * G;
    auto h = [&](const Mat& Z) {
      double v = 0.0;
      for (Index k = 0; k < Z.cols(); ++k)
        v += 0.5 * (a.array() * (Z.col(k) - V.col(k)).array().square()).sum() + step * kn * column_norm(Z.col(k), a, p);
      return v;
    };
    const double hx = h(X);
    for (int t = 0; t < 200; ++t) CHECK(hx <= h(X + 0.05 * randn(4, 3, rng)) + 1e-14);
  }
  CHECK_THROWS_AS(group_prox_step(B, G, step, kn, 3, nu), PreconditionError);
}

TEST_CASE("oracle-mode subproblem matches the coordinate-descent reference") {
  auto m = std::make_shared<KernelModel>(make_gaussian_location(0.05, uniform_samples(0, 1, 64), DomainInterval(0.1, 0.9)));
  std::mt19937_64 rng(3);
  const int n = 5, K = 7;
  DiscreteMeasure nu(Vec::LinSpaced(n, 0.5, 1.5));
  Vec th = Vec::LinSpaced(K, 0.15, 0.85);
  const Mat Phi = feature_matrix(m->dictionary(), th);
  const Mat Y = randn(n, K, rng) * Phi + 0.3 * randn(n, 64, rng);
  for (int p : {1, 2}) {
    const double kappa = 0.05;
    const SubproblemResult fast = solve_subproblem(Y, Phi, nu, kappa, p, Mat(), 20000, 1e-14);
    const Mat Bref = coordinate_descent(Y, Phi, nu.weights(), kappa, p, 20000);
    const double Fref = objective_features(Y, Bref, Phi, nu, kappa, p);
    CHECK(fast.converged);
    CHECK(fast.objective == doctest::Approx(objective_features(Y, fast.B, Phi, nu, kappa, p)).epsilon(1e-12));
    CHECK(std::abs(fast.objective - Fref) <= 1e-6);
    CHECK(kkt_violation(Y, Phi, nu.weights(), kappa, p, fast.B) <= 1e-4);
  }
}

TEST_CASE("refine_theta recovers locations with the true amplitudes") {
  auto m = gaussian_model();
  Vec th(2);
  th << 0.35, 0.62;
  Mat B(2, 2);
  B << 1.0, -1.5, 0.7, 2.0;
  DiscreteMeasure nu = DiscreteMeasure::uniform(2);
  const Mat Y = B * feature_matrix(m->dictionary(), th);
  Vec start = th;
  start(0) += 0.01;
  start(1) -= 0.015;
  const Vec got = refine_theta(Y, B, start, m->dictionary(), nu, 100);
  CHECK((got - th).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("noiseless recovery for s = 1, 2, 3") {
  auto m = gaussian_model(256);
  const double mid = m->metric_G(m->domain().mid());
  DiscreteMeasure nu = DiscreteMeasure::uniform(3);
  std::mt19937_64 rng(4);
  for (int s = 1; s <= 3; ++s) {
    Vec th(s);
    for (int k = 0; k < s; ++k) th(k) = m->metric_G_inverse(mid + (k - 0.5 * (s - 1)) * 3.3);
    Mat B = randn(3, s, rng);
    B.array() += B.array().sign();
    const MixtureParams truth(B, th);
    const Mat Y = synthesize(truth, m->dictionary(), nu).data;
    SolverConfig cfg;
    cfg.kappa = 1e-9;
    cfg.p = 2;
    cfg.K_max = 8;
    const SolveResult res = solve(Y, *m, nu, cfg);
    REQUIRE(res.params.K() == s);
    Vec got = res.params.theta;
    std::sort(got.data(), got.data() + s);
    for (int k = 0; k < s; ++k) CHECK(m->dist(got(k), th(k)) <= 1e-3);
    const double rel = prediction_error(res.params, truth, m->dictionary(), nu) / (lt_norm(Y, nu) / std::sqrt(nu.mass()));
    CHECK(rel <= 1e-6);
  }
}

TEST_CASE("dual check certifies the noisy solution at a moderate kappa") {
  auto m = gaussian_model(256);
  DiscreteMeasure nu = DiscreteMeasure::uniform(3);
  std::mt19937_64 rng(8);
  Vec th(2);
  th << 0.4, 0.65;
  const Mat Y = synthesize(MixtureParams(2 * Mat::Ones(3, 2), th), m->dictionary(), nu).data + 0.05 * randn(3, 256, rng);
  SolverConfig cfg;
  cfg.kappa = 0.05;
  const SolveResult res = solve(Y, *m, nu, cfg);
  CHECK_FALSE(res.trace.warning);
  CHECK(res.trace.final_dual_sup <= cfg.kappa * nu.mass() * (1 + cfg.tol_dual));
  for (size_t i = 1; i < res.trace.entries.size(); ++i)
    CHECK(res.trace.entries[i].objective <= res.trace.entries[i - 1].objective);
}

TEST_CASE("large kappa returns the empty estimate") {
  auto m = gaussian_model();
  DiscreteMeasure nu = DiscreteMeasure::uniform(2);
  std::mt19937_64 rng(5);
  const Mat Y = randn(2, 128, rng);
  SolverConfig cfg;
  cfg.kappa = 1e6;
  const SolveResult res = solve(Y, *m, nu, cfg);
  CHECK(res.params.K() == 0);
  CHECK(res.trace.converged);
  CHECK(res.trace.entries.size() == 1);
  std::ostringstream os;
  write_trace_csv(os, res.trace);
  CHECK(os.str().rfind("iter,objective,event,dual_sup\n0,", 0) == 0);
}

TEST_CASE("capacity is enforced") {
  auto m = gaussian_model();
  DiscreteMeasure nu = DiscreteMeasure::uniform(2);
  std::mt19937_64 rng(6);
  const Mat Y = randn(2, 128, rng);
  SolverConfig cfg;
  cfg.kappa = 1e-4;
  cfg.K_max = 2;
  const SolveResult res = solve(Y, *m, nu, cfg);
  CHECK(res.params.K() <= 2);
  CHECK(res.trace.warning);
  SolverConfig bad;
  bad.p = 3;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
}

TEST_CASE("dual_sup of the residual") {
  auto m = gaussian_model();
  DiscreteMeasure nu = DiscreteMeasure::uniform(2);
  std::mt19937_64 rng(7);
  const Mat R = randn(2, 128, rng);
  const SupResult s = dual_sup(R, *m, nu, 2.0, 0.05);
  const GridTable fine = make_grid_table(*m, m->dictionary(), 0.001, 0);
  CHECK(s.value >= kernels::correlation_norms_serial(R, fine.phi, nu, 2.0).maxCoeff() - 1e-9);
  const GridTable t1 = make_grid_table(*m, m->dictionary(), 0.05, 1);
  CHECK_THROWS_AS(dual_sup(R, m->dictionary(), nu, 2.0, t1), std::invalid_argument);
}
