#include <cmath>
#include <sstream>

#include "doctest.h"
#include "offgrid/certificates.hpp"

using namespace offgrid;

namespace {

std::shared_ptr<KernelModel> gaussian_model() {
  return std::make_shared<KernelModel>(
      make_gaussian_location(0.05, uniform_samples(0, 1, 256), DomainInterval(0.1, 0.9)));
}

// Anchors spaced by `gap` metric units around the domain midpoint.
Vec anchors(const CovariantKernel& m, int s, double gap) {
  const double mid = m.metric_G(m.domain().mid());
  Vec th(s);
  for (int k = 0; k < s; ++k) th(k) = m.metric_G_inverse(mid + (k - 0.5 * (s - 1)) * gap);
  return th;
}

double star_norm(const Mat& A, const DiscreteMeasure& nu, double q) {
  double m = 0.0;
  for (Index k = 0; k < A.cols(); ++k) m = std::max(m, lp_norm(A.col(k), nu, q));
  return m;
}

}  // namespace

TEST_CASE("op_norm_inf is the max absolute row sum") {
  Mat A(2, 3);
  A << 1, -2, 3, -4, 0.5, 0.25;
  CHECK(op_norm_inf(A) == 6.0);
  CHECK(op_norm_inf(Mat(0, 0)) == 0.0);
}

TEST_CASE("gram bundle blocks match kernel_cov") {
  auto m = gaussian_model();
  const Vec th = anchors(*m, 3, 2.0);
  const GramBundle g = gram_bundle(*m, th);
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l) {
      CHECK(g.G00(k, l) == doctest::Approx(m->kernel_cov(0, 0, th(k), th(l))).epsilon(1e-10).scale(1.0));
      CHECK(g.G10(k, l) == doctest::Approx(m->kernel_cov(1, 0, th(k), th(l))).epsilon(1e-10).scale(1.0));
      CHECK(g.G21(k, l) == doctest::Approx(m->kernel_cov(2, 1, th(k), th(l))).epsilon(1e-9).scale(1.0));
    }
  CHECK((g.Gamma - g.Gamma.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("certificates interpolate and obey the coefficient bounds") {
  auto m = gaussian_model();
  const Vec th = anchors(*m, 3, 3.0);
  const double u = A_inf(*m, th);
  REQUIRE(u < 0.5);
  DiscreteMeasure nu(Vec::LinSpaced(4, 0.5, 2.0));
  for (double q : {2.0, kInf}) {
    const double p = conjugate_exponent(q);
    const double lift = std::pow(nu.mass(), 1.0 / p - (std::isinf(q) ? 0.0 : 1.0 / q));
    const Mat V = random_targets(nu, 3, q, 41);
    for (int k = 0; k < 3; ++k) CHECK(lp_norm(V.col(k), nu, q) == doctest::Approx(1.0));
    const Certificate ci = build_certificate(*m, th, V, CertificateKind::interpolating, q);
    const Certificate cd = build_certificate(*m, th, V, CertificateKind::derivative, q);

    // Residuals through the feature path: <P(z), phi^[i](theta_k)>.
    const Mat P = certificate_field(ci, *m), Q = certificate_field(cd, *m);
    for (int k = 0; k < 3; ++k) {
      const CovariantFrame f = m->frame(th(k));
      CHECK((P * f.phi[0] - V.col(k)).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK((P * f.phi[1]).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK((Q * f.phi[0]).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK((Q * f.phi[1] - V.col(k)).cwiseAbs().maxCoeff() <= 1e-8);
      for (int z = 0; z < 4; ++z) CHECK(eval_certificate(ci, *m, z, th(k), 0) == doctest::Approx(V(z, k)).epsilon(1e-8));
    }

    const double big = (1 - u) / (1 - 2 * u), small = u / (1 - 2 * u);
    CHECK(star_norm(ci.alpha, nu, q) <= big);
    CHECK(star_norm(ci.xi, nu, q) <= small);
    CHECK(star_norm(ci.alpha - V, nu, q) <= small);
    CHECK(star_norm(cd.alpha, nu, q) <= small);
    CHECK(star_norm(cd.xi, nu, q) <= big);
    CHECK(star_norm(ci.alpha, nu, p) <= lift * big);
    CHECK(star_norm(ci.xi, nu, p) <= lift * small);

    // ||P||_{L_T} from the Gram matrices equals the direct sum.
    double direct = 0.0;
    for (int z = 0; z < 4; ++z) direct += nu.weight(z) * P.row(z).squaredNorm();
    CHECK(certificate_norm(ci, gram_bundle(*m, th), nu) == doctest::Approx(std::sqrt(direct)).epsilon(1e-10));
  }
}

TEST_CASE("certificate construction refuses clustered anchors") {
  auto m = gaussian_model();
  const Vec th = anchors(*m, 2, 0.2);
  DiscreteMeasure nu = DiscreteMeasure::uniform(2);
  CHECK_THROWS_AS(build_certificate(*m, th, random_targets(nu, 2, 2.0, 1), CertificateKind::interpolating, 2.0),
                  PreconditionError);
}

TEST_CASE("delta search brackets the A_inf threshold") {
  const auto lim = gaussian_limit(0.05, DomainInterval(0.1, 0.9));
  const double u = 0.05;
  const DeltaEstimate de = delta_search(*lim, u, 3, 0.02, 16, 7);
  REQUIRE(de.finite());
  CHECK(de.worst_A <= u);
  // Equispaced configuration at the estimate satisfies the bound; well below fails.
  CHECK(A_inf(*lim, anchors(*lim, 3, de.delta)) <= u);
  CHECK(A_inf(*lim, anchors(*lim, 3, de.delta - 0.5)) > u);
  // Smaller u needs wider separation.
  CHECK(delta_search(*lim, 0.01, 3, 0.02, 16, 7).delta > de.delta);
  CHECK(delta_search(*lim, u, 1, 0.02).delta == 0.02);
  // Nothing fits in a tiny domain.
  const auto tiny = gaussian_limit(0.05, DomainInterval(0.45, 0.55));
  CHECK_FALSE(delta_search(*tiny, u, 3, 0.02, 4).finite());
}

TEST_CASE("thresholds and constants for the gaussian limit") {
  const auto lim = gaussian_limit(0.05, DomainInterval(0.1, 0.9));
  const double r = 0.5;
  const Thresholds th = thresholds(*lim, r, 1.0);
  const double eps = 1 - std::exp(-r * r / 2), nu = (1 - r * r) * std::exp(-r * r / 2);
  const double L21 = 1.38011904616074911;
  const double L10 = std::exp(-0.5);
  CHECK(th.eps == doctest::Approx(eps).epsilon(1e-12));
  CHECK(th.nu == doctest::Approx(nu).epsilon(1e-12));
  CHECK(th.H1 == doctest::Approx(std::min({0.5, 1.0, L21, nu / 10, eps / 10})).epsilon(1e-9));
  CHECK(th.H2 == doctest::Approx(std::min({1.0 / 6, 0.8 * eps / (5 + 2 * L10), 8 * nu / (9 * (2 + 2 * L21 + 4))}))
                     .epsilon(1e-9));
  const CertificateConstants cc = certificate_constants(*lim, r, 1.0);
  CHECK(cc.C_N == doctest::Approx(nu / 180).epsilon(1e-12));
  CHECK(cc.C_F == doctest::Approx(eps / 10).epsilon(1e-12));
  CHECK(cc.c_F == doctest::Approx(1.25 * L10 + 1.75).epsilon(1e-9));
  CHECK(cc.u_inf < th.H2);
  CHECK(cc.u_inf > 0);
  CHECK_THROWS_AS(certificate_constants(*lim, 2.0, 1.0), PreconditionError);
}

TEST_CASE("assumption verification on a well separated gaussian truth") {
  auto m = gaussian_model();
  const auto lim = default_limit(m, 0.1);
  const double r = 0.5;
  const CertificateConstants cc = certificate_constants(*lim, r, 1.0);
  const Vec th = anchors(*m, 2, 5.0);
  DiscreteMeasure nu = DiscreteMeasure::uniform(3);
  const Certificate ci = build_certificate(*m, th, random_targets(nu, 2, 2.0, 3), CertificateKind::interpolating, 2.0);
  const Certificate cd = build_certificate(*m, th, random_targets(nu, 2, 2.0, 4), CertificateKind::derivative, 2.0);
  const VerificationReport rep = verify_assumptions(ci, cd, *m, nu, 2.0, r, cc, 0.01);
  REQUIRE(rep.rows.size() == 7);
  CHECK(rep.rows[0].point == "i");
  CHECK(rep.rows[3].region == "global");
  for (const auto& row : rep.rows) CHECK_MESSAGE(row.pass, row.point << "," << row.assumption << " " << row.margin);
  CHECK(rep.min_margin() > 0);
  std::ostringstream os;
  write_verification_csv(os, rep);
  CHECK(os.str().rfind("point,assumption,region,theta,margin,pass\n", 0) == 0);

  // Anchors closer than 2r, or certificates on different anchors, are refused.
  CHECK_THROWS_AS(verify_assumptions(ci, cd, *m, nu, 2.0, 3.0, cc, 0.01), PreconditionError);
  Certificate moved = cd;
  moved.theta_star(0) += 0.01;
  CHECK_THROWS_AS(verify_assumptions(ci, moved, *m, nu, 2.0, r, cc, 0.01), std::invalid_argument);
}

TEST_CASE("quadratic decay check") {
  std::vector<DecaySample> ok{{0.1, 0.004}, {0.3, 0.04}, {2.0, 5.0}};
  CHECK(quadratic_decay_check(ok, DecayPart::vanishing, 0.5, 1.0));
  std::vector<DecaySample> bad{{0.3, 0.05}};
  CHECK_FALSE(quadratic_decay_check(bad, DecayPart::vanishing, 0.5, 1.0));
  std::vector<DecaySample> peak{{0.2, 1.0 - 0.5 * 0.3 * 0.04}};
  CHECK(quadratic_decay_check(peak, DecayPart::peak, 0.5, 0.1, 0.4));
  CHECK_FALSE(quadratic_decay_check(peak, DecayPart::peak, 0.5, 0.0, 0.4));
}
