#include "offgrid/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "offgrid/kernels.hpp"

namespace offgrid {

double op_norm_inf(const Mat& A) {
  if (A.size() == 0) return 0.0;
  return A.cwiseAbs().rowwise().sum().maxCoeff();
}

namespace {

// K^[i,j](theta_k, theta_l) for i, j <= 2, as 3x3 blocks of s x s matrices.
std::array<std::array<Mat, 3>, 3> cov_matrices(const CovariantKernel& model, const Vec& theta) {
  const Index s = theta.size();
  std::array<std::array<Mat, 3>, 3> M;
  if (auto* km = dynamic_cast<const KernelModel*>(&model)) {
    std::vector<CovariantFrame> fr;
    fr.reserve(s);
    for (Index k = 0; k < s; ++k) fr.push_back(km->frame(theta(k)));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        M[i][j].resize(s, s);
        for (Index k = 0; k < s; ++k)
          for (Index l = 0; l < s; ++l) M[i][j](k, l) = fr[k].phi[i].dot(fr[l].phi[j]);
      }
    return M;
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) M[i][j].resize(s, s);
  for (Index k = 0; k < s; ++k)
    for (Index l = 0; l < s; ++l) {
      const Block3 b = model.kernel_cov_block(theta(k), theta(l));
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) M[i][j](k, l) = b[i][j];
    }
  return M;
}

}  // namespace

GramBundle gram_bundle(const CovariantKernel& model, const Vec& theta_star) {
  const auto M = cov_matrices(model, theta_star);
  GramBundle g;
  g.theta_star = theta_star;
  g.G00 = M[0][0];
  g.G10 = M[1][0];
  g.G11 = M[1][1];
  g.G20 = M[2][0];
  g.G21 = M[2][1];
  const Index s = theta_star.size();
  g.Gamma.resize(2 * s, 2 * s);
  g.Gamma << g.G00, g.G10.transpose(), g.G10, g.G11;
  return g;
}

double A_inf(const CovariantKernel& model, const Vec& theta) {
  const auto M = cov_matrices(model, theta);
  const Mat I = Mat::Identity(theta.size(), theta.size());
  return std::max({op_norm_inf(I - M[0][0]), op_norm_inf(I - M[1][1]), op_norm_inf(I + M[2][0]),
                   op_norm_inf(M[1][0]), op_norm_inf(M[0][1]), op_norm_inf(M[1][2])});
}

DeltaEstimate delta_search(const CovariantKernel& model, double u, int s, double grid_step, int restarts,
                           std::uint64_t seed) {
  if (!(u > 0) || s < 1) throw PreconditionError("delta_search needs u > 0 and s >= 1");
  DeltaEstimate est;
  est.grid_step = grid_step;
  if (s == 1) {
    est.delta = grid_step;
    est.worst_A = A_inf(model, Vec::Constant(1, model.domain().mid()));
    return est;
  }
  const double G0 = model.metric_G(model.domain().lo);
  const double D = model.diameter();

  auto to_theta = [&](const std::vector<double>& t) {
    Vec th(s);
    for (int k = 0; k < s; ++k) th(k) = model.domain().clamp(model.metric_G_inverse(t[k]));
    return th;
  };

  auto worst = [&](double delta) {
    double w = 0.0;
    const double slack = D - (s - 1) * delta;
    if (slack < 0) return kInf;
    const int offsets = 16;
    std::vector<double> t(s);
    for (int o = 0; o <= offsets; ++o) {
      const double start = G0 + slack * o / offsets;
      for (int k = 0; k < s; ++k) t[k] = start + k * delta;
      w = std::max(w, A_inf(model, to_theta(t)));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int r = 0; r < restarts; ++r) {
      // Gaps delta * (1 + e_k) scaled to fit, random start.
      std::vector<double> gaps(s - 1);
      double extra = 0.0;
      for (auto& g : gaps) g = 0.5 * unif(rng), extra += g;
      const double room = slack / delta;
      const double scale = extra > room ? room / extra : 1.0;
      double used = 0.0;
      for (auto& g : gaps) g = delta * (1.0 + scale * g), used += g;
      const double start = G0 + (D - used) * unif(rng);
      t[0] = start;
      for (int k = 1; k < s; ++k) t[k] = t[k - 1] + gaps[k - 1];
      w = std::max(w, A_inf(model, to_theta(t)));
    }
    return w;
  };

  double hi = D / (s - 1) * (1.0 - 1e-9);
  double whi = worst(hi);
  if (!(whi <= u)) {
    est.delta = kInf;
    est.worst_A = whi;
    return est;
  }
  double lo = hi;
  while (true) {
    lo = 0.5 * hi;
    if (lo < grid_step) {
      const double w = worst(grid_step);
      if (w <= u) {
        est.delta = grid_step;
        est.worst_A = w;
        return est;
      }
      lo = grid_step;
      break;
    }
    const double w = worst(lo);
    if (w > u) break;
    hi = lo;
    whi = w;
  }
  while (hi - lo > grid_step) {
    const double mid = 0.5 * (lo + hi);
    const double w = worst(mid);
    if (w <= u) hi = mid, whi = w;
    else lo = mid;
  }
  est.delta = hi;
  est.worst_A = whi;
  return est;
}

Thresholds thresholds(const LimitKernelSpec& limit, double r, double rho) {
  if (!(r > 0) || !(rho >= 1.0)) throw PreconditionError("thresholds need r > 0 and rho >= 1");
  const auto& c = limit.constants();
  Thresholds th;
  th.eps = limit.eps_far(r / rho).value;
  th.nu = limit.nu_near(rho * r).value;
  const double L10 = c.Lij(1, 0), L20 = c.Lij(2, 0), L21 = c.Lij(2, 1);
  th.H1 = std::min({0.5, L20, L21, th.nu / 10.0, th.eps / 10.0});
  th.H2 = std::min({1.0 / 6.0, 8.0 * th.eps / (10.0 * (5.0 + 2.0 * L10)), 8.0 * th.nu / (9.0 * (2.0 * L20 + 2.0 * L21 + 4.0))});
  th.feasible = th.eps > 0 && th.nu > 0;
  return th;
}

CertificateConstants certificate_constants(const LimitKernelSpec& limit, double r, double rho) {
  const auto& c = limit.constants();
  const Thresholds th = thresholds(limit, r, rho);
  if (!th.feasible) throw PreconditionError("certificate infeasible: eps_inf(r/rho) or nu_inf(rho r) is not positive");
  CertificateConstants cc;
  cc.r = r;
  cc.rho = rho;
  cc.C_N = th.nu / 180.0;
  cc.C_N_prime = 5.0 / 8.0 * c.Lij(2, 0) + 1.0 / 8.0 * c.Lij(2, 1) + 0.5;
  cc.C_F = th.eps / 10.0;
  cc.C_B = 2.0;
  cc.c_N = c.Lij(2, 0) / 8.0 + 5.0 / 8.0 * c.Lij(2, 1) + 7.0 / 8.0;
  cc.c_F = 5.0 / 4.0 * c.Lij(1, 0) + 7.0 / 4.0;
  cc.c_B = 2.0;
  // Any value in (0, H2) is admissible; stay just inside the open interval.
  cc.u_inf = 0.99 * th.H2;
  cc.u_inf_prime = 1.0 / 6.0;
  return cc;
}

std::string to_string(CertificateKind kind) {
  return kind == CertificateKind::interpolating ? "interpolating" : "derivative";
}

Certificate build_certificate(const CovariantKernel& model, const Vec& theta_star, const Mat& V,
                              CertificateKind kind, double q) {
  const Index s = theta_star.size();
  if (V.cols() != s) throw std::invalid_argument("targets need one column per atom");
  const GramBundle g = gram_bundle(model, theta_star);
  const Mat I = Mat::Identity(s, s);
  const double gap11 = op_norm_inf(I - g.G11);
  if (!(gap11 < 1.0)) throw PreconditionError("Gamma11 too far from identity: ||I - G11|| = " + std::to_string(gap11));
  const Eigen::PartialPivLU<Mat> lu11(g.G11);
  const Mat G11inv_G10 = lu11.solve(g.G10);
  const Mat SC = g.G00 - g.G10.transpose() * G11inv_G10;
  const double gap = op_norm_inf(I - SC);
  if (!(gap < 0.99)) throw PreconditionError("Schur complement near singular: ||I - Gamma_SC|| = " + std::to_string(gap));
  const Eigen::PartialPivLU<Mat> luSC(SC);

  Certificate c;
  c.kind = kind;
  c.theta_star = theta_star;
  c.V = V;
  c.q = q;
  c.schur_gap = gap;
  const Mat Vt = V.transpose();  // s x n, one column per atom z
  Mat At, Xt;
  if (kind == CertificateKind::interpolating) {
    At = luSC.solve(Vt);
    Xt = -G11inv_G10 * At;
  } else {
    const Mat W = lu11.solve(Vt);
    At = -luSC.solve(g.G10.transpose() * W);
    Xt = lu11.solve(Vt - g.G10 * At);
  }
  c.alpha = At.transpose();
  c.xi = Xt.transpose();
  return c;
}

double eval_certificate(const Certificate& cert, const CovariantKernel& model, int z, double theta, int order) {
  if (order < 0 || order > 2) throw std::out_of_range("certificate order must be 0..2");
  double v = 0.0;
  for (Index k = 0; k < cert.theta_star.size(); ++k) {
    const Block3 b = model.kernel_cov_block(theta, cert.theta_star(k));
    v += cert.alpha(z, k) * b[order][0] + cert.xi(z, k) * b[order][1];
  }
  return v;
}

Mat certificate_field(const Certificate& cert, const KernelModel& model) {
  const Index s = cert.theta_star.size();
  Mat U0(s, model.dictionary().size()), U1(s, model.dictionary().size());
  for (Index k = 0; k < s; ++k) {
    const CovariantFrame f = model.frame(cert.theta_star(k));
    U0.row(k) = f.phi[0].transpose();
    U1.row(k) = f.phi[1].transpose();
  }
  return cert.alpha * U0 + cert.xi * U1;
}

double certificate_norm(const Certificate& cert, const GramBundle& g, const DiscreteMeasure& nu) {
  double total = 0.0;
  for (int z = 0; z < nu.size(); ++z) {
    const Vec a = cert.alpha.row(z).transpose();
    const Vec x = cert.xi.row(z).transpose();
    total += nu.weight(z) * (a.dot(g.G00 * a) + 2.0 * a.dot(g.G10.transpose() * x) + x.dot(g.G11 * x));
  }
  return std::sqrt(std::max(0.0, total));
}

Mat random_targets(const DiscreteMeasure& nu, int s, double q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat V(nu.size(), s);
  for (int k = 0; k < s; ++k) {
    for (int z = 0; z < nu.size(); ++z) V(z, k) = normal(rng);
    V.col(k) /= lp_norm(V.col(k), nu, q);
  }
  return V;
}

bool VerificationReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const VerificationRow& r) { return r.pass; });
}

double VerificationReport::min_margin() const {
  double m = kInf;
  for (const auto& r : rows) m = std::min(m, r.margin);
  return m;
}

VerificationReport verify_assumptions(const Certificate& interp, const Certificate& deriv, const KernelModel& model,
                                      const DiscreteMeasure& nu, double q, double r,
                                      const CertificateConstants& cc, double h) {
  const Vec& ts = interp.theta_star;
  const Index s = ts.size();
  if (deriv.theta_star.size() != s || (deriv.theta_star - ts).cwiseAbs().maxCoeff() > 0)
    throw std::invalid_argument("both certificates must share the anchor set");
  std::vector<double> tstar(s);
  for (Index k = 0; k < s; ++k) tstar[k] = model.metric_G(ts(k));
  for (Index k = 0; k < s; ++k)
    for (Index l = k + 1; l < s; ++l)
      if (!(std::abs(tstar[k] - tstar[l]) > 2 * r))
        throw PreconditionError("anchors must be pairwise separated by more than 2r");

  const double p = std::isinf(q) ? 1.0 : q / (q - 1.0);
  const double mass_factor = std::pow(nu.mass(), 1.0 / (2 * p) - (std::isinf(q) ? 0.0 : 1.0 / (2 * q)));

  // Grid points with their nearest anchor and signed metric offset.
  struct Pt {
    double theta, signed_d;
    Index anchor;
    bool near;
  };
  std::vector<Pt> pts;
  const double G0 = model.metric_G(model.domain().lo);
  const double G1 = G0 + model.diameter();
  for (Index k = 0; k < s; ++k) {
    const int M = static_cast<int>(std::floor(r / h + 1e-9));
    for (int m = 1; m <= M; ++m)
      for (int sign : {-1, 1}) {
        const double t = tstar[k] + sign * m * h;
        if (t < G0 || t > G1) continue;
        pts.push_back({model.metric_G_inverse(t), sign * m * h, k, true});
      }
  }
  const auto grid = model.metric_grid(h);
  for (size_t i = 0; i < grid.size(); ++i) {
    const double th = grid[i];
    const double t = i + 1 == grid.size() ? G1 : G0 + static_cast<double>(i) * h;
    Index best = 0;
    for (Index k = 1; k < s; ++k)
      if (std::abs(t - tstar[k]) < std::abs(t - tstar[best])) best = k;
    const double sd = t - tstar[best];
    if (std::abs(sd) > r) pts.push_back({th, sd, best, false});
  }

  const Mat P = certificate_field(interp, model);
  const Mat Q = certificate_field(deriv, model);

  VerificationReport rep;
  rep.grid_step = h;
  auto row = [&](const char* point, int assumption, const char* region) -> VerificationRow& {
    for (auto& rr : rep.rows)
      if (rr.point == point && rr.assumption == assumption) return rr;
    rep.rows.push_back({point, assumption, region, 0.0, kInf, true});
    return rep.rows.back();
  };
  auto record = [](VerificationRow& rr, double theta, double margin) {
    if (margin < rr.margin) rr.margin = margin, rr.theta = theta;
  };
  // Fixed row order.
  row("i", 1, "near");
  row("ii", 1, "near");
  row("iii", 1, "far");
  row("iv", 1, "global");
  row("i", 2, "near");
  row("ii", 2, "far");
  row("iii", 2, "global");

  const size_t chunk = 256;
  for (size_t start = 0; start < pts.size(); start += chunk) {
    const size_t end = std::min(pts.size(), start + chunk);
    std::vector<double> th;
    for (size_t i = start; i < end; ++i) th.push_back(pts[i].theta);
    const Mat Phi = kernels::tabulate(model.dictionary(), th, 0);
    const Mat EtaP = P * Phi;  // n x chunk
    const Mat EtaQ = Q * Phi;
    for (size_t i = start; i < end; ++i) {
      const Pt& pt = pts[i];
      const Index c = static_cast<Index>(i - start);
      const double d = std::abs(pt.signed_d);
      const double np = lp_norm(EtaP.col(c), nu, q);
      const double nq = lp_norm(EtaQ.col(c), nu, q);
      if (pt.near) {
        record(row("i", 1, "near"), pt.theta, 1.0 - cc.C_N * d * d - np);
        const Vec resP = EtaP.col(c) - interp.V.col(pt.anchor);
        record(row("ii", 1, "near"), pt.theta, cc.C_N_prime * d * d - lp_norm(resP, nu, q));
        const double sgn = pt.signed_d > 0 ? 1.0 : -1.0;
        const Vec resQ = EtaQ.col(c) - deriv.V.col(pt.anchor) * (sgn * d);
        record(row("i", 2, "near"), pt.theta, cc.c_N * d * d - lp_norm(resQ, nu, q));
      } else {
        record(row("iii", 1, "far"), pt.theta, 1.0 - cc.C_F - np);
        record(row("ii", 2, "far"), pt.theta, cc.c_F - nq);
      }
    }
  }
  const GramBundle g = gram_bundle(model, ts);
  const double sq = std::sqrt(static_cast<double>(s));
  record(row("iv", 1, "global"), ts(0), cc.C_B * sq * mass_factor - certificate_norm(interp, g, nu));
  record(row("iii", 2, "global"), ts(0), cc.c_B * sq * mass_factor - certificate_norm(deriv, g, nu));
  for (auto& rr : rep.rows) rr.pass = rr.margin > 0.0;
  return rep;
}

void write_verification_csv(std::ostream& os, const VerificationReport& report) {
  os << "point,assumption,region,theta,margin,pass\n";
  for (const auto& r : report.rows)
    os << r.point << ',' << r.assumption << ',' << r.region << ',' << format_real(r.theta) << ','
       << format_real(r.margin) << ',' << (r.pass ? "true" : "false") << '\n';
}

bool quadratic_decay_check(const std::vector<DecaySample>& samples, DecayPart part, double r, double delta,
                           double eps, double tol) {
  for (const auto& smp : samples) {
    if (smp.d > r) continue;
    const double d2 = smp.d * smp.d;
    const double bound = part == DecayPart::vanishing ? 0.5 * delta * d2 : 1.0 - 0.5 * (eps - delta) * d2;
    if (smp.norm > bound + tol) return false;
  }
  return true;
}

}  // namespace offgrid
