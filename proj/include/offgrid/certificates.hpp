#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "offgrid/kernel.hpp"

namespace offgrid {

// Max row l1 sum.
double op_norm_inf(const Mat& A);

struct GramBundle {
  Vec theta_star;
  Mat G00, G10, G11, G20, G21;
  Mat Gamma;  // [G00 G10^T; G10 G11]
};

GramBundle gram_bundle(const CovariantKernel& model, const Vec& theta_star);

// Max of the operator norms of I - K00, I - K11, I + K20, K10, K01, K12.
double A_inf(const CovariantKernel& model, const Vec& theta);

struct DeltaEstimate {
  double delta = kInf;
  double worst_A = 0.0;  // worst A_inf found at delta
  double grid_step = 0.0;
  bool finite() const { return delta < kInf; }
};

DeltaEstimate delta_search(const CovariantKernel& model, double u, int s, double grid_step,
                           int restarts = 64, std::uint64_t seed = 0x5eed);

struct Thresholds {
  double H1 = 0.0, H2 = 0.0;
  double eps = 0.0;  // eps_inf(r / rho)
  double nu = 0.0;   // nu_inf(rho r)
  bool feasible = false;
};

Thresholds thresholds(const LimitKernelSpec& limit, double r, double rho);

struct CertificateConstants {
  double C_N = 0, C_N_prime = 0, C_F = 0, C_B = 2;
  double c_N = 0, c_F = 0, c_B = 2;
  double r = 0, rho = 1, u_inf = 0, u_inf_prime = 0;
};

CertificateConstants certificate_constants(const LimitKernelSpec& limit, double r, double rho);

enum class CertificateKind { interpolating, derivative };
std::string to_string(CertificateKind kind);

struct Certificate {
  CertificateKind kind = CertificateKind::interpolating;
  Mat alpha, xi;  // n x s
  Vec theta_star;
  Mat V;          // n x s
  double q = 2.0;
  double schur_gap = 0.0;  // ||I - Gamma_SC||
};

// Solves the Schur-complement system. Refuses when ||I - G11|| >= 1 or
// ||I - Gamma_SC|| >= 0.99.
Certificate build_certificate(const CovariantKernel& model, const Vec& theta_star, const Mat& V,
                              CertificateKind kind, double q);

// Order 0: eta(z, theta); orders 1, 2: covariant derivatives in theta.
double eval_certificate(const Certificate& cert, const CovariantKernel& model, int z, double theta,
                        int order);

// P(z) = sum_k alpha_k(z) phi(theta_k) + xi_k(z) phi^[1](theta_k); n x T.
Mat certificate_field(const Certificate& cert, const KernelModel& model);

// ||P||_{L_T} from the Gram matrices.
double certificate_norm(const Certificate& cert, const GramBundle& gram, const DiscreteMeasure& nu);

// Unit L^q(nu) columns drawn from a seeded stream.
Mat random_targets(const DiscreteMeasure& nu, int s, double q, std::uint64_t seed);

struct VerificationRow {
  std::string point;    // i, ii, iii, iv
  int assumption = 1;   // 1 or 2
  std::string region;   // near, far, global
  double theta = 0.0;   // location of the worst margin
  double margin = kInf;
  bool pass = true;
};

struct VerificationReport {
  std::vector<VerificationRow> rows;
  double grid_step = 0.0;
  bool all_pass() const;
  double min_margin() const;
};

VerificationReport verify_assumptions(const Certificate& interpolating, const Certificate& derivative,
                                      const KernelModel& model, const DiscreteMeasure& nu, double q,
                                      double r, const CertificateConstants& constants,
                                      double grid_step);

void write_verification_csv(std::ostream& os, const VerificationReport& report);

// Samples of ||eta(theta)||_{L^q} at metric distance d from theta0.
struct DecaySample {
  double d = 0.0;
  double norm = 0.0;
};

enum class DecayPart { vanishing, peak };

// Part (i): ||eta|| <= (delta/2) d^2. Part (ii): ||eta|| <= 1 - ((eps - delta)/2) d^2.
// Only samples with d <= r are checked.
bool quadratic_decay_check(const std::vector<DecaySample>& samples, DecayPart part, double r,
                           double delta, double eps = 0.0, double tol = 1e-12);

}  // namespace offgrid
