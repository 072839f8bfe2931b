#pragma once

#include <cstdint>
#include <random>

#include "offgrid/certificates.hpp"
#include "offgrid/kernels.hpp"

namespace offgrid {

struct NoiseModel {
  double sigma = 1.0;
  double delta_T = 1.0;
  std::uint64_t seed = 1;
};

// Independent generator for (seed, stream...), stable across runs.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                            std::uint64_t c = 0);

// i.i.d. N(0, sigma^2 delta_T) entries; stream keyed by (seed, replicate).
Mat sample_noise(const NoiseModel& model, int n, Index T, std::uint64_t replicate = 0);
Mat sample_noise(const NoiseModel& model, int n, Index T, std::mt19937_64& rng);

// M_i = sup_theta || <W, phi^[i](theta)> ||_{L^q(nu)}.
double sup_stat(const Mat& W, const Dictionary& dict, const DiscreteMeasure& nu, int i, double q,
                const GridTable& table);
double sup_stat(const Mat& W, const KernelModel& model, const DiscreteMeasure& nu, int i, double q,
                double grid_step);

double f_tail(double n, double x);
double g_tail(double n, double x);
double log_g_tail(double n, double x);

struct Chi2BoundInputs {
  double n = 1, C1 = 1, C2 = 1, sigma = 1, delta_T = 1, a_max = 1, diam = 1;
};
double chi2_threshold(const Chi2BoundInputs& in);  // (n+1) a_max sigma^2 delta_T C1^2
double chi2_bound(double u, const Chi2BoundInputs& in);

struct TheoreticalConstants {
  double C_cal = 0, C_prime = 0, C_big = 0, C0 = 0;
  double C1_prime = 0, C1 = 0, C2_prime = 0, C2 = 0, C3 = 0, C4 = 0;
  CertificateConstants inputs;
  double L22 = 0, L3 = 0;
};

TheoreticalConstants event_constants(const CertificateConstants& cc, double L22, double L3,
                                     double C4_prime = 1.0);

double kappa_p2(double tau, double n, double sigma, double delta_T, double a_max, double nu_mass,
                double C1);
double kappa_p1(double tau, double sigma, double delta_T, double nu_mass, double C3);

double F_tail(double n);  // g_n(n) e^{-n/2} / 2^{n/2}
double failure_prob_p2(double tau, double n, double diam, double C2 = 1.0);
double failure_prob_p1(double tau, double n, double diam, double C4);

}  // namespace offgrid
