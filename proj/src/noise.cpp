#include "offgrid/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace offgrid {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c),    static_cast<std::uint32_t>(c >> 32)};
  return std::mt19937_64(seq);
}

Mat sample_noise(const NoiseModel& model, int n, Index T, std::mt19937_64& rng) {
  if (n < 1 || T < 1) throw PreconditionError("sample_noise needs n, T >= 1");
  if (!(model.sigma >= 0) || !(model.delta_T > 0)) throw PreconditionError("noise needs sigma >= 0 and delta_T > 0");
  const double sd = model.sigma * std::sqrt(model.delta_T);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat W(n, T);
  // Row-major draw order so a row does not depend on n.
  for (int z = 0; z < n; ++z)
    for (Index t = 0; t < T; ++t) W(z, t) = sd * normal(rng);
  return W;
}

Mat sample_noise(const NoiseModel& model, int n, Index T, std::uint64_t replicate) {
  auto rng = make_stream(model.seed, replicate, 0x6e6f697365);
  return sample_noise(model, n, T, rng);
}

double sup_stat(const Mat& W, const Dictionary& dict, const DiscreteMeasure& nu, int i, double q,
                const GridTable& table) {
  if (i < 0 || i > 2) throw std::out_of_range("sup_stat order must be 0..2");
  if (table.order != i) throw std::invalid_argument("sup_stat: table order differs from i");
  return grid_sup(W, dict, nu, q, table, true).value;
}

double sup_stat(const Mat& W, const KernelModel& model, const DiscreteMeasure& nu, int i, double q,
                double grid_step) {
  const GridTable table = make_grid_table(model, model.dictionary(), grid_step, i);
  return sup_stat(W, model.dictionary(), nu, i, q, table);
}

double f_tail(double n, double x) {
  if (!(x > 0)) throw std::domain_error("f_tail needs x > 0");
  return std::exp(-x + 2.0 * std::sqrt(n * x));
}

double log_g_tail(double n, double x) {
  if (!(x > 0)) throw std::domain_error("g_tail needs x > 0");
  return 0.5 * n * std::log(x) - 0.5 * x - std::lgamma(0.5 * n);
}

double g_tail(double n, double x) { return std::exp(log_g_tail(n, x)); }

double chi2_threshold(const Chi2BoundInputs& in) {
  return (in.n + 1.0) * in.a_max * in.sigma * in.sigma * in.delta_T * in.C1 * in.C1;
}

double chi2_bound(double u, const Chi2BoundInputs& in) {
  if (u < chi2_threshold(in)) throw std::domain_error("chi2_bound: u below (n+1) a_max sigma^2 delta_T C1^2");
  const double x = u / (in.sigma * in.sigma * in.a_max * in.delta_T * in.C1 * in.C1);
  double out = f_tail(in.n, x);
  if (in.diam > 0) out += 4.0 * in.C2 * in.diam / (in.C1 * std::pow(2.0, 0.5 * in.n)) * g_tail(in.n, x);
  return out;
}

TheoreticalConstants event_constants(const CertificateConstants& cc, double L22, double L3, double C4_prime) {
  TheoreticalConstants t;
  t.inputs = cc;
  t.L22 = L22;
  t.L3 = L3;
  t.C_cal = std::min(cc.C_F / (2.0 * (2.0 - cc.C_F + cc.c_F)), cc.C_N / (2.0 * (cc.C_N_prime + cc.c_N + 0.5)));
  t.C_prime = std::max(t.C_cal, 1.0);
  const double Cp = t.C_prime;
  t.C_big = 4.0 * Cp *
            (1.0 + Cp / cc.C_N * (2.0 * cc.C_N_prime + cc.c_N + 1.0) + Cp / cc.C_F * (3.0 - 2.0 * cc.C_F + cc.c_F));
  t.C0 = (cc.c_B + 2.0 * cc.C_B) * t.C_big;
  const double r22 = std::sqrt(2.0 * L22);
  t.C1_prime = t.C_cal / std::sqrt(std::max(2.0 * L22, 1.0));
  t.C1 = std::sqrt(2.0) / t.C1_prime;
  t.C2_prime = 4.0 * std::max({1.0, r22, std::sqrt(L3) / std::sqrt(L22)});
  t.C2 = 3.0 * std::max(1.0, t.C2_prime);
  t.C3 = 2.0 / t.C_cal * std::max(1.0, r22);
  t.C4 = 3.0 * C4_prime;
  return t;
}

namespace {
void check_tau(double tau) {
  if (!(tau > 1.0)) throw PreconditionError("tau must exceed 1");
}
}  // namespace

double kappa_p2(double tau, double n, double sigma, double delta_T, double a_max, double nu_mass, double C1) {
  check_tau(tau);
  return C1 * sigma * std::sqrt(a_max * delta_T * n) / nu_mass * (1.0 + std::sqrt(1.0 + std::log(tau) / n));
}

double kappa_p1(double tau, double sigma, double delta_T, double nu_mass, double C3) {
  check_tau(tau);
  return C3 * sigma * std::sqrt(delta_T * std::log(tau)) / nu_mass;
}

double F_tail(double n) { return g_tail(n, n) * std::exp(-0.5 * n) / std::pow(2.0, 0.5 * n); }

double failure_prob_p2(double tau, double n, double diam, double C2) {
  check_tau(tau);
  return C2 * (1.0 / tau + diam * F_tail(n) / std::sqrt(tau));
}

double failure_prob_p1(double tau, double n, double diam, double C4) {
  check_tau(tau);
  return C4 * n * std::max(diam / (tau * std::sqrt(std::log(tau))), 1.0 / tau);
}

}  // namespace offgrid
