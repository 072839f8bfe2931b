#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "offgrid/kernel.hpp"
#include "offgrid/kernels.hpp"

namespace offgrid {

struct SolverConfig {
  double kappa = 1.0;
  int p = 2;
  int K_max = 10;
  double insertion_grid_step = 0.02;
  int max_outer_iters = 50;
  int max_inner_iters = 5000;
  double tol_obj = 1e-12;
  double tol_dual = 1e-3;
  bool refine = true;

  void validate() const;
};

struct TraceEntry {
  int iter = 0;
  double objective = 0.0;
  std::string event;
  double dual_sup = 0.0;
};

struct SolveTrace {
  std::vector<TraceEntry> entries;
  double final_dual_sup = 0.0;
  bool converged = false;
  bool warning = false;
  std::string message;
};

void write_trace_csv(std::ostream& os, const SolveTrace& trace);

double objective(const Mat& Y, const Mat& B, const Vec& theta, const Dictionary& dict,
                 const DiscreteMeasure& nu, double kappa, double p);
// Same objective with a precomputed K x T feature matrix.
double objective_features(const Mat& Y, const Mat& B, const Mat& Phi, const DiscreteMeasure& nu,
                          double kappa, double p);

SupResult dual_sup(const Mat& residual, const Dictionary& dict, const DiscreteMeasure& nu, double q,
                   const GridTable& table);
SupResult dual_sup(const Mat& residual, const KernelModel& model, const DiscreteMeasure& nu, double q,
                   double grid_step);

// Proximal map of threshold * ||.||_{l1, L^p(nu)} in the nu-weighted metric,
// applied at B - step * gradient with threshold = step * kappa_nu.
Mat group_prox_step(const Mat& B, const Mat& gradient, double step, double kappa_nu, int p,
                    const DiscreteMeasure& nu);

struct SubproblemResult {
  Mat B;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

// min_B (1/(2 nu(Z))) ||Y - B Phi||^2_{L_T} + kappa ||B||_{l1, L^p} for fixed
// features Phi (K x T). Accelerated proximal gradient with restarts.
SubproblemResult solve_subproblem(const Mat& Y, const Mat& Phi, const DiscreteMeasure& nu,
                                  double kappa, int p, const Mat& B0, int max_iters, double tol);

// Gauss-Newton steps on the data fidelity with B fixed; theta stays in the
// domain (projected backtracking).
Vec refine_theta(const Mat& Y, const Mat& B, const Vec& theta, const Dictionary& dict,
                 const DiscreteMeasure& nu, int max_iters = 50);

struct SolveResult {
  MixtureParams params;
  SolveTrace trace;
};

SolveResult solve(const Mat& Y, const KernelModel& model, const DiscreteMeasure& nu,
                  const SolverConfig& config, const GridTable* table = nullptr);

}  // namespace offgrid
