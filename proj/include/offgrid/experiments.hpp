#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "offgrid/certificates.hpp"
#include "offgrid/noise.hpp"
#include "offgrid/solver.hpp"

namespace offgrid {

struct DictionarySpec {
  DictionaryKind kind = DictionaryKind::gaussian_location;
  double sigma = 0.05;             // gaussian_location width
  int fc = 10;                     // fourier_lowpass cutoff
  double grid_lo = 0.0, grid_hi = 1.0;  // sample grid for gaussian/exponential
  Index T = 256;
  DomainInterval domain{0.1, 0.9};
  double lo_inf = -kInf, hi_inf = kInf;
};

struct MeasureSpec {
  int n = 1;
  std::vector<double> weights;  // empty: all ones
};

struct TruthSpec {
  int s = 1;
  std::vector<double> theta;  // explicit locations; empty: equispaced in metric arclength
  double amp_lo = 1.0, amp_hi = 1.0;
  bool random_signs = true;
  double separation_multiplier = 1.0;
};

struct NoiseSpec {
  double sigma = 0.0;
  double delta_T = 1.0;
  bool inverse_T = false;  // use delta_T / T
};

struct KappaSpec {
  enum class Mode { theory, calibrated, manual };
  Mode mode = Mode::theory;
  double tau = 0.0;        // <= 0: tau = T
  double constant = 1.0;   // replaces C1 (p = 2) or C3 (p = 1) in calibrated mode
  double value = 0.0;      // manual kappa
};

struct CertificateSpec {
  double r = 0.5;
  double rho = 0.0;               // <= 0: max(1, rho_T)
  double grid_step = 0.01;        // verification grid
  double proximity_grid_step = 0.1;
  double delta_grid_step = 0.02;
  int restarts = 64;
  double C4_prime = 1.0;
  double bound_slack = 0.05;
  bool check_in_study = true;
};

struct StudySpec {
  std::vector<Index> T_list;
  std::vector<int> n_list;
  std::vector<int> s_list;
  int replicates = 1;
};

struct ExperimentConfig {
  DictionarySpec dictionary;
  MeasureSpec measure;
  TruthSpec truth;
  NoiseSpec noise;
  SolverConfig solver;
  KappaSpec kappa;
  CertificateSpec certificate;
  StudySpec study;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

DictionaryPtr build_dictionary(const DictionarySpec& spec);

struct DiagnosticRow {
  std::string quantity;
  double value = 0.0;
  double grid_step = 0.0;
};

void write_diagnostics_csv(std::ostream& os, const std::vector<DiagnosticRow>& rows);

// Everything fixed for one (T, n, s) point: model, limit, constants, truth, kappa.
struct TrialSetup {
  ExperimentConfig config;
  std::shared_ptr<const KernelModel> model;
  LimitPtr limit;
  DiscreteMeasure nu{Vec::Ones(1)};
  CertificateConstants cc;
  TheoreticalConstants tc;
  Thresholds th;
  double rho_T = 1.0;
  double separation_threshold = 0.0;
  MixtureParams truth;
  double kappa = 0.0;
  double tau = 0.0;
  double delta_T = 1.0;
  std::vector<GridTable> tables;  // orders 0, 1, 2 on the insertion grid
};

TrialSetup prepare_trial(const ExperimentConfig& config);

struct TrialResult {
  int replicate = 0;
  double R_hat = 0.0;
  double bound = 0.0;
  double M0 = 0.0, M1 = 0.0, M2 = 0.0;
  bool event_ok = false;
  double kappa = 0.0;
  long long runtime_ms = 0;
  int support = 0;
  bool solver_warning = false;
};

TrialResult run_trial(const TrialSetup& setup, int replicate);
TrialResult run_trial(const ExperimentConfig& config, int replicate);

void write_trial_header(std::ostream& os);
void write_trial_row(std::ostream& os, const TrialResult& r);

struct CertificateReport {
  std::vector<DiagnosticRow> diagnostics;
  VerificationReport verification;
  bool pass = false;
};

// Proximity diagnostics, thresholds, delta estimate and verification margins
// at the configured truth. Throws PreconditionError on infeasible settings.
CertificateReport run_certificate_report(const ExperimentConfig& config);
CertificateReport certificate_report(const TrialSetup& setup);

struct StudyPoint {
  Index T = 0;
  int n = 0, s = 0;
  double kappa = 0.0;
  double median_R2 = 0, q10_R2 = 0, q90_R2 = 0;
  double event_frac = 0.0;
  bool certificate_pass = false;
  int bound_violations = 0;
  double failure_prob = 0.0;       // with the theoretical C2 (p = 2) or C4 (p = 1)
  double failure_prob_unit = 0.0;  // same bracket with unit constant
  std::vector<TrialResult> trials;
};

struct StudyFit {
  int n = 0, s = 0;
  double slope = 0.0, intercept = 0.0;
  int points = 0;
};

struct StudyResult {
  std::vector<StudyPoint> points;
  std::vector<StudyFit> fits;
};

StudyResult run_study(const ExperimentConfig& config);
// Writes summary.csv, fit.csv, replicates.csv and plot_<axis>.csv.
void write_study(const StudyResult& result, const ExperimentConfig& config,
                 const std::filesystem::path& out_dir);

// Least-squares slope of log(y) against log(x).
StudyFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);
double quantile(std::vector<double> values, double level);

}  // namespace offgrid
