#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "offgrid/common.hpp"

namespace offgrid {

class Dictionary;

struct DomainInterval {
  double lo = 0.0;
  double hi = 1.0;
  double lo_inf = -kInf;
  double hi_inf = kInf;

  DomainInterval() = default;
  DomainInterval(double lo_, double hi_, double lo_inf_ = -kInf, double hi_inf_ = kInf);

  bool contains(double theta) const { return theta >= lo && theta <= hi; }
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  double clamp(double theta) const;
};

// nu = sum_z a_z delta_z over finitely many signal indices.
class DiscreteMeasure {
 public:
  explicit DiscreteMeasure(Vec weights);
  DiscreteMeasure(std::vector<int> indices, Vec weights);
  static DiscreteMeasure uniform(int n, double weight = 1.0);

  int size() const { return static_cast<int>(a_.size()); }
  const Vec& weights() const { return a_; }
  double weight(int z) const { return a_(z); }
  int index(int z) const { return idx_[z]; }
  const std::vector<int>& indices() const { return idx_; }
  double mass() const { return mass_; }
  double max_weight() const { return a_.maxCoeff(); }

 private:
  std::vector<int> idx_;
  Vec a_;
  double mass_ = 0.0;
};

// ||f||_{L^p(nu)}; p = inf is the max over atoms of positive weight.
double lp_norm(const Vec& f, const DiscreteMeasure& nu, double p);

// sum_k ||B_k||_{L^p(nu)} over the columns of B.
double mixed_norm(const Mat& B, const DiscreteMeasure& nu, double p);

// Dual unit vector v(f) with ||v(f)||_{L^q} = 1 and <v(f), f>_nu = ||f||_{L^p}.
Vec dual_unit(const Vec& f, const DiscreteMeasure& nu, double p);

// sum_z a_z <f(z), g(z)>
double lt_inner(const Mat& F, const Mat& G, const DiscreteMeasure& nu);
double lt_norm(const Mat& F, const DiscreteMeasure& nu);

struct SignalSet {
  Mat data;  // n x T
  DiscreteMeasure measure;

  SignalSet(Mat data_, DiscreteMeasure measure_);
  int n() const { return static_cast<int>(data.rows()); }
  Index T() const { return data.cols(); }
};

struct MixtureParams {
  Mat B;        // n x K
  Vec theta;    // K
  int capacity = 0;

  MixtureParams() = default;
  MixtureParams(Mat B_, Vec theta_, int capacity_ = -1);
  int K() const { return static_cast<int>(theta.size()); }
  // Columns whose L^2(nu) norm is nonzero.
  std::vector<int> support(const DiscreteMeasure& nu) const;
};

// Phi(theta): K x T matrix of normalized features, one row per atom.
Mat feature_matrix(const Dictionary& dict, const Vec& theta);

// Rows B Phi(theta) (+ noise).
SignalSet synthesize(const MixtureParams& params, const Dictionary& dict, const DiscreteMeasure& nu,
                     const std::optional<Mat>& noise = std::nullopt);

// nu(Z)^{-1/2} ||B_est Phi(theta_est) - B Phi(theta)||_{L_T}.
double prediction_error(const MixtureParams& est, const MixtureParams& truth, const Dictionary& dict,
                        const DiscreteMeasure& nu);

void write_signal_csv(std::ostream& os, const SignalSet& y);
Mat read_signal_csv(std::istream& is, std::vector<int>* indices = nullptr);
void write_mixture_csv(std::ostream& os, const MixtureParams& params);
MixtureParams read_mixture_csv(std::istream& is);

// Shortest round-trip decimal form.
std::string format_real(double x);

}  // namespace offgrid
