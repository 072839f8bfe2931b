#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "offgrid/dictionary.hpp"

namespace offgrid {

using Block3 = std::array<std::array<double, 3>, 3>;

// Anything carrying covariant kernel derivatives K^[i,j] and a 1-D metric.
// Grids and sup searches run over domain(), which must be compact.
class CovariantKernel {
 public:
  virtual ~CovariantKernel() = default;

  virtual double kernel_cov(int i, int j, double a, double b) const = 0;
  virtual double metric_g(double theta) const = 0;
  // Primitive of sqrt(g); only differences are meaningful.
  virtual double metric_G(double theta) const = 0;
  virtual double metric_G_inverse(double t) const = 0;
  virtual const DomainInterval& domain() const = 0;

  // K^[i,j](a,b) for i,j <= 2.
  virtual Block3 kernel_cov_block(double a, double b) const;

  double kernel(double a, double b) const { return kernel_cov(0, 0, a, b); }
  double h_fn(double theta) const { return kernel_cov(3, 3, theta, theta); }
  double dist(double a, double b) const;
  double diameter() const;
  // Points uniform in G from domain().lo, step in metric units, plus domain().hi.
  std::vector<double> metric_grid(double step) const;
};

class KernelModel final : public CovariantKernel {
 public:
  explicit KernelModel(DictionaryPtr dict);

  const Dictionary& dictionary() const { return *dict_; }
  const DictionaryPtr& dictionary_ptr() const { return dict_; }

  // Recursion path: scalar kernel derivatives from the raw jets, then the
  // covariant operators applied coefficient-wise.
  double kernel_cov(int i, int j, double a, double b) const override;
  double metric_g(double theta) const override;
  double metric_G(double theta) const override;
  double metric_G_inverse(double t) const override;
  const DomainInterval& domain() const override { return dict_->domain(); }

  // Feature path.
  CovariantFrame frame(double theta) const { return covariant_frame(*dict_, theta); }

 private:
  void build_metric_table();
  double integrate_sqrt_g(double a, double b) const;

  DictionaryPtr dict_;
  // Node table for G; quintic Hermite data used by the inverse.
  std::vector<double> nodes_, G_, dG_, d2G_;
};

struct LimitConstants {
  double m_g = 0.0;
  double L3 = 0.0;
  Block3 L{};
  double Lij(int i, int j) const { return L[i][j]; }
};

// Value of a sup/inf functional and how it was obtained.
struct Functional {
  double value = 0.0;
  bool empty = false;  // constraint set was empty; value is the convention
  double grid_step = 0.0;
};

class LimitKernelSpec : public CovariantKernel {
 public:
  virtual std::string name() const = 0;
  virtual const DomainInterval& domain_inf() const = 0;
  virtual const LimitConstants& constants() const = 0;
  // 1 - sup{|K| : d >= r} and -sup{K^[0,2] : d <= r} over the limit domain.
  virtual Functional eps_far(double r) const = 0;
  virtual Functional nu_near(double r) const = 0;
  double g_inf(double theta) const { return metric_g(theta); }
  double h_inf(double theta) const { return h_fn(theta); }
};

using LimitPtr = std::shared_ptr<const LimitKernelSpec>;

// Limit kernels that are translation invariant in their metric coordinate t:
// K(theta, theta') = k(t(theta) - t(theta')) with k(0) = 1, k''(0) = -1.
class StationaryLimit final : public LimitKernelSpec {
 public:
  // k^{(m)}(x) for m = 0..6.
  using Profile = std::function<std::array<double, 7>(double)>;
  struct Coordinate {
    std::function<double(double)> t, dt, inverse;
  };

  StationaryLimit(std::string name, Profile k, Coordinate coord, DomainInterval window,
                  DomainInterval domain_inf);

  std::string name() const override { return name_; }
  double kernel_cov(int i, int j, double a, double b) const override;
  Block3 kernel_cov_block(double a, double b) const override;
  double metric_g(double theta) const override;
  double metric_G(double theta) const override { return coord_.t(theta); }
  double metric_G_inverse(double t) const override { return coord_.inverse(t); }
  const DomainInterval& domain() const override { return window_; }
  const DomainInterval& domain_inf() const override { return dom_inf_; }
  const LimitConstants& constants() const override { return constants_; }
  Functional eps_far(double r) const override;
  Functional nu_near(double r) const override;

  const Profile& profile() const { return k_; }
  // Metric diameter of the limit domain (may be infinite).
  double diameter_inf() const;

 private:
  std::string name_;
  Profile k_;
  Coordinate coord_;
  DomainInterval window_, dom_inf_;
  LimitConstants constants_;
};

// exp(-(theta - theta')^2 / (4 sigma^2)), t = theta / (sqrt2 sigma).
LimitPtr gaussian_limit(double sigma, DomainInterval window);
// 2 sqrt(theta theta') / (theta + theta') = sech(t - t'), t = log(theta)/2.
LimitPtr exponential_limit(DomainInterval window, double lo_inf, double hi_inf);
// sin(sqrt3 x)/(sqrt3 x) in the metric coordinate of the Dirichlet kernel.
LimitPtr fourier_limit(int fc, DomainInterval window);
// The model compared with itself; constants from grid maximization.
LimitPtr model_as_limit(std::shared_ptr<const KernelModel> model, double grid_step);
// Analytic limit for built-in dictionaries, model_as_limit otherwise.
LimitPtr default_limit(std::shared_ptr<const KernelModel> model, double grid_step);

Functional eps_far(const CovariantKernel& model, double r, double grid_step = 0.02);
Functional nu_near(const CovariantKernel& model, double r, double grid_step = 0.02);

struct ProximityReport {
  double V1 = 0.0, V2 = 0.0, V_T = 0.0;
  double rho_T = 1.0;
  double grid_step = 0.0;
  bool close_enough = true;  // V_T <= L22 ^ L3
};

ProximityReport proximity(const KernelModel& model, const LimitKernelSpec& limit, double grid_step);

}  // namespace offgrid
