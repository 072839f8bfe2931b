#pragma once

#include <array>
#include <memory>
#include <string>

#include "offgrid/common.hpp"
#include "offgrid/measure.hpp"

namespace offgrid {

enum class DictionaryKind { gaussian_location, fourier_lowpass, exponential_decay, custom };

std::string to_string(DictionaryKind kind);
DictionaryKind dictionary_kind_from_string(const std::string& name);

// Raw feature and its first three theta-derivatives.
struct FeatureJet {
  double theta = 0.0;
  Vec value, d1, d2, d3;

  const Vec& operator[](int k) const;
};

class Dictionary {
 public:
  Dictionary(DomainInterval domain, Index T) : domain_(domain), T_(T) {}
  virtual ~Dictionary() = default;

  virtual DictionaryKind kind() const = 0;
  virtual FeatureJet jet(double theta) const = 0;
  virtual Vec eval(double theta) const { return jet(theta).value; }

  Vec deriv(int k, double theta) const;
  const DomainInterval& domain() const { return domain_; }
  Index size() const { return T_; }
  void check_domain(double theta) const;

 private:
  DomainInterval domain_;
  Index T_;
};

using DictionaryPtr = std::shared_ptr<const Dictionary>;

// x_t = lo + t (hi - lo)/(T - 1), t = 0..T-1.
Vec uniform_samples(double lo, double hi, Index T);

// phi_t(theta) = exp(-(x_t - theta)^2 / (2 sigma^2)).
DictionaryPtr make_gaussian_location(double sigma, Vec samples, DomainInterval domain);
// Coordinates (1, sqrt2 cos 2 pi f theta, sqrt2 sin 2 pi f theta), f = 1..fc.
DictionaryPtr make_fourier_lowpass(int fc, DomainInterval domain);
// phi_t(theta) = exp(-theta x_t).
DictionaryPtr make_exponential_decay(Vec samples, DomainInterval domain);

class GaussianLocation final : public Dictionary {
 public:
  GaussianLocation(double sigma, Vec samples, DomainInterval domain);
  DictionaryKind kind() const override { return DictionaryKind::gaussian_location; }
  FeatureJet jet(double theta) const override;
  double sigma() const { return sigma_; }
  const Vec& samples() const { return x_; }

 private:
  double sigma_;
  Vec x_;
};

class FourierLowpass final : public Dictionary {
 public:
  FourierLowpass(int fc, DomainInterval domain);
  DictionaryKind kind() const override { return DictionaryKind::fourier_lowpass; }
  FeatureJet jet(double theta) const override;
  int cutoff() const { return fc_; }

 private:
  int fc_;
};

class ExponentialDecay final : public Dictionary {
 public:
  ExponentialDecay(Vec samples, DomainInterval domain);
  DictionaryKind kind() const override { return DictionaryKind::exponential_decay; }
  FeatureJet jet(double theta) const override;
  const Vec& samples() const { return x_; }

 private:
  Vec x_;
};

// Normalized feature, its covariant derivatives phi^[i] for i = 0..3 and the
// metric density g with two derivatives, all computed from the raw jet.
struct CovariantFrame {
  double theta = 0.0;
  std::array<Vec, 4> phi;
  double g = 0.0, dg = 0.0, d2g = 0.0;
};

inline constexpr double kMetricFloor = 1e-14;

CovariantFrame covariant_frame(const Dictionary& dict, double theta);
Vec normalized_feature(const Dictionary& dict, double theta);
Vec phi_cov(const Dictionary& dict, double theta, int order);

}  // namespace offgrid
