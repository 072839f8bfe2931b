#include "offgrid/dictionary.hpp"

#include <cmath>
#include <numbers>

namespace offgrid {

std::string to_string(DictionaryKind kind) {
  switch (kind) {
    case DictionaryKind::gaussian_location: return "gaussian_location";
    case DictionaryKind::fourier_lowpass: return "fourier_lowpass";
    case DictionaryKind::exponential_decay: return "exponential_decay";
    case DictionaryKind::custom: return "custom";
  }
  return "custom";
}

DictionaryKind dictionary_kind_from_string(const std::string& name) {
  if (name == "gaussian_location") return DictionaryKind::gaussian_location;
  if (name == "fourier_lowpass") return DictionaryKind::fourier_lowpass;
  if (name == "exponential_decay") return DictionaryKind::exponential_decay;
  throw PreconditionError("unknown dictionary kind: " + name);
}

const Vec& FeatureJet::operator[](int k) const {
  switch (k) {
    case 0: return value;
    case 1: return d1;
    case 2: return d2;
    case 3: return d3;
  }
  throw std::out_of_range("FeatureJet order must be 0..3");
}

Vec Dictionary::deriv(int k, double theta) const {
  if (k < 1 || k > 3) throw std::out_of_range("deriv order must be 1..3");
  return jet(theta)[k];
}

void Dictionary::check_domain(double theta) const {
  if (!domain_.contains(theta)) throw PreconditionError("theta outside the dictionary domain");
}

Vec uniform_samples(double lo, double hi, Index T) {
  if (T < 2) return Vec::Constant(std::max<Index>(T, 1), 0.5 * (lo + hi));
  return Vec::LinSpaced(T, lo, hi);
}

GaussianLocation::GaussianLocation(double sigma, Vec samples, DomainInterval domain)
    : Dictionary(domain, samples.size()), sigma_(sigma), x_(std::move(samples)) {
  if (!(sigma_ > 0)) throw PreconditionError("gaussian_location needs sigma > 0");
}

FeatureJet GaussianLocation::jet(double theta) const {
  const double s2 = sigma_ * sigma_;
  const Index T = size();
  FeatureJet j;
  j.theta = theta;
  j.value = Vec::Zero(T);
  j.d1 = Vec::Zero(T);
  j.d2 = Vec::Zero(T);
  j.d3 = Vec::Zero(T);
  for (Index t = 0; t < T; ++t) {
    const double dx = x_(t) - theta;
    const double e = -dx * dx / (2.0 * s2);
    // Below this the value is subnormal; exact zeros keep later products fast.
    if (e < -700.0) continue;
    const double v = std::exp(e), u = dx / s2;
    j.value(t) = v;
    j.d1(t) = u * v;
    j.d2(t) = (u * u - 1.0 / s2) * v;
    j.d3(t) = (u * u * u - 3.0 * u / s2) * v;
  }
  return j;
}

FourierLowpass::FourierLowpass(int fc, DomainInterval domain) : Dictionary(domain, 2 * fc + 1), fc_(fc) {
  if (fc < 1) throw PreconditionError("fourier_lowpass needs fc >= 1");
}

FeatureJet FourierLowpass::jet(double theta) const {
  const Index T = size();
  FeatureJet j;
  j.theta = theta;
  j.value = Vec::Zero(T);
  j.d1 = Vec::Zero(T);
  j.d2 = Vec::Zero(T);
  j.d3 = Vec::Zero(T);
  j.value(0) = 1.0;
  const double r2 = std::numbers::sqrt2;
  for (int f = 1; f <= fc_; ++f) {
    const double w = 2.0 * std::numbers::pi * f;
    const double c = std::cos(w * theta), s = std::sin(w * theta);
    const Index ic = 2 * f - 1, is = 2 * f;
    j.value(ic) = r2 * c;
    j.value(is) = r2 * s;
    j.d1(ic) = -r2 * w * s;
    j.d1(is) = r2 * w * c;
    j.d2(ic) = -r2 * w * w * c;
    j.d2(is) = -r2 * w * w * s;
    j.d3(ic) = r2 * w * w * w * s;
    j.d3(is) = -r2 * w * w * w * c;
  }
  return j;
}

ExponentialDecay::ExponentialDecay(Vec samples, DomainInterval domain)
    : Dictionary(domain, samples.size()), x_(std::move(samples)) {}

FeatureJet ExponentialDecay::jet(double theta) const {
  FeatureJet j;
  j.theta = theta;
  Eigen::ArrayXd v = (-theta * x_.array()).exp();
  Eigen::ArrayXd mx = -x_.array();
  j.value = v.matrix();
  j.d1 = (mx * v).matrix();
  j.d2 = (mx.square() * v).matrix();
  j.d3 = (mx.cube() * v).matrix();
  return j;
}

DictionaryPtr make_gaussian_location(double sigma, Vec samples, DomainInterval domain) {
  return std::make_shared<GaussianLocation>(sigma, std::move(samples), domain);
}

DictionaryPtr make_fourier_lowpass(int fc, DomainInterval domain) {
  return std::make_shared<FourierLowpass>(fc, domain);
}

DictionaryPtr make_exponential_decay(Vec samples, DomainInterval domain) {
  return std::make_shared<ExponentialDecay>(std::move(samples), domain);
}

CovariantFrame covariant_frame(const Dictionary& dict, double theta) {
  dict.check_domain(theta);
  const FeatureJet j = dict.jet(theta);

  // Normalization n = ||phi|| and its derivatives from n^2 = <phi, phi>.
  const double n0 = j.value.norm();
  if (!(n0 > 0.0) || !std::isfinite(n0)) throw NumericalError("raw feature has zero norm");
  const double N1 = 2.0 * j.value.dot(j.d1);
  const double N2 = 2.0 * (j.d1.squaredNorm() + j.value.dot(j.d2));
  const double N3 = 6.0 * j.d1.dot(j.d2) + 2.0 * j.value.dot(j.d3);
  const double n1 = N1 / (2.0 * n0);
  const double n2 = (0.5 * N2 - n1 * n1) / n0;
  const double n3 = (0.5 * N3 - 3.0 * n1 * n2) / n0;

  // Leibniz on phi = n u.
  const Vec u0 = j.value / n0;
  const Vec u1 = (j.d1 - n1 * u0) / n0;
  const Vec u2 = (j.d2 - 2.0 * n1 * u1 - n2 * u0) / n0;
  const Vec u3 = (j.d3 - 3.0 * n1 * u2 - 3.0 * n2 * u1 - n3 * u0) / n0;

  CovariantFrame fr;
  fr.theta = theta;
  fr.g = u1.squaredNorm();
  fr.dg = 2.0 * u1.dot(u2);
  fr.d2g = 2.0 * (u2.squaredNorm() + u1.dot(u3));
  if (!(fr.g > kMetricFloor)) throw NumericalError("degenerate metric: g_T is not positive");

  // phi^[i+1] = (phi^[i])' / sqrt(g), expanded with s = g^{-1/2}.
  const double s = 1.0 / std::sqrt(fr.g);
  const double s1 = -0.5 * fr.dg * s * s * s;
  const double s2 = 0.75 * fr.dg * fr.dg * std::pow(s, 5) - 0.5 * fr.d2g * s * s * s;
  fr.phi[0] = u0;
  fr.phi[1] = s * u1;
  fr.phi[2] = s * s1 * u1 + s * s * u2;
  fr.phi[3] = s * (s1 * s1 + s * s2) * u1 + 3.0 * s * s * s1 * u2 + s * s * s * u3;
  return fr;
}

Vec normalized_feature(const Dictionary& dict, double theta) {
  dict.check_domain(theta);
  Vec v = dict.eval(theta);
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("raw feature has zero norm");
  return v / n;
}

Vec phi_cov(const Dictionary& dict, double theta, int order) {
  if (order < 0 || order > 3) throw std::out_of_range("phi_cov order must be 0..3");
  if (order == 0) return normalized_feature(dict, theta);
  return covariant_frame(dict, theta).phi[order];
}

}  // namespace offgrid
