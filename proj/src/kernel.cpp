#include "offgrid/kernel.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <numbers>

#include "offgrid/kernels.hpp"

namespace offgrid {

namespace {

constexpr double kBinom[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};

// Everything the recursion path needs from one side of a kernel evaluation.
struct Side {
  FeatureJet jet;
  double m[4];         // derivatives of ||phi||^{-1}
  double coeff[4][4];  // D~_i = sum_a coeff[i][a] d^a / dtheta^a
};

Side make_side(const Dictionary& dict, double theta) {
  dict.check_domain(theta);
  Side s;
  s.jet = dict.jet(theta);
  double S[4][4];
  for (int a = 0; a < 4; ++a)
    for (int b = a; b < 4; ++b) S[a][b] = S[b][a] = s.jet[a].dot(s.jet[b]);

  const double N0 = S[0][0], N1 = 2 * S[0][1], N2 = 2 * S[1][1] + 2 * S[0][2], N3 = 6 * S[1][2] + 2 * S[0][3];
  if (!(N0 > 0.0)) throw NumericalError("raw feature has zero norm");
  const double r = 1.0 / std::sqrt(N0);
  s.m[0] = r;
  s.m[1] = -0.5 * r * r * r * N1;
  s.m[2] = 0.75 * std::pow(r, 5) * N1 * N1 - 0.5 * r * r * r * N2;
  s.m[3] = -15.0 / 8.0 * std::pow(r, 7) * N1 * N1 * N1 + 9.0 / 4.0 * std::pow(r, 5) * N1 * N2 - 0.5 * r * r * r * N3;

  // d^p_x d^q_y K on the diagonal.
  auto diag = [&](int p, int q) {
    double v = 0.0;
    for (int p1 = 0; p1 <= p; ++p1)
      for (int q1 = 0; q1 <= q; ++q1) v += kBinom[p][p1] * kBinom[q][q1] * s.m[p - p1] * s.m[q - q1] * S[p1][q1];
    return v;
  };
  const double g = diag(1, 1);
  if (!(g > kMetricFloor)) throw NumericalError("degenerate metric: g_T is not positive");
  const double g1 = 2 * diag(2, 1);
  const double g2 = 2 * diag(3, 1) + 2 * diag(2, 2);

  // D_{i+1} F = d(D_i F) - (i/2)(g'/g) D_i F.
  const double D[4][4] = {{1, 0, 0, 0},
                          {0, 1, 0, 0},
                          {0, -0.5 * g1 / g, 1, 0},
                          {0, -0.5 * g2 / g + g1 * g1 / (g * g), -1.5 * g1 / g, 1}};
  for (int i = 0; i < 4; ++i) {
    const double scale = std::pow(g, -0.5 * i);
    for (int a = 0; a < 4; ++a) s.coeff[i][a] = D[i][a] * scale;
  }
  return s;
}

double covariant_from_sides(const Side& A, const Side& B, int i, int j) {
  double P[4][4];
  for (int a = 0; a <= i; ++a)
    for (int b = 0; b <= j; ++b) P[a][b] = A.jet[a].dot(B.jet[b]);
  double total = 0.0;
  for (int p = 1 - (i == 0); p <= i; ++p) {
    if (A.coeff[i][p] == 0.0) continue;
    for (int q = 1 - (j == 0); q <= j; ++q) {
      if (B.coeff[j][q] == 0.0) continue;
      double partial = 0.0;
      for (int p1 = 0; p1 <= p; ++p1)
        for (int q1 = 0; q1 <= q; ++q1)
          partial += kBinom[p][p1] * kBinom[q][q1] * A.m[p - p1] * B.m[q - q1] * P[p1][q1];
      total += A.coeff[i][p] * B.coeff[j][q] * partial;
    }
  }
  return total;
}

double sqrt_g(const Dictionary& dict, double theta) { return std::sqrt(covariant_frame(dict, theta).g); }

// Quintic Hermite on [0,1]: value and derivative in s.
struct Hermite5 {
  double y0, d0, c0, y1, d1, c1;  // values, first and second derivatives scaled by h, h^2
  double eval(double s) const {
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
    return y0 * (1 - 10 * s3 + 15 * s4 - 6 * s5) + d0 * (s - 6 * s3 + 8 * s4 - 3 * s5) +
           c0 * (0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5) + y1 * (10 * s3 - 15 * s4 + 6 * s5) +
           d1 * (-4 * s3 + 7 * s4 - 3 * s5) + c1 * (0.5 * s3 - s4 + 0.5 * s5);
  }
  double deriv(double s) const {
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
    return y0 * (-30 * s2 + 60 * s3 - 30 * s4) + d0 * (1 - 18 * s2 + 32 * s3 - 15 * s4) +
           c0 * (s - 4.5 * s2 + 6 * s3 - 2.5 * s4) + y1 * (30 * s2 - 60 * s3 + 30 * s4) +
           d1 * (-12 * s2 + 28 * s3 - 15 * s4) + c1 * (1.5 * s2 - 4 * s3 + 2.5 * s4);
  }
};

template <class F>
double brent_max(F f, double a, double b) {
  if (!(b > a)) return a;
  auto res = boost::math::tools::brent_find_minima([&](double x) { return -f(x); }, a, b, 40);
  return res.first;
}

}  // namespace

Block3 CovariantKernel::kernel_cov_block(double a, double b) const {
  Block3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i][j] = kernel_cov(i, j, a, b);
  return out;
}

double CovariantKernel::dist(double a, double b) const { return std::abs(metric_G(a) - metric_G(b)); }

double CovariantKernel::diameter() const { return metric_G(domain().hi) - metric_G(domain().lo); }

std::vector<double> CovariantKernel::metric_grid(double step) const {
  if (!(step > 0)) throw PreconditionError("metric grid step must be positive");
  const double G0 = metric_G(domain().lo);
  const double D = diameter();
  const long count = static_cast<long>(std::floor(D / step + 1e-12));
  std::vector<double> grid;
  grid.reserve(count + 2);
  grid.push_back(domain().lo);
  for (long k = 1; k <= count; ++k) {
    const double t = G0 + k * step;
    if (t >= G0 + D - 1e-12 * std::max(1.0, D)) break;
    grid.push_back(domain().clamp(metric_G_inverse(t)));
  }
  grid.push_back(domain().hi);
  return grid;
}

// ---------------------------------------------------------------- KernelModel

KernelModel::KernelModel(DictionaryPtr dict) : dict_(std::move(dict)) {
  if (!dict_) throw std::invalid_argument("KernelModel needs a dictionary");
  build_metric_table();
}

double KernelModel::kernel_cov(int i, int j, double a, double b) const {
  if (i < 0 || i > 3 || j < 0 || j > 3) throw std::out_of_range("kernel_cov orders must be 0..3");
  const Side A = make_side(*dict_, a);
  const Side B = make_side(*dict_, b);
  return covariant_from_sides(A, B, i, j);
}

double KernelModel::metric_g(double theta) const { return covariant_frame(*dict_, theta).g; }

// Panels span about 0.05 metric units, over which sqrt(g) is a low-degree
// polynomial to rounding; a fixed 10-point rule is enough.
double KernelModel::integrate_sqrt_g(double a, double b) const {
  if (a == b) return 0.0;
  auto f = [&](double x) { return sqrt_g(*dict_, x); };
  const double v = boost::math::quadrature::gauss<double, 10>::integrate(f, a, b);
  if (!std::isfinite(v)) throw NumericalError("metric quadrature failed");
  return v;
}

void KernelModel::build_metric_table() {
  const DomainInterval& d = dict_->domain();
  // Coarse length estimate to size the panels (about 0.05 metric units each).
  const int coarse = 129;
  double est = 0.0, prev = sqrt_g(*dict_, d.lo);
  for (int k = 1; k < coarse; ++k) {
    const double x = d.lo + d.width() * k / (coarse - 1);
    const double cur = sqrt_g(*dict_, x);
    est += 0.5 * (prev + cur) * d.width() / (coarse - 1);
    prev = cur;
  }
  const int panels = std::clamp(static_cast<int>(std::ceil(est / 0.05)), 128, 200000);
  nodes_.resize(panels + 1);
  G_.resize(panels + 1);
  dG_.resize(panels + 1);
  d2G_.resize(panels + 1);
  for (int k = 0; k <= panels; ++k) {
    nodes_[k] = k == panels ? d.hi : d.lo + d.width() * k / panels;
    const CovariantFrame fr = covariant_frame(*dict_, nodes_[k]);
    dG_[k] = std::sqrt(fr.g);
    d2G_[k] = 0.5 * fr.dg / dG_[k];
  }
  G_[0] = 0.0;
  auto f = [&](double x) { return sqrt_g(*dict_, x); };
  for (int k = 0; k < panels; ++k)
    G_[k + 1] = G_[k] + boost::math::quadrature::gauss<double, 10>::integrate(f, nodes_[k], nodes_[k + 1]);
  // Anchor at the domain midpoint.
  const double Gmid = metric_G(d.mid()) ;
  for (double& g : G_) g -= Gmid;
}

double KernelModel::metric_G(double theta) const {
  dict_->check_domain(theta);
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), theta);
  size_t k = it == nodes_.begin() ? 0 : static_cast<size_t>(it - nodes_.begin()) - 1;
  if (k >= nodes_.size() - 1) k = nodes_.size() - 2;
  // Integrate from the closer end of the panel.
  if (theta - nodes_[k] <= nodes_[k + 1] - theta) return G_[k] + integrate_sqrt_g(nodes_[k], theta);
  return G_[k + 1] - integrate_sqrt_g(theta, nodes_[k + 1]);
}

double KernelModel::metric_G_inverse(double t) const {
  if (t <= G_.front()) return nodes_.front();
  if (t >= G_.back()) return nodes_.back();
  auto it = std::upper_bound(G_.begin(), G_.end(), t);
  const size_t k = static_cast<size_t>(it - G_.begin()) - 1;
  const double h = nodes_[k + 1] - nodes_[k];
  const Hermite5 H{G_[k], dG_[k] * h, d2G_[k] * h * h, G_[k + 1], dG_[k + 1] * h, d2G_[k + 1] * h * h};
  double lo = 0.0, hi = 1.0;
  double s = (t - G_[k]) / (G_[k + 1] - G_[k]);
  for (int it2 = 0; it2 < 60; ++it2) {
    const double v = H.eval(s) - t;
    if (v > 0) hi = s; else lo = s;
    const double dv = H.deriv(s);
    double next = dv > 0 ? s - v / dv : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) < 1e-16) { s = next; break; }
    s = next;
  }
  return nodes_[k] + s * h;
}

// ------------------------------------------------------------ StationaryLimit

StationaryLimit::StationaryLimit(std::string name, Profile k, Coordinate coord, DomainInterval window,
                                 DomainInterval domain_inf)
    : name_(std::move(name)), k_(std::move(k)), coord_(std::move(coord)), window_(window), dom_inf_(domain_inf) {
  const double D = diameter_inf();
  const double xmax = std::min(D, 60.0);
  constants_.L3 = -k_(0.0)[6];
  // sup |k^{(m)}| over |x| <= D; the profile has definite parity.
  for (int m = 0; m <= 4; ++m) {
    const double step = 0.005;
    double best = 0.0, arg = 0.0;
    for (double x = 0.0; x <= xmax + 1e-12; x += step) {
      const double v = std::abs(k_(x)[m]);
      if (v > best) best = v, arg = x;
    }
    const double x = brent_max([&](double y) { return std::abs(k_(y)[m]); }, std::max(0.0, arg - step),
                               std::min(xmax, arg + step));
    best = std::max(best, std::abs(k_(x)[m]));
    for (int i = 0; i <= 2; ++i)
      for (int j = 0; j <= 2; ++j)
        if (i + j == m) constants_.L[i][j] = best;
  }
  // Infimum of g over the limit domain; g = t'(theta)^2 is monotone or
  // constant for the built-in coordinates, so endpoints and window suffice.
  double mg = kInf;
  for (double x : {dom_inf_.lo_inf, dom_inf_.hi_inf, window_.lo, window_.hi, window_.mid()})
    if (std::isfinite(x)) mg = std::min(mg, metric_g(x));
  if (!std::isfinite(dom_inf_.lo_inf) || !std::isfinite(dom_inf_.hi_inf)) {
    // Unbounded side: use the asymptotic value when g is constant, else 0.
    const double a = metric_g(window_.lo), b = metric_g(window_.hi);
    if (std::abs(a - b) > 1e-12 * std::max(a, b)) mg = 0.0;
  }
  constants_.m_g = mg;
}

double StationaryLimit::diameter_inf() const {
  return coord_.t(dom_inf_.hi_inf) - coord_.t(dom_inf_.lo_inf);
}

double StationaryLimit::kernel_cov(int i, int j, double a, double b) const {
  if (i < 0 || i > 3 || j < 0 || j > 3) throw std::out_of_range("kernel_cov orders must be 0..3");
  const double v = k_(coord_.t(a) - coord_.t(b))[i + j];
  return (j % 2) ? -v : v;
}

Block3 StationaryLimit::kernel_cov_block(double a, double b) const {
  const auto d = k_(coord_.t(a) - coord_.t(b));
  Block3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i][j] = (j % 2) ? -d[i + j] : d[i + j];
  return out;
}

double StationaryLimit::metric_g(double theta) const {
  const double d = coord_.dt(theta);
  return d * d;
}

Functional StationaryLimit::eps_far(double r) const {
  const double D = diameter_inf();
  Functional out;
  out.grid_step = 0.005;
  if (r > D) {
    out.value = 1.0;
    out.empty = true;
    return out;
  }
  const double xmax = std::min(D, r + 60.0);
  double best = std::abs(k_(r)[0]), arg = r;
  for (double x = r; x <= xmax + 1e-12; x += out.grid_step) {
    const double v = std::abs(k_(x)[0]);
    if (v > best) best = v, arg = x;
  }
  const double x = brent_max([&](double y) { return std::abs(k_(y)[0]); }, std::max(r, arg - out.grid_step),
                             std::min(xmax, arg + out.grid_step));
  best = std::max(best, std::abs(k_(x)[0]));
  out.value = 1.0 - best;
  return out;
}

Functional StationaryLimit::nu_near(double r) const {
  Functional out;
  out.grid_step = 0.005;
  const double xmax = std::min(r, diameter_inf());
  // K^[0,2] = k''(t - t'), even in the argument.
  double best = k_(0.0)[2], arg = 0.0;
  for (double x = 0.0; x <= xmax + 1e-12; x += out.grid_step) {
    const double v = k_(std::min(x, xmax))[2];
    if (v > best) best = v, arg = x;
  }
  const double x = brent_max([&](double y) { return k_(y)[2]; }, std::max(0.0, arg - out.grid_step),
                             std::min(xmax, arg + out.grid_step));
  best = std::max({best, k_(x)[2], k_(xmax)[2]});
  out.value = -best;
  return out;
}

namespace {

// k^{(m)}(x) = (-1)^m He_m(x) e^{-x^2/2}.
std::array<double, 7> gaussian_profile(double x) {
  std::array<double, 7> out{};
  if (std::abs(x) > 40.0) return out;
  const double e = std::exp(-0.5 * x * x);
  double he[7];
  he[0] = 1.0;
  he[1] = x;
  for (int m = 1; m < 6; ++m) he[m + 1] = x * he[m] - m * he[m - 1];
  for (int m = 0; m <= 6; ++m) out[m] = (m % 2 ? -he[m] : he[m]) * e;
  return out;
}

// k^{(m)} = sech(x) P_m(tanh x) with P_{m+1} = -t P_m + (1 - t^2) P_m'.
std::array<double, 7> sech_profile(double x) {
  std::array<double, 7> out{};
  if (std::abs(x) > 350.0) return out;
  const double s = 1.0 / std::cosh(x), t = std::tanh(x);
  double P[8] = {1, 0, 0, 0, 0, 0, 0, 0};
  for (int m = 0; m <= 6; ++m) {
    double v = 0.0;
    for (int d = 7; d >= 0; --d) v = v * t + P[d];
    out[m] = s * v;
    double next[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (int d = 0; d < 7; ++d) {
      next[d + 1] -= P[d];  // -t P
      if (d >= 1) {
        next[d - 1] += d * P[d];  // P'
        next[d + 1] -= d * P[d];  // -t^2 P'
      }
    }
    std::copy(next, next + 8, P);
  }
  return out;
}

// Derivatives of sin(y)/y: power series near 0, Leibniz on sin(y) * y^{-1} beyond.
std::array<double, 7> sinc_derivatives(double y) {
  std::array<double, 7> out{};
  if (std::abs(y) < 4.0) {
    for (int m = 0; m <= 6; ++m) {
      double sum = 0.0;
      for (int j = (m + 1) / 2; j < 45; ++j) {
        const double term = std::exp(std::lgamma(2.0 * j + 1) - std::lgamma(2.0 * j - m + 1) - std::lgamma(2.0 * j + 2));
        const int pw = 2 * j - m;
        const double v = term * (pw ? std::pow(y, pw) : 1.0);
        sum += (j % 2 ? -v : v);
        if (std::abs(v) < 1e-300 && j > 10) break;
      }
      out[m] = sum;
    }
    return out;
  }
  for (int m = 0; m <= 6; ++m) {
    double sum = 0.0, binom = 1.0;
    for (int k = 0; k <= m; ++k) {
      const int r = m - k;
      const double inv = std::tgamma(r + 1.0) / std::pow(y, r + 1) * (r % 2 ? -1.0 : 1.0);
      sum += binom * std::sin(y + k * std::numbers::pi / 2) * inv;
      binom = binom * (m - k) / (k + 1);
    }
    out[m] = sum;
  }
  return out;
}

std::array<double, 7> sinc_profile(double x) {
  const double a = std::sqrt(3.0);
  auto d = sinc_derivatives(a * x);
  double scale = 1.0;
  for (int m = 0; m <= 6; ++m, scale *= a) d[m] *= scale;
  return d;
}

}  // namespace

LimitPtr gaussian_limit(double sigma, DomainInterval window) {
  const double c = 1.0 / (std::numbers::sqrt2 * sigma);
  StationaryLimit::Coordinate coord{[c](double t) { return c * t; }, [c](double) { return c; },
                                    [c](double t) { return t / c; }};
  return std::make_shared<StationaryLimit>("gaussian", gaussian_profile, coord, window,
                                           DomainInterval(window.lo, window.hi, -kInf, kInf));
}

LimitPtr exponential_limit(DomainInterval window, double lo_inf, double hi_inf) {
  if (!(lo_inf > 0.0)) throw PreconditionError("exponential limit domain must lie in (0, inf)");
  StationaryLimit::Coordinate coord{[](double t) { return 0.5 * std::log(t); }, [](double t) { return 0.5 / t; },
                                    [](double t) { return std::exp(2.0 * t); }};
  return std::make_shared<StationaryLimit>("exponential", sech_profile, coord, window,
                                           DomainInterval(window.lo, window.hi, lo_inf, hi_inf));
}

LimitPtr fourier_limit(int fc, DomainInterval window) {
  const double c = 2.0 * std::numbers::pi * std::sqrt(fc * (fc + 1.0) / 3.0);
  StationaryLimit::Coordinate coord{[c](double t) { return c * t; }, [c](double) { return c; },
                                    [c](double t) { return t / c; }};
  return std::make_shared<StationaryLimit>("fourier", sinc_profile, coord, window,
                                           DomainInterval(window.lo, window.hi, -kInf, kInf));
}

// ---------------------------------------------------------------- ModelLimit

namespace {

class ModelLimit final : public LimitKernelSpec {
 public:
  ModelLimit(std::shared_ptr<const KernelModel> model, double step) : model_(std::move(model)), step_(step) {
    const auto grid = model_->metric_grid(step_);
    std::array<Mat, 4> tab;
    for (int i = 0; i < 4; ++i) tab[i] = kernels::tabulate(model_->dictionary(), grid, i);
    constants_.m_g = kInf;
    for (double t : grid) constants_.m_g = std::min(constants_.m_g, model_->metric_g(t));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) constants_.L[i][j] = (tab[i].transpose() * tab[j]).cwiseAbs().maxCoeff();
    constants_.L3 = tab[3].colwise().squaredNorm().maxCoeff();
  }

  std::string name() const override { return "self"; }
  double kernel_cov(int i, int j, double a, double b) const override { return model_->kernel_cov(i, j, a, b); }
  double metric_g(double t) const override { return model_->metric_g(t); }
  double metric_G(double t) const override { return model_->metric_G(t); }
  double metric_G_inverse(double t) const override { return model_->metric_G_inverse(t); }
  const DomainInterval& domain() const override { return model_->domain(); }
  const DomainInterval& domain_inf() const override { return model_->domain(); }
  const LimitConstants& constants() const override { return constants_; }
  Functional eps_far(double r) const override { return offgrid::eps_far(*model_, r, step_); }
  Functional nu_near(double r) const override { return offgrid::nu_near(*model_, r, step_); }

 private:
  std::shared_ptr<const KernelModel> model_;
  double step_;
  LimitConstants constants_;
};

}  // namespace

LimitPtr model_as_limit(std::shared_ptr<const KernelModel> model, double grid_step) {
  return std::make_shared<ModelLimit>(std::move(model), grid_step);
}

LimitPtr default_limit(std::shared_ptr<const KernelModel> model, double grid_step) {
  const Dictionary& d = model->dictionary();
  if (auto* g = dynamic_cast<const GaussianLocation*>(&d)) return gaussian_limit(g->sigma(), d.domain());
  if (auto* f = dynamic_cast<const FourierLowpass*>(&d)) return fourier_limit(f->cutoff(), d.domain());
  if (dynamic_cast<const ExponentialDecay*>(&d)) {
    const DomainInterval& w = d.domain();
    double lo = std::isfinite(w.lo_inf) && w.lo_inf > 0 ? w.lo_inf : w.lo;
    double hi = std::isfinite(w.hi_inf) ? w.hi_inf : w.hi;
    return exponential_limit(w, lo, hi);
  }
  return model_as_limit(std::move(model), grid_step);
}

// --------------------------------------------------- eps_far / nu_near on grids

namespace {

// Pairwise values F(a_k, b_l) on the metric grid.
Mat pair_values(const CovariantKernel& model, const std::vector<double>& grid, int i, int j) {
  if (auto* km = dynamic_cast<const KernelModel*>(&model)) {
    const Mat A = kernels::tabulate(km->dictionary(), grid, i);
    const Mat B = i == j ? A : kernels::tabulate(km->dictionary(), grid, j);
    return A.transpose() * B;
  }
  const Index G = static_cast<Index>(grid.size());
  Mat out(G, G);
#pragma omp parallel for schedule(static)
  for (Index a = 0; a < G; ++a)
    for (Index b = 0; b < G; ++b) out(a, b) = model.kernel_cov(i, j, grid[a], grid[b]);
  return out;
}

std::vector<double> grid_coordinates(const CovariantKernel& model, const std::vector<double>& grid) {
  std::vector<double> t(grid.size());
  for (size_t k = 0; k < grid.size(); ++k) t[k] = model.metric_G(grid[k]);
  return t;
}

}  // namespace

Functional eps_far(const CovariantKernel& model, double r, double grid_step) {
  if (!(r > 0)) throw PreconditionError("eps_far needs r > 0");
  Functional out;
  out.grid_step = grid_step;
  if (r > model.diameter()) {
    out.value = 1.0;
    out.empty = true;
    return out;
  }
  const auto grid = model.metric_grid(grid_step);
  const auto t = grid_coordinates(model, grid);
  const Mat K = pair_values(model, grid, 0, 0);
  const Index G = static_cast<Index>(grid.size());
  double best = -1.0;
  Index ba = 0, bb = 0;
  for (Index a = 0; a < G; ++a)
    for (Index b = a + 1; b < G; ++b)
      if (t[b] - t[a] >= r - 1e-12 && std::abs(K(a, b)) > best) best = std::abs(K(a, b)), ba = a, bb = b;
  if (best < 0) {
    out.value = 1.0;
    out.empty = true;
    return out;
  }
  // Coordinate-wise polish keeping d >= r.
  const DomainInterval& dom = model.domain();
  double a = grid[ba], b = grid[bb];
  auto absK = [&](double x, double y) { return std::abs(model.kernel(x, y)); };
  for (int round = 0; round < 2; ++round) {
    const double blo = std::max({grid[std::max<Index>(bb - 1, 0)], dom.clamp(model.metric_G_inverse(model.metric_G(a) + r))});
    const double bhi = grid[std::min<Index>(bb + 1, G - 1)];
    if (bhi > blo) {
      const double y = brent_max([&](double v) { return absK(a, v); }, blo, bhi);
      if (absK(a, y) > absK(a, b) && model.metric_G(y) - model.metric_G(a) >= r) b = y;
    }
    const double alo = grid[std::max<Index>(ba - 1, 0)];
    const double ahi = std::min(grid[std::min<Index>(ba + 1, G - 1)], dom.clamp(model.metric_G_inverse(model.metric_G(b) - r)));
    if (ahi > alo) {
      const double x = brent_max([&](double v) { return absK(v, b); }, alo, ahi);
      if (absK(x, b) > absK(a, b) && model.metric_G(b) - model.metric_G(x) >= r) a = x;
    }
  }
  best = std::max(best, absK(a, b));
  out.value = 1.0 - best;
  return out;
}

Functional nu_near(const CovariantKernel& model, double r, double grid_step) {
  Functional out;
  out.grid_step = grid_step;
  const auto grid = model.metric_grid(grid_step);
  const auto t = grid_coordinates(model, grid);
  const Mat K = pair_values(model, grid, 0, 2);
  const Index G = static_cast<Index>(grid.size());
  double best = -kInf;
  Index ba = 0, bb = 0;
  for (Index a = 0; a < G; ++a)
    for (Index b = 0; b < G; ++b)
      if (std::abs(t[b] - t[a]) <= r + 1e-12 && K(a, b) > best) best = K(a, b), ba = a, bb = b;
  // Polish the second argument inside the ball around the first.
  const double a = grid[ba];
  const double ta = model.metric_G(a);
  const DomainInterval& dom = model.domain();
  const double lo = std::max(grid[std::max<Index>(bb - 1, 0)], dom.clamp(model.metric_G_inverse(ta - r)));
  const double hi = std::min(grid[std::min<Index>(bb + 1, G - 1)], dom.clamp(model.metric_G_inverse(ta + r)));
  if (hi > lo) {
    const double y = brent_max([&](double v) { return model.kernel_cov(0, 2, a, v); }, lo, hi);
    best = std::max(best, model.kernel_cov(0, 2, a, y));
  }
  out.value = -best;
  return out;
}

ProximityReport proximity(const KernelModel& model, const LimitKernelSpec& limit, double grid_step) {
  const DomainInterval& d = model.domain();
  const DomainInterval& di = limit.domain_inf();
  if (d.lo < di.lo_inf || d.hi > di.hi_inf) throw PreconditionError("proximity needs the model domain inside the limit domain");
  ProximityReport rep;
  rep.grid_step = grid_step;
  const auto grid = model.metric_grid(grid_step);
  const Index G = static_cast<Index>(grid.size());
  std::array<Mat, 4> tab;
  for (int i = 0; i < 4; ++i) tab[i] = kernels::tabulate(model.dictionary(), grid, i);
  std::array<std::array<Mat, 3>, 3> KT;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) KT[i][j] = tab[i].transpose() * tab[j];

  double V1 = 0.0;
#pragma omp parallel for reduction(max : V1) schedule(static)
  for (Index a = 0; a < G; ++a)
    for (Index b = 0; b < G; ++b) {
      const Block3 L = limit.kernel_cov_block(grid[a], grid[b]);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) V1 = std::max(V1, std::abs(KT[i][j](a, b) - L[i][j]));
    }
  double V2 = 0.0, rho = 1.0;
  for (Index a = 0; a < G; ++a) {
    const double hT = tab[3].col(a).squaredNorm();
    V2 = std::max(V2, std::abs(hT - limit.h_inf(grid[a])));
    const double gT = model.metric_g(grid[a]);
    const double gI = limit.g_inf(grid[a]);
    rho = std::max({rho, std::sqrt(gT / gI), std::sqrt(gI / gT)});
  }
  rep.V1 = V1;
  rep.V2 = V2;
  rep.V_T = std::max(V1, V2);
  rep.rho_T = rho;
  const auto& c = limit.constants();
  rep.close_enough = rep.V_T <= std::min(c.Lij(2, 2), c.L3);
  return rep;
}

}  // namespace offgrid
