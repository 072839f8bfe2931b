#include "offgrid/measure.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "offgrid/dictionary.hpp"

namespace offgrid {

DomainInterval::DomainInterval(double lo_, double hi_, double lo_inf_, double hi_inf_)
    : lo(lo_), hi(hi_), lo_inf(lo_inf_), hi_inf(hi_inf_) {
  if (!(lo < hi)) throw PreconditionError("domain requires lo < hi");
  if (lo < lo_inf || hi > hi_inf) throw PreconditionError("domain must lie inside the limit domain");
}

double DomainInterval::clamp(double theta) const { return std::min(hi, std::max(lo, theta)); }

DiscreteMeasure::DiscreteMeasure(Vec weights) : DiscreteMeasure({}, std::move(weights)) {}

DiscreteMeasure::DiscreteMeasure(std::vector<int> indices, Vec weights) : idx_(std::move(indices)), a_(std::move(weights)) {
  if (a_.size() == 0) throw PreconditionError("measure needs at least one atom");
  if (idx_.empty()) {
    idx_.resize(a_.size());
    std::iota(idx_.begin(), idx_.end(), 0);
  }
  if (static_cast<Index>(idx_.size()) != a_.size()) throw std::invalid_argument("index/weight count mismatch");
  if (std::set<int>(idx_.begin(), idx_.end()).size() != idx_.size())
    throw PreconditionError("atom indices must be distinct");
  for (Index z = 0; z < a_.size(); ++z)
    if (!(a_(z) >= 0.0) || !std::isfinite(a_(z))) throw PreconditionError("atom weights must be finite and >= 0");
  mass_ = a_.sum();
  if (!(mass_ > 0.0)) throw PreconditionError("measure mass must be positive");
}

DiscreteMeasure DiscreteMeasure::uniform(int n, double weight) { return DiscreteMeasure(Vec::Constant(n, weight)); }

double lp_norm(const Vec& f, const DiscreteMeasure& nu, double p) {
  if (f.size() != nu.size()) throw std::invalid_argument("lp_norm: length mismatch");
  const Vec& a = nu.weights();
  if (std::isinf(p)) {
    double m = 0.0;
    for (Index z = 0; z < f.size(); ++z)
      if (a(z) > 0.0) m = std::max(m, std::abs(f(z)));
    return m;
  }
  if (p == 2.0) return std::sqrt((a.array() * f.array().square()).sum());
  if (p == 1.0) return (a.array() * f.array().abs()).sum();
  // Scale first so large entries do not overflow.
  double m = lp_norm(f, nu, kInf);
  if (m == 0.0) return 0.0;
  double s = (a.array() * (f.array().abs() / m).pow(p)).sum();
  return m * std::pow(s, 1.0 / p);
}

double mixed_norm(const Mat& B, const DiscreteMeasure& nu, double p) {
  if (!(p >= 1.0 && p <= 2.0)) throw std::invalid_argument("mixed_norm: p must lie in [1,2]");
  if (B.rows() != nu.size()) throw std::invalid_argument("mixed_norm: row count differs from atom count");
  double total = 0.0;
  for (Index k = 0; k < B.cols(); ++k) total += lp_norm(B.col(k), nu, p);
  return total;
}

Vec dual_unit(const Vec& f, const DiscreteMeasure& nu, double p) {
  if (!(p >= 1.0 && p <= 2.0)) throw std::invalid_argument("dual_unit: p must lie in [1,2]");
  const double q = conjugate_exponent(p);
  const double norm = lp_norm(f, nu, p);
  if (norm == 0.0) {
    double c = std::isinf(q) ? 1.0 : std::pow(nu.mass(), -1.0 / q);
    return Vec::Constant(f.size(), c);
  }
  Vec v(f.size());
  for (Index z = 0; z < f.size(); ++z) {
    double s = (f(z) > 0) - (f(z) < 0);
    v(z) = p == 1.0 ? s : s * std::pow(std::abs(f(z)) / norm, p - 1.0);
  }
  return v;
}

double lt_inner(const Mat& F, const Mat& G, const DiscreteMeasure& nu) {
  if (F.rows() != nu.size() || G.rows() != nu.size() || F.cols() != G.cols())
    throw std::invalid_argument("lt_inner: shape mismatch");
  return (nu.weights().array() * (F.array() * G.array()).rowwise().sum()).sum();
}

double lt_norm(const Mat& F, const DiscreteMeasure& nu) { return std::sqrt(std::max(0.0, lt_inner(F, F, nu))); }

SignalSet::SignalSet(Mat data_, DiscreteMeasure measure_) : data(std::move(data_)), measure(std::move(measure_)) {
  if (data.rows() != measure.size()) throw std::invalid_argument("signal rows must match atom count");
  if (!data.allFinite()) throw PreconditionError("signal entries must be finite");
}

MixtureParams::MixtureParams(Mat B_, Vec theta_, int capacity_) : B(std::move(B_)), theta(std::move(theta_)) {
  if (B.cols() != theta.size()) throw std::invalid_argument("B columns must match theta length");
  capacity = capacity_ < 0 ? static_cast<int>(theta.size()) : capacity_;
  if (static_cast<int>(theta.size()) > capacity) throw PreconditionError("more atoms than capacity");
}

std::vector<int> MixtureParams::support(const DiscreteMeasure& nu) const {
  std::vector<int> s;
  for (Index k = 0; k < B.cols(); ++k)
    if (lp_norm(B.col(k), nu, 2.0) != 0.0) s.push_back(static_cast<int>(k));
  return s;
}

Mat feature_matrix(const Dictionary& dict, const Vec& theta) {
  Mat Phi(theta.size(), dict.size());
  for (Index k = 0; k < theta.size(); ++k) Phi.row(k) = normalized_feature(dict, theta(k)).transpose();
  return Phi;
}

SignalSet synthesize(const MixtureParams& params, const Dictionary& dict, const DiscreteMeasure& nu,
                     const std::optional<Mat>& noise) {
  if (params.B.rows() != nu.size()) throw std::invalid_argument("synthesize: B rows must match atom count");
  for (Index k = 0; k < params.theta.size(); ++k) dict.check_domain(params.theta(k));
  Mat Y = Mat::Zero(nu.size(), dict.size());
  if (params.K() > 0) Y = params.B * feature_matrix(dict, params.theta);
  if (noise) {
    if (noise->rows() != Y.rows() || noise->cols() != Y.cols()) throw std::invalid_argument("noise shape mismatch");
    Y += *noise;
  }
  return SignalSet(std::move(Y), nu);
}

double prediction_error(const MixtureParams& est, const MixtureParams& truth, const Dictionary& dict,
                        const DiscreteMeasure& nu) {
  Mat diff = synthesize(est, dict, nu).data - synthesize(truth, dict, nu).data;
  return lt_norm(diff, nu) / std::sqrt(nu.mass());
}

std::string format_real(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_real(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("bad number in CSV: " + s);
  return v;
}

}  // namespace

void write_signal_csv(std::ostream& os, const SignalSet& y) {
  os << "z";
  for (Index t = 0; t < y.T(); ++t) os << ",y_" << t;
  os << '\n';
  for (int z = 0; z < y.n(); ++z) {
    os << y.measure.index(z);
    for (Index t = 0; t < y.T(); ++t) os << ',' << format_real(y.data(z, t));
    os << '\n';
  }
}

Mat read_signal_csv(std::istream& is, std::vector<int>* indices) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty signal CSV");
  const Index T = static_cast<Index>(split_csv(line).size()) - 1;
  std::vector<std::vector<double>> rows;
  if (indices) indices->clear();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (static_cast<Index>(cells.size()) != T + 1) throw std::invalid_argument("ragged signal CSV");
    if (indices) indices->push_back(std::stoi(cells[0]));
    std::vector<double> r;
    for (Index t = 0; t < T; ++t) r.push_back(parse_real(cells[t + 1]));
    rows.push_back(std::move(r));
  }
  Mat Y(static_cast<Index>(rows.size()), T);
  for (size_t z = 0; z < rows.size(); ++z)
    for (Index t = 0; t < T; ++t) Y(static_cast<Index>(z), t) = rows[z][t];
  return Y;
}

void write_mixture_csv(std::ostream& os, const MixtureParams& params) {
  os << "k,theta";
  for (Index z = 0; z < params.B.rows(); ++z) os << ",b_z" << z;
  os << '\n';
  for (int k = 0; k < params.K(); ++k) {
    os << k << ',' << format_real(params.theta(k));
    for (Index z = 0; z < params.B.rows(); ++z) os << ',' << format_real(params.B(z, k));
    os << '\n';
  }
}

MixtureParams read_mixture_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty mixture CSV");
  const Index n = static_cast<Index>(split_csv(line).size()) - 2;
  std::vector<double> theta;
  std::vector<std::vector<double>> cols;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (static_cast<Index>(cells.size()) != n + 2) throw std::invalid_argument("ragged mixture CSV");
    theta.push_back(parse_real(cells[1]));
    std::vector<double> c;
    for (Index z = 0; z < n; ++z) c.push_back(parse_real(cells[z + 2]));
    cols.push_back(std::move(c));
  }
  const Index K = static_cast<Index>(theta.size());
  Mat B(n, K);
  for (Index k = 0; k < K; ++k)
    for (Index z = 0; z < n; ++z) B(z, k) = cols[k][z];
  return MixtureParams(std::move(B), Eigen::Map<Vec>(theta.data(), K));
}

}  // namespace offgrid
