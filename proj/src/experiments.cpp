#include "offgrid/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace offgrid {

using json = nlohmann::json;

// ------------------------------------------------------------------ config

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw PreconditionError("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw PreconditionError("config: unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

double real_or_inf(const json& v, double fallback) {
  if (v.is_null()) return fallback;
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw PreconditionError("config: expected a number, got '" + s + "'");
  }
  return v.get<double>();
}

std::pair<double, double> read_pair(const json& j, const char* key, std::pair<double, double> fallback,
                                    double inf_lo = -kInf, double inf_hi = kInf) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2) throw PreconditionError(std::string("config: '") + key + "' must be [lo, hi]");
  return {real_or_inf(v[0], inf_lo), real_or_inf(v[1], inf_hi)};
}

KappaSpec::Mode kappa_mode(const std::string& s) {
  if (s == "theory") return KappaSpec::Mode::theory;
  if (s == "calibrated") return KappaSpec::Mode::calibrated;
  if (s == "manual") return KappaSpec::Mode::manual;
  throw PreconditionError("config: unknown kappa mode '" + s + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (measure.n < 1) throw PreconditionError("config: measure.n must be >= 1");
  if (!measure.weights.empty() && static_cast<int>(measure.weights.size()) != measure.n)
    throw PreconditionError("config: measure.weights must have n entries");
  if (truth.s < 1) throw PreconditionError("config: truth.s must be >= 1");
  if (!truth.theta.empty() && static_cast<int>(truth.theta.size()) != truth.s)
    throw PreconditionError("config: truth.theta must have s entries");
  if (!(truth.separation_multiplier >= 1.0)) throw PreconditionError("config: separation multiplier must be >= 1");
  if (!(truth.amp_lo > 0) || truth.amp_hi < truth.amp_lo) throw PreconditionError("config: need 0 < amp_lo <= amp_hi");
  if (!(noise.sigma >= 0) || !(noise.delta_T > 0)) throw PreconditionError("config: need sigma >= 0 and delta_T > 0");
  if (kappa.mode == KappaSpec::Mode::manual && !(kappa.value > 0)) throw PreconditionError("config: manual kappa must be positive");
  if (kappa.mode == KappaSpec::Mode::calibrated && !(kappa.constant > 0))
    throw PreconditionError("config: calibrated kappa constant must be positive");
  if (kappa.tau > 0 && kappa.tau <= 1) throw PreconditionError("config: tau must exceed 1");
  if (!(certificate.r > 0) || !(certificate.grid_step > 0) || !(certificate.proximity_grid_step > 0) ||
      !(certificate.delta_grid_step > 0))
    throw PreconditionError("config: certificate radii and grid steps must be positive");
  if (study.replicates < 1) throw PreconditionError("config: study.replicates must be >= 1");
  if (threads < 1) throw PreconditionError("config: threads must be >= 1");
  if (dictionary.kind == DictionaryKind::fourier_lowpass && dictionary.fc < 1)
    throw PreconditionError("config: fourier_lowpass needs fc >= 1");
  solver.validate();
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw PreconditionError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  try {
    check_keys(j, {"seed", "threads", "dictionary", "measure", "truth", "noise", "solver", "kappa", "certificate", "study"},
               "config");
    read(j, "seed", c.seed);
    read(j, "threads", c.threads);

    if (j.contains("dictionary")) {
      const json& d = j["dictionary"];
      check_keys(d, {"kind", "sigma", "fc", "T", "grid", "domain", "limit_domain"}, "dictionary");
      if (d.contains("kind")) c.dictionary.kind = dictionary_kind_from_string(d["kind"].get<std::string>());
      read(d, "sigma", c.dictionary.sigma);
      read(d, "fc", c.dictionary.fc);
      read(d, "T", c.dictionary.T);
      std::tie(c.dictionary.grid_lo, c.dictionary.grid_hi) = read_pair(d, "grid", {c.dictionary.grid_lo, c.dictionary.grid_hi});
      auto lim = read_pair(d, "limit_domain", {-kInf, kInf});
      c.dictionary.lo_inf = lim.first;
      c.dictionary.hi_inf = lim.second;
      auto dom = read_pair(d, "domain", {c.dictionary.domain.lo, c.dictionary.domain.hi});
      c.dictionary.domain = DomainInterval(dom.first, dom.second, lim.first, lim.second);
    }
    if (c.dictionary.kind == DictionaryKind::fourier_lowpass) c.dictionary.T = 2 * c.dictionary.fc + 1;

    if (j.contains("measure")) {
      const json& m = j["measure"];
      check_keys(m, {"n", "weights"}, "measure");
      read(m, "n", c.measure.n);
      read(m, "weights", c.measure.weights);
    }
    if (j.contains("truth")) {
      const json& t = j["truth"];
      check_keys(t, {"s", "theta", "amplitude", "random_signs", "separation_multiplier"}, "truth");
      read(t, "s", c.truth.s);
      read(t, "theta", c.truth.theta);
      std::tie(c.truth.amp_lo, c.truth.amp_hi) = read_pair(t, "amplitude", {c.truth.amp_lo, c.truth.amp_hi});
      read(t, "random_signs", c.truth.random_signs);
      read(t, "separation_multiplier", c.truth.separation_multiplier);
    }
    if (j.contains("noise")) {
      const json& n = j["noise"];
      check_keys(n, {"sigma", "delta_T", "inverse_T"}, "noise");
      read(n, "sigma", c.noise.sigma);
      read(n, "delta_T", c.noise.delta_T);
      read(n, "inverse_T", c.noise.inverse_T);
    }
    if (j.contains("solver")) {
      const json& s = j["solver"];
      check_keys(s, {"p", "K_max", "insertion_grid_step", "max_outer_iters", "max_inner_iters", "tol_obj", "tol_dual", "refine"},
                 "solver");
      read(s, "p", c.solver.p);
      read(s, "K_max", c.solver.K_max);
      read(s, "insertion_grid_step", c.solver.insertion_grid_step);
      read(s, "max_outer_iters", c.solver.max_outer_iters);
      read(s, "max_inner_iters", c.solver.max_inner_iters);
      read(s, "tol_obj", c.solver.tol_obj);
      read(s, "tol_dual", c.solver.tol_dual);
      read(s, "refine", c.solver.refine);
    }
    if (j.contains("kappa")) {
      const json& k = j["kappa"];
      check_keys(k, {"mode", "tau", "constant", "value"}, "kappa");
      if (k.contains("mode")) c.kappa.mode = kappa_mode(k["mode"].get<std::string>());
      read(k, "tau", c.kappa.tau);
      read(k, "constant", c.kappa.constant);
      read(k, "value", c.kappa.value);
    }
    // A solver-level kappa is the initial value; the trial replaces it.
    c.solver.kappa = c.kappa.mode == KappaSpec::Mode::manual && c.kappa.value > 0 ? c.kappa.value : 1.0;
    if (j.contains("certificate")) {
      const json& r = j["certificate"];
      check_keys(r, {"r", "rho", "grid_step", "proximity_grid_step", "delta_grid_step", "restarts", "C4_prime", "bound_slack",
                     "check_in_study"},
                 "certificate");
      read(r, "r", c.certificate.r);
      read(r, "rho", c.certificate.rho);
      read(r, "grid_step", c.certificate.grid_step);
      read(r, "proximity_grid_step", c.certificate.proximity_grid_step);
      read(r, "delta_grid_step", c.certificate.delta_grid_step);
      read(r, "restarts", c.certificate.restarts);
      read(r, "C4_prime", c.certificate.C4_prime);
      read(r, "bound_slack", c.certificate.bound_slack);
      read(r, "check_in_study", c.certificate.check_in_study);
    }
    if (j.contains("study")) {
      const json& s = j["study"];
      check_keys(s, {"T", "n", "s", "replicates"}, "study");
      read(s, "T", c.study.T_list);
      read(s, "n", c.study.n_list);
      read(s, "s", c.study.s_list);
      read(s, "replicates", c.study.replicates);
    }
  } catch (const json::exception& e) {
    throw PreconditionError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

DictionaryPtr build_dictionary(const DictionarySpec& spec) {
  switch (spec.kind) {
    case DictionaryKind::gaussian_location:
      return make_gaussian_location(spec.sigma, uniform_samples(spec.grid_lo, spec.grid_hi, spec.T), spec.domain);
    case DictionaryKind::fourier_lowpass:
      return make_fourier_lowpass(spec.fc, spec.domain);
    case DictionaryKind::exponential_decay:
      return make_exponential_decay(uniform_samples(spec.grid_lo, spec.grid_hi, spec.T), spec.domain);
    case DictionaryKind::custom: break;
  }
  throw PreconditionError("config: custom dictionaries are not built from config");
}

void write_diagnostics_csv(std::ostream& os, const std::vector<DiagnosticRow>& rows) {
  os << "quantity,value,grid_step\n";
  for (const auto& r : rows) os << r.quantity << ',' << format_real(r.value) << ',' << format_real(r.grid_step) << '\n';
}

// ------------------------------------------------------------------ trials

namespace {

// Stream tags.
constexpr std::uint64_t kTruthTag = 0x7472757468;
constexpr std::uint64_t kTargetTag = 0x746172676574;

double metric_ratio(const KernelModel& model, const LimitKernelSpec& limit, double step) {
  double rho = 1.0;
  for (double th : model.metric_grid(step)) {
    const double gT = model.metric_g(th), gI = limit.g_inf(th);
    rho = std::max({rho, std::sqrt(gT / gI), std::sqrt(gI / gT)});
  }
  return rho;
}

double effective_rho(const CertificateSpec& spec, double rho_T) { return spec.rho > 0 ? spec.rho : std::max(1.0, rho_T); }

double min_separation(const CovariantKernel& model, const Vec& theta) {
  double m = kInf;
  for (Index k = 0; k < theta.size(); ++k)
    for (Index l = k + 1; l < theta.size(); ++l) m = std::min(m, model.dist(theta(k), theta(l)));
  return m;
}

std::uint64_t point_key(const ExperimentConfig& c) {
  return static_cast<std::uint64_t>(c.dictionary.T) * 1000003ULL + static_cast<std::uint64_t>(c.measure.n) * 1009ULL +
         static_cast<std::uint64_t>(c.truth.s);
}

}  // namespace

TrialSetup prepare_trial(const ExperimentConfig& config) {
  config.validate();
  TrialSetup st;
  st.config = config;
  const auto& cs = config.certificate;
  auto model = std::make_shared<KernelModel>(build_dictionary(config.dictionary));
  st.model = model;
  st.limit = default_limit(model, cs.proximity_grid_step);
  st.nu = config.measure.weights.empty()
              ? DiscreteMeasure::uniform(config.measure.n)
              : DiscreteMeasure(Eigen::Map<const Vec>(config.measure.weights.data(), config.measure.n));

  st.rho_T = metric_ratio(*model, *st.limit, cs.proximity_grid_step);
  const double rho = effective_rho(cs, st.rho_T);
  st.th = thresholds(*st.limit, cs.r, rho);
  st.cc = certificate_constants(*st.limit, cs.r, rho);
  const auto& L = st.limit->constants();
  st.tc = event_constants(st.cc, L.Lij(2, 2), L.L3, cs.C4_prime);

  const int s = config.truth.s;
  const DeltaEstimate de = delta_search(*st.limit, st.cc.u_inf, s, cs.delta_grid_step, cs.restarts, config.seed);
  st.separation_threshold = de.finite() ? 2.0 * std::max(cs.r, rho * de.delta) : kInf;

  // Truth.
  Vec theta(s);
  if (!config.truth.theta.empty()) {
    for (int k = 0; k < s; ++k) theta(k) = config.truth.theta[k];
  } else {
    if (s > 1 && !de.finite()) throw PreconditionError("no finite separation threshold for s = " + std::to_string(s));
    const double spacing = config.truth.separation_multiplier * st.separation_threshold;
    const double D = model->diameter();
    if ((s - 1) * spacing > D)
      throw PreconditionError("truth does not fit: (s-1) * spacing = " + format_real((s - 1) * spacing) +
                              " exceeds the metric diameter " + format_real(D));
    const double mid = model->metric_G(model->domain().lo) + 0.5 * D;
    for (int k = 0; k < s; ++k)
      theta(k) = model->domain().clamp(model->metric_G_inverse(mid + (k - 0.5 * (s - 1)) * spacing));
  }
  auto rng = make_stream(config.seed, kTruthTag, static_cast<std::uint64_t>(config.measure.n), static_cast<std::uint64_t>(s));
  std::uniform_real_distribution<double> amp(config.truth.amp_lo, config.truth.amp_hi);
  std::bernoulli_distribution coin(0.5);
  Mat B(config.measure.n, s);
  for (int k = 0; k < s; ++k)
    for (int z = 0; z < config.measure.n; ++z) {
      const double m = config.truth.amp_hi > config.truth.amp_lo ? amp(rng) : config.truth.amp_lo;
      const bool neg = config.truth.random_signs && coin(rng);
      B(z, k) = neg ? -m : m;
    }
  st.truth = MixtureParams(B, theta, config.solver.K_max);

  // Noise level and kappa.
  const double T = static_cast<double>(model->dictionary().size());
  st.delta_T = config.noise.inverse_T ? config.noise.delta_T / T : config.noise.delta_T;
  st.tau = config.kappa.tau > 0 ? config.kappa.tau : T;
  const double sigma = config.noise.sigma;
  const double n = config.measure.n;
  switch (config.kappa.mode) {
    case KappaSpec::Mode::manual: st.kappa = config.kappa.value; break;
    case KappaSpec::Mode::theory:
    case KappaSpec::Mode::calibrated: {
      const bool cal = config.kappa.mode == KappaSpec::Mode::calibrated;
      if (config.solver.p == 2) {
        const double C1 = cal ? config.kappa.constant : st.tc.C1;
        st.kappa = kappa_p2(st.tau, n, sigma, st.delta_T, st.nu.max_weight(), st.nu.mass(), C1);
      } else {
        const double C3 = cal ? config.kappa.constant : st.tc.C3;
        st.kappa = kappa_p1(st.tau, sigma, st.delta_T, st.nu.mass(), C3);
      }
      break;
    }
  }
  if (!(st.kappa > 0)) throw PreconditionError("kappa is not positive (sigma = 0 needs a manual kappa)");
  st.config.solver.kappa = st.kappa;

  for (int i = 0; i < 3; ++i)
    st.tables.push_back(make_grid_table(*model, model->dictionary(), config.solver.insertion_grid_step, i));
  return st;
}

TrialResult run_trial(const TrialSetup& st, int replicate) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig& c = st.config;
  const Dictionary& dict = st.model->dictionary();
  const Index T = dict.size();
  const int n = c.measure.n;
  const double p = c.solver.p;
  const double q = conjugate_exponent(p);

  NoiseModel nm{c.noise.sigma, st.delta_T, c.seed};
  auto rng = make_stream(c.seed, static_cast<std::uint64_t>(replicate), point_key(c));
  const Mat W = sample_noise(nm, n, T, rng);
  const Mat Y = synthesize(st.truth, dict, st.nu, W).data;

  const SolveResult sol = solve(Y, *st.model, st.nu, c.solver, &st.tables[0]);

  TrialResult r;
  r.replicate = replicate;
  r.kappa = st.kappa;
  r.R_hat = prediction_error(sol.params, st.truth, dict, st.nu);
  r.bound = st.tc.C0 * std::sqrt(static_cast<double>(c.truth.s)) * std::pow(st.nu.mass(), 1.0 / p) * st.kappa;
  r.M0 = sup_stat(W, dict, st.nu, 0, q, st.tables[0]);
  r.M1 = sup_stat(W, dict, st.nu, 1, q, st.tables[1]);
  r.M2 = sup_stat(W, dict, st.nu, 2, q, st.tables[2]);
  const double thr = st.tc.C_cal * st.kappa * st.nu.mass();
  r.event_ok = r.M0 <= thr && r.M1 <= thr && r.M2 <= thr;
  r.support = static_cast<int>(sol.params.support(st.nu).size());
  r.solver_warning = sol.trace.warning;
  r.runtime_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

TrialResult run_trial(const ExperimentConfig& config, int replicate) { return run_trial(prepare_trial(config), replicate); }

void write_trial_header(std::ostream& os) {
  os << "replicate,R_hat,bound,M0,M1,M2,event_ok,kappa,runtime_ms,support,solver_warning\n";
}

void write_trial_row(std::ostream& os, const TrialResult& r) {
  os << r.replicate << ',' << format_real(r.R_hat) << ',' << format_real(r.bound) << ',' << format_real(r.M0) << ','
     << format_real(r.M1) << ',' << format_real(r.M2) << ',' << (r.event_ok ? 1 : 0) << ',' << format_real(r.kappa) << ','
     << r.runtime_ms << ',' << r.support << ',' << (r.solver_warning ? 1 : 0) << '\n';
}

// ------------------------------------------------------------ certificates

CertificateReport certificate_report(const TrialSetup& st) {
  const ExperimentConfig& c = st.config;
  const auto& cs = c.certificate;
  const KernelModel& model = *st.model;
  const LimitKernelSpec& limit = *st.limit;
  const auto& L = limit.constants();
  const Vec& theta = st.truth.theta;
  const int s = static_cast<int>(theta.size());
  const double q = conjugate_exponent(c.solver.p);
  const double rho = effective_rho(cs, st.rho_T);

  CertificateReport rep;
  auto& d = rep.diagnostics;
  auto add = [&](const std::string& name, double v, double h = 0.0) { d.push_back({name, v, h}); };

  const ProximityReport prox = proximity(model, limit, cs.proximity_grid_step);
  const double hp = cs.proximity_grid_step;
  add("V1", prox.V1, hp);
  add("V2", prox.V2, hp);
  add("V_T", prox.V_T, hp);
  add("rho_T", prox.rho_T, hp);
  add("rho", rho);
  add("close_enough", prox.close_enough ? 1 : 0, hp);
  add("L10", L.Lij(1, 0));
  add("L20", L.Lij(2, 0));
  add("L21", L.Lij(2, 1));
  add("L22", L.Lij(2, 2));
  add("L3", L.L3);
  add("eps_inf", st.th.eps);
  add("nu_inf", st.th.nu);
  add("H1", st.th.H1);
  add("H2", st.th.H2);
  add("u_inf", st.cc.u_inf);
  const DeltaEstimate de = delta_search(limit, st.cc.u_inf, s, cs.delta_grid_step, cs.restarts, c.seed);
  add("delta_inf", de.delta, cs.delta_grid_step);
  add("separation_threshold", 2.0 * std::max(cs.r, prox.rho_T * de.delta), cs.delta_grid_step);
  const double sep = s > 1 ? min_separation(model, theta) : kInf;
  add("min_separation", sep);
  add("A_inf_truth", A_inf(model, theta));

  // Hypotheses of the interpolating-certificate construction.
  const double r = cs.r;
  add("hyp_r_range", r < 1.0 / std::sqrt(2.0 * L.Lij(2, 0)) ? 1 : 0);
  add("hyp_eps_nu_positive", st.th.feasible ? 1 : 0);
  add("hyp_delta_finite", de.finite() ? 1 : 0);
  add("hyp_rho", prox.rho_T <= rho ? 1 : 0);
  add("hyp_V_H1", prox.V_T <= st.th.H1 ? 1 : 0);
  add("hyp_V_H2", (s - 1) * prox.V_T <= st.th.H2 - st.cc.u_inf ? 1 : 0);
  add("hyp_separation", sep > 2.0 * std::max(r, prox.rho_T * de.delta) ? 1 : 0);

  add("C_N", st.cc.C_N);
  add("C_N_prime", st.cc.C_N_prime);
  add("C_F", st.cc.C_F);
  add("C_B", st.cc.C_B);
  add("c_N", st.cc.c_N);
  add("c_F", st.cc.c_F);
  add("c_B", st.cc.c_B);
  add("C_cal", st.tc.C_cal);
  add("C_big", st.tc.C_big);
  add("C0", st.tc.C0);
  add("C1", st.tc.C1);
  add("C2", st.tc.C2);
  add("C3", st.tc.C3);
  add("C4", st.tc.C4);
  add("kappa", st.kappa);
  add("metric_diameter", model.diameter());

  if (s > 1 && !(sep > 2 * r)) throw PreconditionError("atoms are closer than 2r = " + format_real(2 * r) + " in the metric");
  const Mat V = random_targets(st.nu, s, q, c.seed ^ kTargetTag);
  const Mat Vd = random_targets(st.nu, s, q, (c.seed ^ kTargetTag) + 1);
  const Certificate ci = build_certificate(model, theta, V, CertificateKind::interpolating, q);
  const Certificate cd = build_certificate(model, theta, Vd, CertificateKind::derivative, q);
  add("schur_gap_interpolating", ci.schur_gap);
  add("schur_gap_derivative", cd.schur_gap);
  rep.verification = verify_assumptions(ci, cd, model, st.nu, q, r, st.cc, cs.grid_step);
  add("verification_min_margin", rep.verification.min_margin(), cs.grid_step);
  rep.pass = rep.verification.all_pass();
  add("pass", rep.pass ? 1 : 0, cs.grid_step);
  return rep;
}

CertificateReport run_certificate_report(const ExperimentConfig& config) { return certificate_report(prepare_trial(config)); }

// ------------------------------------------------------------------ studies

double quantile(std::vector<double> v, double level) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * std::clamp(level, 0.0, 1.0);
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

StudyFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_fit needs two or more points");
  const size_t m = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < m; ++i) mx += std::log(x[i]), my += std::log(y[i]);
  mx /= m;
  my /= m;
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < m; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y[i]) - my);
  }
  StudyFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.points = static_cast<int>(m);
  return f;
}

StudyResult run_study(const ExperimentConfig& config) {
  config.validate();
  const std::vector<Index> Ts = config.study.T_list.empty() ? std::vector<Index>{config.dictionary.T} : config.study.T_list;
  const std::vector<int> ns = config.study.n_list.empty() ? std::vector<int>{config.measure.n} : config.study.n_list;
  const std::vector<int> ss = config.study.s_list.empty() ? std::vector<int>{config.truth.s} : config.study.s_list;
  const int R = config.study.replicates;

  StudyResult out;
  for (int s : ss)
    for (int n : ns)
      for (Index T : Ts) {
        ExperimentConfig c = config;
        c.truth.s = s;
        c.truth.theta.clear();
        if (!config.truth.theta.empty() && static_cast<int>(config.truth.theta.size()) == s) c.truth.theta = config.truth.theta;
        c.measure.n = n;
        if (static_cast<int>(c.measure.weights.size()) != n) c.measure.weights.clear();
        c.dictionary.T = T;
        if (c.dictionary.kind == DictionaryKind::fourier_lowpass) {
          c.dictionary.fc = static_cast<int>((T - 1) / 2);
          c.dictionary.T = 2 * c.dictionary.fc + 1;
        }
        const TrialSetup setup = prepare_trial(c);

        StudyPoint pt;
        pt.T = setup.model->dictionary().size();
        pt.n = n;
        pt.s = s;
        pt.kappa = setup.kappa;
        if (setup.tau > 1) {
          const double diam = setup.model->diameter();
          if (config.solver.p == 2) {
            pt.failure_prob = failure_prob_p2(setup.tau, n, diam, setup.tc.C2);
            pt.failure_prob_unit = failure_prob_p2(setup.tau, n, diam, 1.0);
          } else {
            pt.failure_prob = failure_prob_p1(setup.tau, n, diam, setup.tc.C4);
            pt.failure_prob_unit = failure_prob_p1(setup.tau, n, diam, 1.0);
          }
        }
        if (config.certificate.check_in_study) {
          try {
            pt.certificate_pass = certificate_report(setup).pass;
          } catch (const PreconditionError&) {
            pt.certificate_pass = false;
          }
        }
        pt.trials.resize(R);
#pragma omp parallel for schedule(dynamic, 1)
        for (int rep = 0; rep < R; ++rep) pt.trials[rep] = run_trial(setup, rep);

        std::vector<double> r2;
        int ok = 0;
        for (const auto& t : pt.trials) {
          r2.push_back(t.R_hat * t.R_hat);
          ok += t.event_ok;
          if (pt.certificate_pass && t.event_ok && t.R_hat > t.bound * (1.0 + config.certificate.bound_slack))
            ++pt.bound_violations;
        }
        pt.median_R2 = quantile(r2, 0.5);
        pt.q10_R2 = quantile(r2, 0.1);
        pt.q90_R2 = quantile(r2, 0.9);
        pt.event_frac = static_cast<double>(ok) / R;
        out.points.push_back(std::move(pt));
      }

  // Slope of median R^2 against T for each (n, s).
  if (Ts.size() >= 2)
    for (int s : ss)
      for (int n : ns) {
        std::vector<double> x, y;
        for (const auto& pt : out.points)
          if (pt.n == n && pt.s == s && pt.median_R2 > 0) x.push_back(static_cast<double>(pt.T)), y.push_back(pt.median_R2);
        if (x.size() < 2) continue;
        StudyFit f = loglog_fit(x, y);
        f.n = n;
        f.s = s;
        out.fits.push_back(f);
      }
  return out;
}

void write_study(const StudyResult& result, const ExperimentConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  const int p = config.solver.p;
  {
    auto f = open("summary.csv");
    f << "T,n,s,p,kappa,median_R2,q10_R2,q90_R2,event_frac,certificate_pass,bound_violations,bound_slack,"
         "failure_prob,failure_prob_unit\n";
    for (const auto& pt : result.points) {
      f << pt.T << ',' << pt.n << ',' << pt.s << ',' << p << ',' << format_real(pt.kappa) << ',' << format_real(pt.median_R2)
        << ',' << format_real(pt.q10_R2) << ',' << format_real(pt.q90_R2) << ',' << format_real(pt.event_frac) << ','
        << (pt.certificate_pass ? 1 : 0) << ',' << pt.bound_violations << ',' << format_real(config.certificate.bound_slack)
        << ',' << format_real(pt.failure_prob) << ',' << format_real(pt.failure_prob_unit) << '\n';
    }
  }
  {
    auto f = open("fit.csv");
    f << "n,s,slope,intercept,points\n";
    for (const auto& fit : result.fits)
      f << fit.n << ',' << fit.s << ',' << format_real(fit.slope) << ',' << format_real(fit.intercept) << ',' << fit.points
        << '\n';
  }
  {
    auto f = open("replicates.csv");
    f << "T,n,s,replicate,R_hat,bound,M0,M1,M2,event_ok,kappa,support,solver_warning\n";
    for (const auto& pt : result.points)
      for (const auto& t : pt.trials)
        f << pt.T << ',' << pt.n << ',' << pt.s << ',' << t.replicate << ',' << format_real(t.R_hat) << ','
          << format_real(t.bound) << ',' << format_real(t.M0) << ',' << format_real(t.M1) << ',' << format_real(t.M2) << ','
          << (t.event_ok ? 1 : 0) << ',' << format_real(t.kappa) << ',' << t.support << ',' << (t.solver_warning ? 1 : 0)
          << '\n';
  }
  auto plot = [&](const char* name, auto key) {
    auto f = open(name);
    f << "x,y,lo,hi\n";
    for (const auto& pt : result.points)
      f << key(pt) << ',' << format_real(pt.median_R2) << ',' << format_real(pt.q10_R2) << ',' << format_real(pt.q90_R2)
        << '\n';
  };
  if (config.study.T_list.size() > 1) plot("plot_T.csv", [](const StudyPoint& pt) { return pt.T; });
  if (config.study.n_list.size() > 1) plot("plot_n.csv", [](const StudyPoint& pt) { return pt.n; });
  if (config.study.s_list.size() > 1) plot("plot_s.csv", [](const StudyPoint& pt) { return pt.s; });
}

}  // namespace offgrid
