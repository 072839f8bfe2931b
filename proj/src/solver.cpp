#include "offgrid/solver.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace offgrid {

void SolverConfig::validate() const {
  if (!(kappa > 0)) throw PreconditionError("solver: kappa must be positive");
  if (p != 1 && p != 2) throw PreconditionError("solver: p must be 1 or 2");
  if (K_max < 1) throw PreconditionError("solver: K_max must be >= 1");
  if (!(insertion_grid_step > 0)) throw PreconditionError("solver: insertion_grid_step must be positive");
  if (max_outer_iters < 1 || max_inner_iters < 1) throw PreconditionError("solver: iteration limits must be >= 1");
  if (!(tol_obj >= 0) || !(tol_dual >= 0)) throw PreconditionError("solver: tolerances must be >= 0");
}

void write_trace_csv(std::ostream& os, const SolveTrace& trace) {
  os << "iter,objective,event,dual_sup\n";
  for (const auto& e : trace.entries)
    os << e.iter << ',' << format_real(e.objective) << ',' << e.event << ',' << format_real(e.dual_sup) << '\n';
}

namespace {

Mat residual(const Mat& Y, const Mat& B, const Mat& Phi) {
  if (B.cols() == 0) return Y;
  return Y - B * Phi;
}

double weighted_sq(const Mat& R, const DiscreteMeasure& nu) {
  return (nu.weights().array() * R.rowwise().squaredNorm().array()).sum();
}

// <X, Z>_a = sum_z a_z <X_z, Z_z>.
double a_inner(const Mat& X, const Mat& Z, const Vec& a) {
  return (a.array() * (X.array() * Z.array()).rowwise().sum()).sum();
}

// Smooth part sum_z a_z ||Y_z - B_z Phi||^2 / 2 from Gram data.
struct Quadratic {
  Mat Gram;  // Phi Phi^T
  Mat C;     // Y Phi^T
  Vec yy;    // ||Y_z||^2
  const Vec* a;

  double value(const Mat& B) const {
    const Mat BG = B * Gram;
    double v = 0.0;
    for (Index z = 0; z < B.rows(); ++z)
      v += (*a)(z) * (yy(z) - 2.0 * B.row(z).dot(C.row(z)) + B.row(z).dot(BG.row(z)));
    return 0.5 * std::max(0.0, v);
  }
  // Gradient in the a-weighted metric.
  Mat gradient(const Mat& B) const { return B * Gram - C; }
};

double penalty(const Mat& B, const DiscreteMeasure& nu, int p) {
  return B.cols() == 0 ? 0.0 : mixed_norm(B, nu, p);
}

// d/dtheta of the normalized feature.
void feature_and_derivative(const Dictionary& dict, double theta, Vec& u, Vec& du) {
  const FeatureJet j = dict.jet(theta);
  const double n = j.value.norm();
  if (!(n > 0.0)) throw NumericalError("raw feature has zero norm");
  u = j.value / n;
  du = (j.d1 - u.dot(j.d1) * u) / n;
}

}  // namespace

double objective_features(const Mat& Y, const Mat& B, const Mat& Phi, const DiscreteMeasure& nu, double kappa,
                          double p) {
  if (Y.rows() != nu.size() || B.rows() != nu.size() || B.cols() != Phi.rows() || (B.cols() > 0 && Phi.cols() != Y.cols()))
    throw std::invalid_argument("objective: shape mismatch");
  return weighted_sq(residual(Y, B, Phi), nu) / (2.0 * nu.mass()) + kappa * penalty(B, nu, static_cast<int>(p));
}

double objective(const Mat& Y, const Mat& B, const Vec& theta, const Dictionary& dict, const DiscreteMeasure& nu,
                 double kappa, double p) {
  const Mat Phi = theta.size() ? feature_matrix(dict, theta) : Mat(0, Y.cols());
  const Mat R = residual(Y, B, Phi);
  return weighted_sq(R, nu) / (2.0 * nu.mass()) + kappa * (B.cols() ? mixed_norm(B, nu, p) : 0.0);
}

SupResult dual_sup(const Mat& residual, const Dictionary& dict, const DiscreteMeasure& nu, double q,
                   const GridTable& table) {
  if (table.order != 0) throw std::invalid_argument("dual_sup needs an order-0 table");
  return grid_sup(residual, dict, nu, q, table, true);
}

SupResult dual_sup(const Mat& residual, const KernelModel& model, const DiscreteMeasure& nu, double q,
                   double grid_step) {
  const GridTable table = make_grid_table(model, model.dictionary(), grid_step, 0);
  return dual_sup(residual, model.dictionary(), nu, q, table);
}

Mat group_prox_step(const Mat& B, const Mat& gradient, double step, double kappa_nu, int p, const DiscreteMeasure& nu) {
  if (p != 1 && p != 2) throw PreconditionError("group_prox_step: p must be 1 or 2");
  if (!(step > 0)) throw PreconditionError("group_prox_step: step must be positive");
  const Vec& a = nu.weights();
  const double thr = step * kappa_nu;
  Mat V = B - step * gradient;
  for (Index z = 0; z < V.rows(); ++z)
    if (a(z) == 0.0) V.row(z).setZero();
  if (p == 2) {
    for (Index k = 0; k < V.cols(); ++k) {
      const double norm = std::sqrt((a.array() * V.col(k).array().square()).sum());
      if (norm <= thr) V.col(k).setZero();
      else V.col(k) *= 1.0 - thr / norm;
    }
  } else {
    V = V.unaryExpr([thr](double v) { return v > thr ? v - thr : (v < -thr ? v + thr : 0.0); });
  }
  return V;
}

SubproblemResult solve_subproblem(const Mat& Y, const Mat& Phi, const DiscreteMeasure& nu, double kappa, int p,
                                  const Mat& B0, int max_iters, double tol) {
  const Index n = Y.rows(), K = Phi.rows();
  if (Y.cols() != Phi.cols() || n != nu.size()) throw std::invalid_argument("solve_subproblem: shape mismatch");
  SubproblemResult res;
  const double scale = nu.mass();
  if (K == 0) {
    res.B = Mat(n, 0);
    res.objective = weighted_sq(Y, nu) / (2.0 * scale);
    res.converged = true;
    return res;
  }
  const Vec& a = nu.weights();
  Quadratic f{Phi * Phi.transpose(), Y * Phi.transpose(), Y.rowwise().squaredNorm(), &a};
  const double kn = kappa * scale;
  auto total = [&](const Mat& B) { return f.value(B) + kn * penalty(B, nu, p); };

  double L = Eigen::SelfAdjointEigenSolver<Mat>(f.Gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  L = std::max(L, 1e-12);

  Mat x = (B0.rows() == n && B0.cols() == K) ? B0 : Mat::Zero(n, K);
  for (Index z = 0; z < n; ++z)
    if (a(z) == 0.0) x.row(z).setZero();
  Mat y = x;
  double Fx = total(x);
  Mat best = x;
  double Fbest = Fx;
  double t = 1.0;
  const double step_tol = 1e-3 * std::sqrt(tol);
  bool restarted = false;
  int it = 0;
  for (; it < max_iters; ++it) {
    const Mat g = f.gradient(y);
    const double fy = f.value(y);
    Mat xn;
    for (int bt = 0; bt < 60; ++bt) {
      xn = group_prox_step(y, g, 1.0 / L, kn, p, nu);
      const Mat d = xn - y;
      const double bound = fy + a_inner(g, d, a) + 0.5 * L * a_inner(d, d, a);
      if (f.value(xn) <= bound + 1e-14 * std::abs(fy)) break;
      L *= 2.0;
    }
    const double Fn = total(xn);
    if (Fn > Fx) {
      // Adaptive restart from the last accepted iterate. A step that fails
      // right after a restart means F is flat to rounding.
      if (restarted) {
        res.converged = true;
        break;
      }
      restarted = true;
      y = x;
      t = 1.0;
      continue;
    }
    restarted = false;
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double dx = std::sqrt(a_inner(xn - x, xn - x, a));
    const double xnorm = std::sqrt(a_inner(xn, xn, a));
    y = xn + ((t - 1.0) / tn) * (xn - x);
    x = xn;
    Fx = Fn;
    t = tn;
    if (Fx < Fbest) Fbest = Fx, best = x;
    if (dx <= step_tol * xnorm || (dx == 0.0 && xnorm == 0.0)) {
      res.converged = true;
      break;
    }
  }
  res.B = best;
  res.objective = Fbest / scale;
  res.iterations = it;
  return res;
}

Vec refine_theta(const Mat& Y, const Mat& B, const Vec& theta, const Dictionary& dict, const DiscreteMeasure& nu,
                 int max_iters) {
  const Index K = theta.size(), T = Y.cols();
  if (K == 0) return theta;
  const Vec& a = nu.weights();
  const DomainInterval& dom = dict.domain();

  auto fidelity = [&](const Vec& th) {
    return 0.5 * weighted_sq(residual(Y, B, feature_matrix(dict, th)), nu);
  };

  Vec th = theta;
  double h = fidelity(th);
  double mu = 1e-3;
  const Mat BaB = B.transpose() * a.asDiagonal() * B;
  for (int it = 0; it < max_iters; ++it) {
    Mat U(K, T), dU(K, T);
    for (Index k = 0; k < K; ++k) {
      Vec u, du;
      feature_and_derivative(dict, th(k), u, du);
      U.row(k) = u.transpose();
      dU.row(k) = du.transpose();
    }
    const Mat R = Y - B * U;
    const Mat M = a.asDiagonal() * R * dU.transpose();  // n x K
    const Vec grad = -(B.array() * M.array()).colwise().sum().transpose();
    if (grad.cwiseAbs().maxCoeff() == 0.0) break;
    const Mat H = BaB.cwiseProduct(dU * dU.transpose());
    const double hmax = std::max(H.diagonal().maxCoeff(), 1e-300);

    bool accepted = false;
    Vec cand;
    double hc = h;
    for (int tries = 0; tries < 40; ++tries) {
      Mat A = H;
      A.diagonal() += mu * (H.diagonal().array() + 1e-12 * hmax).matrix();
      const Vec delta = A.ldlt().solve(-grad);
      cand = th + delta;
      for (Index k = 0; k < K; ++k) cand(k) = dom.clamp(cand(k));
      hc = fidelity(cand);
      if (hc < h) {
        accepted = true;
        break;
      }
      mu *= 4.0;
    }
    if (!accepted) break;
    const double moved = (cand - th).cwiseAbs().maxCoeff();
    const double gain = h - hc;
    th = cand;
    h = hc;
    mu = std::max(mu / 3.0, 1e-12);
    if (moved <= 1e-15 * (dom.hi - dom.lo) || gain <= 1e-16 * h) break;
  }
  return th;
}

namespace {

struct State {
  Mat B;
  Vec theta;
  double F = 0.0;
};

Mat features(const Dictionary& dict, const Vec& theta, Index T) {
  return theta.size() ? feature_matrix(dict, theta) : Mat(0, T);
}

void prune(State& st, const DiscreteMeasure& nu) {
  std::vector<Index> keep;
  for (Index k = 0; k < st.B.cols(); ++k)
    if (lp_norm(st.B.col(k), nu, kInf) > 0.0) keep.push_back(k);
  if (static_cast<Index>(keep.size()) == st.B.cols()) return;
  Mat B(st.B.rows(), static_cast<Index>(keep.size()));
  Vec th(static_cast<Index>(keep.size()));
  for (size_t i = 0; i < keep.size(); ++i) {
    B.col(static_cast<Index>(i)) = st.B.col(keep[i]);
    th(static_cast<Index>(i)) = st.theta(keep[i]);
  }
  st.B = std::move(B);
  st.theta = std::move(th);
}

}  // namespace

SolveResult solve(const Mat& Y, const KernelModel& model, const DiscreteMeasure& nu, const SolverConfig& config,
                  const GridTable* table) {
  config.validate();
  const Dictionary& dict = model.dictionary();
  const Index n = Y.rows(), T = Y.cols();
  if (n != nu.size() || T != dict.size()) throw std::invalid_argument("solve: data shape does not match dictionary/measure");
  const double q = conjugate_exponent(config.p);
  const double kn = config.kappa * nu.mass();
  const double h = config.insertion_grid_step;

  GridTable own;
  if (!table || table->order != 0) {
    own = make_grid_table(model, dict, h, 0);
    table = &own;
  }

  auto F_of = [&](const State& s) {
    return objective_features(Y, s.B, features(dict, s.theta, T), nu, config.kappa, config.p);
  };
  auto resolve_B = [&](State& s) {
    const Mat Phi = features(dict, s.theta, T);
    auto sub = solve_subproblem(Y, Phi, nu, config.kappa, config.p, s.B, config.max_inner_iters, config.tol_obj);
    s.B = sub.B;
    s.F = objective_features(Y, s.B, Phi, nu, config.kappa, config.p);
  };

  State st{Mat(n, 0), Vec(0), 0.0};
  st.F = F_of(st);

  SolveResult out{MixtureParams(Mat(n, 0), Vec(0), config.K_max), {}};
  SolveTrace& trace = out.trace;
  SupResult ds = dual_sup(Y, dict, nu, q, *table);
  trace.entries.push_back({0, st.F, "init", ds.value});

  int stalls = 0;
  for (int it = 1; it <= config.max_outer_iters; ++it) {
    if (ds.value <= kn * (1.0 + config.tol_dual)) {
      trace.converged = true;
      break;
    }
    const State prev = st;
    std::string event;
    bool near_existing = false;
    for (Index k = 0; k < st.theta.size(); ++k)
      if (model.dist(st.theta(k), ds.theta) < 0.25 * h) near_existing = true;
    if (near_existing) {
      event = "resolve";
    } else if (st.theta.size() >= config.K_max) {
      trace.message = "capacity reached";
      break;
    } else {
      st.theta.conservativeResize(st.theta.size() + 1);
      st.theta(st.theta.size() - 1) = ds.theta;
      st.B.conservativeResize(n, st.B.cols() + 1);
      st.B.col(st.B.cols() - 1).setZero();
      event = "insert";
    }
    resolve_B(st);

    if (config.refine) {
      for (int round = 0; round < 20; ++round) {
        const Vec th = refine_theta(Y, st.B, st.theta, dict, nu, 30);
        const double moved = th.size() ? (th - st.theta).cwiseAbs().maxCoeff() : 0.0;
        State trial{st.B, th, 0.0};
        resolve_B(trial);
        if (!(trial.F <= st.F)) break;
        st = std::move(trial);
        if (moved <= 1e-13 * (dict.domain().hi - dict.domain().lo)) break;
      }
      event += "+refine";
    }

    const Index before = st.B.cols();
    prune(st, nu);
    if (st.B.cols() < before) event += "+prune";

    // Merge atoms that collapsed onto each other.
    for (bool merged = true; merged;) {
      merged = false;
      for (Index k = 0; k < st.theta.size() && !merged; ++k)
        for (Index l = k + 1; l < st.theta.size() && !merged; ++l) {
          if (model.dist(st.theta(k), st.theta(l)) >= 0.25 * h) continue;
          State m = st;
          const double wk = st.B.col(k).norm(), wl = st.B.col(l).norm();
          m.theta(k) = (wk * st.theta(k) + wl * st.theta(l)) / std::max(wk + wl, 1e-300);
          m.B.col(k) += m.B.col(l);
          m.B.col(l).setZero();
          prune(m, nu);
          resolve_B(m);
          prune(m, nu);
          if (m.F <= st.F) {
            st = std::move(m);
            merged = true;
            event += "+merge";
          }
        }
    }

    st.F = F_of(st);
    if (!(st.F <= prev.F)) {
      st = prev;
      trace.message = "no descent";
      break;
    }
    const Mat R = residual(Y, st.B, features(dict, st.theta, T));
    ds = dual_sup(R, dict, nu, q, *table);
    trace.entries.push_back({it, st.F, event, ds.value});

    if (prev.F - st.F <= config.tol_obj * std::max(1.0, std::abs(st.F))) {
      if (++stalls >= 2) {
        trace.message = "stalled";
        break;
      }
    } else {
      stalls = 0;
    }
  }
  if (!trace.converged && ds.value <= kn * (1.0 + config.tol_dual)) trace.converged = true;
  trace.final_dual_sup = ds.value;
  trace.warning = !trace.converged;
  if (trace.warning && trace.message.empty()) trace.message = "max_outer_iters reached";
  out.params = MixtureParams(st.B, st.theta, config.K_max);
  return out;
}

}  // namespace offgrid
