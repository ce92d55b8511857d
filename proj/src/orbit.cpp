#include "aflow/orbit.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace aflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite(const Vec& x) { return x.allFinite(); }

struct Fired {
  const Transition* transition = nullptr;
};

// One RK4 step of length h from x; propagates V (may be null) with the
// variational equation.
void rk4(const SmoothSystem& sys, int c, const Vec& x, const Mat* v, double h, Vec& xn, Mat* vn) {
  const Chart& ch = sys.chart(c);
  if (ch.constant_field) {
    xn = x + h * sys.evaluate(c, x);
    if (v) *vn = *v;
    return;
  }
  const Vec k1 = sys.evaluate(c, x);
  const Vec x2 = x + 0.5 * h * k1;
  const Vec k2 = sys.evaluate(c, x2);
  const Vec x3 = x + 0.5 * h * k2;
  const Vec k3 = sys.evaluate(c, x3);
  const Vec x4 = x + h * k3;
  const Vec k4 = sys.evaluate(c, x4);
  xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (v) {
    const Mat l1 = sys.jacobian(c, x) * *v;
    const Mat l2 = sys.jacobian(c, x2) * (*v + 0.5 * h * l1);
    const Mat l3 = sys.jacobian(c, x3) * (*v + 0.5 * h * l2);
    const Mat l4 = sys.jacobian(c, x4) * (*v + h * l3);
    *vn = *v + (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
  }
}

void fire(const SmoothSystem& sys, const Transition& t, State& s, const Vec& x, Mat* v) {
  const Vec pre = sys.reduce(s.chart, x);
  State next = t.apply(pre);
  next.x = sys.reduce(next.chart, next.x);
  if (v) {
    if (t.jacobian) {
      *v = t.jacobian(pre) * *v;
    } else {
      const Eigen::Index k = v->cols();
      const Mat basis = sys.tangent_basis(next.chart, next.x);
      if (k > basis.cols()) throw InvalidInput("transition '" + t.tag + "' cannot carry a full coordinate frame");
      *v = basis.leftCols(k);
    }
  }
  s = std::move(next);
}

// Fires guard-only transitions whose guard is already non-negative. Returns
// the transition fired, or null.
const Transition* settle(const SmoothSystem& sys, State& s, Mat* v) {
  const Transition* last = nullptr;
  // A landing chart's guard may be active too; a few hops suffice.
  for (int hop = 0; hop < 8; ++hop) {
    const Transition* hit = nullptr;
    for (const Transition& t : sys.transitions)
      if (t.from == s.chart && !t.time_to_event && t.guard(s.x) >= 0.0) {
        hit = &t;
        break;
      }
    if (!hit) break;
    fire(sys, *hit, s, s.x, v);
    last = hit;
  }
  return last;
}

// Advances s (and V) by at most h_max. Returns the time used; sets fired when
// a transition was applied at the end of the step.
double advance(const SmoothSystem& sys, State& s, Mat* v, double h_max, double step, const Transition** fired) {
  *fired = nullptr;
  if (sys.kind == SystemKind::Map) {
    const Vec xn = sys.evaluate(s.chart, s.x);
    if (v) *v = sys.jacobian(s.chart, s.x) * *v;
    s.x = sys.reduce(s.chart, xn);
    return 1.0;
  }
  const Chart& ch = sys.chart(s.chart);
  double h = ch.constant_field ? ch.max_step : (ch.step_override > 0.0 ? ch.step_override : step);
  h = std::min(h, h_max);

  const Transition* exact = nullptr;
  double te_min = kInf;
  for (const Transition& t : sys.transitions) {
    if (t.from != s.chart || !t.time_to_event) continue;
    const double te = t.time_to_event(s.x);
    if (te < te_min) {
      te_min = te;
      exact = &t;
    }
  }
  if (exact && te_min <= h) {
    h = te_min;
  } else {
    exact = nullptr;
  }

  Vec xn;
  Mat vn;
  rk4(sys, s.chart, s.x, v, h, xn, v ? &vn : nullptr);
  if (exact) {
    fire(sys, *exact, s, xn, v ? &vn : nullptr);
    if (v) *v = std::move(vn);
    *fired = exact;
    return h;
  }

  const Transition* guard_hit = nullptr;
  for (const Transition& t : sys.transitions)
    if (t.from == s.chart && !t.time_to_event && t.guard(xn) >= 0.0) {
      guard_hit = &t;
      break;
    }
  if (guard_hit) {
    double lo = 0.0, hi = h;
    Vec probe;
    for (int it = 0; it < 60 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      rk4(sys, s.chart, s.x, nullptr, mid, probe, nullptr);
      (guard_hit->guard(probe) >= 0.0 ? hi : lo) = mid;
    }
    rk4(sys, s.chart, s.x, v, hi, xn, v ? &vn : nullptr);
    fire(sys, *guard_hit, s, xn, v ? &vn : nullptr);
    if (v) *v = std::move(vn);
    *fired = guard_hit;
    return hi;
  }
  s.x = sys.reduce(s.chart, xn);
  if (v) *v = std::move(vn);
  return h;
}

void check_escape(const SmoothSystem& sys, const State& s, const State& last, double t) {
  if (!finite(s.x)) throw EscapeError("orbit became non-finite at t=" + std::to_string(t), last, t);
  const Chart& ch = sys.chart(s.chart);
  if (ch.domain && !ch.domain(s.x))
    throw EscapeError("orbit left chart '" + ch.id + "' at t=" + std::to_string(t), last, t);
}

double end_tolerance(double T) { return 1e-12 * std::max(1.0, std::abs(T)); }

void validate_start(const SmoothSystem& sys, const State& x0, double T) {
  if (x0.chart < 0 || x0.chart >= static_cast<int>(sys.charts.size()))
    throw InvalidInput("initial state names chart " + std::to_string(x0.chart) + " which does not exist");
  if (x0.x.size() != sys.chart(x0.chart).coord_dim)
    throw InvalidInput("initial state has " + std::to_string(x0.x.size()) + " coordinates, chart '" +
                       sys.chart(x0.chart).id + "' expects " + std::to_string(sys.chart(x0.chart).coord_dim));
  if (!finite(x0.x)) throw InvalidInput("initial state is not finite");
  if (!(T >= 0.0) || !std::isfinite(T)) throw InvalidInput("integration time must be finite and >= 0");
}

}  // namespace

OrbitRecord integrate(const SmoothSystem& sys, const State& x0, double T, const IntegrateOptions& opts) {
  validate_start(sys, x0, T);
  if (!(opts.step > 0.0)) throw InvalidInput("step must be positive");
  OrbitRecord rec;
  State s{x0.chart, sys.reduce(x0.chart, x0.x)};
  double t = 0.0;
  if (sys.kind == SystemKind::VectorField) {
    if (const Transition* tr = settle(sys, s, nullptr)) rec.events.push_back({0.0, tr->tag, x0.chart, s.chart});
  }
  rec.times.push_back(0.0);
  rec.states.push_back(s);
  long count = 0;
  const int every = std::max(1, opts.record_every);
  while (T - t > end_tolerance(T)) {
    const State last = s;
    const Transition* fired = nullptr;
    const double used = advance(sys, s, nullptr, T - t, opts.step, &fired);
    t += used;
    check_escape(sys, s, last, t);
    if (fired) rec.events.push_back({t, fired->tag, last.chart, s.chart});
    ++count;
    if (opts.record && (fired || count % every == 0)) {
      rec.times.push_back(t);
      rec.states.push_back(s);
    }
    if (opts.observer && !opts.observer(t, s)) break;
  }
  if (rec.times.back() != t) {
    rec.times.push_back(t);
    rec.states.push_back(s);
  }
  return rec;
}

std::pair<OrbitRecord, TangentFrameHistory> integrate_with_tangent(const SmoothSystem& sys, const State& x0,
                                                                   double T, const TangentOptions& opts) {
  validate_start(sys, x0, T);
  if (!(opts.renorm_interval > 0.0)) throw InvalidInput("renorm_interval must be positive");
  OrbitRecord rec;
  TangentFrameHistory hist;
  State s{x0.chart, sys.reduce(x0.chart, x0.x)};
  const Chart& c0 = sys.chart(s.chart);
  const int k = opts.frame_size < 0 ? c0.manifold_dim : opts.frame_size;
  Mat v;
  if (opts.initial_frame.size() > 0) {
    if (opts.initial_frame.rows() != c0.coord_dim)
      throw InvalidInput("initial frame must have one row per chart coordinate");
    v = opts.initial_frame;
  } else {
    v = sys.tangent_basis(s.chart, s.x).leftCols(k);
  }
  hist.log_growth = Vec::Zero(v.cols());
  if (sys.kind == SystemKind::VectorField) {
    if (const Transition* tr = settle(sys, s, &v)) rec.events.push_back({0.0, tr->tag, x0.chart, s.chart});
  }
  rec.times.push_back(0.0);
  rec.states.push_back(s);

  const IntegrateOptions& io = opts.integrate;
  const int every = std::max(1, io.record_every);
  double t = 0.0, since = 0.0;
  long count = 0;
  auto renormalize = [&] {
    Mat w = v;
    for (Eigen::Index j = 0; j < w.cols(); ++j) w.col(j) = sys.project_tangent(s.chart, s.x, w.col(j));
    if (!w.allFinite()) throw NumericalOverflowError("tangent frame overflowed at t=" + std::to_string(t));
    Eigen::HouseholderQR<Mat> qr(w);
    const Mat r = qr.matrixQR().topRows(w.cols()).triangularView<Eigen::Upper>();
    Mat q = qr.householderQ() * Mat::Identity(w.rows(), w.cols());
    Vec logs(w.cols());
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const double d = r(j, j);
      if (!std::isfinite(d) || d == 0.0)
        throw NumericalOverflowError("tangent frame degenerated at t=" + std::to_string(t));
      if (d < 0.0) q.col(j) = -q.col(j);
      logs[j] = std::log(std::abs(d));
    }
    v = q;
    hist.times.push_back(t);
    hist.window_logs.push_back(logs);
    hist.log_growth += logs;
    if (opts.store_frames) hist.frames.push_back(v);
    if (opts.on_renorm) opts.on_renorm(t, s, v);
    since = 0.0;
  };

  while (T - t > end_tolerance(T)) {
    const State last = s;
    const Transition* fired = nullptr;
    const double budget = std::min(T - t, opts.renorm_interval - since);
    const double used = advance(sys, s, &v, std::max(budget, 0.0), io.step, &fired);
    t += used;
    since += used;
    check_escape(sys, s, last, t);
    if (fired) rec.events.push_back({t, fired->tag, last.chart, s.chart});
    ++count;
    if (io.record && (fired || count % every == 0)) {
      rec.times.push_back(t);
      rec.states.push_back(s);
    }
    if (since >= opts.renorm_interval - end_tolerance(opts.renorm_interval)) renormalize();
  }
  if (since > 0.0) renormalize();
  if (rec.times.back() != t) {
    rec.times.push_back(t);
    rec.states.push_back(s);
  }
  return {std::move(rec), std::move(hist)};
}

FlowDerivative flow_with_derivative(const SmoothSystem& sys, const State& x0, double T, double step) {
  validate_start(sys, x0, T);
  State s{x0.chart, sys.reduce(x0.chart, x0.x)};
  const int n = sys.chart(s.chart).coord_dim;
  Mat v = Mat::Identity(n, n);
  double t = 0.0;
  while (T - t > end_tolerance(T)) {
    const State last = s;
    const Transition* fired = nullptr;
    t += advance(sys, s, &v, T - t, step, &fired);
    check_escape(sys, s, last, t);
  }
  return {s, v};
}

// ---------------------------------------------------------------------------
// Equilibria

namespace {

std::string classify_field(const std::vector<std::complex<double>>& ev) {
  bool pos = false, neg = false;
  for (const auto& e : ev) {
    if (e.real() > 0.0) pos = true;
    if (e.real() < 0.0) neg = true;
  }
  if (pos && !neg) return "source";
  if (neg && !pos) return "sink";
  return "saddle";
}

}  // namespace

EquilibriumSearch find_equilibria(const SmoothSystem& sys, const std::vector<State>& seeds, double tol) {
  if (sys.kind != SystemKind::VectorField) throw InvalidInput("find_equilibria: expected a vector field");
  EquilibriumSearch out;
  for (const State& seed : seeds) {
    validate_start(sys, seed, 0.0);
    State s{seed.chart, sys.reduce(seed.chart, seed.x)};
    bool ok = false;
    double res = kInf;
    for (int it = 0; it < 100; ++it) {
      const Mat b = sys.tangent_basis(s.chart, s.x);
      const Vec f = b.transpose() * sys.field(s);
      res = f.norm();
      if (res < tol) {
        ok = true;
        break;
      }
      const Mat j = b.transpose() * sys.derivative(s) * b;
      Eigen::ColPivHouseholderQR<Mat> qr(j);
      if (qr.rank() < j.cols()) break;
      const Vec delta = qr.solve(-f);
      if (!delta.allFinite()) break;
      double lambda = 1.0;
      bool improved = false;
      for (int ls = 0; ls < 30; ++ls) {
        State trial{s.chart, sys.reduce(s.chart, s.x + lambda * (b * delta))};
        const Vec ft = sys.tangent_basis(trial.chart, trial.x).transpose() * sys.field(trial);
        if (ft.norm() < res || ft.norm() < tol) {
          s = trial;
          improved = true;
          break;
        }
        lambda *= 0.5;
      }
      if (!improved) break;
    }
    if (!ok) {
      out.unconverged_seeds.push_back(seed);
      continue;
    }
    bool dup = false;
    for (const Equilibrium& e : out.equilibria)
      if (sys.quotient_distance(e.point, s) < 10.0 * std::max(tol, 1e-10)) dup = true;
    if (dup) continue;
    const Mat b = sys.tangent_basis(s.chart, s.x);
    const Mat j = b.transpose() * sys.derivative(s) * b;
    Eigen::EigenSolver<Mat> es(j, false);
    Equilibrium e;
    e.point = s;
    e.residual = res;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) e.eigenvalues.push_back(es.eigenvalues()[i]);
    std::sort(e.eigenvalues.begin(), e.eigenvalues.end(), [](auto a, auto b) {
      return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
    });
    for (const auto& ev : e.eigenvalues)
      if (std::abs(ev.real()) < 1e-8) e.hyperbolic = false;
    e.stability = classify_field(e.eigenvalues);
    out.equilibria.push_back(std::move(e));
  }
  std::sort(out.equilibria.begin(), out.equilibria.end(), [](const Equilibrium& a, const Equilibrium& b) {
    if (a.point.chart != b.point.chart) return a.point.chart < b.point.chart;
    return std::lexicographical_compare(a.point.x.begin(), a.point.x.end(), b.point.x.begin(), b.point.x.end());
  });
  return out;
}

// ---------------------------------------------------------------------------
// Periodic orbits

ReturnMap poincare_return(const SmoothSystem& sys, const Section& sec, const State& x0,
                          const PeriodicOrbitOptions& opts) {
  if (sys.kind != SystemKind::VectorField) throw InvalidInput("poincare_return: expected a vector field");
  validate_start(sys, x0, 0.0);
  if (sec.normal.size() != sys.chart(sec.chart).coord_dim)
    throw InvalidInput("section normal has the wrong dimension");
  State s{x0.chart, sys.reduce(x0.chart, x0.x)};
  const int n = sys.chart(s.chart).coord_dim;
  Mat v = Mat::Identity(n, n);
  double t = 0.0;
  int hits = 0;
  auto g = [&](const Vec& x) { return sec.normal.dot(x) - sec.offset; };
  while (t < opts.max_return_time) {
    const State last = s;
    const Mat vlast = v;
    const Transition* fired = nullptr;
    const double used = advance(sys, s, &v, opts.max_return_time - t, opts.step, &fired);
    t += used;
    check_escape(sys, s, last, t);
    bool hit = false;
    if (!sec.event_tag.empty()) {
      hit = fired && fired->tag == sec.event_tag && s.chart == sec.chart;
    } else if (!fired && s.chart == sec.chart && last.chart == sec.chart && g(last.x) < 0.0 && g(s.x) >= 0.0 &&
               (!sec.accept || sec.accept(s.x))) {
      // Locate the crossing inside the step.
      double lo = 0.0, hi = used;
      Vec probe;
      for (int it = 0; it < 60 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        rk4(sys, last.chart, last.x, nullptr, mid, probe, nullptr);
        (g(probe) >= 0.0 ? hi : lo) = mid;
      }
      Vec xn;
      Mat vn;
      rk4(sys, last.chart, last.x, &vlast, hi, xn, &vn);
      s.x = sys.reduce(s.chart, xn);
      v = vn;
      t = t - used + hi;
      hit = true;
    }
    if (hit && ++hits == opts.returns) {
      const Vec f = sys.field(s);
      const double nf = sec.normal.dot(f);
      Mat proj = Mat::Identity(n, n);
      if (std::abs(nf) > 1e-14) proj -= f * sec.normal.transpose() / nf;
      return {s, t, proj * v};
    }
  }
  throw NoReturnError("no return to the section within time " + std::to_string(opts.max_return_time));
}

PeriodicOrbitResult find_periodic_orbit(const SmoothSystem& sys, const Section& sec, const State& seed,
                                        const PeriodicOrbitOptions& opts) {
  if (sys.chart(sec.chart).sphere_dim > 0)
    throw InvalidInput("find_periodic_orbit: sections must lie in a flat chart");
  const int n = sys.chart(sec.chart).coord_dim;
  const Vec nrm = sec.normal / sec.normal.norm();
  // Orthonormal basis of the section's tangent hyperplane.
  const Mat nrm_col = nrm;
  Eigen::HouseholderQR<Mat> qr(nrm_col);
  const Mat full = qr.householderQ() * Mat::Identity(n, n);
  const Mat basis = full.rightCols(n - 1);
  const double off = sec.offset / sec.normal.norm();
  auto project = [&](Vec x) {
    x -= (nrm.dot(x) - off) * nrm;
    return x;
  };

  State x{sec.chart, sys.reduce(sec.chart, project(seed.x))};
  PeriodicOrbitResult res;
  ReturnMap rm;
  for (int it = 0; it < opts.max_iterations; ++it) {
    rm = poincare_return(sys, sec, x, opts);
    const Vec r = sys.difference(sec.chart, x.x, rm.point.x);
    res.closure_error = r.norm();
    res.iterations = it + 1;
    if (res.closure_error < opts.tol) break;
    const Mat m = basis.transpose() * (rm.derivative - Mat::Identity(n, n)) * basis;
    const Vec delta = m.colPivHouseholderQr().solve(-(basis.transpose() * r));
    if (!delta.allFinite()) break;
    x.x = sys.reduce(sec.chart, project(x.x + basis * delta));
  }
  if (!(res.closure_error < opts.tol)) {
    // Newton may stall at the floating-point floor; accept a closure within 100 tol.
    if (!(res.closure_error < 100.0 * opts.tol))
      throw NoReturnError("periodic orbit search did not converge (closure error " +
                          std::to_string(res.closure_error) + ")");
  }
  res.point = x;
  res.period = rm.time;
  const Mat dp = basis.transpose() * rm.derivative * basis;
  Eigen::EigenSolver<Mat> es(dp, false);
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) res.floquet_multipliers.push_back(es.eigenvalues()[i]);
  std::sort(res.floquet_multipliers.begin(), res.floquet_multipliers.end(),
            [](auto a, auto b) { return std::abs(a) > std::abs(b); });
  bool in = false, out = false;
  for (const auto& m : res.floquet_multipliers) {
    if (std::abs(m) < 1.0) in = true;
    if (std::abs(m) > 1.0) out = true;
  }
  res.stability = in && !out ? "attracting" : (out && !in ? "repelling" : "saddle");
  return res;
}

}  // namespace aflow
