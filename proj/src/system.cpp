#include "aflow/system.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace aflow {

int SmoothSystem::chart_index(const std::string& id) const {
  for (std::size_t i = 0; i < charts.size(); ++i)
    if (charts[i].id == id) return static_cast<int>(i);
  throw InvalidInput("system '" + name + "' has no chart '" + id + "'");
}

ChartedPoint SmoothSystem::to_charted(const State& s) const { return {chart(s.chart).id, s.x}; }

State SmoothSystem::from_charted(const ChartedPoint& p) const {
  const int c = chart_index(p.chart_id);
  if (p.local.size() != chart(c).coord_dim)
    throw InvalidInput("point has " + std::to_string(p.local.size()) + " coordinates, chart '" + p.chart_id +
                       "' expects " + std::to_string(chart(c).coord_dim));
  return {c, reduce(c, p.local)};
}

Vec SmoothSystem::reduce(int c, Vec x) const {
  const Chart& ch = chart(c);
  for (int i = 0; i < ch.periodic; ++i) x[i] = reduce_unit(x[i]);
  if (ch.sphere_dim > 0) {
    auto head = x.head(ch.sphere_dim);
    const double n = head.norm();
    if (n > 0.0) head /= n;
  }
  return x;
}

Vec SmoothSystem::difference(int c, const Vec& a, const Vec& b) const {
  Vec d = b - a;
  for (int i = 0; i < chart(c).periodic; ++i) d[i] -= std::floor(d[i] + 0.5);
  return d;
}

double SmoothSystem::distance(const State& a, const State& b) const {
  if (a.chart != b.chart) return std::numeric_limits<double>::infinity();
  return difference(a.chart, a.x, b.x).norm();
}

double SmoothSystem::quotient_distance(const State& a, const State& b) const {
  double d = distance(a, b);
  for (const Symmetry& g : symmetries)
    if (g.chart == b.chart && a.chart == b.chart) d = std::min(d, difference(a.chart, a.x, reduce(b.chart, g.point(b.x))).norm());
  return d;
}

Mat SmoothSystem::tangent_basis(int c, const Vec& x) const {
  const Chart& ch = chart(c);
  Mat basis = Mat::Zero(ch.coord_dim, ch.manifold_dim);
  if (ch.sphere_dim == 0) {
    basis.topLeftCorner(ch.manifold_dim, ch.manifold_dim).setIdentity();
    return basis;
  }
  const int k = ch.sphere_dim;
  Eigen::HouseholderQR<Mat> qr(Mat(x.head(k)));
  const Mat q = qr.householderQ() * Mat::Identity(k, k);
  basis.topLeftCorner(k, k - 1) = q.rightCols(k - 1);
  const int rest = ch.coord_dim - k;
  if (rest > 0) basis.bottomRightCorner(rest, rest).setIdentity();
  return basis;
}

Vec SmoothSystem::project_tangent(int c, const Vec& x, const Vec& v) const {
  const Chart& ch = chart(c);
  if (ch.sphere_dim == 0) return v;
  Vec out = v;
  const auto u = x.head(ch.sphere_dim);
  out.head(ch.sphere_dim) -= u.dot(v.head(ch.sphere_dim)) * u;
  return out;
}

SmoothSystem time_reversed(const SmoothSystem& sys) {
  if (sys.reverser) return sys.reverser();
  if (sys.kind == SystemKind::Map) {
    if (!sys.inverse) throw InvalidInput("time_reversed: map '" + sys.name + "' has no inverse");
    SmoothSystem r = sys;
    r.name = sys.name + "_reversed";
    r.evaluate = sys.inverse;
    r.inverse = sys.evaluate;
    auto fwd_jac = sys.jacobian;
    auto inv = sys.inverse;
    r.jacobian = [fwd_jac, inv](int c, const Vec& x) { return Mat(fwd_jac(c, inv(c, x)).inverse()); };
    r.reverser = nullptr;
    return r;
  }
  if (!sys.transitions.empty())
    throw InvalidInput("time_reversed: hybrid system '" + sys.name + "' has no reverser");
  SmoothSystem r = sys;
  r.name = sys.name + "_reversed";
  auto f = sys.evaluate;
  auto j = sys.jacobian;
  r.evaluate = [f](int c, const Vec& x) { return Vec(-f(c, x)); };
  r.jacobian = [j](int c, const Vec& x) { return Mat(-j(c, x)); };
  r.reverser = [sys] { return sys; };
  return r;
}

SmoothSystem merge_systems(const SmoothSystem& a, const SmoothSystem& b, std::string name) {
  if (a.kind != b.kind) throw InvalidInput("merge_systems: kinds differ");
  SmoothSystem m;
  m.name = std::move(name);
  m.kind = a.kind;
  const int offset = static_cast<int>(a.charts.size());
  m.charts = a.charts;
  m.charts.insert(m.charts.end(), b.charts.begin(), b.charts.end());
  auto fa = a.evaluate, fb = b.evaluate;
  auto ja = a.jacobian, jb = b.jacobian;
  m.evaluate = [=](int c, const Vec& x) { return c < offset ? fa(c, x) : fb(c - offset, x); };
  m.jacobian = [=](int c, const Vec& x) { return c < offset ? ja(c, x) : jb(c - offset, x); };
  m.transitions = a.transitions;
  for (Transition t : b.transitions) {
    t.from += offset;
    auto inner = t.apply;
    t.apply = [inner, offset](const Vec& x) {
      State s = inner(x);
      s.chart += offset;
      return s;
    };
    m.transitions.push_back(std::move(t));
  }
  m.symmetries = a.symmetries;
  for (Symmetry s : b.symmetries) {
    s.chart += offset;
    m.symmetries.push_back(std::move(s));
  }
  return m;
}

DerivativeCheck check_derivative(const SmoothSystem& sys, const std::vector<State>& at, double h, double tol) {
  DerivativeCheck out;
  for (const State& s : at) {
    const int n = sys.chart(s.chart).coord_dim;
    const Mat j = sys.jacobian(s.chart, s.x);
    Mat fd(j.rows(), n);
    for (int k = 0; k < n; ++k) {
      Vec xp = s.x, xm = s.x;
      xp[k] += h;
      xm[k] -= h;
      Vec fp = sys.evaluate(s.chart, xp), fm = sys.evaluate(s.chart, xm);
      Vec diff = fp - fm;
      if (sys.kind == SystemKind::Map) diff = sys.difference(s.chart, fm, fp);
      fd.col(k) = diff / (2.0 * h);
    }
    const double err = (fd - j).norm() / std::max(j.norm(), 1.0);
    out.max_relative_error = std::max(out.max_relative_error, err);
    ++out.samples;
  }
  out.passed = out.samples > 0 && out.max_relative_error <= tol;
  return out;
}

}  // namespace aflow
