#include "aflow/charts.hpp"

#include <cmath>
#include <numbers>

namespace aflow {

double reduce_unit(double v) {
  double r = v - std::floor(v);
  // v slightly below an integer can round up to exactly 1.
  if (r >= 1.0) r = 0.0;
  return r;
}

TorusPoint2 torus_reduce(double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y)) throw InvalidInput("torus_reduce: non-finite coordinate");
  return {reduce_unit(x), reduce_unit(y)};
}

static double wrap_half(double d) {
  d -= std::floor(d + 0.5);
  return d;
}

Eigen::Vector2d torus_displacement(const TorusPoint2& a, const TorusPoint2& b) {
  return {wrap_half(b.x - a.x), wrap_half(b.y - a.y)};
}

double torus_distance(const TorusPoint2& a, const TorusPoint2& b) {
  return torus_displacement(a, b).norm();
}

TorusPoint2 torus_negate(const TorusPoint2& p) { return torus_reduce(-p.x, -p.y); }

SphereQuotientPoint quotient_canonical(const TorusPoint2& p) {
  const TorusPoint2 q = torus_reduce(p.x, p.y);
  const TorusPoint2 n = torus_negate(q);
  if (n.x < q.x || (n.x == q.x && n.y < q.y)) return {n};
  return {q};
}

double quotient_distance(const SphereQuotientPoint& a, const SphereQuotientPoint& b) {
  return std::min(torus_distance(a.rep, b.rep), torus_distance(a.rep, torus_negate(b.rep)));
}

CylinderPoint make_cylinder(double rho, double phi, double z) {
  if (!std::isfinite(rho) || !std::isfinite(phi) || !std::isfinite(z))
    throw InvalidInput("make_cylinder: non-finite coordinate");
  if (rho < 0.0) throw InvalidInput("make_cylinder: rho must be >= 0");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double p = std::fmod(phi, two_pi);
  if (p < 0.0) p += two_pi;
  if (p >= two_pi) p = 0.0;
  return {rho, p, z};
}

Eigen::Vector3d cylinder_to_cartesian(const CylinderPoint& c) {
  return {c.rho * std::cos(c.phi), c.rho * std::sin(c.phi), c.z};
}

CylinderPoint cartesian_to_cylinder(const Eigen::Vector3d& p) {
  return make_cylinder(std::hypot(p.x(), p.y()), std::atan2(p.y(), p.x()), p.z());
}

EmbeddedSpherePoint make_sphere_point(const Vec& v) {
  const double n = v.norm();
  if (!std::isfinite(n) || n == 0.0) throw InvalidInput("make_sphere_point: zero or non-finite vector");
  return {v / n};
}

void Atlas::add_chart(std::string id, int dim, Domain domain) {
  charts_[std::move(id)] = Entry{dim, std::move(domain)};
}

void Atlas::add_transition(const std::string& from, const std::string& to, TransitionFn fn) {
  transitions_[{from, to}] = std::move(fn);
}

int Atlas::dimension(const std::string& id) const {
  auto it = charts_.find(id);
  if (it == charts_.end()) throw InvalidInput("unknown chart '" + id + "'");
  return it->second.dim;
}

bool Atlas::contains(const ChartedPoint& p) const {
  auto it = charts_.find(p.chart_id);
  if (it == charts_.end()) return false;
  return p.local.size() == it->second.dim && it->second.domain(p.local);
}

ChartedPoint Atlas::transition(const ChartedPoint& p, const std::string& target) const {
  if (!has_chart(target)) throw InvalidInput("unknown chart '" + target + "'");
  if (!contains(p)) throw OutOfDomain("point is outside chart '" + p.chart_id + "' (target '" + target + "')");
  if (p.chart_id == target) return p;
  auto it = transitions_.find({p.chart_id, target});
  if (it == transitions_.end())
    throw OutOfDomain("no overlap between charts '" + p.chart_id + "' and '" + target + "'");
  ChartedPoint q{target, it->second(p.local)};
  if (!q.local.allFinite() || !contains(q))
    throw OutOfDomain("point is outside the overlap of charts '" + p.chart_id + "' and '" + target + "'");
  return q;
}

Vec stereo_from_north(const Vec& x) {
  const Eigen::Index n = x.size() - 1;
  const double denom = 1.0 - x[n];
  if (denom <= 0.0) throw OutOfDomain("stereographic projection undefined at the north pole");
  return x.head(n) / denom;
}

Vec inverse_stereo_from_north(const Vec& y) {
  const double r2 = y.squaredNorm();
  Vec x(y.size() + 1);
  x.head(y.size()) = 2.0 * y / (1.0 + r2);
  x[y.size()] = (r2 - 1.0) / (r2 + 1.0);
  return x;
}

Atlas sphere3_atlas() {
  Atlas atlas;
  const double pole_tol = 1e-12;
  atlas.add_chart("ambient", 4, [](const Vec& x) { return std::abs(x.norm() - 1.0) < 1e-10; });
  atlas.add_chart("north", 3, [](const Vec& y) { return y.allFinite(); });
  atlas.add_chart("south", 3, [](const Vec& y) { return y.allFinite(); });

  // "north" projects from the north pole, "south" from the south pole.
  auto from_south = [](const Vec& x) {
    const double denom = 1.0 + x[3];
    if (denom <= 0.0) throw OutOfDomain("stereographic projection undefined at the south pole");
    return Vec(x.head(3) / denom);
  };
  auto inv_from_south = [](const Vec& y) {
    const double r2 = y.squaredNorm();
    Vec x(4);
    x.head(3) = 2.0 * y / (1.0 + r2);
    x[3] = (1.0 - r2) / (1.0 + r2);
    return x;
  };
  atlas.add_transition("ambient", "north", [pole_tol](const Vec& x) {
    if (1.0 - x[3] < pole_tol) throw OutOfDomain("ambient point at the north pole is outside chart 'north'");
    return stereo_from_north(x);
  });
  atlas.add_transition("ambient", "south", [from_south, pole_tol](const Vec& x) {
    if (1.0 + x[3] < pole_tol) throw OutOfDomain("ambient point at the south pole is outside chart 'south'");
    return from_south(x);
  });
  atlas.add_transition("north", "ambient", [](const Vec& y) { return inverse_stereo_from_north(y); });
  atlas.add_transition("south", "ambient", inv_from_south);
  // On the overlap the two projections are related by inversion in the unit sphere.
  auto invert = [pole_tol](const Vec& y) {
    const double r2 = y.squaredNorm();
    if (r2 < pole_tol * pole_tol) throw OutOfDomain("pole is not in the overlap of charts 'north' and 'south'");
    return Vec(y / r2);
  };
  atlas.add_transition("north", "south", invert);
  atlas.add_transition("south", "north", invert);
  return atlas;
}

Atlas mapping_torus_atlas(std::function<TorusPoint2(const TorusPoint2&)> f,
                          std::function<TorusPoint2(const TorusPoint2&)> f_inv) {
  Atlas atlas;
  auto on_torus = [](const Vec& v) { return v[0] >= 0.0 && v[0] < 1.0 && v[1] >= 0.0 && v[1] < 1.0; };
  atlas.add_chart("fiber_lower", 3, [on_torus](const Vec& v) { return on_torus(v) && v[2] >= 0.0 && v[2] < 1.0; });
  atlas.add_chart("fiber_upper", 3, [on_torus](const Vec& v) { return on_torus(v) && v[2] >= 0.5 && v[2] < 1.5; });
  atlas.add_transition("fiber_lower", "fiber_upper", [f_inv](const Vec& v) {
    if (v[2] >= 0.5) return Vec(v);
    const TorusPoint2 q = f_inv({v[0], v[1]});
    return Vec(Eigen::Vector3d(q.x, q.y, v[2] + 1.0));
  });
  atlas.add_transition("fiber_upper", "fiber_lower", [f](const Vec& v) {
    if (v[2] < 1.0) return Vec(v);
    const TorusPoint2 q = f({v[0], v[1]});
    return Vec(Eigen::Vector3d(q.x, q.y, v[2] - 1.0));
  });
  return atlas;
}

Atlas solid_torus_atlas(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("solid_torus_atlas: delta must lie in (0,1)");
  Atlas atlas;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  atlas.add_chart("cylinder", 3, [](const Vec& c) { return c[0] >= 0.0 && c[1] >= 0.0 && c[1] < two_pi; });
  atlas.add_chart("solid_torus", 3, [delta](const Vec& t) {
    return t[0] >= 0.0 && t[0] < two_pi && t[2] >= 0.0 && t[2] < delta;
  });
  atlas.add_transition("cylinder", "solid_torus", [delta](const Vec& c) {
    const double dr = c[0] - 1.0;
    const double d = std::hypot(dr, c[2]);
    if (d >= delta) throw OutOfDomain("point is outside the overlap of charts 'cylinder' and 'solid_torus'");
    double psi = std::atan2(c[2], dr);
    if (psi < 0.0) psi += two_pi;
    return Vec(Eigen::Vector3d(c[1], psi, d));
  });
  atlas.add_transition("solid_torus", "cylinder", [](const Vec& t) {
    return Vec(Eigen::Vector3d(1.0 + t[2] * std::cos(t[1]), t[0], t[2] * std::sin(t[1])));
  });
  return atlas;
}

}  // namespace aflow
