#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class OutOfDomain : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Point of T^2 = R^2 / Z^2, both coordinates in [0,1).
struct TorusPoint2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const TorusPoint2&, const TorusPoint2&) = default;
};

/// Reduces a real number into [0,1).
double reduce_unit(double v);

/// Reduces (x, y) onto the torus. Throws InvalidInput for non-finite input.
TorusPoint2 torus_reduce(double x, double y);

/// Signed displacement b - a wrapped into [-1/2, 1/2) per coordinate.
Eigen::Vector2d torus_displacement(const TorusPoint2& a, const TorusPoint2& b);
double torus_distance(const TorusPoint2& a, const TorusPoint2& b);

/// S^2 modelled as T^2 / sigma with sigma(p) = -p. The representative is the
/// lexicographically smaller of p and -p after reduction.
struct SphereQuotientPoint {
  TorusPoint2 rep;

  friend bool operator==(const SphereQuotientPoint&, const SphereQuotientPoint&) = default;
};

TorusPoint2 torus_negate(const TorusPoint2& p);
SphereQuotientPoint quotient_canonical(const TorusPoint2& p);
/// Distance in the quotient metric: min over both lifts.
double quotient_distance(const SphereQuotientPoint& a, const SphereQuotientPoint& b);

/// Point of a mapping torus: base point plus fiber coordinate s in [0,1).
template <class Base>
struct MappingTorusPoint {
  Base base;
  double s = 0.0;
};

/// Moves a mapping-torus point by ds >= 0 along the fiber. Each time s passes
/// 1 the suspension map is applied to the base.
template <class Base, class MapFn>
MappingTorusPoint<Base> advance_fiber(MappingTorusPoint<Base> p, double ds, const MapFn& f) {
  if (!std::isfinite(ds) || ds < 0.0) throw InvalidInput("advance_fiber: ds must be finite and >= 0");
  double s = p.s + ds;
  while (s >= 1.0) {
    p.base = f(p.base);
    s -= 1.0;
  }
  p.s = s;
  return p;
}

/// Cylinder coordinates of the local periodic-orbit chart.
struct CylinderPoint {
  double rho = 0.0;
  double phi = 0.0;
  double z = 0.0;
};

CylinderPoint make_cylinder(double rho, double phi, double z);
Eigen::Vector3d cylinder_to_cartesian(const CylinderPoint& c);
CylinderPoint cartesian_to_cylinder(const Eigen::Vector3d& p);

/// Unit vector of R^{n+1}.
struct EmbeddedSpherePoint {
  Vec coords;
};

EmbeddedSpherePoint make_sphere_point(const Vec& v);

/// A point of some model manifold, expressed in a named chart.
struct ChartedPoint {
  std::string chart_id;
  Vec local;
};

struct TangentVector {
  ChartedPoint at;
  Vec components;
};

/// Registry of the handful of charts the constructions need, with transition
/// maps on overlaps.
class Atlas {
 public:
  using Domain = std::function<bool(const Vec&)>;
  using TransitionFn = std::function<Vec(const Vec&)>;

  void add_chart(std::string id, int dim, Domain domain);
  void add_transition(const std::string& from, const std::string& to, TransitionFn fn);

  bool has_chart(const std::string& id) const { return charts_.count(id) != 0; }
  int dimension(const std::string& id) const;
  bool contains(const ChartedPoint& p) const;

  /// Re-expresses p in the target chart. Throws OutOfDomain naming both charts
  /// when p is not in the overlap.
  ChartedPoint transition(const ChartedPoint& p, const std::string& target) const;

 private:
  struct Entry {
    int dim;
    Domain domain;
  };
  std::map<std::string, Entry> charts_;
  std::map<std::pair<std::string, std::string>, TransitionFn> transitions_;
};

/// S^3 with stereographic charts "north" (projection from the north pole),
/// "south" (from the south pole) and the ambient chart "ambient" in R^4.
Atlas sphere3_atlas();

/// Stereographic projection of S^n from the north pole e_{n+1} and back.
Vec stereo_from_north(const Vec& x);
Vec inverse_stereo_from_north(const Vec& y);

/// Mapping torus of a torus diffeomorphism f with inverse f_inv. Charts
/// "fiber_lower" with s in [0,1) and "fiber_upper" with s in [1/2, 3/2); in
/// the upper chart (p, s) with s >= 1 names the point (f(p), s - 1).
Atlas mapping_torus_atlas(std::function<TorusPoint2(const TorusPoint2&)> f,
                          std::function<TorusPoint2(const TorusPoint2&)> f_inv);

/// Charts around the local periodic orbit: "cylinder" (rho, phi, z) and
/// "solid_torus" (phi, psi, d) on the tube of radius delta about the circle
/// rho = 1, z = 0.
Atlas solid_torus_atlas(double delta);

}  // namespace aflow
