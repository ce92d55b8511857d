#include "aflow/charts.hpp"

#include "doctest.h"

#include <cmath>
#include <limits>

using namespace aflow;

TEST_CASE("torus_reduce wraps into the unit square") {
  CHECK(torus_reduce(1.25, -0.5) == TorusPoint2{0.25, 0.5});
  CHECK(torus_reduce(0.0, 0.0) == TorusPoint2{0.0, 0.0});
  CHECK(torus_reduce(2.0, 3.0) == TorusPoint2{0.0, 0.0});
  CHECK(torus_reduce(-1e-20, 0.0).x < 1.0);
  CHECK_THROWS_AS(torus_reduce(std::numeric_limits<double>::quiet_NaN(), 0.0), InvalidInput);
  CHECK_THROWS_AS(torus_reduce(0.0, INFINITY), InvalidInput);
}

TEST_CASE("quotient_canonical identifies p with -p") {
  // 1 - (1 - a) need not round back to a, so the pair agrees to rounding.
  CHECK(torus_distance(quotient_canonical({0.3, 0.8}).rep, quotient_canonical(torus_negate({0.3, 0.8})).rep) < 1e-15);
  CHECK(torus_distance(quotient_canonical({0.3, 0.8}).rep, quotient_canonical({0.7, 0.2}).rep) < 1e-15);
  CHECK(quotient_canonical({0.5, 0.5}).rep == TorusPoint2{0.5, 0.5});
  CHECK(quotient_canonical({0.0, 0.0}).rep == TorusPoint2{0.0, 0.0});
  const auto q = quotient_canonical({0.1, 0.9});
  CHECK(quotient_canonical(q.rep) == q);
  CHECK(quotient_distance(quotient_canonical({0.3, 0.8}), quotient_canonical({0.7, 0.2})) == doctest::Approx(0.0));
}

TEST_CASE("stereographic charts of S^3 round trip") {
  const Atlas a = sphere3_atlas();
  const Vec equator = Eigen::Vector4d(0.6, 0.0, 0.8, 0.0);
  const ChartedPoint n = a.transition({"ambient", equator}, "north");
  const ChartedPoint s = a.transition(n, "south");
  const ChartedPoint back = a.transition(a.transition(s, "north"), "ambient");
  CHECK((back.local - equator).norm() < 1e-10);
  // Projection from the north pole of an equator point has unit norm.
  CHECK(n.local.norm() == doctest::Approx(1.0));
  const Vec y = Eigen::Vector3d(0.3, -1.2, 2.0);
  CHECK((stereo_from_north(inverse_stereo_from_north(y)) - y).norm() < 1e-12);
}

TEST_CASE("stereographic chart excludes its pole") {
  const Atlas a = sphere3_atlas();
  const Vec north = Eigen::Vector4d(0, 0, 0, 1);
  CHECK_THROWS_AS(a.transition({"ambient", north}, "north"), OutOfDomain);
}

TEST_CASE("mapping torus chart applies the map at the seam") {
  auto f = [](const TorusPoint2& p) { return torus_reduce(2 * p.x + p.y, p.x + p.y); };
  auto finv = [](const TorusPoint2& p) { return torus_reduce(p.x - p.y, -p.x + 2 * p.y); };
  const Atlas a = mapping_torus_atlas(f, finv);
  // Past the seam in the upper chart: (p, 1.001) names (f(p), 0.001).
  const ChartedPoint up{"fiber_upper", Eigen::Vector3d(0.3, 0.7, 1.001)};
  const ChartedPoint low = a.transition(up, "fiber_lower");
  const TorusPoint2 fp = f({0.3, 0.7});
  CHECK(low.local[0] == doctest::Approx(fp.x));
  CHECK(low.local[1] == doctest::Approx(fp.y));
  CHECK(low.local[2] == doctest::Approx(0.001));

  const MappingTorusPoint<TorusPoint2> p{{0.3, 0.7}, 0.999};
  const auto q = advance_fiber(p, 0.002, f);
  CHECK(q.base == fp);
  CHECK(q.s == doctest::Approx(0.001));
  CHECK_THROWS_AS(advance_fiber(p, -1.0, f), InvalidInput);
}

TEST_CASE("solid torus chart rejects points outside the tube") {
  const Atlas a = solid_torus_atlas(0.3);
  const ChartedPoint inside{"cylinder", Eigen::Vector3d(1.1, 0.5, 0.1)};
  const ChartedPoint t = a.transition(inside, "solid_torus");
  CHECK(a.transition(t, "cylinder").local.isApprox(inside.local, 1e-12));
  CHECK_THROWS_AS(a.transition({"cylinder", Eigen::Vector3d(2.0, 0.5, 0.0)}, "solid_torus"), OutOfDomain);
}

TEST_CASE("cylinder coordinates round trip") {
  const CylinderPoint c = make_cylinder(0.7, 7.0, -0.2);
  CHECK(c.phi == doctest::Approx(7.0 - 2 * M_PI));
  const CylinderPoint back = cartesian_to_cylinder(cylinder_to_cartesian(c));
  CHECK(back.rho == doctest::Approx(0.7));
  CHECK(back.phi == doctest::Approx(c.phi));
  CHECK(back.z == doctest::Approx(-0.2));
}
