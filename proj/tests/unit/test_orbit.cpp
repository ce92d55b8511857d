#include "aflow/models.hpp"
#include "aflow/orbit.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace aflow;

namespace {
constexpr double kPi = std::numbers::pi;

Section lemma1_section(bool reversed = false) {
  Section s;
  s.normal = Eigen::Vector3d(0, reversed ? -1 : 1, 0);
  s.accept = [](const Vec& x) { return x[0] > 0.0; };
  return s;
}
}  // namespace

TEST_CASE("integrate: suspension matches the map") {
  const SmoothSystem s = suspension_flow(anosov_system(1));
  const OrbitRecord r = integrate(s, State{0, Eigen::Vector3d(0.3, 0.7, 0.0)}, 1.0);
  const State e = r.final_state();
  CHECK(torus_distance({e.x[0], e.x[1]}, anosov_map({0.3, 0.7}, 1).image) < 1e-8);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].tag == "seam");
  CHECK(r.events[0].time == doctest::Approx(1.0));
}

TEST_CASE("integrate: the local model cycle returns after 2 pi") {
  const SmoothSystem l = lemma1_system();
  IntegrateOptions io;
  io.record = false;
  const State e = integrate(l, State{0, Eigen::Vector3d(1.0, 0.0, 0.0)}, 2 * kPi, io).final_state();
  CHECK((e.x - Eigen::Vector3d(1.0, 0.0, 0.0)).norm() < 1e-8);
}

TEST_CASE("integrate: gradient flow reaches the south pole") {
  const SmoothSystem g = gradient_sphere_flow(3);
  IntegrateOptions io;
  io.record = false;
  const State e = integrate(g, State{0, Eigen::Vector4d(0.5, 0.5, 0.5, 0.5)}, 50.0, io).final_state();
  CHECK((e.x - Eigen::Vector4d(0, 0, 0, -1)).norm() < 1e-6);
}

TEST_CASE("integrate: escape and invalid input") {
  const SmoothSystem l = lemma1_system(true);
  IntegrateOptions io;
  io.record = false;
  CHECK_THROWS_AS(integrate(l, State{0, Eigen::Vector3d(0.0, 0.0, 1.0)}, 1e4, io), EscapeError);
  CHECK_THROWS_AS(integrate(l, State{0, Eigen::Vector2d(0.0, 0.0)}, 1.0, io), InvalidInput);
  CHECK_THROWS_AS(integrate(l, State{0, Eigen::Vector3d(0.0, 0.0, 0.0)}, -1.0, io), InvalidInput);
}

TEST_CASE("tangent integration: growth rates") {
  const SmoothSystem s = suspension_flow(anosov_system(1));
  TangentOptions to;
  to.integrate.record = false;
  const auto [rec, hist] = integrate_with_tangent(s, State{0, Eigen::Vector3d(0.1, 0.2, 0.0)}, 100.0, to);
  const double t = rec.final_time();
  const double l = std::log((3 + std::sqrt(5.0)) / 2);
  Vec g = hist.log_growth / t;
  std::sort(g.data(), g.data() + g.size());
  CHECK(g[2] == doctest::Approx(l).epsilon(0.01));
  CHECK(std::abs(g[1]) < 0.01);

  const SmoothSystem l1 = lemma1_system();
  const auto [r2, h2] = integrate_with_tangent(l1, State{0, Eigen::Vector3d(1.0, 0.0, 0.0)}, 20.0, to);
  Vec g2 = h2.log_growth / r2.final_time();
  std::sort(g2.data(), g2.data() + g2.size());
  CHECK(g2[0] == doctest::Approx(-1.0).epsilon(0.01));
  CHECK(g2[1] == doctest::Approx(-1.0).epsilon(0.01));
  CHECK(std::abs(g2[2]) < 0.01);
}

TEST_CASE("tangent integration: overflow when renormalizing too rarely") {
  const SmoothSystem s = suspension_flow(anosov_system(1));
  TangentOptions to;
  to.integrate.record = false;
  to.renorm_interval = 100000;
  CHECK_THROWS_AS(integrate_with_tangent(s, State{0, Eigen::Vector3d(0.1, 0.2, 0.0)}, 2000.0, to),
                  NumericalOverflowError);
}

TEST_CASE("flow derivative matches finite differences of the flow") {
  const SmoothSystem l = lemma1_system();
  const State x0{0, Eigen::Vector3d(0.6, 0.2, 0.3)};
  const FlowDerivative d = flow_with_derivative(l, x0, 1.0);
  IntegrateOptions io;
  io.record = false;
  const double h = 1e-6;
  for (int k = 0; k < 3; ++k) {
    State p = x0, m = x0;
    p.x[k] += h;
    m.x[k] -= h;
    const Vec fd = (integrate(l, p, 1.0, io).final_state().x - integrate(l, m, 1.0, io).final_state().x) / (2 * h);
    CHECK((fd - d.derivative.col(k)).norm() < 1e-6);
  }
}

TEST_CASE("equilibria") {
  const auto ax = find_equilibria(lemma1_system(), {State{0, Eigen::Vector3d(0.01, 0.01, 0.01)}});
  REQUIRE(ax.equilibria.size() == 1);
  CHECK(ax.equilibria[0].stability == "saddle");
  CHECK(ax.equilibria[0].point.x.norm() < 1e-10);
  const auto none = find_equilibria(suspension_flow(anosov_system(1)), {State{0, Eigen::Vector3d(0.1, 0.1, 0.1)}});
  CHECK(none.equilibria.empty());
}

TEST_CASE("periodic orbits: local model cycle") {
  const PeriodicOrbitResult o = find_periodic_orbit(lemma1_system(), lemma1_section(), State{0, Eigen::Vector3d(1.1, 0.0, 0.1)});
  CHECK(o.period == doctest::Approx(2 * kPi).epsilon(1e-7));
  CHECK(o.stability == "attracting");
  for (const auto& m : o.floquet_multipliers) CHECK(std::abs(m - std::exp(-2 * kPi)) < 1e-4 * std::exp(-2 * kPi));

  const PeriodicOrbitResult r =
      find_periodic_orbit(lemma1_system(true), lemma1_section(true), State{0, Eigen::Vector3d(1.0001, 0.0, 0.0001)});
  CHECK(r.stability == "repelling");
  for (const auto& m : r.floquet_multipliers) CHECK(std::abs(m - std::exp(2 * kPi)) < 1e-4 * std::exp(2 * kPi));
}

TEST_CASE("periodic orbits: plykin sources are repelling") {
  const DaConfig cfg = plykin_default_config();
  const SmoothSystem s = suspension_flow(plykin_system(cfg));
  Section sec;
  sec.normal = Eigen::Vector3d(0, 0, 1);
  sec.event_tag = "seam";
  PeriodicOrbitOptions po;
  po.max_return_time = 2.0;
  const PeriodicOrbitResult o = find_periodic_orbit(s, sec, State{0, Eigen::Vector3d(0.5, 0.0, 0.0)}, po);
  CHECK(o.stability == "repelling");
  const Eigen::Vector2cd ev = da_map({0.5, 0.0}, cfg).jacobian.eigenvalues();
  double prod = 1.0;
  for (const auto& m : o.floquet_multipliers) {
    CHECK(std::abs(m) > 1.0);
    prod *= std::abs(m);
  }
  CHECK(prod == doctest::Approx(std::abs(ev[0] * ev[1])).epsilon(1e-6));
}

TEST_CASE("periodic orbits: no return") {
  Section s;
  s.normal = Eigen::Vector3d(0, 0, 1);
  s.offset = 5.0;
  PeriodicOrbitOptions po;
  po.max_return_time = 3.0;
  CHECK_THROWS_AS(find_periodic_orbit(lemma1_system(), s, State{0, Eigen::Vector3d(1.0, 0.0, 0.0)}, po), NoReturnError);
}
