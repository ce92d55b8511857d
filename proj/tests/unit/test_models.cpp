#include "aflow/models.hpp"
#include "aflow/orbit.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace aflow;

TEST_CASE("anosov map") {
  const MapValue z = anosov_map({0.0, 0.0}, 1);
  CHECK(z.image == TorusPoint2{0.0, 0.0});
  // A (1/2, 0) = (1, 1/2) = (0, 1/2) mod 1.
  const MapValue h = anosov_map({0.5, 0.0}, 1);
  CHECK(h.image.x == doctest::Approx(0.0));
  CHECK(h.image.y == doctest::Approx(0.5));
  CHECK(anosov_expansion() == doctest::Approx((3 + std::sqrt(5.0)) / 2));
  // A^2 = ((5,3),(3,2)).
  const Eigen::Matrix2d a2 = anosov_matrix(2);
  CHECK(a2(0, 0) == 5);
  CHECK(a2(0, 1) == 3);
  CHECK(a2(1, 1) == 2);
}

TEST_CASE("da map equals the linear map away from the perturbation") {
  const DaConfig cfg;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int tested = 0;
  while (tested < 10000) {
    const TorusPoint2 p{u(rng), u(rng)};
    if (torus_distance(p, {0.0, 0.0}) <= cfg.radius) continue;
    ++tested;
    const TorusPoint2 a = anosov_map(p, 1).image, d = da_map(p, cfg).image;
    REQUIRE(a == d);
  }
}

TEST_CASE("da map has a source at the center and saddles beside it") {
  const DaMap m{DaConfig{}};
  const Eigen::Matrix2d j = m.jacobian({0.0, 0.0});
  const Eigen::Vector2cd ev = j.eigenvalues();
  CHECK(std::abs(ev[0]) > 1.0);
  CHECK(std::abs(ev[1]) > 1.0);
  CHECK(m.stable_eigenvalue() + m.strength() * m.bump(0.0) == doctest::Approx(1.8));
  const double t = m.saddle_offset();
  CHECK(t > 0.0);
  CHECK(t < 1.0);
  CHECK(m.stable_eigenvalue() + m.strength() * m.bump(t) == doctest::Approx(1.0));
}

TEST_CASE("da config violations are rejected") {
  DaConfig bad;
  bad.radius = 0.6;
  CHECK_THROWS_AS(DaMap{bad}, ConfigError);
  DaConfig weak;
  weak.center_stable_eigenvalue = 0.9;
  CHECK_THROWS_AS(DaMap{weak}, ConfigError);
  DaConfig overlap;
  overlap.centers = {{0.0, 0.0}, {0.05, 0.0}};
  CHECK_THROWS_AS(DaMap{overlap}, ConfigError);
}

TEST_CASE("da map inverse") {
  const DaMap m{DaConfig{}};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const TorusPoint2 p{u(rng), u(rng)};
    CHECK(torus_distance(m.inverse(m.image(p)), p) < 1e-12);
  }
}

TEST_CASE("plykin map is equivariant and fixes the origin class") {
  const DaConfig cfg = plykin_default_config();
  CHECK_NOTHROW(validate_plykin_config(cfg));
  const auto q = plykin_map(quotient_canonical({0.0, 0.0}), cfg);
  CHECK(q.image.rep == TorusPoint2{0.0, 0.0});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const TorusPoint2 p{u(rng), u(rng)};
    const TorusPoint2 a = da_map(torus_negate(p), cfg).image, b = torus_negate(da_map(p, cfg).image);
    CHECK(torus_distance(a, b) < 1e-12);
  }
  DaConfig bad = cfg;
  bad.centers = {{0.0, 0.0}};
  CHECK_THROWS_AS(validate_plykin_config(bad), ConfigError);
  DaConfig off = cfg;
  off.centers[1] = {0.3, 0.0};
  CHECK_THROWS(validate_plykin_config(off));
}

TEST_CASE("suspension flow: fiber translation and seam") {
  const SmoothSystem anosov = anosov_system(1);
  const SmoothSystem s = suspension_flow(anosov);
  IntegrateOptions io;
  io.record = false;
  const State half = integrate(s, State{0, Eigen::Vector3d(0.3, 0.7, 0.0)}, 0.5, io).final_state();
  CHECK(half.x[0] == doctest::Approx(0.3));
  CHECK(half.x[2] == doctest::Approx(0.5));
  const State one = integrate(s, State{0, Eigen::Vector3d(0.3, 0.7, 0.0)}, 1.0, io).final_state();
  // A (0.3, 0.7) = (1.3, 1.0) = (0.3, 0).
  CHECK(torus_distance({one.x[0], one.x[1]}, {0.3, 0.0}) < 1e-8);
  CHECK(std::abs(one.x[2]) < 1e-12);

  const DaConfig cfg = plykin_default_config();
  const SmoothSystem ps = suspension_flow(plykin_system(cfg));
  const TorusPoint2 p0{0.31, 0.12};
  const State three = integrate(ps, State{0, Eigen::Vector3d(p0.x, p0.y, 0.0)}, 3.0, io).final_state();
  SphereQuotientPoint q = quotient_canonical(p0);
  for (int i = 0; i < 3; ++i) q = plykin_map(q, cfg).image;
  CHECK(quotient_distance(quotient_canonical({three.x[0], three.x[1]}), q) < 1e-8);
}

TEST_CASE("local model field") {
  const Eigen::Vector3d on = lemma1_field({1.0, 0.4, 0.0});
  CHECK(on[0] == 0.0);
  CHECK(on[1] == 1.0);
  CHECK(on[2] == 0.0);
  const Eigen::Vector3d axis = lemma1_field({0.0, 0.0, 0.0});
  CHECK(axis[0] == 0.0);
  CHECK(axis[2] == 0.0);
  const Eigen::Vector3d r = lemma1_field({0.5, 0.0, 0.2}, true);
  CHECK(r[0] == doctest::Approx(-0.25));
  CHECK(r[1] == doctest::Approx(-1.0));
  CHECK(r[2] == doctest::Approx(0.2));
}

TEST_CASE("gradient sphere flow") {
  const SmoothSystem g = gradient_sphere_flow(3);
  const Vec north = Eigen::Vector4d(0, 0, 0, 1), south = Eigen::Vector4d(0, 0, 0, -1);
  CHECK(g.evaluate(0, north).norm() == 0.0);
  CHECK(g.evaluate(0, south).norm() == 0.0);
  const Vec eq = Eigen::Vector4d(1, 0, 0, 0);
  const Vec f = g.evaluate(0, eq);
  CHECK(f.norm() > 0.0);
  CHECK(f[3] < 0.0);
  const auto es = find_equilibria(g, {State{0, Eigen::Vector4d(0.01, 0, 0, 1).normalized()},
                                      State{0, Eigen::Vector4d(0.01, 0, 0, -1).normalized()}});
  REQUIRE(es.equilibria.size() == 2);
  for (const auto& e : es.equilibria) {
    const double sign = e.point.x[3] > 0 ? 1.0 : -1.0;
    for (const auto& ev : e.eigenvalues) CHECK(ev.real() == doctest::Approx(sign));
  }
}

TEST_CASE("extension to the next sphere") {
  const SmoothSystem base = gradient_sphere_flow(3);
  const SmoothSystem ext = extend_to_next_sphere(base, 4, [](const Vec& u) { return State{0, u}; });
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    State e = base.sample(rng);
    Vec y(5);
    y << e.x, 0.0;
    REQUIRE(ext.evaluate(2, y)[4] == 0.0);
  }
  const auto poles = find_equilibria(ext, {State{0, Vec::Zero(4)}, State{1, Vec::Zero(4)}});
  REQUIRE(poles.equilibria.size() == 2);
  for (const auto& p : poles.equilibria)
    for (const auto& ev : p.eigenvalues) CHECK(ev.real() > 0.0);
}

TEST_CASE("quintic smoothstep") {
  CHECK(quintic_smoothstep(-1.0) == 0.0);
  CHECK(quintic_smoothstep(0.5) == doctest::Approx(0.5));
  CHECK(quintic_smoothstep(2.0) == 1.0);
  CHECK(quintic_smoothstep_derivative(0.0) == 0.0);
  CHECK(quintic_smoothstep_derivative(0.5) == doctest::Approx(30 * 0.0625));
}

TEST_CASE("registered systems pass the finite-difference derivative check") {
  std::mt19937_64 rng(6);
  for (const SmoothSystem& sys : {anosov_system(1), da_system(DaConfig{}), plykin_system(plykin_default_config()),
                                  lemma1_system(), gradient_sphere_flow(3), suspension_flow(da_system(DaConfig{}))}) {
    std::vector<State> at;
    for (int i = 0; i < 1000; ++i) at.push_back(sys.sample(rng));
    const DerivativeCheck c = check_derivative(sys, at);
    INFO(sys.name);
    CHECK(c.passed);
  }
}
