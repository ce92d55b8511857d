#include "aflow/analysis.hpp"
#include "aflow/models.hpp"
#include "aflow/surgery.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace aflow;

TEST_CASE("derived seeds are stable and distinct") {
  CHECK(derive_seed(1, "census", 0) == derive_seed(1, "census", 0));
  CHECK(derive_seed(1, "census", 0) != derive_seed(1, "census", 1));
  CHECK(derive_seed(1, "census", 0) != derive_seed(2, "census", 0));
  CHECK(derive_seed(1, "census", 0) != derive_seed(1, "lyapunov", 0));
}

TEST_CASE("lyapunov spectra") {
  const SpectrumEstimate a = lyapunov_spectrum(suspension_flow(anosov_system(1)), State{0, Eigen::Vector3d(0.12, 0.56, 0.0)}, 1e4);
  const double l = std::log((3 + std::sqrt(5.0)) / 2);
  CHECK(a.exponents[0] == doctest::Approx(l).epsilon(0.01));
  CHECK(std::abs(a.exponents[1]) < 0.01);
  CHECK(a.exponents[2] == doctest::Approx(-l).epsilon(0.01));

  LyapunovOptions lo;
  lo.transient = 100;
  const SpectrumEstimate d = lyapunov_spectrum(suspension_flow(da_system(DaConfig{})), State{0, Eigen::Vector3d(0.3, 0.6, 0.0)}, 2000, lo);
  CHECK(d.exponents[0] > 0.5);
  CHECK(std::abs(d.exponents[1]) < 0.02);
  CHECK(d.exponents[2] < 0.0);
  CHECK(d.exponents[0] + d.exponents[2] < 0.0);

  const SpectrumEstimate g = lyapunov_spectrum(gradient_sphere_flow(3), State{0, Eigen::Vector4d(0.01, 0, 0.01, -1).normalized()}, 50);
  for (double e : g.exponents) CHECK(e == doctest::Approx(-1.0).epsilon(0.02));
}

TEST_CASE("box counting") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat cloud(2, 100000);
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) cloud.col(i) = Eigen::Vector2d(u(rng), u(rng));
  const auto scales = geometric_scales(0.25, 1.0 / 64, 6);
  const DimensionEstimate d = box_counting(cloud, scales);
  CHECK(d.value == doctest::Approx(2.0).epsilon(0.025));
  CHECK_FALSE(d.degenerate);

  Mat point = Mat::Constant(2, 100, 0.3);
  const DimensionEstimate z = box_counting(point, scales);
  CHECK(z.value == 0.0);
  CHECK(z.degenerate);

  CHECK_THROWS_AS(box_counting(cloud, {0.5, 0.25}), InvalidInput);
}

TEST_CASE("DA attractor section has dimension between one and two") {
  const SmoothSystem m = da_system(DaConfig{});
  Vec x = Eigen::Vector2d(0.3, 0.6);
  for (int i = 0; i < 1000; ++i) x = m.reduce(0, m.evaluate(0, x));
  Mat cloud(2, 1000000);
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) cloud.col(i) = x = m.reduce(0, m.evaluate(0, x));
  std::vector<double> scales;
  for (int k : {4, 6, 9, 13, 19, 28, 42, 64, 90, 128}) scales.push_back(1.0 / k);
  const DimensionEstimate d = box_counting(cloud, scales);
  CHECK(d.value > 1.0);
  CHECK(d.value < 2.0);
}

TEST_CASE("trap check on a sink cap and its flip") {
  const SmoothSystem l = lemma1_system();
  const TrapSurface tube = cycle_tube_surface("lemma1", 0.3, 100, 100);
  const TrapReport r = trap_check(l, tube);
  CHECK(r.passed);
  CHECK(r.min_margin > 0.0);
  const TrapReport f = trap_check(l, tube.flipped());
  CHECK_FALSE(f.passed);
  CHECK(f.failures == f.samples);

  const SmoothSystem g = stereo_gradient_system();
  const TrapSurface ball = sphere_surface("south", Eigen::Vector3d::Zero(), 1.0, 5000);
  CHECK(trap_check(g, ball).passed);
}

TEST_CASE("forward invariance of the DA trap") {
  const SmoothSystem s = suspension_flow(da_system(DaConfig{}));
  const auto orbits = suspension_orbits(s, {{0.0, 0.0}});
  const ExcisionResult ex = excise_repelling_orbits(s, orbits);
  const auto inside = sample_region(ex.system, ex.boundary, 200, 3);
  REQUIRE(inside.size() == 200);
  for (const State& p : inside) CHECK(ex.boundary.level(p.x) <= 0.0);
  const InvarianceReport r = forward_invariance_check(ex.system, ex.boundary, inside, 200.0, {});
  CHECK(r.exits == 0);
  CHECK(r.passed);

  // Started just outside on the inflow side: enters and stays.
  const Vec c = orbits[0].point.x;
  const State outside{0, Eigen::Vector3d(c[0] + 0.5 * ex.tube_radius, c[1], 0.5)};
  CHECK(ex.boundary.level(outside.x) > 0.0);
  IntegrateOptions io;
  io.record = false;
  const InvarianceReport in = forward_invariance_check(ex.system, ex.boundary, {integrate(ex.system, outside, 50.0, io).final_state()}, 200.0, {});
  CHECK(in.exits == 0);

  const SmoothSystem rev = time_reversed(ex.system);
  const InvarianceReport rr = forward_invariance_check(rev, ex.boundary, std::vector<State>(inside.begin(), inside.begin() + 50), 200.0, {});
  CHECK(rr.exits > 0);
  CHECK_FALSE(rr.passed);
}

TEST_CASE("orientability") {
  OrientabilityOptions oo;
  const auto a = orientability_test(suspension_flow(anosov_system(1)), State{0, Eigen::Vector3d(0.12, 0.56, 0.0)}, 5000, oo);
  CHECK(a.verdict == Orientability::Orientable);
  CHECK(a.reversal_count == 0);
  oo.transient = 1000;
  const auto p = orientability_test(suspension_flow(plykin_system(plykin_default_config())),
                                    State{0, Eigen::Vector3d(0.3, 0.6, 0.0)}, 5000, oo);
  CHECK(p.verdict == Orientability::NonOrientable);
  CHECK(p.reversal_count >= 1);
  OrientabilityOptions shortrun;
  const auto i = orientability_test(suspension_flow(anosov_system(1)), State{0, Eigen::Vector3d(0.12, 0.56, 0.0)}, 10, shortrun);
  CHECK(i.verdict == Orientability::Inconclusive);
}

TEST_CASE("census: gradient flow all to the sink") {
  const SmoothSystem g = gradient_sphere_flow(3);
  CensusTargets t;
  t.equilibria = find_equilibria(g, {State{0, Eigen::Vector4d(0.01, 0, 0, 1).normalized()},
                                     State{0, Eigen::Vector4d(0.01, 0, 0, -1).normalized()}})
                     .equilibria;
  CensusOptions co;
  co.seed = 4;
  co.step = 0.01;
  const CensusReport r = basin_census(g, t, 100, 40.0, co);
  long sink = 0;
  for (const auto& it : r.items)
    if (it.stability == "sink") sink = it.count;
  CHECK(sink + r.unclassified == 100);
  CHECK(sink >= 99);
}

TEST_CASE("census: plykin suspension ends in the trap") {
  const SmoothSystem s = suspension_flow(plykin_system(plykin_default_config()));
  const auto orbits = suspension_orbits(s, {{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.5}, {0.5, 0.5}});
  const ExcisionResult ex = excise_repelling_orbits(s, orbits);
  CensusTargets t;
  t.traps = {{"P", ex.boundary, true}};
  for (std::size_t i = 0; i < orbits.size(); ++i) t.orbits.push_back({"source_" + std::to_string(i), orbits[i]});
  const CensusReport r = basin_census(s, t, 200, 100.0, {});
  CHECK(r.items[0].count == 200);
}

TEST_CASE("splitting rates on the Anosov suspension") {
  const SplittingReport r = splitting_rate_check(suspension_flow(anosov_system(1)), State{0, Eigen::Vector3d(0.1, 0.2, 0.0)}, 200, 5, {});
  CHECK(r.passed);
  CHECK(r.has_expansion);
  CHECK(r.has_contraction);
  CHECK(r.neutral_index == 1);
}

TEST_CASE("splitting rates: DA expansion and a cycle without expansion") {
  LyapunovOptions lo;
  lo.transient = 1000;
  const SplittingReport d = splitting_rate_check(suspension_flow(da_system(DaConfig{})), State{0, Eigen::Vector3d(0.3, 0.6, 0.0)}, 500, 5, lo);
  CHECK(d.expansion_rate > 0.3);
  CHECK(d.min_window_expansion > 0.0);
  const SplittingReport a = splitting_rate_check(suspension_flow(anosov_system(1)), State{0, Eigen::Vector3d(0.1, 0.2, 0.0)}, 200, 5, {});
  CHECK(a.expansion_rate == doctest::Approx(std::log((3 + std::sqrt(5.0)) / 2)).epsilon(0.05));
  const SplittingReport l = splitting_rate_check(lemma1_system(), State{0, Eigen::Vector3d(1.0, 0.0, 0.0)}, 20, 5, {});
  CHECK_FALSE(l.has_expansion);
  CHECK_FALSE(l.passed);
}

namespace {
// Map exponents from QR-renormalized Jacobian products along an orbit.
Eigen::Vector2d map_exponents(const SmoothSystem& m, Vec x, int n) {
  Eigen::Matrix2d q = Eigen::Matrix2d::Identity();
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  for (int i = 0; i < 1000; ++i) x = m.reduce(0, m.evaluate(0, x));
  for (int i = 0; i < n; ++i) {
    const Eigen::Matrix2d j = m.jacobian(0, x);
    Eigen::HouseholderQR<Eigen::Matrix2d> qr(j * q);
    const Eigen::Matrix2d r = qr.matrixQR().triangularView<Eigen::Upper>();
    q = qr.householderQ();
    acc += Eigen::Vector2d(std::log(std::abs(r(0, 0))), std::log(std::abs(r(1, 1))));
    x = m.reduce(0, m.evaluate(0, x));
  }
  acc /= n;
  if (acc[0] < acc[1]) std::swap(acc[0], acc[1]);
  return acc;
}
}  // namespace

TEST_CASE("suspension spectra are the map spectra plus a zero") {
  for (const SmoothSystem& map : {da_system(DaConfig{}), plykin_system(plykin_default_config())}) {
    const Eigen::Vector2d me = map_exponents(map, Eigen::Vector2d(0.3, 0.6), 5000);
    LyapunovOptions lo;
    lo.transient = 1000;
    const SpectrumEstimate s = lyapunov_spectrum(suspension_flow(map), State{0, Eigen::Vector3d(0.3, 0.6, 0.0)}, 5000, lo);
    INFO(map.name);
    CHECK(s.exponents[0] == doctest::Approx(me[0]).epsilon(0.02));
    CHECK(std::abs(s.exponents[1]) < 0.02);
    CHECK(s.exponents[2] == doctest::Approx(me[1]).epsilon(0.02));
  }
}

TEST_CASE("box counting of a curve") {
  Mat cloud(2, 100000);
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
    const double t = static_cast<double>(i) / cloud.cols();
    cloud.col(i) = Eigen::Vector2d(t, 0.5 + 0.3 * std::sin(6.0 * t));
  }
  std::vector<double> scales;
  for (int k : {4, 6, 9, 13, 19, 28, 42, 64}) scales.push_back(1.0 / k);
  CHECK(box_counting(cloud, scales).value == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("census classification does not decrease with T") {
  const SmoothSystem s = suspension_flow(da_system(DaConfig{}));
  const auto orbits = suspension_orbits(s, {{0.0, 0.0}});
  const ExcisionResult ex = excise_repelling_orbits(s, orbits);
  CensusTargets t;
  t.traps = {{"trap", ex.boundary, true}};
  t.orbits = {{"source", orbits[0]}};
  std::vector<State> starts;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Half the starts just outside the excised tube.
  for (int i = 0; i < 100; ++i) {
    const double a = 2 * M_PI * u(rng);
    const double r = ex.tube_radius * (0.5 + 0.5 * u(rng));
    starts.push_back(State{0, Eigen::Vector3d(reduce_unit(r * std::cos(a)), reduce_unit(r * std::sin(a)), 0.0)});
    starts.push_back(State{0, Eigen::Vector3d(u(rng), u(rng), u(rng))});
  }
  const CensusReport a = basin_census(s, t, starts, 100.0, {});
  const CensusReport b = basin_census(s, t, starts, 1000.0, {});
  CHECK(b.classified_fraction() >= a.classified_fraction());
  CHECK(b.items[0].count >= a.items[0].count);
}

TEST_CASE("anosov orientability has no reversals for any seed") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 3; ++i) {
    const auto v = orientability_test(suspension_flow(anosov_system(1)), State{0, Eigen::Vector3d(u(rng), u(rng), 0.0)}, 5000, {});
    CHECK(v.reversal_count == 0);
    CHECK(v.return_count >= 100);
  }
}
