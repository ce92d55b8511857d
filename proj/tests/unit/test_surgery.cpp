#include "aflow/analysis.hpp"
#include "aflow/models.hpp"
#include "aflow/surgery.hpp"

#include "doctest.h"

using namespace aflow;

namespace {
std::vector<PeriodicOrbitResult> plykin_sources(const SmoothSystem& s) {
  return suspension_orbits(s, {{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.5}, {0.5, 0.5}});
}
}  // namespace

TEST_CASE("sphere surface sampling") {
  const TrapSurface s = sphere_surface("lemma1", Eigen::Vector3d::Zero(), 0.5, 2000);
  CHECK(s.points.size() == 2000);
  for (std::size_t i = 0; i < s.points.size(); i += 97) {
    CHECK(s.points[i].norm() == doctest::Approx(0.5));
    CHECK(s.normals[i].dot(s.points[i]) == doctest::Approx(0.5));
  }
  CHECK(s.inside(Eigen::Vector3d(0.1, 0.0, 0.0)));
  CHECK_FALSE(s.inside(Eigen::Vector3d(0.6, 0.0, 0.0)));
}

TEST_CASE("excision of a Plykin source") {
  const SmoothSystem s = suspension_flow(plykin_system(plykin_default_config()));
  const auto orbits = plykin_sources(s);
  REQUIRE(orbits.size() == 4);
  const ExcisionResult ex = excise_repelling_orbit(s, orbits[1]);
  CHECK(ex.margin > 0.0);
  const TrapReport tr = trap_check(ex.system, ex.boundary);
  CHECK(tr.passed);
  CHECK(tr.samples >= 10000);
  CHECK(tr.min_margin > 0.0);

  // A point just outside the tube moves away from the orbit.
  const Vec c = orbits[1].point.x;
  const State near{0, Eigen::Vector3d(c[0] + 1.2 * ex.tube_radius, c[1], 0.0)};
  IntegrateOptions io;
  io.record = false;
  const State later = integrate(s, near, 2.0, io).final_state();
  CHECK(torus_distance({later.x[0], later.x[1]}, {c[0], c[1]}) > 1.2 * ex.tube_radius);

  ExcisionOptions big;
  big.tube_radius = 0.2;
  CHECK_THROWS_AS(excise_repelling_orbit(s, orbits[1], big), ExcisionError);
}

TEST_CASE("excision rejects attracting orbits") {
  const SmoothSystem s = suspension_flow(plykin_system(plykin_default_config()));
  auto orbits = plykin_sources(s);
  orbits[0].stability = "attracting";
  CHECK_THROWS(excise_repelling_orbit(s, orbits[0]));
}

TEST_CASE("surgery compatibility") {
  const Assembly a = theorem1_assembly();
  for (const GlueDescriptor& d : a.descriptors) {
    const CompatibilityReport r = surgery_compatibility(d);
    INFO(d.name << ": " << r.reason);
    CHECK(r.compatible);
    CHECK(r.outer_margin > 0.0);
    CHECK(r.inner_margin > 0.0);
  }

  // Topology mismatch.
  GlueDescriptor mixed = a.descriptors.back();
  mixed.inner.surface.topology = mixed.outer.surface.topology == Topology::Torus ? Topology::Sphere : Topology::Torus;
  CHECK_FALSE(surgery_compatibility(mixed).compatible);

  // A repelling tube boundary: the field exits, so the declared inward crossing fails.
  GlueDescriptor out = a.descriptors.back();
  out.outer.surface = out.outer.surface.flipped();
  CHECK_FALSE(surgery_compatibility(out).compatible);
  out.outer.crossing = Crossing::Outward;
  CHECK_FALSE(surgery_compatibility(out).compatible);
  CHECK_THROWS_AS(glue_flows(*out.outer.system, *out.inner.system, out), GluingError);
}

TEST_CASE("blend gluing keeps the field nonzero in the collar") {
  const Assembly a = theorem1_assembly();
  bool saw_blend = false;
  for (std::size_t i = 0; i < a.descriptors.size(); ++i)
    if (a.descriptors[i].mode == GlueMode::Blend) {
      saw_blend = true;
      CHECK(a.glue_results[i].collar_samples >= 10000);
      CHECK(a.glue_results[i].collar_min_norm > 0.0);
    }
  CHECK(saw_blend);
}

TEST_CASE("assembly inventory") {
  const Assembly a = theorem1_assembly();
  CHECK(a.remaining_sources.size() == 3);
  CHECK(a.system.chart(a.chart_s3).id == "s3");
  const auto eq = find_equilibria(a.system, {State{a.chart_s3, Eigen::Vector4d(0.01, 0, 0, 1).normalized()},
                                             State{a.chart_south, Eigen::Vector3d(0.01, 0.01, 0.01)}});
  REQUIRE(eq.equilibria.size() == 2);
  CHECK(eq.equilibria[0].stability == "source");
  CHECK(eq.equilibria[1].stability == "saddle");
  const TrapReport tr = trap_check(a.system, a.trap);
  CHECK(tr.passed);
}
