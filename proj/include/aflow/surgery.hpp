#pragma once

#include "aflow/models.hpp"
#include "aflow/orbit.hpp"
#include "aflow/system.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace aflow {

enum class Topology { Sphere, Torus };
enum class Crossing { Inward, Outward, Mixed };

std::string to_string(Topology t);
std::string to_string(Crossing c);

/// Sampled closed surface in one chart of a system. `level` is negative on
/// the region the surface bounds and positive outside; normals point out of
/// that region.
struct TrapSurface {
  std::string name;
  Topology topology = Topology::Sphere;
  std::string chart_id;
  std::vector<Vec> points;
  std::vector<Vec> normals;
  std::function<double(const Vec&)> level;
  std::function<Vec(const Vec&)> level_gradient;
  /// Largest nearest-neighbour distance between samples.
  double max_gap = 0.0;

  bool inside(const Vec& x) const { return level(x) <= 0.0; }
  TrapSurface flipped() const;
};

/// Boundary sphere of the ball |x - center| <= radius in a flat chart.
TrapSurface sphere_surface(const std::string& chart_id, const Vec& center, double radius, int samples);

/// Boundary of the tube of radius delta about the circle rho = 1, z = 0 of
/// the local model chart, sampled on an n_phi x n_psi grid.
TrapSurface cycle_tube_surface(const std::string& chart_id, double delta, int n_phi, int n_psi);

class ExcisionError : public std::runtime_error {
 public:
  ExcisionError(const std::string& what, Vec sample) : std::runtime_error(what), sample(std::move(sample)) {}
  Vec sample;
};

struct ExcisionOptions {
  /// 0 picks the largest radius 0.05 / 2^k that validates.
  double tube_radius = 0.0;
  int n_angle = 100;
  int n_fiber = 100;
};

/// A suspension with tubes about repelling periodic orbits removed. The tube
/// about the orbit through (c, 0) is {|p - c| e^{kappa s} < r}; it shrinks
/// along the fiber, so the suspension flow leaves it.
struct ExcisionResult {
  SmoothSystem system;
  TrapSurface boundary;
  std::vector<Eigen::Vector2d> centers;
  double tube_radius = 0.0;
  double kappa = 0.0;
  double margin = 0.0;
};

/// Excises the given repelling orbits (suspensions of map sources) from a
/// suspension system. Throws ExcisionError with the failing sample when the
/// tube is not crossed transversally or the seam fails to map the tube
/// boundary outside itself.
ExcisionResult excise_repelling_orbits(const SmoothSystem& susp, const std::vector<PeriodicOrbitResult>& orbits,
                                       const ExcisionOptions& opts = {});
ExcisionResult excise_repelling_orbit(const SmoothSystem& susp, const PeriodicOrbitResult& orbit,
                                      const ExcisionOptions& opts = {});

/// One side of a gluing: a boundary of `system` and the declared crossing
/// direction relative to the region the surface bounds.
struct BoundarySpec {
  TrapSurface surface;
  Crossing crossing = Crossing::Inward;
  std::shared_ptr<const SmoothSystem> system;
};

enum class GlueMode {
  /// Both systems share one chart; fields are blended over a collar.
  Blend,
  /// Orbits entering the outer boundary jump to the inner system's chart.
  Transfer,
};

struct GlueDescriptor {
  std::string name;
  BoundarySpec outer;
  BoundarySpec inner;
  double collar_width = 0.1;
  GlueMode mode = GlueMode::Blend;
  /// Transfer mode: outer chart coordinates -> inner system state.
  std::function<State(const Vec&)> transfer;
};

struct CompatibilityReport {
  bool compatible = false;
  std::string reason;
  double outer_margin = 0.0;
  double inner_margin = 0.0;
  Crossing outer_measured = Crossing::Mixed;
  Crossing inner_measured = Crossing::Mixed;
};

/// Measured crossing of a surface by a system, with margin -max(F . n).
struct CrossingMeasure {
  Crossing crossing = Crossing::Mixed;
  double margin = 0.0;
  std::size_t worst = 0;
};

CrossingMeasure measure_crossing(const SmoothSystem& sys, const TrapSurface& s);

CompatibilityReport surgery_compatibility(const GlueDescriptor& desc);

class GluingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlueResult {
  SmoothSystem system;
  CompatibilityReport compatibility;
  /// Smallest field norm over the collar samples.
  double collar_min_norm = 0.0;
  int collar_samples = 0;
};

GlueResult glue_flows(const SmoothSystem& outer, const SmoothSystem& inner, const GlueDescriptor& desc);

/// The north-south flow in the stereographic chart from the north pole:
/// y' = -y on chart "south".
SmoothSystem stereo_gradient_system();

struct AssemblyConfig {
  /// Orbits move from the ambient chart to the stereographic chart at this radius.
  double transfer_radius = 4.0;
  /// local cycle model on |y| <= ball_radius, gradient flow beyond ball_radius + collar.
  double ball_radius = 2.9;
  double collar_width = 0.1;
  /// Radius of the trapping tube about the local model cycle.
  double cycle_tube = 0.3;
  DaConfig plykin = plykin_default_config();
  ExcisionOptions excision;
  int surface_samples = 10000;
};

struct Assembly {
  SmoothSystem system;
  std::vector<GlueDescriptor> descriptors;
  std::vector<GlueResult> glue_results;
  ExcisionResult excision;
  /// Boundary of P in the assembled system.
  TrapSurface trap;
  /// Sources of the Plykin map left inside P.
  std::vector<Eigen::Vector2d> remaining_sources;
  AssemblyConfig config;
  int chart_s3 = 0, chart_south = 1, chart_plykin = 2;

  /// Embedding of S^3 in R^4 into the assembly's charts.
  State from_ambient(const Vec& u) const;
};

Assembly theorem1_assembly(const AssemblyConfig& cfg = {});

/// Repelling periodic orbits of a suspension through the given base points
/// (fixed points of the map), located by Newton on the seam section.
std::vector<PeriodicOrbitResult> suspension_orbits(const SmoothSystem& susp, const std::vector<Eigen::Vector2d>& seeds,
                                                   int chart = 0);

}  // namespace aflow
