#pragma once

#include "aflow/charts.hpp"
#include "aflow/system.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace aflow {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a Plykin configuration does not commute with p -> -p.
class EquivarianceError : public ConfigError {
 public:
  EquivarianceError(const std::string& what, TorusPoint2 witness) : ConfigError(what), witness(witness) {}
  TorusPoint2 witness;
};

/// Image of a torus map at a point together with its Jacobian there.
struct MapValue {
  TorusPoint2 image;
  Eigen::Matrix2d jacobian;
};

/// The hyperbolic automorphism ((2,1),(1,1)) raised to `power`, computed in
/// exact integer arithmetic.
Eigen::Matrix2d anosov_matrix(int power);
/// Largest eigenvalue (3 + sqrt 5)/2 of the base matrix.
double anosov_expansion();

MapValue anosov_map(const TorusPoint2& p, int power);

enum class BumpProfile {
  Poly,    // (1 - t^2)^2
  Tailed,  // w (1 - t^2)^3 / sqrt(w^2 + t^2)
};

std::string to_string(BumpProfile b);
BumpProfile bump_profile_from_string(const std::string& s);

/// Parameters of a derived-from-Anosov map. The perturbation at each center c
/// pushes along the stable eigendirection v_s of A^k:
///   f(x) = A^k x + strength * bump(|x - c| / radius) * <x - c, v_s> v_s.
struct DaConfig {
  int base_power = 1;
  std::vector<TorusPoint2> centers{{0.0, 0.0}};
  double radius = 0.08;
  /// Stable eigenvalue of Df at each center; strength is derived from it.
  double center_stable_eigenvalue = 1.8;
  BumpProfile profile = BumpProfile::Tailed;
  /// Width parameter of the tailed profile; 0 picks a default for base_power.
  double bump_width = 0.0;
};

/// Four two-torsion centers, base power 3, radius 0.2.
DaConfig plykin_default_config();

/// A validated DA map. Construction throws ConfigError naming the first
/// invariant the configuration violates.
class DaMap {
 public:
  explicit DaMap(DaConfig cfg);

  const DaConfig& config() const { return cfg_; }
  double strength() const { return strength_; }
  double bump_width() const { return width_; }
  const Eigen::Vector2d& stable_direction() const { return vs_; }
  const Eigen::Vector2d& unstable_direction() const { return vu_; }
  double stable_eigenvalue() const { return mu_; }
  double unstable_eigenvalue() const { return 1.0 / mu_; }

  double bump(double t) const;
  /// bump'(t) / t, finite at t = 0.
  double bump_slope_over_t(double t) const;

  TorusPoint2 image(const TorusPoint2& p) const;
  Eigen::Matrix2d jacobian(const TorusPoint2& p) const;
  TorusPoint2 inverse(const TorusPoint2& p) const;

  /// Smallest factor by which the map stretches stable-direction lengths
  /// within the disk of relative radius t about a center.
  double min_stable_multiplier(double t_max = 1.0) const;
  /// Relative radius t* of the two saddles created on the stable line through
  /// each center: the root of mu + strength * bump(t) = 1.
  double saddle_offset() const;

 private:
  DaConfig cfg_;
  Eigen::Matrix2d a_;
  Eigen::Vector2d vs_, vu_;
  double mu_ = 0.0;
  double strength_ = 0.0;
  double width_ = 0.0;
  double max_push_ = 0.0;
};

MapValue da_map(const TorusPoint2& p, const DaConfig& cfg);

/// Checks f(-x) = -f(x) on a deterministic sample and the Plykin
/// preconditions (power 3, the four two-torsion centers).
void validate_plykin_config(const DaConfig& cfg);

struct QuotientMapValue {
  SphereQuotientPoint image;
  Eigen::Matrix2d jacobian;  // of the double-cover map at the representative
};

QuotientMapValue plykin_map(const SphereQuotientPoint& q, const DaConfig& cfg);

/// Map systems on the single chart "torus" (coordinates in [0,1)^2).
SmoothSystem anosov_system(int power);
SmoothSystem da_system(const DaConfig& cfg);
/// Double-cover system carrying the deck transformation p -> -p.
SmoothSystem plykin_system(const DaConfig& cfg);

/// Suspension of a torus map: chart "mapping_torus" with coordinates
/// (x, y, s), field (0, 0, 1) and the map applied at the seam s = 1.
SmoothSystem suspension_flow(const SmoothSystem& map_system);

/// (rho(1 - rho), 1, -z) in the cylinder frame; negated when reversed.
Eigen::Vector3d lemma1_field(const CylinderPoint& c, bool time_reversed = false);
/// The same field in Cartesian coordinates on chart "lemma1".
SmoothSystem lemma1_system(bool time_reversed = false);

/// North-south flow on S^n in R^{n+1}: tangential projection of -e_{n+1}.
SmoothSystem gradient_sphere_flow(int n);

/// Maps a unit vector of the equatorial sphere to a state of its system.
using AmbientEmbedding = std::function<State(const Vec&)>;

/// Parameters of the extension to the next sphere.
struct ExtensionConfig {
  /// The equatorial flow runs at full speed for |latitude| <= inner and is
  /// switched off beyond outer, so the pole caps carry the radial flow only.
  double inner_latitude = 0.6;
  double outer_latitude = 1.0;
};

/// Extends a flow on S^{n-1} to S^n. Charts: "cap_north", "cap_south"
/// (coordinates w in R^n, the projection to the equatorial hyperplane) and,
/// for each chart of the input, a band chart "<id>@band" with the latitude
/// appended. Latitude obeys theta' = -sin(2 theta); the equatorial motion is
/// scaled by a smooth cutoff of the latitude.
SmoothSystem extend_to_next_sphere(const SmoothSystem& flow, int equator_dim, AmbientEmbedding embed,
                                   ExtensionConfig cfg = {});

/// Smoothstep 6u^5 - 15u^4 + 10u^3 on [0,1], clamped outside.
double quintic_smoothstep(double u);
double quintic_smoothstep_derivative(double u);

}  // namespace aflow
