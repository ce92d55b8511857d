#pragma once

#include "aflow/orbit.hpp"
#include "aflow/surgery.hpp"
#include "aflow/system.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace aflow {

/// Runs fn(0..n-1) on up to `jobs` threads. Results must be written by index
/// so the outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Seed for item `index` of the stream `name` under a master seed.
std::uint64_t derive_seed(std::uint64_t master, const std::string& name, std::uint64_t index = 0);

struct SpectrumEstimate {
  std::vector<double> exponents;        // descending
  std::vector<double> window_variance;  // variance of the per-window rates, same order
  double total_time = 0.0;
  int windows = 0;
};

struct LyapunovOptions {
  double step = 1e-3;
  double renorm_interval = 1.0;
  int windows = 100;
  double transient = 0.0;
};

SpectrumEstimate lyapunov_spectrum(const SmoothSystem& sys, const State& x0, double T, const LyapunovOptions& opts = {});

struct DimensionEstimate {
  double value = 0.0;
  double scale_min = 0.0;
  double scale_max = 0.0;
  double residual = 0.0;  // RMS residual of the log-log fit
  std::vector<double> scales;
  std::vector<long> counts;
  bool degenerate = false;
};

/// Box counting on a cloud stored one point per column.
DimensionEstimate box_counting(const Mat& cloud, const std::vector<double>& scales);

/// Geometric sequence of n scales from hi down to lo.
std::vector<double> geometric_scales(double hi, double lo, int n);

struct TrapReport {
  bool passed = false;
  double min_margin = 0.0;
  std::size_t worst_index = 0;
  Vec worst_point;
  std::size_t samples = 0;
  /// Samples where the field does not point strictly inward.
  std::size_t failures = 0;
  double max_gap = 0.0;
};

TrapReport trap_check(const SmoothSystem& sys, const TrapSurface& surface);

struct InvarianceReport {
  bool passed = false;
  std::size_t samples = 0;
  std::size_t exits = 0;
  double T = 0.0;
  /// First exiting orbit (by sample index), when any.
  std::size_t counterexample_index = 0;
  State counterexample_start;
  State counterexample_exit;
  double counterexample_time = 0.0;
};

struct InvarianceOptions {
  double step = 1e-3;
  int jobs = 1;
  double tolerance = 1e-9;
};

/// Integrates each sample for time T and reports orbits that leave the
/// region {level <= 0} of the surface's chart.
InvarianceReport forward_invariance_check(const SmoothSystem& sys, const TrapSurface& surface,
                                          const std::vector<State>& inside, double T, const InvarianceOptions& opts = {});

/// Uniform samples of the region {level <= 0}, drawn from the chart's own
/// sampler when it has one and from the system sampler otherwise.
std::vector<State> sample_region(const SmoothSystem& sys, const TrapSurface& surface, std::size_t n,
                                 std::uint64_t seed);

enum class Orientability { Orientable, NonOrientable, Inconclusive };
std::string to_string(Orientability o);

struct OrientabilityVerdict {
  Orientability verdict = Orientability::Inconclusive;
  long return_count = 0;
  long reversal_count = 0;
  long unreliable_count = 0;
  std::size_t stored_points = 0;
  /// Smallest return distances seen (at most 32, ascending).
  std::vector<double> closest_returns;
};

struct OrientabilityOptions {
  double epsilon = 0.005;
  double min_abs_cos = 0.9;
  long required_returns = 100;
  double transient = 100.0;
  /// Unit-time renormalizations skipped before directions are stored.
  int direction_transient = 30;
  double step = 1e-3;
};

/// Compares the dominant tangent direction at epsilon-close returns (deck
/// images included) and counts orientation reversals.
OrientabilityVerdict orientability_test(const SmoothSystem& sys, const State& x0, double T,
                                        const OrientabilityOptions& opts = {});

struct CensusTrap {
  std::string label;
  TrapSurface surface;
  bool attractor = true;
};

struct CensusOrbit {
  std::string label;
  PeriodicOrbitResult orbit;
};

struct CensusTargets {
  std::vector<CensusTrap> traps;
  std::vector<Equilibrium> equilibria;
  std::vector<CensusOrbit> orbits;
  double radius = 1e-3;
};

struct CensusItem {
  std::string kind;  // trap | equilibrium | periodic_orbit
  std::string label;
  std::string stability;
  bool attractor = false;
  long count = 0;
};

struct CensusReport {
  std::vector<CensusItem> items;
  long samples = 0;
  long unclassified = 0;
  long escaped = 0;
  double T = 0.0;
  double unclassified_fraction() const { return samples ? static_cast<double>(unclassified) / samples : 0.0; }
  double classified_fraction() const { return 1.0 - unclassified_fraction(); }
};

struct CensusOptions {
  double step = 1e-3;
  int jobs = 1;
  std::uint64_t seed = 1;
};

/// Integrates sampled initial points for time T and classifies each endpoint
/// by the first target whose neighbourhood contains it.
CensusReport basin_census(const SmoothSystem& sys, const CensusTargets& targets, long sample_count, double T,
                          const CensusOptions& opts = {});
/// Same, from given initial states.
CensusReport basin_census(const SmoothSystem& sys, const CensusTargets& targets, const std::vector<State>& starts,
                          double T, const CensusOptions& opts = {});

struct SplittingReport {
  std::vector<double> rates;  // fitted rate per tracked direction, descending
  int neutral_index = -1;     // flow direction (vector fields)
  bool has_expansion = false;
  bool has_contraction = false;
  double expansion_rate = 0.0;           // fitted rate of the weakest expanding direction
  double min_window_expansion = 0.0;     // its smallest window rate
  std::size_t worst_expansion_window = 0;
  double contraction_rate = 0.0;         // fitted rate of the weakest contracting direction
  double max_window_contraction = 0.0;   // its largest window rate
  std::size_t worst_contraction_window = 0;
  double window = 0.0;
  std::size_t window_count = 0;
  /// Both kinds of direction present, every expansion window positive and
  /// every contraction window negative.
  bool passed = false;
};

/// Window-wise exponential growth bounds along an orbit segment of length T.
SplittingReport splitting_rate_check(const SmoothSystem& sys, const State& x0, double T, double window,
                                     const LyapunovOptions& opts = {});

}  // namespace aflow
