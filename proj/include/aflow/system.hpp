#pragma once

#include "aflow/charts.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace aflow {

enum class SystemKind { Map, VectorField };

/// Coordinate chart of a system. The first `periodic` coordinates are taken
/// mod 1; if `sphere_dim` > 0 the first `sphere_dim` coordinates form a unit
/// vector and are renormalized after every step.
struct Chart {
  std::string id;
  int coord_dim = 0;
  int manifold_dim = 0;
  int periodic = 0;
  int sphere_dim = 0;
  /// The field is constant in this chart, so one RK4 step of any length is exact.
  bool constant_field = false;
  double max_step = 0.25;
  /// When > 0, replaces the caller's step size in this chart.
  double step_override = 0.0;
  /// Optional domain test; integration raises an escape error outside it.
  std::function<bool(const Vec&)> domain;
  /// Optional uniform sampler of the chart's coordinate domain.
  std::function<Vec(std::mt19937_64&)> sample;
};

/// A point of a system, in one of its charts.
struct State {
  int chart = 0;
  Vec x;
};

/// Discrete event of a hybrid flow: fires when guard(x) becomes >= 0 and
/// replaces the state by apply(x), possibly in another chart. Without a
/// jacobian, tangent frames restart from the tangent basis at the new point.
struct Transition {
  int from = 0;
  std::string tag;
  std::function<double(const Vec&)> guard;
  /// When set, returns the exact flow time until the guard fires (seams of
  /// suspensions, where the fiber speed is constant).
  std::function<double(const Vec&)> time_to_event;
  std::function<State(const Vec&)> apply;
  std::function<Mat(const Vec&)> jacobian;
};

/// Deck transformation of a double-cover chart; points related by it are the
/// same point of the quotient manifold.
struct Symmetry {
  int chart = 0;
  std::function<Vec(const Vec&)> point;
  std::function<Vec(const Vec&, const Vec&)> tangent;  // (x, v) -> image of v
};

/// A map or vector field together with its derivative, on a set of charts.
/// For maps, `evaluate` returns the image point (same chart); for fields, the
/// tangent vector. Values are immutable after construction.
class SmoothSystem {
 public:
  std::string name;
  SystemKind kind = SystemKind::VectorField;
  std::vector<Chart> charts;
  std::function<Vec(int, const Vec&)> evaluate;
  std::function<Mat(int, const Vec&)> jacobian;
  std::vector<Transition> transitions;
  std::vector<Symmetry> symmetries;
  /// Inverse of a map system (optional).
  std::function<Vec(int, const Vec&)> inverse;
  /// Builds the time-reversed system when negating the field is not enough.
  std::function<SmoothSystem()> reverser;
  /// Random initial condition generator for sweeps.
  std::function<State(std::mt19937_64&)> sample;

  const Chart& chart(int i) const { return charts.at(static_cast<std::size_t>(i)); }
  int chart_index(const std::string& id) const;
  ChartedPoint to_charted(const State& s) const;
  State from_charted(const ChartedPoint& p) const;

  Vec field(const State& s) const { return evaluate(s.chart, s.x); }
  Mat derivative(const State& s) const { return jacobian(s.chart, s.x); }

  /// Applies the chart's quotient reductions (mod 1, renormalization).
  Vec reduce(int chart, Vec x) const;
  /// b - a, wrapped on periodic coordinates.
  Vec difference(int chart, const Vec& a, const Vec& b) const;
  double distance(const State& a, const State& b) const;
  /// Distance in the quotient by the registered deck transformations.
  double quotient_distance(const State& a, const State& b) const;
  /// Orthonormal basis (columns) of the tangent space at x in chart coordinates.
  Mat tangent_basis(int chart, const Vec& x) const;
  /// Projects v onto the tangent space at x.
  Vec project_tangent(int chart, const Vec& x, const Vec& v) const;
};

using SystemPtr = std::shared_ptr<const SmoothSystem>;

/// Reverses time. Fields are negated; hybrid systems need a reverser.
SmoothSystem time_reversed(const SmoothSystem& sys);

/// Disjoint union of the charts of two systems (indices of b are shifted by
/// the chart count of a). Used to assemble chart-glued systems.
SmoothSystem merge_systems(const SmoothSystem& a, const SmoothSystem& b, std::string name);

/// Result of comparing a derivative against central finite differences.
struct DerivativeCheck {
  double max_relative_error = 0.0;
  int samples = 0;
  bool passed = false;
};

/// Central finite differences of evaluate against jacobian at the given states.
/// The relative error is |J_fd - J| / max(|J|, 1) in the Frobenius norm.
DerivativeCheck check_derivative(const SmoothSystem& sys, const std::vector<State>& at, double h = 1e-6,
                                 double tol = 1e-5);

}  // namespace aflow
