#pragma once

#include "aflow/system.hpp"

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aflow {

/// The orbit left every registered chart (or became non-finite).
class EscapeError : public std::runtime_error {
 public:
  EscapeError(const std::string& what, State last, double time)
      : std::runtime_error(what), last_state(std::move(last)), time(time) {}
  State last_state;
  double time;
};

/// Tangent growth overflowed between renormalizations.
class NumericalOverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoReturnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EventRecord {
  double time = 0.0;
  std::string tag;
  int from_chart = 0;
  int to_chart = 0;
};

struct OrbitRecord {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<EventRecord> events;

  const State& final_state() const { return states.back(); }
  double final_time() const { return times.back(); }
};

struct IntegrateOptions {
  /// RK4 step; charts may override it (constant fields, step_override).
  double step = 1e-3;
  /// Keep every n-th step in the record (events and the end point are always kept).
  int record_every = 1;
  /// When false only the initial and final states are recorded.
  bool record = true;
  /// Called after every step; returning false stops the integration.
  std::function<bool(double, const State&)> observer;
};

/// Fixed-step RK4 integration for time T (maps: T iterates). Seams with an
/// exact event time are stepped onto exactly; other guards are located by
/// bisection within the step.
OrbitRecord integrate(const SmoothSystem& sys, const State& x0, double T, const IntegrateOptions& opts = {});

struct TangentFrameHistory {
  std::vector<double> times;        // renormalization times
  std::vector<Mat> frames;          // only when store_frames
  std::vector<Vec> window_logs;     // log growth per direction in each window
  Vec log_growth;                   // accumulated log growth per direction
};

struct TangentOptions {
  IntegrateOptions integrate;
  double renorm_interval = 1.0;
  /// Number of tangent directions tracked; -1 means the manifold dimension.
  int frame_size = -1;
  bool store_frames = false;
  /// Initial frame (coord_dim x frame_size); defaults to the tangent basis.
  Mat initial_frame;
  /// Called after every renormalization with the orthonormal frame.
  std::function<void(double, const State&, const Mat&)> on_renorm;
};

std::pair<OrbitRecord, TangentFrameHistory> integrate_with_tangent(const SmoothSystem& sys, const State& x0,
                                                                   double T, const TangentOptions& opts = {});

/// Time-T flow map and its full derivative in chart coordinates.
struct FlowDerivative {
  State end;
  Mat derivative;
};

FlowDerivative flow_with_derivative(const SmoothSystem& sys, const State& x0, double T, double step = 1e-3);

struct Equilibrium {
  State point;
  std::vector<std::complex<double>> eigenvalues;  // of the tangent-space linearization
  bool hyperbolic = true;
  std::string stability;  // source | sink | saddle
  double residual = 0.0;
};

struct EquilibriumSearch {
  std::vector<Equilibrium> equilibria;
  std::vector<State> unconverged_seeds;
};

/// Damped Newton on the field from each seed; roots closer than 10 tol are merged.
EquilibriumSearch find_equilibria(const SmoothSystem& sys, const std::vector<State>& seeds, double tol = 1e-12);

/// Codimension-one section {n.x = offset} in one chart, crossed in the
/// direction of n. With a non-empty event_tag the section is instead the
/// landing set of that transition (suspension seams).
struct Section {
  int chart = 0;
  Vec normal;
  double offset = 0.0;
  std::function<bool(const Vec&)> accept;
  std::string event_tag;
};

struct PeriodicOrbitResult {
  State point;
  double period = 0.0;
  std::vector<std::complex<double>> floquet_multipliers;
  std::string stability;  // attracting | repelling | saddle
  double closure_error = 0.0;
  int iterations = 0;
};

struct PeriodicOrbitOptions {
  double step = 1e-3;
  double tol = 1e-10;
  double max_return_time = 100.0;
  int max_iterations = 50;
  int returns = 1;
};

/// Poincare map from the section back to itself and its derivative.
struct ReturnMap {
  State point;
  double time = 0.0;
  Mat derivative;  // full coordinates, flow-direction corrected
};

ReturnMap poincare_return(const SmoothSystem& sys, const Section& section, const State& x0,
                          const PeriodicOrbitOptions& opts = {});

/// Newton on the return map. Floquet multipliers are the eigenvalues of its
/// derivative restricted to the section.
PeriodicOrbitResult find_periodic_orbit(const SmoothSystem& sys, const Section& section, const State& seed,
                                        const PeriodicOrbitOptions& opts = {});

}  // namespace aflow
