#include "aflow/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>

namespace aflow {

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          next = n;
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, const std::string& name, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix(splitmix(master ^ h) + index);
}

// ---------------------------------------------------------------------------
// Lyapunov spectrum

namespace {

State run_transient(const SmoothSystem& sys, const State& x0, double transient, double step) {
  if (transient <= 0.0) return x0;
  IntegrateOptions io;
  io.step = step;
  io.record = false;
  return integrate(sys, x0, transient, io).final_state();
}

}  // namespace

SpectrumEstimate lyapunov_spectrum(const SmoothSystem& sys, const State& x0, double T, const LyapunovOptions& opts) {
  if (!(T > 0.0)) throw InvalidInput("lyapunov_spectrum: T must be positive");
  const State start = run_transient(sys, x0, opts.transient, opts.step);
  TangentOptions to;
  to.integrate.step = opts.step;
  to.integrate.record = false;
  to.renorm_interval = opts.renorm_interval;
  const auto [rec, hist] = integrate_with_tangent(sys, start, T, to);
  const double total = rec.final_time();
  const Eigen::Index k = hist.log_growth.size();
  const std::size_t nw = hist.window_logs.size();
  const std::size_t groups = std::max<std::size_t>(1, std::min<std::size_t>(nw, std::max(1, opts.windows)));

  // Per-group rates.
  std::vector<Vec> group_rates;
  std::size_t begin = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t end = (g + 1) * nw / groups;
    if (end <= begin) continue;
    Vec sum = Vec::Zero(k);
    for (std::size_t i = begin; i < end; ++i) sum += hist.window_logs[i];
    const double t0 = begin == 0 ? 0.0 : hist.times[begin - 1];
    const double t1 = hist.times[end - 1];
    if (t1 > t0) group_rates.push_back(sum / (t1 - t0));
    begin = end;
  }

  SpectrumEstimate out;
  out.total_time = total;
  out.windows = static_cast<int>(group_rates.size());
  const Vec rates = hist.log_growth / total;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rates[a] > rates[b]; });
  for (Eigen::Index j : order) {
    out.exponents.push_back(rates[j]);
    double mean = 0.0, var = 0.0;
    for (const Vec& g : group_rates) mean += g[j];
    mean /= std::max<std::size_t>(1, group_rates.size());
    for (const Vec& g : group_rates) var += (g[j] - mean) * (g[j] - mean);
    out.window_variance.push_back(group_rates.size() > 1 ? var / (group_rates.size() - 1) : 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Box counting

std::vector<double> geometric_scales(double hi, double lo, int n) {
  if (!(hi > lo && lo > 0.0) || n < 2) throw InvalidInput("geometric_scales: need hi > lo > 0 and n >= 2");
  std::vector<double> s;
  for (int i = 0; i < n; ++i) s.push_back(hi * std::pow(lo / hi, static_cast<double>(i) / (n - 1)));
  return s;
}

DimensionEstimate box_counting(const Mat& cloud, const std::vector<double>& scales) {
  if (scales.size() < 5) throw InvalidInput("box_counting: need at least 5 scales");
  for (double e : scales)
    if (!(e > 0.0) || !std::isfinite(e)) throw InvalidInput("box_counting: scales must be positive");
  if (cloud.cols() == 0) throw InvalidInput("box_counting: empty cloud");
  if (!cloud.allFinite()) throw InvalidInput("box_counting: cloud has non-finite coordinates");
  DimensionEstimate out;
  out.scales = scales;
  out.scale_min = *std::min_element(scales.begin(), scales.end());
  out.scale_max = *std::max_element(scales.begin(), scales.end());
  const Eigen::Index d = cloud.rows(), n = cloud.cols();
  const Vec lo = cloud.rowwise().minCoeff();
  const Vec hi = cloud.rowwise().maxCoeff();
  if ((hi - lo).maxCoeff() == 0.0) {
    out.degenerate = true;
    out.counts.assign(scales.size(), 1);
    return out;
  }
  std::vector<std::uint64_t> keys(static_cast<std::size_t>(n));
  for (double eps : scales) {
    int bits = 1;
    const double cells = std::ceil((hi - lo).maxCoeff() / eps) + 1.0;
    while (bits < 63 && std::ldexp(1.0, bits) < cells) ++bits;
    const bool exact = bits * d <= 64;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::uint64_t key = 0;
      for (Eigen::Index r = 0; r < d; ++r) {
        const auto idx = static_cast<std::uint64_t>(std::floor((cloud(r, i) - lo[r]) / eps));
        key = exact ? (key << bits) | idx : splitmix(key ^ idx);
      }
      keys[static_cast<std::size_t>(i)] = key;
    }
    std::sort(keys.begin(), keys.end());
    out.counts.push_back(static_cast<long>(std::unique(keys.begin(), keys.end()) - keys.begin()));
  }
  // Least squares of log N against log(1/eps).
  const std::size_t m = scales.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> xs(m), ys(m);
  for (std::size_t i = 0; i < m; ++i) {
    xs[i] = std::log(1.0 / scales[i]);
    ys[i] = std::log(static_cast<double>(out.counts[i]));
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = m * sxx - sx * sx;
  const double slope = denom != 0.0 ? (m * sxy - sx * sy) / denom : 0.0;
  const double icept = (sy - slope * sx) / m;
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) ss += std::pow(ys[i] - (icept + slope * xs[i]), 2);
  out.value = std::max(0.0, slope);
  out.residual = std::sqrt(ss / m);
  return out;
}

// ---------------------------------------------------------------------------
// Traps

TrapReport trap_check(const SmoothSystem& sys, const TrapSurface& surface) {
  const CrossingMeasure m = measure_crossing(sys, surface);
  TrapReport r;
  r.passed = m.crossing == Crossing::Inward;
  r.min_margin = m.margin;
  r.worst_index = m.worst;
  r.worst_point = surface.points.at(m.worst);
  r.samples = surface.points.size();
  const int c = sys.chart_index(surface.chart_id);
  for (std::size_t i = 0; i < surface.points.size(); ++i)
    if (!(sys.evaluate(c, surface.points[i]).dot(surface.normals[i]) < 0.0)) ++r.failures;
  r.max_gap = surface.max_gap;
  return r;
}

InvarianceReport forward_invariance_check(const SmoothSystem& sys, const TrapSurface& surface,
                                          const std::vector<State>& inside, double T, const InvarianceOptions& opts) {
  const int c = sys.chart_index(surface.chart_id);
  struct Outcome {
    bool exited = false;
    State at;
    double time = 0.0;
  };
  std::vector<Outcome> res(inside.size());
  parallel_for(inside.size(), opts.jobs, [&](std::size_t i) {
    Outcome& o = res[i];
    const State& s0 = inside[i];
    if (s0.chart != c || surface.level(s0.x) > opts.tolerance) {
      o = {true, s0, 0.0};
      return;
    }
    IntegrateOptions io;
    io.step = opts.step;
    io.record = false;
    io.observer = [&](double t, const State& s) {
      if (s.chart != c || surface.level(s.x) > opts.tolerance) {
        o = {true, s, t};
        return false;
      }
      return true;
    };
    try {
      integrate(sys, s0, T, io);
    } catch (const EscapeError& e) {
      o = {true, e.last_state, e.time};
    }
  });
  InvarianceReport r;
  r.samples = inside.size();
  r.T = T;
  bool first = true;
  for (std::size_t i = 0; i < res.size(); ++i)
    if (res[i].exited) {
      ++r.exits;
      if (first) {
        r.counterexample_index = i;
        r.counterexample_start = inside[i];
        r.counterexample_exit = res[i].at;
        r.counterexample_time = res[i].time;
        first = false;
      }
    }
  r.passed = r.exits == 0;
  return r;
}

std::vector<State> sample_region(const SmoothSystem& sys, const TrapSurface& surface, std::size_t n,
                                 std::uint64_t seed) {
  const int c = sys.chart_index(surface.chart_id);
  const Chart& ch = sys.chart(c);
  if (!ch.sample && !sys.sample) throw InvalidInput("system '" + sys.name + "' has no sampler");
  std::mt19937_64 rng(derive_seed(seed, "region"));
  std::vector<State> out;
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (++attempts > 1000 * (n + 10)) throw InvalidInput("sample_region: region is too small to sample");
    State s;
    if (ch.sample) {
      s = {c, ch.sample(rng)};
    } else {
      s = sys.sample(rng);
    }
    if (s.chart == c && surface.level(s.x) < 0.0) out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orientability

std::string to_string(Orientability o) {
  switch (o) {
    case Orientability::Orientable:
      return "orientable";
    case Orientability::NonOrientable:
      return "non-orientable";
    default:
      return "inconclusive";
  }
}

namespace {

// Spatial hash of stored (point, direction) pairs, one grid per chart.
class ReturnIndex {
 public:
  ReturnIndex(const SmoothSystem& sys, double eps) : sys_(sys), eps_(eps) {}

  struct Entry {
    Vec x;
    Vec v;
  };

  template <class Visit>
  void near(int chart, const Vec& x, Visit&& visit) const {
    const auto it = grids_.find(chart);
    if (it == grids_.end()) return;
    const Chart& ch = sys_.chart(chart);
    const Eigen::Index d = x.size();
    std::vector<long> base(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) base[i] = cell(x[i]);
    std::vector<int> off(static_cast<std::size_t>(d), -1);
    for (;;) {
      std::vector<long> idx = base;
      for (Eigen::Index i = 0; i < d; ++i) {
        idx[i] += off[i];
        if (i < ch.periodic) idx[i] = wrap(idx[i]);
      }
      const auto jt = it->second.find(key(idx));
      if (jt != it->second.end())
        for (std::size_t e : jt->second) visit(entries_[e]);
      Eigen::Index i = 0;
      while (i < d && off[i] == 1) off[i++] = -1;
      if (i == d) break;
      ++off[i];
    }
  }

  void insert(int chart, const Vec& x, const Vec& v) {
    std::vector<long> idx(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) idx[i] = cell(x[i]);
    for (Eigen::Index i = 0; i < sys_.chart(chart).periodic; ++i) idx[i] = wrap(idx[i]);
    grids_[chart][key(idx)].push_back(entries_.size());
    entries_.push_back({x, v});
  }

  std::size_t size() const { return entries_.size(); }

 private:
  long cell(double v) const { return static_cast<long>(std::floor(v / eps_)); }
  long wrap(long i) const {
    const long n = static_cast<long>(std::ceil(1.0 / eps_));
    return ((i % n) + n) % n;
  }
  static std::uint64_t key(const std::vector<long>& idx) {
    std::uint64_t h = 0x12345;
    for (long i : idx) h = splitmix(h ^ static_cast<std::uint64_t>(i));
    return h;
  }

  const SmoothSystem& sys_;
  double eps_;
  std::vector<Entry> entries_;
  std::unordered_map<int, std::unordered_map<std::uint64_t, std::vector<std::size_t>>> grids_;
};

}  // namespace

OrientabilityVerdict orientability_test(const SmoothSystem& sys, const State& x0, double T,
                                        const OrientabilityOptions& opts) {
  if (!(opts.epsilon > 0.0)) throw InvalidInput("orientability_test: epsilon must be positive");
  const State start = run_transient(sys, x0, opts.transient, opts.step);
  OrientabilityVerdict out;
  ReturnIndex index(sys, opts.epsilon);
  std::vector<double> closest;
  int renorms = 0;

  auto compare = [&](int chart, const Vec& x, const Vec& v) {
    index.near(chart, x, [&](const ReturnIndex::Entry& e) {
      const double d = sys.difference(chart, e.x, x).norm();
      if (!(d < opts.epsilon)) return;
      closest.push_back(d);
      const double cosv = e.v.dot(v) / (e.v.norm() * v.norm());
      if (std::abs(cosv) <= opts.min_abs_cos) {
        ++out.unreliable_count;
        return;
      }
      ++out.return_count;
      if (cosv < 0.0) ++out.reversal_count;
    });
  };

  TangentOptions to;
  to.integrate.step = opts.step;
  to.integrate.record = false;
  to.frame_size = 1;
  to.renorm_interval = 1.0;
  to.on_renorm = [&](double, const State& s, const Mat& frame) {
    if (++renorms <= opts.direction_transient) return;
    const Vec v = frame.col(0);
    compare(s.chart, s.x, v);
    // Deck images of the current point carry the transformed direction.
    for (const Symmetry& g : sys.symmetries) {
      if (g.chart != s.chart) continue;
      const Vec gx = sys.reduce(s.chart, g.point(s.x));
      compare(s.chart, gx, g.tangent(s.x, v));
    }
    index.insert(s.chart, s.x, v);
    if (closest.size() > 4096) {
      std::sort(closest.begin(), closest.end());
      closest.resize(32);
    }
  };
  integrate_with_tangent(sys, start, T, to);

  std::sort(closest.begin(), closest.end());
  if (closest.size() > 32) closest.resize(32);
  out.closest_returns = closest;
  out.stored_points = index.size();
  if (out.reversal_count >= 1)
    out.verdict = Orientability::NonOrientable;
  else if (out.return_count >= opts.required_returns)
    out.verdict = Orientability::Orientable;
  else
    out.verdict = Orientability::Inconclusive;
  return out;
}

// ---------------------------------------------------------------------------
// Census

namespace {

// Points along a periodic orbit spaced at most `spacing` apart; the field is
// constant in suspension charts, so straight segments between records are exact.
std::vector<State> orbit_samples(const SmoothSystem& sys, const PeriodicOrbitResult& po, double spacing, double step) {
  IntegrateOptions io;
  io.step = step;
  const OrbitRecord rec = integrate(sys, po.point, po.period, io);
  std::vector<State> out;
  for (std::size_t i = 0; i + 1 < rec.states.size(); ++i) {
    const State& a = rec.states[i];
    const State& b = rec.states[i + 1];
    out.push_back(a);
    if (a.chart != b.chart || !sys.chart(a.chart).constant_field) continue;
    const Vec d = sys.difference(a.chart, a.x, b.x);
    const int pieces = static_cast<int>(std::ceil(d.norm() / spacing));
    for (int k = 1; k < pieces; ++k) out.push_back({a.chart, sys.reduce(a.chart, a.x + d * (double(k) / pieces))});
  }
  out.push_back(rec.states.back());
  return out;
}

}  // namespace

CensusReport basin_census(const SmoothSystem& sys, const CensusTargets& targets, const std::vector<State>& starts,
                          double T, const CensusOptions& opts) {
  CensusReport rep;
  rep.T = T;
  rep.samples = static_cast<long>(starts.size());
  std::vector<int> trap_chart;
  for (const CensusTrap& t : targets.traps) {
    trap_chart.push_back(sys.chart_index(t.surface.chart_id));
    rep.items.push_back({"trap", t.label, t.attractor ? "attracting" : "", t.attractor, 0});
  }
  for (std::size_t i = 0; i < targets.equilibria.size(); ++i) {
    const Equilibrium& e = targets.equilibria[i];
    rep.items.push_back({"equilibrium", "equilibrium_" + std::to_string(i), e.stability, e.stability == "sink", 0});
  }
  std::vector<std::vector<State>> orbit_pts;
  for (const CensusOrbit& o : targets.orbits) {
    orbit_pts.push_back(orbit_samples(sys, o.orbit, 0.5 * targets.radius, opts.step));
    rep.items.push_back({"periodic_orbit", o.label, o.orbit.stability, o.orbit.stability == "attracting", 0});
  }

  // -2 escaped, -1 unclassified, otherwise item index.
  std::vector<int> cls(starts.size(), -1);
  parallel_for(starts.size(), opts.jobs, [&](std::size_t i) {
    IntegrateOptions io;
    io.step = opts.step;
    io.record = false;
    State end;
    try {
      end = integrate(sys, starts[i], T, io).final_state();
    } catch (const EscapeError&) {
      cls[i] = -2;
      return;
    }
    int item = 0;
    for (std::size_t t = 0; t < targets.traps.size(); ++t, ++item)
      if (end.chart == trap_chart[t] && targets.traps[t].surface.level(end.x) <= 0.0) {
        cls[i] = item;
        return;
      }
    for (const Equilibrium& e : targets.equilibria) {
      if (sys.quotient_distance(e.point, end) < targets.radius) {
        cls[i] = item;
        return;
      }
      ++item;
    }
    for (const auto& pts : orbit_pts) {
      for (const State& p : pts)
        if (sys.quotient_distance(p, end) < targets.radius) {
          cls[i] = item;
          return;
        }
      ++item;
    }
  });
  for (int c : cls) {
    if (c >= 0)
      ++rep.items[static_cast<std::size_t>(c)].count;
    else {
      ++rep.unclassified;
      if (c == -2) ++rep.escaped;
    }
  }
  return rep;
}

CensusReport basin_census(const SmoothSystem& sys, const CensusTargets& targets, long sample_count, double T,
                          const CensusOptions& opts) {
  if (!sys.sample) throw InvalidInput("system '" + sys.name + "' has no sampler");
  std::vector<State> starts;
  for (long i = 0; i < sample_count; ++i) {
    std::mt19937_64 rng(derive_seed(opts.seed, "census", static_cast<std::uint64_t>(i)));
    starts.push_back(sys.sample(rng));
  }
  return basin_census(sys, targets, starts, T, opts);
}

// ---------------------------------------------------------------------------
// Splitting rates

SplittingReport splitting_rate_check(const SmoothSystem& sys, const State& x0, double T, double window,
                                     const LyapunovOptions& opts) {
  if (!(window > 0.0) || !(T >= window)) throw InvalidInput("splitting_rate_check: need 0 < window <= T");
  const State start = run_transient(sys, x0, opts.transient, opts.step);
  TangentOptions to;
  to.integrate.step = opts.step;
  to.integrate.record = false;
  to.renorm_interval = opts.renorm_interval;
  const auto [rec, hist] = integrate_with_tangent(sys, start, T, to);
  const Eigen::Index k = hist.log_growth.size();
  const std::size_t nw = hist.window_logs.size();

  // Fitted rate: least-squares slope of accumulated log growth against time.
  std::vector<double> fitted(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    double acc = 0.0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < nw; ++i) {
      acc += hist.window_logs[i][j];
      const double t = hist.times[i];
      sx += t;
      sy += acc;
      sxx += t * t;
      sxy += t * acc;
    }
    const double n = static_cast<double>(nw);
    const double den = n * sxx - sx * sx;
    fitted[j] = den != 0.0 ? (n * sxy - sx * sy) / den : acc / std::max(1e-300, rec.final_time());
  }

  // Windows of the requested length, as runs of consecutive renormalizations.
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  std::size_t b = 0;
  double t0 = 0.0;
  for (std::size_t i = 0; i < nw; ++i)
    if (hist.times[i] - t0 >= window - 1e-9) {
      runs.emplace_back(b, i + 1);
      b = i + 1;
      t0 = hist.times[i];
    }
  auto window_rate = [&](Eigen::Index j, std::size_t r) {
    double s = 0.0;
    for (std::size_t i = runs[r].first; i < runs[r].second; ++i) s += hist.window_logs[i][j];
    const double ta = runs[r].first == 0 ? 0.0 : hist.times[runs[r].first - 1];
    return s / (hist.times[runs[r].second - 1] - ta);
  };

  SplittingReport out;
  out.window = window;
  out.window_count = runs.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto c) { return fitted[a] > fitted[c]; });
  for (Eigen::Index j : order) out.rates.push_back(fitted[j]);
  if (sys.kind == SystemKind::VectorField) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < k; ++i)
      if (std::abs(out.rates[i]) < best) {
        best = std::abs(out.rates[i]);
        out.neutral_index = static_cast<int>(i);
      }
  }
  // Weakest expanding and weakest contracting directions.
  Eigen::Index eu = -1, es = -1;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (i == out.neutral_index) continue;
    if (out.rates[i] > 0.0) eu = i;
    if (out.rates[i] < 0.0 && es < 0) es = i;
  }
  out.passed = true;
  if (eu >= 0) {
    out.has_expansion = true;
    const Eigen::Index j = order[eu];
    out.expansion_rate = out.rates[eu];
    out.min_window_expansion = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const double w = window_rate(j, r);
      if (w < out.min_window_expansion) {
        out.min_window_expansion = w;
        out.worst_expansion_window = r;
      }
    }
    if (!(out.min_window_expansion > 0.0)) out.passed = false;
  }
  if (es >= 0) {
    out.has_contraction = true;
    const Eigen::Index j = order[es];
    out.contraction_rate = out.rates[es];
    out.max_window_contraction = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const double w = window_rate(j, r);
      if (w > out.max_window_contraction) {
        out.max_window_contraction = w;
        out.worst_contraction_window = r;
      }
    }
    if (!(out.max_window_contraction < 0.0)) out.passed = false;
  }
  out.passed = out.passed && out.has_expansion && out.has_contraction;
  return out;
}

}  // namespace aflow
