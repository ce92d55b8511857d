#include "aflow/surgery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace aflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double max_nearest_gap(const std::vector<Vec>& pts) {
  double worst = 0.0;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) best = std::min(best, (pts[i] - pts[j]).squaredNorm());
    if (n > 1) worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

Eigen::Vector2d wrap2(Eigen::Vector2d d) {
  d[0] -= std::floor(d[0] + 0.5);
  d[1] -= std::floor(d[1] + 0.5);
  return d;
}

const Transition& find_seam(const SmoothSystem& susp, int chart) {
  for (const Transition& t : susp.transitions)
    if (t.from == chart && t.tag == "seam") return t;
  throw InvalidInput("system '" + susp.name + "' has no seam transition");
}

}  // namespace

std::string to_string(Topology t) { return t == Topology::Sphere ? "sphere" : "torus"; }

std::string to_string(Crossing c) {
  switch (c) {
    case Crossing::Inward:
      return "inward";
    case Crossing::Outward:
      return "outward";
    default:
      return "mixed";
  }
}

TrapSurface TrapSurface::flipped() const {
  TrapSurface f = *this;
  f.name = name + "_flipped";
  for (Vec& n : f.normals) n = -n;
  auto lv = level;
  auto gr = level_gradient;
  f.level = [lv](const Vec& x) { return -lv(x); };
  if (gr) f.level_gradient = [gr](const Vec& x) { return Vec(-gr(x)); };
  return f;
}

TrapSurface sphere_surface(const std::string& chart_id, const Vec& center, double radius, int samples) {
  if (!(radius > 0.0) || samples < 4) throw InvalidInput("sphere_surface: need radius > 0 and >= 4 samples");
  const Eigen::Index d = center.size();
  TrapSurface s;
  s.name = "sphere";
  s.topology = Topology::Sphere;
  s.chart_id = chart_id;
  if (d == 3) {
    // Fibonacci lattice.
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < samples; ++i) {
      const double z = 1.0 - (2.0 * i + 1.0) / samples;
      const double r = std::sqrt(1.0 - z * z);
      const double a = golden * i;
      Vec n(3);
      n << r * std::cos(a), r * std::sin(a), z;
      s.normals.push_back(n);
      s.points.push_back(center + radius * n);
    }
  } else {
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> g;
    for (int i = 0; i < samples; ++i) {
      Vec n(d);
      for (Eigen::Index k = 0; k < d; ++k) n[k] = g(rng);
      n /= n.norm();
      s.normals.push_back(n);
      s.points.push_back(center + radius * n);
    }
  }
  s.level = [center, radius](const Vec& x) { return (x - center).norm() - radius; };
  s.level_gradient = [center](const Vec& x) {
    const Vec d = x - center;
    const double n = d.norm();
    return n > 0.0 ? Vec(d / n) : Vec(Vec::Zero(d.size()));
  };
  s.max_gap = max_nearest_gap(s.points);
  return s;
}

TrapSurface cycle_tube_surface(const std::string& chart_id, double delta, int n_phi, int n_psi) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("cycle_tube_surface: need 0 < delta < 1");
  TrapSurface s;
  s.name = "cycle_tube";
  s.topology = Topology::Torus;
  s.chart_id = chart_id;
  for (int i = 0; i < n_phi; ++i) {
    const double phi = kTwoPi * i / n_phi;
    for (int j = 0; j < n_psi; ++j) {
      const double psi = kTwoPi * j / n_psi;
      const double rho = 1.0 + delta * std::cos(psi);
      Vec p(3), n(3);
      p << rho * std::cos(phi), rho * std::sin(phi), delta * std::sin(psi);
      n << std::cos(psi) * std::cos(phi), std::cos(psi) * std::sin(phi), std::sin(psi);
      s.points.push_back(p);
      s.normals.push_back(n);
    }
  }
  s.level = [delta](const Vec& x) { return std::hypot(std::hypot(x[0], x[1]) - 1.0, x[2]) - delta; };
  s.level_gradient = [](const Vec& x) {
    const double rho = std::hypot(x[0], x[1]);
    const double d = std::hypot(rho - 1.0, x[2]);
    Vec g = Vec::Zero(3);
    if (d == 0.0 || rho == 0.0) return g;
    g[0] = (rho - 1.0) / d * x[0] / rho;
    g[1] = (rho - 1.0) / d * x[1] / rho;
    g[2] = x[2] / d;
    return g;
  };
  s.max_gap = std::max(kTwoPi * (1.0 + delta) / n_phi, kTwoPi * delta / n_psi);
  return s;
}

CrossingMeasure measure_crossing(const SmoothSystem& sys, const TrapSurface& s) {
  const int c = sys.chart_index(s.chart_id);
  CrossingMeasure m;
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const double dot = sys.evaluate(c, s.points[i]).dot(s.normals[i]);
    if (dot > hi) {
      hi = dot;
      m.worst = i;
    }
    lo = std::min(lo, dot);
  }
  m.margin = -hi;
  if (hi < 0.0)
    m.crossing = Crossing::Inward;
  else if (lo > 0.0)
    m.crossing = Crossing::Outward;
  else
    m.crossing = Crossing::Mixed;
  return m;
}

// ---------------------------------------------------------------------------
// Excision

namespace {

struct TubeFit {
  bool ok = false;
  double kappa = 0.0;
  Vec failing;
  std::string why;
};

TubeFit fit_tube(const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& f, const Eigen::Vector2d& c, double r,
                 int n_angle) {
  TubeFit fit;
  auto min_ratio = [&](double radius, Eigen::Vector2d* worst) {
    double m = std::numeric_limits<double>::infinity();
    for (int j = 0; j < 4 * n_angle; ++j) {
      const double a = kTwoPi * j / (4 * n_angle);
      const Eigen::Vector2d p = c + radius * Eigen::Vector2d(std::cos(a), std::sin(a));
      const double ratio = wrap2(f(p) - c).norm() / radius;
      if (ratio < m) {
        m = ratio;
        if (worst) *worst = p;
      }
    }
    return m;
  };
  Eigen::Vector2d worst;
  double m = min_ratio(r, &worst);
  if (!(m > 1.0)) {
    fit.failing = Eigen::Vector3d(worst[0], worst[1], 0.0);
    fit.why = "tube boundary is not expanded by the return map (ratio " + std::to_string(m) + ")";
    return fit;
  }
  double kappa = 0.5 * std::log(m);
  // The circle at the seam (radius r e^{-kappa}) must map outside radius r.
  for (int pass = 0; pass < 8; ++pass) {
    const double inner = r * std::exp(-kappa);
    const double mi = min_ratio(inner, &worst);
    if (mi * inner > r * (1.0 + 1e-9)) {
      fit.ok = true;
      fit.kappa = kappa;
      return fit;
    }
    if (!(mi > 1.0)) break;
    kappa = std::min(kappa, 0.5 * std::log(mi));
  }
  fit.failing = Eigen::Vector3d(worst[0], worst[1], 1.0);
  fit.why = "seam does not map the tube boundary outside the tube";
  return fit;
}

}  // namespace

ExcisionResult excise_repelling_orbits(const SmoothSystem& susp, const std::vector<PeriodicOrbitResult>& orbits,
                                       const ExcisionOptions& opts) {
  if (orbits.empty()) throw InvalidInput("excise_repelling_orbits: no orbits given");
  const int chart = orbits.front().point.chart;
  const Chart& ch = susp.chart(chart);
  if (ch.coord_dim != 3 || ch.periodic != 2) throw InvalidInput("excise_repelling_orbits: expected a suspension chart");
  for (const PeriodicOrbitResult& o : orbits)
    if (o.stability != "repelling")
      throw ExcisionError("orbit through (" + std::to_string(o.point.x[0]) + ", " + std::to_string(o.point.x[1]) +
                              ") is " + o.stability + ", not repelling",
                          o.point.x);
  const Transition& seam = find_seam(susp, chart);
  auto apply = seam.apply;
  auto f = [apply](const Eigen::Vector2d& p) -> Eigen::Vector2d {
    const State s = apply(Eigen::Vector3d(p[0], p[1], 1.0));
    return s.x.head(2);
  };
  std::vector<Eigen::Vector2d> centers;
  for (const PeriodicOrbitResult& o : orbits) centers.push_back(o.point.x.head(2));

  auto try_radius = [&](double r, TubeFit* fail) -> TubeFit {
    TubeFit all;
    all.ok = true;
    all.kappa = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < centers.size(); ++i)
      for (std::size_t j = i + 1; j < centers.size(); ++j)
        if (wrap2(centers[i] - centers[j]).norm() <= 2.0 * r) {
          all.ok = false;
          all.why = "tubes overlap";
          all.failing = Eigen::Vector3d(centers[j][0], centers[j][1], 0.0);
          *fail = all;
          return all;
        }
    for (const Eigen::Vector2d& c : centers) {
      TubeFit t = fit_tube(f, c, r, opts.n_angle);
      if (!t.ok) {
        *fail = t;
        all.ok = false;
        return all;
      }
      all.kappa = std::min(all.kappa, t.kappa);
    }
    return all;
  };

  double r = opts.tube_radius;
  TubeFit fit, fail;
  if (r > 0.0) {
    fit = try_radius(r, &fail);
    if (!fit.ok) throw ExcisionError("tube radius " + std::to_string(r) + ": " + fail.why, fail.failing);
  } else {
    r = 0.05;
    for (int k = 0; k < 16; ++k, r *= 0.5) {
      fit = try_radius(r, &fail);
      if (fit.ok) break;
    }
    if (!fit.ok) throw ExcisionError("no admissible tube radius down to " + std::to_string(r) + ": " + fail.why, fail.failing);
  }
  const double kappa = fit.kappa;

  ExcisionResult out;
  out.centers = centers;
  out.tube_radius = r;
  out.kappa = kappa;
  out.system = susp;
  out.system.name = susp.name + "_excised";

  TrapSurface& s = out.boundary;
  s.name = "excised_tube";
  s.topology = Topology::Torus;
  s.chart_id = ch.id;
  // Negative outside every tube, i.e. in the region the excision keeps.
  s.level = [centers, r, kappa](const Vec& x) {
    double v = -std::numeric_limits<double>::infinity();
    const double e = std::exp(kappa * x[2]);
    for (const Eigen::Vector2d& c : centers) v = std::max(v, r - wrap2(x.head(2) - c).norm() * e);
    return v;
  };
  s.level_gradient = [centers, r, kappa](const Vec& x) {
    double best = -std::numeric_limits<double>::infinity();
    Vec g = Vec::Zero(3);
    const double e = std::exp(kappa * x[2]);
    for (const Eigen::Vector2d& c : centers) {
      const Eigen::Vector2d d = wrap2(x.head(2) - c);
      const double n = d.norm();
      const double v = r - n * e;
      if (v > best && n > 0.0) {
        best = v;
        g.head(2) = -e * d / n;
        g[2] = -kappa * n * e;
      }
    }
    return g;
  };
  for (const Eigen::Vector2d& c : centers) {
    for (int k = 0; k < opts.n_fiber; ++k) {
      const double sv = static_cast<double>(k) / opts.n_fiber;
      const double rad = r * std::exp(-kappa * sv);
      for (int j = 0; j < opts.n_angle; ++j) {
        const double a = kTwoPi * j / opts.n_angle;
        const Eigen::Vector2d u(std::cos(a), std::sin(a));
        Vec p(3), n(3);
        p << reduce_unit(c[0] + rad * u[0]), reduce_unit(c[1] + rad * u[1]), sv;
        n << -u[0], -u[1], -kappa * rad;
        s.points.push_back(p);
        s.normals.push_back(n / n.norm());
      }
    }
  }
  s.max_gap = std::max(kTwoPi * r / opts.n_angle, std::hypot(1.0, kappa * r) / opts.n_fiber);

  const CrossingMeasure m = measure_crossing(out.system, s);
  if (m.crossing != Crossing::Inward)
    throw ExcisionError("excised boundary is not crossed inward (margin " + std::to_string(m.margin) + ")",
                        s.points[m.worst]);
  out.margin = m.margin;
  return out;
}

ExcisionResult excise_repelling_orbit(const SmoothSystem& susp, const PeriodicOrbitResult& orbit,
                                      const ExcisionOptions& opts) {
  return excise_repelling_orbits(susp, {orbit}, opts);
}

std::vector<PeriodicOrbitResult> suspension_orbits(const SmoothSystem& susp, const std::vector<Eigen::Vector2d>& seeds,
                                                   int chart) {
  Section sec;
  sec.chart = chart;
  sec.normal = Eigen::Vector3d(0.0, 0.0, 1.0);
  sec.offset = 0.0;
  sec.event_tag = "seam";
  PeriodicOrbitOptions po;
  po.max_return_time = 2.0;
  po.tol = 1e-11;
  std::vector<PeriodicOrbitResult> out;
  for (const Eigen::Vector2d& p : seeds)
    out.push_back(find_periodic_orbit(susp, sec, State{chart, Eigen::Vector3d(p[0], p[1], 0.0)}, po));
  return out;
}

// ---------------------------------------------------------------------------
// Gluing

CompatibilityReport surgery_compatibility(const GlueDescriptor& desc) {
  CompatibilityReport r;
  if (!desc.outer.system || !desc.inner.system) {
    r.reason = "descriptor is missing a system";
    return r;
  }
  if (desc.outer.surface.topology != desc.inner.surface.topology) {
    r.reason = "topology mismatch: " + to_string(desc.outer.surface.topology) + " against " +
               to_string(desc.inner.surface.topology);
    return r;
  }
  if (!(desc.collar_width > 0.0)) {
    r.reason = "collar width must be positive";
    return r;
  }
  const CrossingMeasure mo = measure_crossing(*desc.outer.system, desc.outer.surface);
  const CrossingMeasure mi = measure_crossing(*desc.inner.system, desc.inner.surface);
  r.outer_margin = mo.margin;
  r.inner_margin = mi.margin;
  r.outer_measured = mo.crossing;
  r.inner_measured = mi.crossing;
  if (desc.outer.crossing != Crossing::Inward || desc.inner.crossing != Crossing::Inward) {
    r.reason = "incompatible crossing directions: outer " + to_string(desc.outer.crossing) + ", inner " +
               to_string(desc.inner.crossing);
    return r;
  }
  if (mo.crossing != desc.outer.crossing) {
    r.reason = "outer boundary declared " + to_string(desc.outer.crossing) + " but measured " + to_string(mo.crossing);
    return r;
  }
  if (mi.crossing != desc.inner.crossing) {
    r.reason = "inner boundary declared " + to_string(desc.inner.crossing) + " but measured " + to_string(mi.crossing);
    return r;
  }
  r.compatible = true;
  r.reason = "ok";
  return r;
}

GlueResult glue_flows(const SmoothSystem& outer, const SmoothSystem& inner, const GlueDescriptor& desc) {
  GlueResult out;
  out.compatibility = surgery_compatibility(desc);
  if (!out.compatibility.compatible) throw GluingError("gluing '" + desc.name + "': " + out.compatibility.reason);

  if (desc.mode == GlueMode::Blend) {
    if (outer.charts.size() != 1 || inner.charts.size() != 1 || outer.chart(0).coord_dim != inner.chart(0).coord_dim ||
        outer.chart(0).sphere_dim != 0 || inner.chart(0).sphere_dim != 0 || outer.chart(0).periodic != 0)
      throw GluingError("gluing '" + desc.name + "': blending needs two flat single-chart systems of equal dimension");
    if (!desc.inner.surface.level_gradient) throw GluingError("gluing '" + desc.name + "': inner level has no gradient");
    const double w = desc.collar_width;
    auto level = desc.inner.surface.level;
    auto grad = desc.inner.surface.level_gradient;
    auto fo = outer.evaluate, fi = inner.evaluate;
    auto jo = outer.jacobian, ji = inner.jacobian;
    SmoothSystem s = outer;
    s.name = desc.name.empty() ? outer.name + "+" + inner.name : desc.name;
    s.evaluate = [=](int, const Vec& x) -> Vec {
      const double l = level(x);
      if (l <= 0.0) return fi(0, x);
      if (l >= w) return fo(0, x);
      const double chi = quintic_smoothstep(l / w);
      return (1.0 - chi) * fi(0, x) + chi * fo(0, x);
    };
    s.jacobian = [=](int, const Vec& x) -> Mat {
      const double l = level(x);
      if (l <= 0.0) return ji(0, x);
      if (l >= w) return jo(0, x);
      const double chi = quintic_smoothstep(l / w);
      const double dchi = quintic_smoothstep_derivative(l / w) / w;
      return (1.0 - chi) * ji(0, x) + chi * jo(0, x) + (fo(0, x) - fi(0, x)) * (dchi * grad(x)).transpose();
    };
    for (const Transition& t : inner.transitions) s.transitions.push_back(t);
    s.reverser = nullptr;
    // Collar grid: layers pushed out from the inner surface along its normals.
    const auto& pts = desc.inner.surface.points;
    const auto& nrm = desc.inner.surface.normals;
    const int layers = 10;
    const std::size_t stride = std::max<std::size_t>(1, pts.size() / 1000);
    out.collar_min_norm = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); i += stride)
      for (int k = 0; k < layers; ++k) {
        const Vec x = pts[i] + (k + 0.5) / layers * w * nrm[i];
        out.collar_min_norm = std::min(out.collar_min_norm, s.evaluate(0, x).norm());
        ++out.collar_samples;
      }
    out.system = std::move(s);
    return out;
  }

  if (!desc.transfer) throw GluingError("gluing '" + desc.name + "': transfer mode needs a transfer map");
  const int offset = static_cast<int>(outer.charts.size());
  SmoothSystem m = merge_systems(outer, inner, desc.name.empty() ? outer.name + "+" + inner.name : desc.name);
  const int from = outer.chart_index(desc.outer.surface.chart_id);
  auto level = desc.outer.surface.level;
  auto transfer = desc.transfer;
  Transition t;
  t.from = from;
  t.tag = desc.name.empty() ? "transfer" : desc.name;
  t.guard = [level](const Vec& x) { return -level(x); };
  t.apply = [transfer, offset](const Vec& x) {
    State s = transfer(x);
    s.chart += offset;
    return s;
  };
  m.transitions.push_back(t);
  m.sample = outer.sample;
  out.collar_min_norm = std::numeric_limits<double>::infinity();
  for (const Vec& p : desc.outer.surface.points) {
    out.collar_min_norm = std::min(out.collar_min_norm, outer.evaluate(from, p).norm());
    ++out.collar_samples;
  }
  const int to = inner.chart_index(desc.inner.surface.chart_id);
  for (const Vec& p : desc.inner.surface.points) {
    out.collar_min_norm = std::min(out.collar_min_norm, inner.evaluate(to, p).norm());
    ++out.collar_samples;
  }
  out.system = std::move(m);
  return out;
}

SmoothSystem stereo_gradient_system() {
  SmoothSystem s;
  s.name = "stereo_gradient";
  Chart c;
  c.id = "south";
  c.coord_dim = 3;
  c.manifold_dim = 3;
  s.charts = {c};
  s.evaluate = [](int, const Vec& y) { return Vec(-y); };
  s.jacobian = [](int, const Vec& y) { return Mat(-Mat::Identity(y.size(), y.size())); };
  s.sample = [](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    return State{0, Eigen::Vector3d(u(rng), u(rng), u(rng))};
  };
  return s;
}

// ---------------------------------------------------------------------------
// Assembly

namespace {

SmoothSystem rename_chart(SmoothSystem s, int c, const std::string& id) {
  s.charts.at(static_cast<std::size_t>(c)).id = id;
  return s;
}

double transfer_threshold(double radius) { return (radius * radius - 1.0) / (radius * radius + 1.0); }

}  // namespace

State Assembly::from_ambient(const Vec& u) const {
  if (u.size() != 4) throw InvalidInput("from_ambient: expected a unit vector of R^4");
  const Vec v = u / u.norm();
  if (v[3] > transfer_threshold(config.transfer_radius)) return State{chart_s3, v};
  return State{chart_south, stereo_from_north(v)};
}

Assembly theorem1_assembly(const AssemblyConfig& cfg) {
  if (!(cfg.ball_radius + cfg.collar_width < cfg.transfer_radius))
    throw InvalidInput("theorem1_assembly: the glued ball must lie inside the transfer radius");
  if (!(cfg.ball_radius > 1.0 + cfg.cycle_tube)) throw InvalidInput("theorem1_assembly: ball must contain the cycle tube");
  Assembly a;
  a.config = cfg;

  // Sink ball of the north-south flow replaced by the local cycle model.
  auto grad_south = std::make_shared<const SmoothSystem>(stereo_gradient_system());
  auto lemma = std::make_shared<const SmoothSystem>(lemma1_system());
  GlueDescriptor ball;
  ball.name = "sink_ball";
  ball.outer = {sphere_surface("south", Vec::Zero(3), cfg.ball_radius + cfg.collar_width, cfg.surface_samples),
                Crossing::Inward, grad_south};
  ball.inner = {sphere_surface("lemma1", Vec::Zero(3), cfg.ball_radius, cfg.surface_samples), Crossing::Inward, lemma};
  ball.collar_width = cfg.collar_width;
  ball.mode = GlueMode::Blend;
  GlueResult g1 = glue_flows(*grad_south, *lemma, ball);

  // Plykin suspension with the orbit of the source at 0 excised.
  const SmoothSystem plykin = rename_chart(suspension_flow(plykin_system(cfg.plykin)), 0, "plykin");
  std::vector<Eigen::Vector2d> sources;
  for (const TorusPoint2& c : cfg.plykin.centers) sources.emplace_back(c.x, c.y);
  const std::vector<PeriodicOrbitResult> orbits = suspension_orbits(plykin, {sources.front()});
  a.excision = excise_repelling_orbit(plykin, orbits.front(), cfg.excision);
  a.remaining_sources.assign(sources.begin() + 1, sources.end());

  // Trapping tube of the local model cycle replaced by P.
  auto south = std::make_shared<const SmoothSystem>(g1.system);
  auto pfield = std::make_shared<const SmoothSystem>(a.excision.system);
  const int side = std::max(8, static_cast<int>(std::lround(std::sqrt(cfg.surface_samples))));
  GlueDescriptor cyc;
  cyc.name = "cycle_tube";
  cyc.outer = {cycle_tube_surface("south", cfg.cycle_tube, side, side), Crossing::Inward, south};
  cyc.inner = {a.excision.boundary, Crossing::Inward, pfield};
  cyc.collar_width = cfg.collar_width;
  cyc.mode = GlueMode::Transfer;
  const Eigen::Vector2d c = a.excision.centers.front();
  const double r = a.excision.tube_radius, kappa = a.excision.kappa;
  // Longitude phi goes to the fiber, meridian psi to the angle about the
  // cone point (halved: the double cover wraps the quotient circle twice).
  cyc.transfer = [c, r, kappa](const Vec& y) {
    const double rho = std::hypot(y[0], y[1]);
    double phi = std::atan2(y[1], y[0]);
    if (phi < 0.0) phi += kTwoPi;
    double psi = std::atan2(y[2], rho - 1.0);
    if (psi < 0.0) psi += kTwoPi;
    const double s = std::min(phi / kTwoPi, std::nextafter(1.0, 0.0));
    const double rad = r * std::exp(-kappa * s) * (1.0 + 1e-9);
    Vec x(3);
    x << reduce_unit(c[0] + rad * std::cos(0.5 * psi)), reduce_unit(c[1] + rad * std::sin(0.5 * psi)), s;
    return State{0, x};
  };
  GlueResult g2 = glue_flows(*south, *pfield, cyc);

  // Ambient chart on S^3 away from the south cap.
  SmoothSystem s3 = rename_chart(gradient_sphere_flow(3), 0, "s3");
  SmoothSystem sys = merge_systems(s3, g2.system, "theorem1_s3");
  const double thr = transfer_threshold(cfg.transfer_radius);
  const double back = cfg.transfer_radius + 1.0;
  Transition down;
  down.from = a.chart_s3;
  down.tag = "to_south";
  down.guard = [thr](const Vec& x) { return thr - x[3]; };
  down.apply = [](const Vec& x) { return State{1, stereo_from_north(x)}; };
  sys.transitions.push_back(down);
  Transition up;
  up.from = a.chart_south;
  up.tag = "to_s3";
  up.guard = [back](const Vec& y) { return y.norm() - back; };
  up.apply = [](const Vec& y) { return State{0, inverse_stereo_from_north(y)}; };
  sys.transitions.push_back(up);
  a.chart_plykin = sys.chart_index("plykin");

  sys.sample = [thr](std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Vec v(4);
    for (int i = 0; i < 4; ++i) v[i] = g(rng);
    v /= v.norm();
    if (v[3] > thr) return State{0, v};
    return State{1, stereo_from_north(v)};
  };
  a.system = std::move(sys);
  a.trap = a.excision.boundary;
  a.descriptors = {ball, cyc};
  a.glue_results = {g1, g2};
  return a;
}

}  // namespace aflow
