#include "aflow/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

namespace aflow {

namespace {

using Mat2i = Eigen::Matrix<long long, 2, 2>;

Mat2i integer_power(int power) {
  Mat2i base;
  base << 2, 1, 1, 1;
  Mat2i out = Mat2i::Identity();
  for (int i = 0; i < power; ++i) out = out * base;
  return out;
}

Mat2i integer_inverse_power(int power) {
  Mat2i base;
  base << 1, -1, -1, 2;
  Mat2i out = Mat2i::Identity();
  for (int i = 0; i < power; ++i) out = out * base;
  return out;
}

TorusPoint2 apply_integer(const Mat2i& m, const TorusPoint2& p) {
  // Entries stay small for the powers used here, so the products are exact
  // enough; reduction keeps the result on the torus.
  return torus_reduce(static_cast<double>(m(0, 0)) * p.x + static_cast<double>(m(0, 1)) * p.y,
                      static_cast<double>(m(1, 0)) * p.x + static_cast<double>(m(1, 1)) * p.y);
}

std::string point_str(const TorusPoint2& p) {
  std::ostringstream os;
  os.precision(17);
  os << "(" << p.x << ", " << p.y << ")";
  return os.str();
}

const std::array<TorusPoint2, 4> kTwoTorsion{{{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.5}, {0.5, 0.5}}};

}  // namespace

Eigen::Matrix2d anosov_matrix(int power) {
  if (power < 1) throw InvalidInput("anosov_matrix: power must be >= 1");
  return integer_power(power).cast<double>();
}

double anosov_expansion() { return (3.0 + std::sqrt(5.0)) / 2.0; }

MapValue anosov_map(const TorusPoint2& p, int power) {
  if (power < 1) throw InvalidInput("anosov_map: power must be >= 1");
  return {apply_integer(integer_power(power), p), anosov_matrix(power)};
}

std::string to_string(BumpProfile b) { return b == BumpProfile::Poly ? "poly" : "tailed"; }

BumpProfile bump_profile_from_string(const std::string& s) {
  if (s == "poly") return BumpProfile::Poly;
  if (s == "tailed") return BumpProfile::Tailed;
  throw InvalidInput("unknown bump profile '" + s + "' (expected poly or tailed)");
}

DaConfig plykin_default_config() {
  DaConfig cfg;
  cfg.base_power = 3;
  cfg.centers.assign(kTwoTorsion.begin(), kTwoTorsion.end());
  cfg.radius = 0.2;
  return cfg;
}

// ---------------------------------------------------------------------------
// DA map

namespace {

double raw_bump(BumpProfile prof, double w, double t) {
  if (t >= 1.0) return 0.0;
  const double q = 1.0 - t * t;
  if (prof == BumpProfile::Poly) return q * q;
  return w * q * q * q / std::sqrt(w * w + t * t);
}

double raw_slope_over_t(BumpProfile prof, double w, double t) {
  if (t >= 1.0) return 0.0;
  const double q = 1.0 - t * t;
  if (prof == BumpProfile::Poly) return -4.0 * q;
  const double s = w * w + t * t;
  return -w * q * q * (6.0 * s + q) / (s * std::sqrt(s));
}

// Smallest stable-direction multiplier over the disk of relative radius t_max.
// Along a ray at angle theta from the unstable axis the multiplier is
// mu + S (B + t B'(t) cos^2 theta), which is affine in cos^2 theta, so the
// minimum over angles is attained at cos^2 in {0, 1}.
double stable_multiplier_min(BumpProfile prof, double w, double mu, double strength, double t_max) {
  constexpr int n = 20000;
  double lo = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    const double t = t_max * i / n;
    const double b = raw_bump(prof, w, t);
    const double tb = t * t * raw_slope_over_t(prof, w, t);
    lo = std::min(lo, mu + strength * std::min(b, b + tb));
  }
  return lo;
}

double default_width(double mu, double strength) {
  // Widest tailed profile whose stable multiplier stays above 0.3 mu.
  for (double w = 0.2; w > 1e-6; w *= 0.8)
    if (stable_multiplier_min(BumpProfile::Tailed, w, mu, strength, 1.0) >= 0.3 * mu) return w;
  return 1e-6;
}

}  // namespace

DaMap::DaMap(DaConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_power < 1) throw ConfigError("DaConfig: base_power must be a positive integer");
  if (cfg_.centers.empty()) throw ConfigError("DaConfig: at least one center is required");
  if (!(cfg_.radius > 0.0 && cfg_.radius < 0.5)) throw ConfigError("DaConfig: radius must lie in (0, 0.5)");
  if (!std::isfinite(cfg_.center_stable_eigenvalue) || cfg_.center_stable_eigenvalue <= 1.0)
    throw ConfigError("DaConfig: center stable eigenvalue must exceed 1 (source condition)");
  for (auto& c : cfg_.centers) c = torus_reduce(c.x, c.y);

  a_ = anosov_matrix(cfg_.base_power);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(a_);
  mu_ = es.eigenvalues()[0];
  vs_ = es.eigenvectors().col(0);
  vu_ = es.eigenvectors().col(1);
  if (vs_[0] < 0.0) vs_ = -vs_;
  if (vu_[0] < 0.0) vu_ = -vu_;
  strength_ = cfg_.center_stable_eigenvalue - mu_;

  if (cfg_.profile == BumpProfile::Tailed)
    width_ = cfg_.bump_width > 0.0 ? cfg_.bump_width : default_width(mu_, strength_);
  else
    width_ = 0.0;

  const std::size_t n = cfg_.centers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const TorusPoint2& c = cfg_.centers[i];
    for (std::size_t j = i + 1; j < n; ++j)
      if (torus_distance(c, cfg_.centers[j]) <= 2.0 * cfg_.radius)
        throw ConfigError("DaConfig: perturbation disks around " + point_str(c) + " and " +
                          point_str(cfg_.centers[j]) + " overlap");
    const double dneg = torus_distance(c, torus_negate(c));
    if (dneg > 0.0 && dneg <= 2.0 * cfg_.radius)
      throw ConfigError("DaConfig: disk around " + point_str(c) + " meets its image under p -> -p");
    if (torus_distance(apply_integer(integer_power(cfg_.base_power), c), c) > 1e-12)
      throw ConfigError("DaConfig: center " + point_str(c) + " is not fixed by the Anosov power");
  }

  const double min_mult = stable_multiplier_min(cfg_.profile, width_, mu_, strength_, 1.0);
  if (min_mult <= 0.0) {
    std::ostringstream os;
    os << "DaConfig: map is not a diffeomorphism (stable multiplier reaches " << min_mult
       << " <= 0 inside the perturbation disk for profile " << to_string(cfg_.profile) << ")";
    throw ConfigError(os.str());
  }

  double max_tb = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double t = i / 2000.0;
    max_tb = std::max(max_tb, t * bump(t));
  }
  max_push_ = strength_ * max_tb * cfg_.radius;

  for (const TorusPoint2& c : cfg_.centers) {
    Eigen::EigenSolver<Eigen::Matrix2d> ev(jacobian(c));
    for (int k = 0; k < 2; ++k)
      if (std::abs(ev.eigenvalues()[k]) <= 1.0)
        throw ConfigError("DaConfig: center " + point_str(c) + " is not a hyperbolic source");
  }

  // Dense determinant sample.
  constexpr int grid = 200;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      const TorusPoint2 p{(i + 0.5) / grid, (j + 0.5) / grid};
      if (jacobian(p).determinant() <= 0.0)
        throw ConfigError("DaConfig: Jacobian determinant is not positive at " + point_str(p));
    }
}

double DaMap::bump(double t) const { return raw_bump(cfg_.profile, width_, t); }

double DaMap::bump_slope_over_t(double t) const { return raw_slope_over_t(cfg_.profile, width_, t); }

TorusPoint2 DaMap::image(const TorusPoint2& p) const {
  // Same arithmetic as anosov_map, so the two agree bitwise off the disks.
  Eigen::Vector2d y(a_(0, 0) * p.x + a_(0, 1) * p.y, a_(1, 0) * p.x + a_(1, 1) * p.y);
  for (const TorusPoint2& c : cfg_.centers) {
    const Eigen::Vector2d d = torus_displacement(c, p);
    const double t = d.norm() / cfg_.radius;
    if (t >= 1.0) continue;
    y += strength_ * bump(t) * d.dot(vs_) * vs_;
  }
  return torus_reduce(y[0], y[1]);
}

Eigen::Matrix2d DaMap::jacobian(const TorusPoint2& p) const {
  Eigen::Matrix2d j = a_;
  const double r2 = cfg_.radius * cfg_.radius;
  for (const TorusPoint2& c : cfg_.centers) {
    const Eigen::Vector2d d = torus_displacement(c, p);
    const double t = d.norm() / cfg_.radius;
    if (t >= 1.0) continue;
    const double sigma = d.dot(vs_);
    const Eigen::Vector2d grad = bump(t) * vs_ + sigma * bump_slope_over_t(t) / r2 * d;
    j += strength_ * vs_ * grad.transpose();
  }
  return j;
}

TorusPoint2 DaMap::inverse(const TorusPoint2& y) const {
  // The perturbation only moves points along v_s, so the preimage lies on the
  // stable line through the Anosov preimage z: x = z + tau v_s with
  //   tau * mu + G(z + tau v_s) = 0,
  // G being the scalar push. The left side is increasing in tau.
  const TorusPoint2 z = apply_integer(integer_inverse_power(cfg_.base_power), y);
  auto push = [&](double tau) {
    const TorusPoint2 x = torus_reduce(z.x + tau * vs_[0], z.y + tau * vs_[1]);
    double g = 0.0;
    for (const TorusPoint2& c : cfg_.centers) {
      const Eigen::Vector2d d = torus_displacement(c, x);
      const double t = d.norm() / cfg_.radius;
      if (t < 1.0) g += strength_ * bump(t) * d.dot(vs_);
    }
    return tau * mu_ + g;
  };
  double bound = max_push_ / mu_ + 1e-9;
  double lo = -bound, hi = bound;
  if (push(0.0) == 0.0) return z;
  for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (push(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double tau = 0.5 * (lo + hi);
  return torus_reduce(z.x + tau * vs_[0], z.y + tau * vs_[1]);
}

double DaMap::min_stable_multiplier(double t_max) const {
  return stable_multiplier_min(cfg_.profile, width_, mu_, strength_, t_max);
}

double DaMap::saddle_offset() const {
  const double target = (1.0 - mu_) / strength_;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (bump(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

bool same_config(const DaConfig& a, const DaConfig& b) {
  return a.base_power == b.base_power && a.centers == b.centers && a.radius == b.radius &&
         a.center_stable_eigenvalue == b.center_stable_eigenvalue && a.profile == b.profile &&
         a.bump_width == b.bump_width;
}

// Validation is expensive, so the free functions keep the last validated map.
std::shared_ptr<const DaMap> cached_map(const DaConfig& cfg, bool plykin) {
  static std::mutex mutex;
  static std::shared_ptr<const DaMap> last_da, last_plykin;
  std::lock_guard lock(mutex);
  auto& slot = plykin ? last_plykin : last_da;
  if (slot && same_config(slot->config(), cfg)) return slot;
  if (plykin) validate_plykin_config(cfg);
  slot = std::make_shared<const DaMap>(cfg);
  return slot;
}

}  // namespace

MapValue da_map(const TorusPoint2& p, const DaConfig& cfg) {
  auto m = cached_map(cfg, false);
  return {m->image(p), m->jacobian(p)};
}

void validate_plykin_config(const DaConfig& cfg) {
  // Equivariance is a property of the center set: the odd push term is
  // symmetric only if the centers are closed under p -> -p.
  for (const TorusPoint2& c : cfg.centers) {
    const TorusPoint2 cr = torus_reduce(c.x, c.y);
    const TorusPoint2 neg = torus_negate(cr);
    const bool closed = std::any_of(cfg.centers.begin(), cfg.centers.end(), [&](const TorusPoint2& o) {
      return torus_distance(torus_reduce(o.x, o.y), neg) < 1e-12;
    });
    if (!closed) {
      // A witness: the point at half radius from c along v_s maps
      // non-equivariantly because only one of c, -c carries a push.
      Eigen::Matrix2d a = anosov_matrix(std::max(cfg.base_power, 1));
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(a);
      Eigen::Vector2d vs = es.eigenvectors().col(0);
      const TorusPoint2 w = torus_reduce(cr.x + 0.5 * cfg.radius * vs[0], cr.y + 0.5 * cfg.radius * vs[1]);
      throw EquivarianceError("Plykin config is not equivariant under p -> -p: center " + point_str(cr) +
                                  " has no partner at " + point_str(neg) + "; witness " + point_str(w),
                              w);
    }
  }
  if (cfg.base_power != 3) throw ConfigError("Plykin config: base_power must be 3");
  for (const TorusPoint2& t : kTwoTorsion) {
    const bool present = std::any_of(cfg.centers.begin(), cfg.centers.end(),
                                     [&](const TorusPoint2& c) { return torus_distance(c, t) < 1e-12; });
    if (!present || cfg.centers.size() != 4)
      throw ConfigError("Plykin config: centers must be the four two-torsion points");
  }
  const DaMap m(cfg);
  // Spot-check the commuting square on a deterministic sample.
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const TorusPoint2 p{(i + 0.37) / 64.0, (j + 0.61) / 64.0};
      if (torus_distance(m.image(torus_negate(p)), torus_negate(m.image(p))) > 1e-12)
        throw EquivarianceError("Plykin map fails f(-p) = -f(p) at " + point_str(p), p);
    }
}

QuotientMapValue plykin_map(const SphereQuotientPoint& q, const DaConfig& cfg) {
  auto m = cached_map(cfg, true);
  return {quotient_canonical(m->image(q.rep)), m->jacobian(q.rep)};
}

// ---------------------------------------------------------------------------
// Map systems

namespace {

Chart torus_chart() {
  Chart c;
  c.id = "torus";
  c.coord_dim = 2;
  c.manifold_dim = 2;
  c.periodic = 2;
  return c;
}

TorusPoint2 tp(const Vec& x) { return {x[0], x[1]}; }
Vec vec(const TorusPoint2& p) { return Eigen::Vector2d(p.x, p.y); }

State uniform_torus(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = u(rng);
  const double b = u(rng);
  return {0, Eigen::Vector2d(a, b)};
}

SmoothSystem map_system_from(std::shared_ptr<const DaMap> m, std::string name) {
  SmoothSystem s;
  s.name = std::move(name);
  s.kind = SystemKind::Map;
  s.charts = {torus_chart()};
  s.evaluate = [m](int, const Vec& x) { return vec(m->image(tp(x))); };
  s.jacobian = [m](int, const Vec& x) { return Mat(m->jacobian(tp(x))); };
  s.inverse = [m](int, const Vec& x) { return vec(m->inverse(tp(x))); };
  s.sample = uniform_torus;
  return s;
}

}  // namespace

SmoothSystem anosov_system(int power) {
  if (power < 1) throw InvalidInput("anosov_system: power must be >= 1");
  const Mat2i fwd = integer_power(power), inv = integer_inverse_power(power);
  const Mat j = fwd.cast<double>();
  SmoothSystem s;
  s.name = "anosov";
  s.kind = SystemKind::Map;
  s.charts = {torus_chart()};
  s.evaluate = [fwd](int, const Vec& x) { return vec(apply_integer(fwd, tp(x))); };
  s.jacobian = [j](int, const Vec&) { return j; };
  s.inverse = [inv](int, const Vec& x) { return vec(apply_integer(inv, tp(x))); };
  s.sample = uniform_torus;
  return s;
}

SmoothSystem da_system(const DaConfig& cfg) {
  return map_system_from(std::make_shared<const DaMap>(cfg), "da");
}

SmoothSystem plykin_system(const DaConfig& cfg) {
  validate_plykin_config(cfg);
  SmoothSystem s = map_system_from(std::make_shared<const DaMap>(cfg), "plykin");
  s.symmetries.push_back(Symmetry{
      0, [](const Vec& x) { return vec(torus_negate(tp(x))); }, [](const Vec&, const Vec& v) { return Vec(-v); }});
  return s;
}

// ---------------------------------------------------------------------------
// Suspension

namespace {

SmoothSystem build_suspension(const SmoothSystem& map_system, bool reversed) {
  if (map_system.kind != SystemKind::Map || map_system.charts.size() != 1 || map_system.chart(0).coord_dim != 2)
    throw InvalidInput("suspension_flow: expected a map system on a single two-dimensional chart");
  SmoothSystem s;
  s.name = map_system.name + "_suspension" + (reversed ? "_reversed" : "");
  s.kind = SystemKind::VectorField;
  Chart c;
  c.id = "mapping_torus";
  c.coord_dim = 3;
  c.manifold_dim = 3;
  c.periodic = map_system.chart(0).periodic;
  c.constant_field = true;
  c.sample = [](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return Vec(Eigen::Vector3d(u(rng), u(rng), u(rng)));
  };
  s.charts = {c};
  const double speed = reversed ? -1.0 : 1.0;
  s.evaluate = [speed](int, const Vec&) { return Vec(Eigen::Vector3d(0.0, 0.0, speed)); };
  s.jacobian = [](int, const Vec&) { return Mat(Mat::Zero(3, 3)); };

  auto f = map_system.evaluate;
  auto jf = map_system.jacobian;
  auto finv = map_system.inverse;
  Transition seam;
  seam.from = 0;
  seam.tag = "seam";
  if (!reversed) {
    seam.guard = [](const Vec& x) { return x[2] - 1.0; };
    seam.time_to_event = [](const Vec& x) { return std::max(0.0, 1.0 - x[2]); };
    seam.apply = [f](const Vec& x) {
      Vec y(3);
      y.head(2) = f(0, x.head(2));
      y[2] = std::max(0.0, x[2] - 1.0);
      return State{0, y};
    };
    seam.jacobian = [jf](const Vec& x) {
      Mat j = Mat::Identity(3, 3);
      j.topLeftCorner(2, 2) = jf(0, x.head(2));
      return j;
    };
  } else {
    if (!finv) throw InvalidInput("suspension_flow: reversed suspension needs an invertible map");
    // Fiber coordinate lives in (0, 1]; crossing s = 0 applies the inverse.
    seam.guard = [](const Vec& x) { return -x[2]; };
    seam.time_to_event = [](const Vec& x) { return std::max(0.0, x[2]); };
    seam.apply = [finv](const Vec& x) {
      Vec y(3);
      y.head(2) = finv(0, x.head(2));
      y[2] = std::min(1.0, x[2] + 1.0);
      return State{0, y};
    };
    seam.jacobian = [jf, finv](const Vec& x) {
      Mat j = Mat::Identity(3, 3);
      j.topLeftCorner(2, 2) = jf(0, finv(0, x.head(2))).inverse();
      return j;
    };
  }
  s.transitions = {seam};
  for (const Symmetry& g : map_system.symmetries) {
    auto gp = g.point;
    auto gt = g.tangent;
    s.symmetries.push_back(Symmetry{0,
                                    [gp](const Vec& x) {
                                      Vec y = x;
                                      y.head(2) = gp(x.head(2));
                                      return y;
                                    },
                                    [gt](const Vec& x, const Vec& v) {
                                      Vec w = v;
                                      w.head(2) = gt(x.head(2), v.head(2));
                                      return w;
                                    }});
  }
  auto base_sample = map_system.sample;
  s.sample = [base_sample](std::mt19937_64& rng) {
    State b = base_sample(rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec x(3);
    x.head(2) = b.x;
    x[2] = u(rng);
    return State{0, x};
  };
  s.reverser = [map_system, reversed] { return build_suspension(map_system, !reversed); };
  return s;
}

}  // namespace

SmoothSystem suspension_flow(const SmoothSystem& map_system) { return build_suspension(map_system, false); }

// ---------------------------------------------------------------------------
// Local periodic-orbit model

Eigen::Vector3d lemma1_field(const CylinderPoint& c, bool time_reversed) {
  const double sgn = time_reversed ? -1.0 : 1.0;
  return sgn * Eigen::Vector3d(c.rho * (1.0 - c.rho), 1.0, -c.z);
}

SmoothSystem lemma1_system(bool time_reversed) {
  const double sgn = time_reversed ? -1.0 : 1.0;
  SmoothSystem s;
  s.name = time_reversed ? "lemma1_reversed" : "lemma1";
  Chart c;
  c.id = "lemma1";
  c.coord_dim = 3;
  c.manifold_dim = 3;
  s.charts = {c};
  // Cartesian form of rho' = rho(1 - rho), phi' = 1, z' = -z.
  s.evaluate = [sgn](int, const Vec& p) {
    const double rho = std::hypot(p[0], p[1]);
    return Vec(sgn * Eigen::Vector3d((1.0 - rho) * p[0] - p[1], (1.0 - rho) * p[1] + p[0], -p[2]));
  };
  s.jacobian = [sgn](int, const Vec& p) {
    const double rho = std::hypot(p[0], p[1]);
    double xx = 0.0, xy = 0.0, yy = 0.0;
    if (rho > 0.0) {
      xx = p[0] * p[0] / rho;
      xy = p[0] * p[1] / rho;
      yy = p[1] * p[1] / rho;
    }
    Mat j(3, 3);
    j << 1.0 - rho - xx, -xy - 1.0, 0.0,  //
        -xy + 1.0, 1.0 - rho - yy, 0.0,   //
        0.0, 0.0, -1.0;
    return Mat(sgn * j);
  };
  s.sample = [](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const double a = u(rng), b = u(rng), z = u(rng);
    return State{0, Eigen::Vector3d(a, b, z)};
  };
  s.reverser = [time_reversed] { return lemma1_system(!time_reversed); };
  return s;
}

// ---------------------------------------------------------------------------
// Sphere flows

SmoothSystem gradient_sphere_flow(int n) {
  if (n < 2) throw InvalidInput("gradient_sphere_flow: n must be >= 2");
  SmoothSystem s;
  s.name = "gradient_sphere" + std::to_string(n);
  Chart c;
  c.id = "sphere";
  c.coord_dim = n + 1;
  c.manifold_dim = n;
  c.sphere_dim = n + 1;
  s.charts = {c};
  s.evaluate = [n](int, const Vec& x) {
    Vec f = x[n] * x;
    f[n] -= 1.0;
    return f;
  };
  s.jacobian = [n](int, const Vec& x) {
    Mat j = x[n] * Mat::Identity(n + 1, n + 1);
    j.col(n) += x;
    return j;
  };
  s.sample = [n](std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Vec v(n + 1);
    for (int i = 0; i <= n; ++i) v[i] = g(rng);
    return State{0, Vec(v / v.norm())};
  };
  return s;
}

double quintic_smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * u * (u * (6.0 * u - 15.0) + 10.0);
}

double quintic_smoothstep_derivative(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return 30.0 * u * u * (u - 1.0) * (u - 1.0);
}

SmoothSystem extend_to_next_sphere(const SmoothSystem& flow, int equator_dim, AmbientEmbedding embed,
                                   ExtensionConfig cfg) {
  if (flow.kind != SystemKind::VectorField) throw InvalidInput("extend_to_next_sphere: expected a vector field");
  if (!(cfg.inner_latitude > 0.0 && cfg.inner_latitude < cfg.outer_latitude &&
        cfg.outer_latitude < std::numbers::pi / 2))
    throw InvalidInput("extend_to_next_sphere: need 0 < inner < outer < pi/2");
  const int m = equator_dim;  // ambient dimension of the equatorial sphere
  const double th1 = cfg.inner_latitude, th2 = cfg.outer_latitude;
  const double cap_edge = std::cos(th2);

  // Cutoff on the equatorial speed as a function of latitude.
  auto chi = [th1, th2](double th) { return 1.0 - quintic_smoothstep((std::abs(th) - th1) / (th2 - th1)); };
  auto chi_prime = [th1, th2](double th) {
    const double sg = th < 0.0 ? -1.0 : 1.0;
    return -sg * quintic_smoothstep_derivative((std::abs(th) - th1) / (th2 - th1)) / (th2 - th1);
  };

  SmoothSystem s;
  s.name = flow.name + "_extended";
  for (int pole = 0; pole < 2; ++pole) {
    Chart c;
    c.id = pole == 0 ? "cap_north" : "cap_south";
    c.coord_dim = m;
    c.manifold_dim = m;
    s.charts.push_back(c);
  }
  const int offset = 2;
  for (const Chart& in : flow.charts) {
    Chart c = in;
    c.id = in.id + "@band";
    c.coord_dim = in.coord_dim + 1;
    c.manifold_dim = in.manifold_dim + 1;
    if (in.constant_field) {
      c.constant_field = false;
      c.step_override = 0.05;
    }
    s.charts.push_back(c);
  }

  auto g = flow.evaluate;
  auto jg = flow.jacobian;
  // In a cap, w' = 2 h^2 w with h^2 = 1 - |w|^2: the meridional part of
  // theta' = -sin(2 theta) written in the projected coordinates.
  s.evaluate = [=](int c, const Vec& x) -> Vec {
    if (c < offset) return 2.0 * (1.0 - x.squaredNorm()) * x;
    const Eigen::Index k = x.size() - 1;
    const double th = x[k];
    Vec out(x.size());
    out.head(k) = chi(th) * g(c - offset, x.head(k));
    out[k] = -std::sin(2.0 * th);
    return out;
  };
  s.jacobian = [=](int c, const Vec& x) -> Mat {
    if (c < offset) {
      const double h2 = 1.0 - x.squaredNorm();
      return 2.0 * h2 * Mat::Identity(x.size(), x.size()) - 4.0 * x * x.transpose();
    }
    const Eigen::Index k = x.size() - 1;
    const double th = x[k];
    Mat j = Mat::Zero(x.size(), x.size());
    const double w = chi(th);
    if (w != 0.0) j.topLeftCorner(k, k) = w * jg(c - offset, x.head(k));
    const double wp = chi_prime(th);
    if (wp != 0.0) j.col(k).head(k) = wp * g(c - offset, x.head(k));
    j(k, k) = -2.0 * std::cos(2.0 * th);
    return j;
  };

  for (int pole = 0; pole < 2; ++pole) {
    Transition t;
    t.from = pole;
    t.tag = "cap_exit";
    t.guard = [cap_edge](const Vec& w) { return w.norm() - cap_edge; };
    const double sign = pole == 0 ? 1.0 : -1.0;
    t.apply = [embed, sign, offset](const Vec& w) {
      const double r = std::min(1.0, w.norm());
      State e = embed(w / r);
      Vec y(e.x.size() + 1);
      y.head(e.x.size()) = e.x;
      y[e.x.size()] = sign * std::acos(r);
      return State{e.chart + offset, y};
    };
    s.transitions.push_back(t);
  }
  for (const Transition& in : flow.transitions) {
    Transition t;
    t.from = in.from + offset;
    t.tag = in.tag;
    auto gd = in.guard;
    auto ap = in.apply;
    auto jac = in.jacobian;
    t.guard = [gd](const Vec& x) { return gd(x.head(x.size() - 1)); };
    t.apply = [ap, offset](const Vec& x) {
      State e = ap(x.head(x.size() - 1));
      Vec y(e.x.size() + 1);
      y.head(e.x.size()) = e.x;
      y[e.x.size()] = x[x.size() - 1];
      return State{e.chart + offset, y};
    };
    if (jac)
      t.jacobian = [jac](const Vec& x) {
        const Eigen::Index k = x.size() - 1;
        Mat inner = jac(x.head(k));
        Mat j = Mat::Zero(inner.rows() + 1, k + 1);
        j.topLeftCorner(inner.rows(), k) = inner;
        j(inner.rows(), k) = 1.0;
        return j;
      };
    s.transitions.push_back(t);
  }
  for (const Symmetry& in : flow.symmetries) {
    auto gp = in.point;
    auto gt = in.tangent;
    s.symmetries.push_back(Symmetry{in.chart + offset,
                                    [gp](const Vec& x) {
                                      Vec y = x;
                                      y.head(x.size() - 1) = gp(x.head(x.size() - 1));
                                      return y;
                                    },
                                    [gt](const Vec& x, const Vec& v) {
                                      Vec w = v;
                                      w.head(v.size() - 1) = gt(x.head(x.size() - 1), v.head(v.size() - 1));
                                      return w;
                                    }});
  }
  s.sample = [embed, m, cap_edge, offset](std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    Vec v(m + 1);
    for (int i = 0; i <= m; ++i) v[i] = gauss(rng);
    v /= v.norm();
    const Vec w = v.head(m);
    const double r = w.norm();
    if (r < cap_edge) return State{v[m] > 0.0 ? 0 : 1, w};
    State e = embed(w / r);
    Vec y(e.x.size() + 1);
    y.head(e.x.size()) = e.x;
    y[e.x.size()] = std::asin(std::clamp(v[m], -1.0, 1.0));
    return State{e.chart + offset, y};
  };
  return s;
}

}  // namespace aflow
