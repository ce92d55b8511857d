#include "aflow/experiment.hpp"

#include "aflow/analysis.hpp"
#include "aflow/models.hpp"
#include "aflow/orbit.hpp"
#include "aflow/surgery.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

namespace aflow {

using json = nlohmann::ordered_json;

namespace {

using Params = std::vector<std::pair<std::string, std::string>>;

const std::vector<std::string> kGlobalKeys = {"system", "seed", "output_dir", "jobs", "analyses", "step"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end && *end == '\0';
}

bool is_number(const std::string& s) {
  double d;
  return parse_double(s, d);
}

bool is_unsigned(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

const Params* find_params(const std::vector<std::pair<std::string, Params>>& table, const std::string& name) {
  for (const auto& [n, p] : table)
    if (n == name) return &p;
  return nullptr;
}

const SystemInfo* find_system(const std::string& name) {
  for (const SystemInfo& s : system_catalog())
    if (s.name == name) return &s;
  return nullptr;
}

// System-specific resolution of "auto" analysis defaults.
std::string auto_value(const std::string& system, const std::string& analysis, const std::string& key) {
  const bool mapped = system == "da_susp" || system == "plykin_susp" || system == "theorem1_s3";
  if (key == "transient") return mapped ? "1000" : "0";
  if (key == "x0") {
    if (system == "anosov_susp") return "0.1234,0.5678,0";
    if (system == "da_susp" || system == "plykin_susp") return "0.3,0.6,0";
    if (system == "lemma1") return "1.1,0,0.1";
    return "sample";
  }
  if (analysis == "orientability" && key == "expect") {
    if (system == "anosov_susp" || system == "da_susp") return "orientable";
    if (system == "plykin_susp" || system == "theorem1_s3") return "non-orientable";
    return "any";
  }
  if (analysis == "box_counting") {
    if (system == "anosov_susp") return key == "lower" ? "2.95" : "3.05";
    return key == "lower" ? "2" : "3";
  }
  return "";
}

// Which analyses make sense for which systems.
std::string applicability_error(const std::string& system, const std::string& analysis) {
  const bool susp = system == "anosov_susp" || system == "da_susp" || system == "plykin_susp";
  if (analysis == "box_counting" && !susp) return "box_counting needs a suspension system";
  if ((analysis == "trap_check" || analysis == "invariance") && system == "anosov_susp")
    return analysis + " needs a system with a trap surface";
  if (analysis == "equator" && system != "extend_sphere") return "equator applies to extend_sphere only";
  if (analysis == "periodic_orbits" && (system == "gradient_sphere" || system == "extend_sphere"))
    return "periodic_orbits has no seeds for " + system;
  return "";
}

}  // namespace

// ---------------------------------------------------------------------------
// Catalogs

const std::vector<SystemInfo>& system_catalog() {
  static const std::vector<SystemInfo> cat = {
      {"anosov_susp", "Theorem 2", "suspension of the Anosov automorphism ((2,1),(1,1)) of T^2", {{"base_power", "1"}}},
      {"da_susp",
       "Theorem 2",
       "suspension of a derived-from-Anosov map: orientable one-dimensional expanding attractor and a source",
       {{"base_power", "1"},
        {"radius", "0.08"},
        {"center_stable_eigenvalue", "1.8"},
        {"profile", "tailed"},
        {"bump_width", "0"},
        {"tube_radius", "0"}}},
      {"plykin_susp",
       "Lemma 2",
       "suspension of the Plykin map of S^2 = T^2/(p ~ -p): attractor and four repelling orbits",
       {{"radius", "0.2"}, {"center_stable_eigenvalue", "1.8"}, {"profile", "tailed"}, {"bump_width", "0"}, {"tube_radius", "0"}}},
      {"lemma1", "Lemma 1", "local model rho' = rho(1-rho), phi' = 1, z' = -z", {{"reversed", "false"}}},
      {"gradient_sphere", "Theorem 1", "north-south gradient flow on S^n", {{"n", "3"}}},
      {"extend_sphere",
       "Theorem 3",
       "flow on S^{n-1} extended to S^n with a source at each pole",
       {{"n", "4"}, {"base", "theorem1_s3"}, {"inner_latitude", "0.6"}, {"outer_latitude", "1.0"}}},
      {"theorem1_s3",
       "Theorem 1",
       "A-flow on S^3: non-orientable two-dimensional expanding attractor, a source, a saddle and repelling orbits",
       {{"transfer_radius", "4"}, {"ball_radius", "2.9"}, {"collar_width", "0.1"}, {"cycle_tube", "0.3"}, {"tube_radius", "0"}}},
  };
  return cat;
}

const std::vector<std::pair<std::string, Params>>& analysis_catalog() {
  static const std::vector<std::pair<std::string, Params>> cat = {
      {"lyapunov",
       {{"T", "10000"}, {"transient", "auto"}, {"windows", "100"}, {"x0", "auto"}, {"expect", ""}, {"rtol", "0.01"}, {"atol", "0.01"}}},
      {"census", {{"samples", "1000"}, {"T", "1000"}, {"min_classified", "0.99"}, {"radius", "0.001"}}},
      {"trap_check", {}},
      {"invariance", {{"samples", "1000"}, {"T", "1000"}}},
      {"orientability",
       {{"T", "10000"}, {"epsilon", "0.005"}, {"transient", "auto"}, {"x0", "auto"}, {"expect", "auto"}, {"min_returns", "100"}}},
      {"box_counting",
       {{"section_points", "1000000"},
        {"fiber_values", "8"},
        {"inverse_scales", "4,6,9,13,19,28,42,64,90,128"},
        {"lower", "auto"},
        {"upper", "auto"},
        {"max_residual", "0.05"},
        {"transient", "1000"},
        {"write_cloud", "false"}}},
      {"equilibria", {{"tol", "1e-12"}}},
      {"periodic_orbits", {{"tol", "1e-10"}}},
      {"splitting", {{"T", "1000"}, {"window", "5"}, {"transient", "auto"}, {"x0", "auto"}}},
      {"cloud", {{"T", "100"}, {"every", "100"}, {"x0", "auto"}, {"transient", "0"}}},
      {"equator", {{"samples", "10000"}, {"off_equator", "100"}, {"T", "50"}, {"tol", "1e-6"}}},
  };
  return cat;
}

std::string list_systems_text() {
  std::ostringstream out;
  for (const SystemInfo& s : system_catalog()) {
    out << s.name << "  [" << s.anchor << "]  " << s.description << "\n";
    out << "    defaults:";
    if (s.defaults.empty()) out << " none";
    for (const auto& [k, v] : s.defaults) out << " " << k << "=" << v;
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Config

const std::string& ExperimentConfig::get(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end()) throw ConfigValidationError("missing key '" + key + "'", 0, key);
  return it->second;
}

double ExperimentConfig::number(const std::string& key) const {
  double d;
  if (!parse_double(get(key), d)) throw ConfigValidationError("key '" + key + "' must be a number", 0, key);
  return d;
}

long ExperimentConfig::integer(const std::string& key) const {
  const double d = number(key);
  if (d != std::floor(d)) throw ConfigValidationError("key '" + key + "' must be an integer", 0, key);
  return static_cast<long>(d);
}

namespace {

void check_value(const std::string& key, const std::string& value, const std::string& def, int line) {
  if (key == "seed") {
    if (!is_unsigned(value)) throw ConfigValidationError("seed must be a non-negative integer", line, key);
    return;
  }
  if (key == "jobs") {
    if (!is_unsigned(value) || std::stol(value) < 1) throw ConfigValidationError("jobs must be an integer >= 1", line, key);
    return;
  }
  if (key == "step") {
    double d;
    if (!parse_double(value, d) || !(d > 0.0)) throw ConfigValidationError("step must be a positive number", line, key);
    return;
  }
  if (!def.empty() && def != "auto" && is_number(def) && !is_number(value))
    throw ConfigValidationError("key '" + key + "' must be a number, got '" + value + "'", line, key);
  if ((def == "true" || def == "false") && value != "true" && value != "false")
    throw ConfigValidationError("key '" + key + "' must be true or false", line, key);
}

void resolve(ExperimentConfig& cfg, const std::map<std::string, std::pair<std::string, int>>& raw) {
  const auto sys_it = raw.find("system");
  if (sys_it == raw.end()) throw ConfigValidationError("missing required key 'system'", 0, "system");
  const SystemInfo* info = find_system(sys_it->second.first);
  if (!info)
    throw ConfigValidationError("unknown system '" + sys_it->second.first + "'", sys_it->second.second, "system");
  cfg.system = info->name;

  cfg.analyses.clear();
  if (const auto it = raw.find("analyses"); it != raw.end() && !it->second.first.empty()) {
    for (const std::string& a : split(it->second.first, ',')) {
      if (a.empty()) continue;
      if (!find_params(analysis_catalog(), a))
        throw ConfigValidationError("unknown analysis '" + a + "'", it->second.second, "analyses");
      if (std::find(cfg.analyses.begin(), cfg.analyses.end(), a) != cfg.analyses.end())
        throw ConfigValidationError("analysis '" + a + "' listed twice", it->second.second, "analyses");
      const std::string why = applicability_error(cfg.system, a);
      if (!why.empty()) throw ConfigValidationError(why, it->second.second, "analyses");
      cfg.analyses.push_back(a);
    }
  }

  // Every key must be global, a parameter of the system, or belong to a requested analysis.
  for (const auto& [key, vl] : raw) {
    const auto& [value, line] = vl;
    if (std::find(kGlobalKeys.begin(), kGlobalKeys.end(), key) != kGlobalKeys.end()) {
      check_value(key, value, "", line);
      continue;
    }
    bool known = false;
    for (const auto& [k, def] : info->defaults)
      if (k == key) {
        check_value(key, value, def, line);
        known = true;
      }
    if (known) continue;
    const auto dot = key.find('.');
    if (dot != std::string::npos) {
      const std::string a = key.substr(0, dot), p = key.substr(dot + 1);
      const Params* params = find_params(analysis_catalog(), a);
      if (params) {
        if (std::find(cfg.analyses.begin(), cfg.analyses.end(), a) == cfg.analyses.end())
          throw ConfigValidationError("key '" + key + "' belongs to analysis '" + a + "', which is not requested", line,
                                      key);
        for (const auto& [k, def] : *params)
          if (k == p) {
            check_value(key, value, def, line);
            known = true;
          }
      }
    }
    if (!known) throw ConfigValidationError("unknown key '" + key + "'", line, key);
  }

  cfg.values.clear();
  auto take = [&](const std::string& key, const std::string& def) {
    const auto it = raw.find(key);
    cfg.values[key] = it == raw.end() ? def : it->second.first;
  };
  take("system", "");
  take("seed", "1");
  take("output_dir", "aflow_out");
  take("jobs", "1");
  take("step", "0.001");
  std::string joined;
  for (const std::string& a : cfg.analyses) joined += (joined.empty() ? "" : ",") + a;
  cfg.values["analyses"] = joined;
  for (const auto& [k, def] : info->defaults) take(k, def);
  for (const std::string& a : cfg.analyses)
    for (const auto& [k, def] : *find_params(analysis_catalog(), a)) {
      const std::string key = a + "." + k;
      take(key, def);
      if (cfg.values[key] == "auto") cfg.values[key] = auto_value(cfg.system, a, k);
    }
  cfg.seed = std::stoull(cfg.values["seed"]);
  cfg.jobs = static_cast<int>(std::stol(cfg.values["jobs"]));
  cfg.output_dir = cfg.values["output_dir"];
}

std::map<std::string, std::pair<std::string, int>> raw_from_values(const ExperimentConfig& cfg) {
  std::map<std::string, std::pair<std::string, int>> raw;
  for (const auto& [k, v] : cfg.values) raw[k] = {v, 0};
  return raw;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, std::pair<std::string, int>> raw;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigValidationError("expected 'key = value', got '" + line + "'", no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigValidationError("empty key", no);
    if (raw.count(key)) throw ConfigValidationError("duplicate key '" + key + "'", no, key);
    raw[key] = {value, no};
  }
  ExperimentConfig cfg;
  resolve(cfg, raw);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigValidationError("cannot read config file '" + path + "'", 0);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void apply_overrides(ExperimentConfig& cfg, const std::map<std::string, std::string>& overrides) {
  auto raw = raw_from_values(cfg);
  for (const auto& [k, v] : overrides) {
    if (k != "seed" && k != "output_dir" && k != "jobs")
      throw ConfigValidationError("only seed, output_dir and jobs can be overridden", 0, k);
    raw[k] = {v, 0};
  }
  resolve(cfg, raw);
}

// ---------------------------------------------------------------------------
// CSV clouds

std::string format_cloud_csv(const SmoothSystem& sys, const std::vector<State>& points) {
  int width = 0;
  for (const State& s : points) width = std::max(width, static_cast<int>(s.x.size()));
  std::string out = "chart_id";
  for (int i = 1; i <= width; ++i) out += ",c" + std::to_string(i);
  out += "\n";
  char buf[64];
  for (const State& s : points) {
    out += sys.chart(s.chart).id;
    for (Eigen::Index i = 0; i < width; ++i) {
      out += ",";
      if (i < s.x.size()) {
        std::snprintf(buf, sizeof buf, "%.17g", s.x[i]);
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

std::vector<ChartedPoint> parse_cloud_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("chart_id", 0) != 0)
    throw InvalidInput("cloud CSV must start with a chart_id header");
  std::vector<ChartedPoint> out;
  int no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    ChartedPoint p;
    p.chart_id = cells.at(0);
    std::vector<double> xs;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (cells[i].empty()) continue;
      double d;
      if (!parse_double(cells[i], d)) throw InvalidInput("cloud CSV line " + std::to_string(no) + ": bad number");
      xs.push_back(d);
    }
    p.local = Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Systems

namespace {

DaConfig da_config_from(const ExperimentConfig& cfg, DaConfig base) {
  if (cfg.values.count("base_power")) base.base_power = static_cast<int>(cfg.integer("base_power"));
  base.radius = cfg.number("radius");
  base.center_stable_eigenvalue = cfg.number("center_stable_eigenvalue");
  base.profile = bump_profile_from_string(cfg.get("profile"));
  base.bump_width = cfg.number("bump_width");
  return base;
}

TrapSurface lift_surface(const TrapSurface& s, const std::string& chart_id) {
  TrapSurface l = s;
  l.name = s.name + "@band";
  l.chart_id = chart_id;
  for (Vec& p : l.points) p.conservativeResize(p.size() + 1), p[p.size() - 1] = 0.0;
  for (Vec& n : l.normals) n.conservativeResize(n.size() + 1), n[n.size() - 1] = 0.0;
  auto lv = s.level;
  auto gr = s.level_gradient;
  l.level = [lv](const Vec& x) { return lv(x.head(x.size() - 1)); };
  if (gr)
    l.level_gradient = [gr](const Vec& x) {
      Vec g = Vec::Zero(x.size());
      g.head(x.size() - 1) = gr(x.head(x.size() - 1));
      return g;
    };
  return l;
}

// Cap {x_n <= -cos(alpha)} about the south pole of S^n in ambient coordinates.
TrapSurface sink_cap(int n, double alpha, int samples) {
  TrapSurface s;
  s.name = "sink_cap";
  s.topology = Topology::Sphere;
  s.chart_id = "sphere";
  std::mt19937_64 rng(0xcab);
  std::normal_distribution<double> g;
  for (int i = 0; i < samples; ++i) {
    Vec u(n);
    for (int k = 0; k < n; ++k) u[k] = g(rng);
    u /= u.norm();
    Vec p(n + 1), nr(n + 1);
    p.head(n) = std::sin(alpha) * u;
    p[n] = -std::cos(alpha);
    nr.head(n) = std::cos(alpha) * u;
    nr[n] = std::sin(alpha);
    s.points.push_back(p);
    s.normals.push_back(nr);
  }
  const double c = std::cos(alpha);
  s.level = [c, n](const Vec& x) { return x[n] + c; };
  s.level_gradient = [n](const Vec& x) {
    Vec e = Vec::Zero(x.size());
    e[n] = 1.0;
    return e;
  };
  s.max_gap = 0.0;
  return s;
}

struct Built {
  SmoothSystem sys;
  std::vector<CensusTrap> traps;
  std::vector<State> eq_seeds;
  std::vector<std::pair<Section, State>> po_seeds;
  std::vector<std::string> po_labels;
  std::shared_ptr<SmoothSystem> base_map;
  std::shared_ptr<Assembly> assembly;
  std::shared_ptr<SmoothSystem> equator_flow;
  AmbientEmbedding embed;
};

Section seam_section(int chart) {
  Section s;
  s.chart = chart;
  s.normal = Eigen::Vector3d(0.0, 0.0, 1.0);
  s.event_tag = "seam";
  return s;
}

AssemblyConfig assembly_config_from(const ExperimentConfig& cfg) {
  AssemblyConfig a;
  a.transfer_radius = cfg.number("transfer_radius");
  a.ball_radius = cfg.number("ball_radius");
  a.collar_width = cfg.number("collar_width");
  a.cycle_tube = cfg.number("cycle_tube");
  a.excision.tube_radius = cfg.number("tube_radius");
  return a;
}

void add_suspension_orbits(Built& b, const std::vector<TorusPoint2>& centers, int chart) {
  for (std::size_t i = 0; i < centers.size(); ++i) {
    b.po_seeds.push_back({seam_section(chart), State{chart, Eigen::Vector3d(centers[i].x, centers[i].y, 0.0)}});
    b.po_labels.push_back("source_" + std::to_string(i));
  }
}

Built build(const ExperimentConfig& cfg) {
  Built b;
  const std::string& name = cfg.system;
  if (name == "anosov_susp") {
    b.base_map = std::make_shared<SmoothSystem>(anosov_system(static_cast<int>(cfg.integer("base_power"))));
    b.sys = suspension_flow(*b.base_map);
    b.po_seeds.push_back({seam_section(0), State{0, Eigen::Vector3d(0.0, 0.0, 0.0)}});
    b.po_labels.push_back("fixed_point_0");
    b.eq_seeds.push_back(State{0, Eigen::Vector3d(0.3, 0.7, 0.2)});
  } else if (name == "da_susp" || name == "plykin_susp") {
    const bool plykin = name == "plykin_susp";
    const DaConfig dc = da_config_from(cfg, plykin ? plykin_default_config() : DaConfig{});
    b.base_map = std::make_shared<SmoothSystem>(plykin ? plykin_system(dc) : da_system(dc));
    b.sys = suspension_flow(*b.base_map);
    add_suspension_orbits(b, dc.centers, 0);
    std::vector<Eigen::Vector2d> seeds;
    for (const TorusPoint2& c : dc.centers) seeds.emplace_back(c.x, c.y);
    ExcisionOptions eo;
    eo.tube_radius = cfg.number("tube_radius");
    const ExcisionResult ex = excise_repelling_orbits(b.sys, suspension_orbits(b.sys, seeds), eo);
    b.traps.push_back({"attractor_trap", ex.boundary, true});
    b.eq_seeds.push_back(State{0, Eigen::Vector3d(0.3, 0.7, 0.2)});
  } else if (name == "lemma1") {
    const bool rev = cfg.get("reversed") == "true";
    b.sys = lemma1_system(rev);
    b.eq_seeds.push_back(State{0, Eigen::Vector3d(0.01, 0.02, 0.01)});
    Section s;
    s.chart = 0;
    s.normal = Eigen::Vector3d(0.0, 1.0, 0.0);
    s.accept = [](const Vec& x) { return x[0] > 0.0; };
    if (rev) s.normal = -s.normal;
    b.po_seeds.push_back({s, State{0, Eigen::Vector3d(1.1, 0.0, 0.1)}});
    b.po_labels.push_back("cycle");
    b.traps.push_back({"cycle_tube", cycle_tube_surface("lemma1", 0.3, 100, 100), true});
  } else if (name == "gradient_sphere") {
    const int n = static_cast<int>(cfg.integer("n"));
    b.sys = gradient_sphere_flow(n);
    Vec north = Vec::Zero(n + 1), south = Vec::Zero(n + 1);
    north[n] = 1.0;
    south[n] = -1.0;
    north[0] = south[0] = 1e-3;
    b.eq_seeds = {State{0, north / north.norm()}, State{0, south / south.norm()}};
    b.traps.push_back({"sink_cap", sink_cap(n, 0.3, 10000), true});
  } else if (name == "theorem1_s3") {
    b.assembly = std::make_shared<Assembly>(theorem1_assembly(assembly_config_from(cfg)));
    const Assembly& a = *b.assembly;
    b.sys = a.system;
    b.traps.push_back({"P", a.trap, true});
    b.eq_seeds = {State{a.chart_s3, Eigen::Vector4d(1e-3, 0.0, 0.0, 1.0).normalized()},
                  State{a.chart_south, Eigen::Vector3d(1e-3, 1e-3, 1e-3)}};
    std::vector<TorusPoint2> rest;
    for (const Eigen::Vector2d& c : a.remaining_sources) rest.push_back({c[0], c[1]});
    add_suspension_orbits(b, rest, a.chart_plykin);
  } else if (name == "extend_sphere") {
    const int n = static_cast<int>(cfg.integer("n"));
    ExtensionConfig ec{cfg.number("inner_latitude"), cfg.number("outer_latitude")};
    const std::string base = cfg.get("base");
    SmoothSystem flow;
    if (base == "theorem1_s3") {
      if (n != 4) throw ConfigValidationError("extend_sphere with base theorem1_s3 needs n = 4", 0, "n");
      ExperimentConfig sub;
      sub.values = {{"transfer_radius", "4"}, {"ball_radius", "2.9"}, {"collar_width", "0.1"}, {"cycle_tube", "0.3"},
                    {"tube_radius", "0"}};
      b.assembly = std::make_shared<Assembly>(theorem1_assembly(assembly_config_from(sub)));
      auto asmb = b.assembly;
      b.embed = [asmb](const Vec& u) { return asmb->from_ambient(u); };
      flow = asmb->system;
    } else if (base == "gradient") {
      if (n < 3) throw ConfigValidationError("extend_sphere needs n >= 3", 0, "n");
      flow = gradient_sphere_flow(n - 1);
      b.embed = [](const Vec& u) { return State{0, u}; };
    } else {
      throw ConfigValidationError("base must be theorem1_s3 or gradient", 0, "base");
    }
    b.equator_flow = std::make_shared<SmoothSystem>(flow);
    b.sys = extend_to_next_sphere(flow, n, b.embed, ec);
    b.eq_seeds = {State{0, Vec::Zero(n)}, State{1, Vec::Zero(n)}};
    if (b.assembly) b.traps.push_back({"P", lift_surface(b.assembly->trap, "plykin@band"), true});
  } else {
    throw ConfigValidationError("unknown system '" + name + "'", 0, "system");
  }
  return b;
}

// ---------------------------------------------------------------------------
// Analyses

json complex_list(const std::vector<std::complex<double>>& v) {
  json a = json::array();
  for (const auto& c : v) a.push_back({c.real(), c.imag()});
  return a;
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json state_json(const SmoothSystem& sys, const State& s) { return {{"chart_id", sys.chart(s.chart).id}, {"x", vec_json(s.x)}}; }

struct Ctx {
  const ExperimentConfig& cfg;
  Built& b;
  std::string analysis;
  std::uint64_t seed;
  double step;
  std::vector<std::pair<std::string, std::string>> files;  // name, content

  std::string p(const std::string& k) const { return cfg.get(analysis + "." + k); }
  double num(const std::string& k) const { return cfg.number(analysis + "." + k); }
  long integer(const std::string& k) const { return cfg.integer(analysis + "." + k); }
};

State start_state(Ctx& c) {
  const std::string x0 = c.p("x0");
  if (x0 == "sample") {
    if (!c.b.sys.sample) throw InvalidInput("system has no sampler");
    std::mt19937_64 rng(derive_seed(c.seed, "x0"));
    return c.b.sys.sample(rng);
  }
  std::vector<double> xs;
  for (const std::string& t : split(x0, ',')) {
    double d;
    if (!parse_double(t, d)) throw ConfigValidationError("bad coordinate '" + t + "' in " + c.analysis + ".x0", 0);
    xs.push_back(d);
  }
  return State{0, Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()))};
}

std::vector<Equilibrium> located_equilibria(const Built& b, double tol) {
  if (b.eq_seeds.empty()) return {};
  return find_equilibria(b.sys, b.eq_seeds, tol).equilibria;
}

std::vector<CensusOrbit> located_orbits(const Built& b) {
  std::vector<CensusOrbit> out;
  for (std::size_t i = 0; i < b.po_seeds.size(); ++i)
    out.push_back({b.po_labels[i], find_periodic_orbit(b.sys, b.po_seeds[i].first, b.po_seeds[i].second)});
  return out;
}

bool run_lyapunov(Ctx& c, json& r) {
  LyapunovOptions lo;
  lo.step = c.step;
  lo.transient = c.num("transient");
  lo.windows = static_cast<int>(c.integer("windows"));
  const SpectrumEstimate s = lyapunov_spectrum(c.b.sys, start_state(c), c.num("T"), lo);
  r["exponents"] = s.exponents;
  r["window_variance"] = s.window_variance;
  r["total_time"] = s.total_time;
  r["windows"] = s.windows;
  bool ok = std::all_of(s.exponents.begin(), s.exponents.end(), [](double e) { return std::isfinite(e); });
  const std::string expect = c.p("expect");
  if (!expect.empty()) {
    const auto parts = split(expect, ',');
    if (parts.size() != s.exponents.size()) {
      r["expect_error"] = "expected " + std::to_string(parts.size()) + " exponents";
      return false;
    }
    json checks = json::array();
    for (std::size_t i = 0; i < parts.size(); ++i) {
      double e;
      if (!parse_double(parts[i], e)) throw ConfigValidationError("bad number in lyapunov.expect", 0);
      const double tol = e == 0.0 ? c.num("atol") : c.num("rtol") * std::abs(e);
      const bool pass = std::abs(s.exponents[i] - e) <= tol;
      checks.push_back({{"expected", e}, {"measured", s.exponents[i]}, {"tolerance", tol}, {"passed", pass}});
      ok = ok && pass;
    }
    r["checks"] = checks;
  }
  return ok;
}

bool run_census(Ctx& c, json& r) {
  CensusTargets t;
  t.traps = c.b.traps;
  t.equilibria = located_equilibria(c.b, 1e-12);
  t.orbits = located_orbits(c.b);
  t.radius = c.num("radius");
  CensusOptions co;
  co.step = c.step;
  co.jobs = c.cfg.jobs;
  co.seed = c.seed;
  const CensusReport rep = basin_census(c.b.sys, t, c.integer("samples"), c.num("T"), co);
  json items = json::array();
  for (const CensusItem& it : rep.items)
    items.push_back({{"kind", it.kind},
                     {"label", it.label},
                     {"stability", it.stability},
                     {"attractor", it.attractor},
                     {"count", it.count}});
  r["items"] = items;
  r["samples"] = rep.samples;
  r["unclassified"] = rep.unclassified;
  r["escaped"] = rep.escaped;
  r["classified_fraction"] = rep.classified_fraction();
  r["unclassified_fraction"] = rep.unclassified_fraction();
  return rep.classified_fraction() >= c.num("min_classified");
}

bool run_trap_check(Ctx& c, json& r) {
  if (c.b.traps.empty()) throw InvalidInput("system has no trap surface");
  bool ok = true;
  json traps = json::array();
  for (const CensusTrap& t : c.b.traps) {
    const TrapReport tr = trap_check(c.b.sys, t.surface);
    traps.push_back({{"label", t.label},
                     {"topology", to_string(t.surface.topology)},
                     {"passed", tr.passed},
                     {"min_margin", tr.min_margin},
                     {"worst_point", vec_json(tr.worst_point)},
                     {"samples", tr.samples},
                     {"failures", tr.failures},
                     {"max_gap", tr.max_gap}});
    ok = ok && tr.passed;
  }
  r["traps"] = traps;
  return ok;
}

bool run_invariance(Ctx& c, json& r) {
  if (c.b.traps.empty()) throw InvalidInput("system has no trap surface");
  const TrapSurface& s = c.b.traps.front().surface;
  const auto inside = sample_region(c.b.sys, s, static_cast<std::size_t>(c.integer("samples")), c.seed);
  InvarianceOptions io;
  io.step = c.step;
  io.jobs = c.cfg.jobs;
  const InvarianceReport rep = forward_invariance_check(c.b.sys, s, inside, c.num("T"), io);
  r["trap"] = c.b.traps.front().label;
  r["samples"] = rep.samples;
  r["T"] = rep.T;
  r["exits"] = rep.exits;
  if (rep.exits) {
    r["counterexample"] = {{"index", rep.counterexample_index},
                           {"start", state_json(c.b.sys, rep.counterexample_start)},
                           {"exit", state_json(c.b.sys, rep.counterexample_exit)},
                           {"time", rep.counterexample_time}};
  }
  return rep.passed;
}

bool run_orientability(Ctx& c, json& r) {
  OrientabilityOptions oo;
  oo.epsilon = c.num("epsilon");
  oo.transient = c.num("transient");
  oo.required_returns = c.integer("min_returns");
  oo.step = c.step;
  const OrientabilityVerdict v = orientability_test(c.b.sys, start_state(c), c.num("T"), oo);
  r["verdict"] = to_string(v.verdict);
  r["return_count"] = v.return_count;
  r["reversal_count"] = v.reversal_count;
  r["unreliable_count"] = v.unreliable_count;
  r["stored_points"] = v.stored_points;
  r["closest_returns"] = v.closest_returns;
  const std::string expect = c.p("expect");
  r["expected"] = expect;
  if (expect == "any" || expect.empty()) return v.verdict != Orientability::Inconclusive;
  return to_string(v.verdict) == expect;
}

bool run_box_counting(Ctx& c, json& r) {
  const SmoothSystem& m = *c.b.base_map;
  const long n = c.integer("section_points");
  const long k = c.integer("fiber_values");
  if (n < 1 || k < 1) throw ConfigValidationError("box_counting needs section_points and fiber_values >= 1", 0);
  std::vector<double> scales;
  for (const std::string& t : split(c.p("inverse_scales"), ',')) {
    double d;
    if (!parse_double(t, d) || !(d > 0.0)) throw ConfigValidationError("bad entry in box_counting.inverse_scales", 0);
    scales.push_back(1.0 / d);
  }
  std::mt19937_64 rng(derive_seed(c.seed, "start"));
  State s = m.sample(rng);
  for (long i = 0; i < c.integer("transient"); ++i) s.x = m.reduce(0, m.evaluate(0, s.x));
  Mat section(2, n), cloud(3, n * k);
  // Fiber values stratified per section point with a golden-ratio offset.
  const double golden = 0.6180339887498949;
  for (long i = 0; i < n; ++i) {
    s.x = m.reduce(0, m.evaluate(0, s.x));
    section.col(i) = s.x;
    const double off = std::fmod(static_cast<double>(i) * golden, 1.0) / static_cast<double>(k);
    for (long j = 0; j < k; ++j) {
      const long col = i * k + j;
      cloud(0, col) = s.x[0];
      cloud(1, col) = s.x[1];
      cloud(2, col) = off + static_cast<double>(j) / static_cast<double>(k);
    }
  }
  const DimensionEstimate d2 = box_counting(section, scales);
  const DimensionEstimate d3 = box_counting(cloud, scales);
  auto dump = [](const DimensionEstimate& d) {
    return json{{"value", d.value},
                {"residual", d.residual},
                {"scale_min", d.scale_min},
                {"scale_max", d.scale_max},
                {"scales", d.scales},
                {"counts", d.counts},
                {"degenerate", d.degenerate}};
  };
  r["section"] = dump(d2);
  r["suspension"] = dump(d3);
  const double lo = c.num("lower"), hi = c.num("upper");
  r["interval"] = {lo, hi};
  if (c.p("write_cloud") == "true") {
    std::vector<State> pts;
    const long rows = std::min<long>(n * k, 100000);
    for (long i = 0; i < rows; ++i) pts.push_back(State{0, cloud.col(i)});
    c.files.push_back({"box_counting_cloud.csv", format_cloud_csv(c.b.sys, pts)});
  }
  return d3.value > lo && d3.value < hi && d3.residual < c.num("max_residual");
}

bool run_equilibria(Ctx& c, json& r) {
  const EquilibriumSearch es = find_equilibria(c.b.sys, c.b.eq_seeds, c.num("tol"));
  json list = json::array();
  bool ok = true;
  for (const Equilibrium& e : es.equilibria) {
    list.push_back({{"point", state_json(c.b.sys, e.point)},
                    {"eigenvalues", complex_list(e.eigenvalues)},
                    {"hyperbolic", e.hyperbolic},
                    {"stability", e.stability},
                    {"residual", e.residual}});
    ok = ok && e.hyperbolic;
  }
  r["equilibria"] = list;
  r["unconverged_seeds"] = es.unconverged_seeds.size();
  return ok;
}

bool run_periodic_orbits(Ctx& c, json& r) {
  json list = json::array();
  PeriodicOrbitOptions po;
  po.step = c.step;
  po.tol = c.num("tol");
  for (std::size_t i = 0; i < c.b.po_seeds.size(); ++i) {
    po.max_return_time = c.b.po_seeds[i].first.event_tag.empty() ? 100.0 : 2.0;
    const PeriodicOrbitResult o = find_periodic_orbit(c.b.sys, c.b.po_seeds[i].first, c.b.po_seeds[i].second, po);
    list.push_back({{"label", c.b.po_labels[i]},
                    {"point", state_json(c.b.sys, o.point)},
                    {"period", o.period},
                    {"floquet_multipliers", complex_list(o.floquet_multipliers)},
                    {"stability", o.stability},
                    {"closure_error", o.closure_error}});
  }
  r["orbits"] = list;
  return true;
}

bool run_splitting(Ctx& c, json& r) {
  LyapunovOptions lo;
  lo.step = c.step;
  lo.transient = c.num("transient");
  const SplittingReport s = splitting_rate_check(c.b.sys, start_state(c), c.num("T"), c.num("window"), lo);
  r["rates"] = s.rates;
  r["neutral_index"] = s.neutral_index;
  r["has_expansion"] = s.has_expansion;
  r["has_contraction"] = s.has_contraction;
  r["expansion_rate"] = s.expansion_rate;
  r["min_window_expansion"] = s.min_window_expansion;
  r["worst_expansion_window"] = s.worst_expansion_window;
  r["contraction_rate"] = s.contraction_rate;
  r["max_window_contraction"] = s.max_window_contraction;
  r["worst_contraction_window"] = s.worst_contraction_window;
  r["window"] = s.window;
  r["window_count"] = s.window_count;
  return s.passed;
}

bool run_cloud(Ctx& c, json& r) {
  State s = start_state(c);
  IntegrateOptions io;
  io.step = c.step;
  if (c.num("transient") > 0.0) {
    io.record = false;
    s = integrate(c.b.sys, s, c.num("transient"), io).final_state();
    io.record = true;
  }
  io.record_every = static_cast<int>(c.integer("every"));
  const OrbitRecord rec = integrate(c.b.sys, s, c.num("T"), io);
  c.files.push_back({"cloud.csv", format_cloud_csv(c.b.sys, rec.states)});
  r["points"] = rec.states.size();
  r["events"] = rec.events.size();
  r["file"] = "cloud.csv";
  return true;
}

bool run_equator(Ctx& c, json& r) {
  const SmoothSystem& sys = c.b.sys;
  const SmoothSystem& flow = *c.b.equator_flow;
  // Equator samples: lifted states of the input flow at latitude 0.
  std::mt19937_64 rng(derive_seed(c.seed, "equator"));
  const long ns = c.integer("samples");
  long nonzero = 0;
  double worst = 0.0;
  for (long i = 0; i < ns; ++i) {
    State e = flow.sample(rng);
    Vec y(e.x.size() + 1);
    y.head(e.x.size()) = e.x;
    y[e.x.size()] = 0.0;
    const double mer = sys.evaluate(e.chart + 2, y)[e.x.size()];
    if (mer != 0.0) ++nonzero;
    worst = std::max(worst, std::abs(mer));
  }
  r["equator_samples"] = ns;
  r["equator_nonzero"] = nonzero;
  r["equator_max_meridional"] = worst;

  const EquilibriumSearch poles = find_equilibria(sys, c.b.eq_seeds, 1e-12);
  bool sources = poles.equilibria.size() == 2;
  json pl = json::array();
  for (const Equilibrium& e : poles.equilibria) {
    bool all_pos = true;
    for (const auto& ev : e.eigenvalues) all_pos = all_pos && ev.real() > 0.0;
    sources = sources && all_pos;
    pl.push_back({{"point", state_json(sys, e.point)}, {"eigenvalues", complex_list(e.eigenvalues)}, {"source", all_pos}});
  }
  r["poles"] = pl;

  const long off = c.integer("off_equator");
  const double tol = c.num("tol");
  std::vector<State> starts;
  std::mt19937_64 rng2(derive_seed(c.seed, "off_equator"));
  while (static_cast<long>(starts.size()) < off) {
    State s = sys.sample(rng2);
    const bool on_equator = s.chart >= 2 && s.x[s.x.size() - 1] == 0.0;
    if (!on_equator) starts.push_back(s);
  }
  std::vector<double> lat(starts.size());
  parallel_for(starts.size(), c.cfg.jobs, [&](std::size_t i) {
    IntegrateOptions io;
    io.step = c.step;
    io.record = false;
    const State end = integrate(sys, starts[i], c.num("T"), io).final_state();
    lat[i] = end.chart < 2 ? std::numbers::pi / 2 : std::abs(end.x[end.x.size() - 1]);
  });
  const double max_lat = lat.empty() ? 0.0 : *std::max_element(lat.begin(), lat.end());
  r["off_equator_samples"] = off;
  r["max_final_latitude"] = max_lat;
  return nonzero == 0 && sources && max_lat < tol;
}

using Runner = bool (*)(Ctx&, json&);

Runner runner_for(const std::string& name) {
  static const std::vector<std::pair<std::string, Runner>> table = {
      {"lyapunov", run_lyapunov},
      {"census", run_census},
      {"trap_check", run_trap_check},
      {"invariance", run_invariance},
      {"orientability", run_orientability},
      {"box_counting", run_box_counting},
      {"equilibria", run_equilibria},
      {"periodic_orbits", run_periodic_orbits},
      {"splitting", run_splitting},
      {"cloud", run_cloud},
      {"equator", run_equator},
  };
  for (const auto& [n, f] : table)
    if (n == name) return f;
  throw ConfigValidationError("unknown analysis '" + name + "'", 0);
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  f << text;
}

}  // namespace

SmoothSystem build_named_system(const ExperimentConfig& cfg) { return build(cfg).sys; }

RunResult run_experiment(const ExperimentConfig& cfg, bool write_files) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  Built b;
  try {
    b = build(cfg);
  } catch (const ConfigValidationError&) {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigValidationError(std::string("invalid system parameters: ") + e.what(), 0);
  } catch (const InvalidInput& e) {
    throw ConfigValidationError(std::string("invalid system parameters: ") + e.what(), 0);
  }
  const std::filesystem::path dir(cfg.output_dir);
  if (write_files) std::filesystem::create_directories(dir);

  json manifest_analyses = json::array();
  for (const std::string& a : cfg.analyses) {
    Ctx ctx{cfg, b, a, derive_seed(cfg.seed, a), cfg.number("step"), {}};
    json report;
    report["schema_version"] = 1;
    report["analysis"] = a;
    report["system"] = cfg.system;
    report["seed"] = ctx.seed;
    json params = json::object();
    for (const auto& [k, v] : cfg.values)
      if (k.rfind(a + ".", 0) == 0) params[k.substr(a.size() + 1)] = v;
    report["parameters"] = params;
    json res = json::object();
    bool passed = false;
    try {
      passed = runner_for(a)(ctx, res);
    } catch (const ConfigValidationError&) {
      throw;
    } catch (const std::exception& e) {
      res["error"] = e.what();
      passed = false;
    }
    report["passed"] = passed;
    report["result"] = res;
    AnalysisOutcome out;
    out.name = a;
    out.passed = passed;
    out.report_json = report.dump(2) + "\n";
    out.report_file = a + ".json";
    if (write_files) write_text(dir / out.report_file, out.report_json);
    for (const auto& [fname, content] : ctx.files) {
      out.extra_files.push_back(fname);
      if (write_files) write_text(dir / fname, content);
    }
    if (!passed) result.failed.push_back(a);
    manifest_analyses.push_back({{"name", a}, {"report", out.report_file}, {"passed", passed}, {"files", out.extra_files}});
    result.outcomes.push_back(std::move(out));
  }
  result.exit_code = result.failed.empty() ? kExitOk : kExitCheckFailed;

  json manifest;
  manifest["schema_version"] = 1;
  manifest["created_utc"] = utc_now();
  manifest["runtime_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json resolved = json::object();
  for (const auto& [k, v] : cfg.values) resolved[k] = v;
  manifest["config"] = resolved;
  manifest["analyses"] = manifest_analyses;
  manifest["failed"] = result.failed;
  manifest["exit_code"] = result.exit_code;
  result.manifest_json = manifest.dump(2) + "\n";
  if (write_files) write_text(dir / "manifest.json", result.manifest_json);
  return result;
}

}  // namespace aflow
