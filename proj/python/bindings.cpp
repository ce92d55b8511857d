#include "aflow/analysis.hpp"
#include "aflow/experiment.hpp"
#include "aflow/models.hpp"
#include "aflow/orbit.hpp"
#include "aflow/surgery.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace aflow;

namespace {

py::tuple pt(const TorusPoint2& p) { return py::make_tuple(p.x, p.y); }

State state_of(const SmoothSystem& sys, const std::string& chart, const Vec& x) {
  return sys.from_charted({chart, x});
}

py::tuple state_tuple(const SmoothSystem& sys, const State& s) { return py::make_tuple(sys.chart(s.chart).id, s.x); }

DaConfig da_config(const py::dict& d, DaConfig c) {
  for (auto item : d) {
    const std::string k = py::cast<std::string>(item.first);
    if (k == "base_power") c.base_power = py::cast<int>(item.second);
    else if (k == "radius") c.radius = py::cast<double>(item.second);
    else if (k == "center_stable_eigenvalue") c.center_stable_eigenvalue = py::cast<double>(item.second);
    else if (k == "profile") c.profile = bump_profile_from_string(py::cast<std::string>(item.second));
    else if (k == "bump_width") c.bump_width = py::cast<double>(item.second);
    else if (k == "centers") {
      c.centers.clear();
      for (auto p : py::cast<std::vector<std::pair<double, double>>>(item.second)) c.centers.push_back({p.first, p.second});
    } else
      throw py::key_error("unknown DaConfig field '" + k + "'");
  }
  return c;
}

py::dict orbit_dict(const SmoothSystem& sys, const PeriodicOrbitResult& o) {
  py::dict d;
  d["point"] = state_tuple(sys, o.point);
  d["period"] = o.period;
  d["floquet_multipliers"] = o.floquet_multipliers;
  d["stability"] = o.stability;
  d["closure_error"] = o.closure_error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "A-flows on spheres and mapping tori: models, orbits, surgery and analysis";

  py::register_exception<ConfigValidationError>(m, "ConfigValidationError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<EscapeError>(m, "EscapeError", PyExc_RuntimeError);
  py::register_exception<NoReturnError>(m, "NoReturnError", PyExc_RuntimeError);
  py::register_exception<ExcisionError>(m, "ExcisionError", PyExc_RuntimeError);
  py::register_exception<GluingError>(m, "GluingError", PyExc_RuntimeError);

  m.def("torus_reduce", [](double x, double y) { return pt(torus_reduce(x, y)); });
  m.def("quotient_canonical", [](double x, double y) { return pt(quotient_canonical({x, y}).rep); });
  m.def(
      "anosov_map",
      [](double x, double y, int power) {
        const MapValue v = anosov_map({x, y}, power);
        return py::make_tuple(pt(v.image), Mat(v.jacobian));
      },
      py::arg("x"), py::arg("y"), py::arg("power") = 1);
  m.def(
      "da_map",
      [](double x, double y, const py::dict& cfg) {
        const MapValue v = da_map({x, y}, da_config(cfg, DaConfig{}));
        return py::make_tuple(pt(v.image), Mat(v.jacobian));
      },
      py::arg("x"), py::arg("y"), py::arg("config") = py::dict());
  m.def(
      "plykin_map",
      [](double x, double y, const py::dict& cfg) {
        const QuotientMapValue v = plykin_map(quotient_canonical({x, y}), da_config(cfg, plykin_default_config()));
        return py::make_tuple(pt(v.image.rep), Mat(v.jacobian));
      },
      py::arg("x"), py::arg("y"), py::arg("config") = py::dict());

  py::class_<SmoothSystem>(m, "System")
      .def_readonly("name", &SmoothSystem::name)
      .def_property_readonly("charts",
                             [](const SmoothSystem& s) {
                               std::vector<std::string> ids;
                               for (const Chart& c : s.charts) ids.push_back(c.id);
                               return ids;
                             })
      .def_property_readonly("is_map", [](const SmoothSystem& s) { return s.kind == SystemKind::Map; })
      .def("evaluate", [](const SmoothSystem& s, const std::string& chart, const Vec& x) {
        return s.evaluate(s.chart_index(chart), x);
      })
      .def("jacobian", [](const SmoothSystem& s, const std::string& chart, const Vec& x) {
        return s.jacobian(s.chart_index(chart), x);
      })
      .def(
          "sample",
          [](const SmoothSystem& s, std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            return state_tuple(s, s.sample(rng));
          },
          py::arg("seed") = 1)
      .def("time_reversed", [](const SmoothSystem& s) { return time_reversed(s); })
      .def("__repr__", [](const SmoothSystem& s) { return "<aflow.System " + s.name + ">"; });

  m.def("anosov_system", &anosov_system, py::arg("power") = 1);
  m.def("da_system", [](const py::dict& cfg) { return da_system(da_config(cfg, DaConfig{})); }, py::arg("config") = py::dict());
  m.def(
      "plykin_system", [](const py::dict& cfg) { return plykin_system(da_config(cfg, plykin_default_config())); },
      py::arg("config") = py::dict());
  m.def("suspension_flow", &suspension_flow);
  m.def("lemma1_system", &lemma1_system, py::arg("time_reversed") = false);
  m.def("gradient_sphere_flow", &gradient_sphere_flow, py::arg("n") = 3);
  m.def("theorem1_assembly", [] { return theorem1_assembly().system; });
  m.def(
      "build_system", [](const std::string& text) { return build_named_system(parse_config(text)); },
      "Builds the system named by a key = value config text.");

  m.def(
      "integrate",
      [](const SmoothSystem& sys, const std::string& chart, const Vec& x0, double T, double step, int record_every) {
        IntegrateOptions io;
        io.step = step;
        io.record_every = record_every;
        const OrbitRecord r = integrate(sys, state_of(sys, chart, x0), T, io);
        py::list states, events;
        for (const State& s : r.states) states.append(state_tuple(sys, s));
        for (const EventRecord& e : r.events)
          events.append(py::make_tuple(e.time, e.tag, sys.chart(e.from_chart).id, sys.chart(e.to_chart).id));
        py::dict d;
        d["times"] = r.times;
        d["states"] = states;
        d["events"] = events;
        return d;
      },
      py::arg("system"), py::arg("chart"), py::arg("x0"), py::arg("T"), py::arg("step") = 1e-3,
      py::arg("record_every") = 1);

  m.def(
      "lyapunov_spectrum",
      [](const SmoothSystem& sys, const std::string& chart, const Vec& x0, double T, double step, double transient) {
        LyapunovOptions lo;
        lo.step = step;
        lo.transient = transient;
        return lyapunov_spectrum(sys, state_of(sys, chart, x0), T, lo).exponents;
      },
      py::arg("system"), py::arg("chart"), py::arg("x0"), py::arg("T"), py::arg("step") = 1e-3,
      py::arg("transient") = 0.0);

  m.def(
      "find_equilibria",
      [](const SmoothSystem& sys, const std::vector<std::pair<std::string, Vec>>& seeds, double tol) {
        std::vector<State> s;
        for (const auto& [c, x] : seeds) s.push_back(state_of(sys, c, x));
        py::list out;
        for (const Equilibrium& e : find_equilibria(sys, s, tol).equilibria) {
          py::dict d;
          d["point"] = state_tuple(sys, e.point);
          d["eigenvalues"] = e.eigenvalues;
          d["stability"] = e.stability;
          d["hyperbolic"] = e.hyperbolic;
          out.append(d);
        }
        return out;
      },
      py::arg("system"), py::arg("seeds"), py::arg("tol") = 1e-12);

  m.def(
      "find_periodic_orbit",
      [](const SmoothSystem& sys, const std::string& chart, const Vec& seed, const Vec& normal, double offset,
         const std::string& event_tag, double max_return_time) {
        Section s;
        s.chart = sys.chart_index(chart);
        s.normal = normal;
        s.offset = offset;
        s.event_tag = event_tag;
        PeriodicOrbitOptions po;
        po.max_return_time = max_return_time;
        return orbit_dict(sys, find_periodic_orbit(sys, s, state_of(sys, chart, seed), po));
      },
      py::arg("system"), py::arg("chart"), py::arg("seed"), py::arg("normal"), py::arg("offset") = 0.0,
      py::arg("event_tag") = "", py::arg("max_return_time") = 100.0,
      "Newton on the return map to {normal . x = offset}, or to the landing set of a tagged transition.");

  m.def(
      "box_counting",
      [](const Mat& points, const std::vector<double>& scales) {
        const DimensionEstimate d = box_counting(points.transpose(), scales);
        py::dict out;
        out["value"] = d.value;
        out["residual"] = d.residual;
        out["counts"] = d.counts;
        out["degenerate"] = d.degenerate;
        return out;
      },
      py::arg("points"), py::arg("scales"), "points has one row per point.");

  m.def(
      "orientability_test",
      [](const SmoothSystem& sys, const std::string& chart, const Vec& x0, double T, double transient) {
        OrientabilityOptions oo;
        oo.transient = transient;
        const OrientabilityVerdict v = orientability_test(sys, state_of(sys, chart, x0), T, oo);
        py::dict d;
        d["verdict"] = to_string(v.verdict);
        d["return_count"] = v.return_count;
        d["reversal_count"] = v.reversal_count;
        return d;
      },
      py::arg("system"), py::arg("chart"), py::arg("x0"), py::arg("T"), py::arg("transient") = 0.0);

  m.def(
      "run_experiment",
      [](const std::string& text, bool write_files) {
        const ExperimentConfig cfg = parse_config(text);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg, write_files);
        }
        py::dict reports;
        for (const AnalysisOutcome& o : r.outcomes) reports[o.name.c_str()] = o.report_json;
        py::dict d;
        d["exit_code"] = r.exit_code;
        d["failed"] = r.failed;
        d["reports"] = reports;
        d["manifest"] = r.manifest_json;
        return d;
      },
      py::arg("config"), py::arg("write_files") = false, "Runs a key = value config; reports are JSON strings.");

  m.def("list_systems", &list_systems_text);
}
