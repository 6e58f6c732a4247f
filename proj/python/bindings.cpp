#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "psync/harness.hpp"
#include "psync/solvers.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

psync::Scenario scenario(const std::string& text) { return psync::parse_scenario(json::parse(text)); }

std::string result_json(const psync::RunResult& r) {
    json j;
    j["run_id"] = r.run_id;
    j["passed"] = r.passed();
    j["t_end"] = r.t_end.str();
    j["events"] = r.events;
    j["trace_hash"] = r.trace_hash;
    j["metrics"] = r.metrics;
    j["checks"] = json::array();
    for (const auto& c : r.checks)
        j["checks"].push_back({{"group", c.group}, {"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
    return j.dump();
}

}  // namespace

PYBIND11_MODULE(_impl, m) {
    m.doc() = "pulse synchronisation simulator core";

    py::register_exception<psync::ScenarioError>(m, "ScenarioError", PyExc_ValueError);
    py::register_exception<psync::InfeasibleError>(m, "InfeasibleError", PyExc_ValueError);
    py::register_exception<json::exception>(m, "InputError", PyExc_ValueError);

    m.def("run", [](const std::string& text, uint64_t seed, bool trace) {
        std::ostringstream csv;
        psync::RunOptions opt;
        if (trace) opt.csv = &csv;
        psync::RunResult r;
        {
            py::gil_scoped_release release;
            r = psync::run_scenario(scenario(text), seed, opt);
        }
        return py::make_tuple(result_json(r), csv.str());
    }, py::arg("scenario"), py::arg("seed"), py::arg("trace") = false);

    m.def("evaluate", [](const std::string& text, uint64_t seed, const std::string& csv) {
        std::istringstream in(csv);
        return result_json(psync::evaluate_trace(scenario(text), seed, in));
    }, py::arg("scenario"), py::arg("seed"), py::arg("csv"));

    m.def("solve_report", [](const std::string& text) { return psync::solve_report(scenario(text)); });
    m.def("describe", [](const std::string& text, bool machines) {
        return psync::describe_scenario(scenario(text), machines);
    }, py::arg("scenario"), py::arg("machines") = false);
    m.def("normalise", [](const std::string& text) { return psync::scenario_json(scenario(text)).dump(); });
}
