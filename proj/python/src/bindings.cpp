// Python module: thin wrappers returning plain dicts and lists.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spotmarket/cli.hpp"
#include "spotmarket/incentive.hpp"
#include "spotmarket/multiperiod.hpp"
#include "spotmarket/pricecap.hpp"

namespace py = pybind11;
namespace sm = spotmarket;

namespace {

sm::EquilibriumKind kind_of(const std::string& k) {
  if (k == "optimal") return sm::EquilibriumKind::Optimal;
  if (k == "competitive") return sm::EquilibriumKind::Competitive;
  if (k == "oligopolistic") return sm::EquilibriumKind::Oligopolistic;
  throw sm::DomainError("unknown equilibrium kind '" + k + "'");
}

py::dict report(const sm::EquilibriumReport& r) {
  py::dict d;
  d["kind"] = sm::to_string(r.kind);
  d["units"] = std::vector<double>(r.profile.units().begin(), r.profile.units().end());
  d["social_welfare"] = r.social_welfare;
  d["prices"] = r.prices;
  d["profit"] = r.profit;
  d["demand"] = r.demand.demand;
  d["flows"] = r.demand.flows;
  d["residual"] = r.residual;
  d["sweeps"] = r.sweeps_used;
  d["sensitivity_flag"] = r.sensitivity_flag;
  return d;
}

const sm::MarketScenario& market(const sm::ScenarioFile& f) { return f.scenario; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Nodal spot-market equilibria with externalities, market power and incentive payments";

  // translators run newest first, so the base class goes in first
  auto& base = py::register_exception<sm::Error>(m, "SpotMarketError");
  py::register_exception<sm::ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<sm::NonConvergenceError>(m, "NonConvergenceError", base.ptr());
  py::register_exception<sm::InfeasibleError>(m, "InfeasibleError", base.ptr());
  py::register_exception<sm::DomainError>(m, "DomainError", base.ptr());

  py::class_<sm::ScenarioFile>(m, "Scenario")
      .def_property_readonly("name", [](const sm::ScenarioFile& f) { return f.scenario.name; })
      .def_property_readonly("node_count", [](const sm::ScenarioFile& f) { return f.scenario.node_count(); })
      .def_property_readonly("producer_count", [](const sm::ScenarioFile& f) { return f.scenario.producer_count; })
      .def_property_readonly("units", [](const sm::ScenarioFile& f) {
        std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> ids;
        for (const auto& u : f.scenario.units) ids.emplace_back(u.node + 1, u.producer + 1, u.index + 1);
        return ids;
      }, "(node, producer, unit) ids, one-based, in solver order")
      .def_property_readonly("has_multi_interval", [](const sm::ScenarioFile& f) { return f.multi.has_value(); })
      .def("serialize", &sm::serialize_scenario)
      .def("__eq__", [](const sm::ScenarioFile& a, const sm::ScenarioFile& b) {
        return a.scenario == b.scenario && a.multi == b.multi;
      });

  m.def("load_scenario", &sm::load_scenario, py::arg("path"));
  m.def("parse_scenario", [](const std::string& text) { return sm::parse_scenario(text); }, py::arg("text"));

  m.def("solve", [](const sm::ScenarioFile& f, const std::string& kind) {
    return report(sm::solve(kind_of(kind), market(f), f.solver));
  }, py::arg("scenario"), py::arg("kind"));

  m.def("solve_capped", [](const sm::ScenarioFile& f, std::vector<double> caps) {
    if (caps.size() == 1) caps.assign(f.scenario.node_count(), caps.front());
    const auto r = sm::solve_capped(market(f), caps, f.solver);
    py::dict d = report(r.equilibrium);
    d["caps"] = r.caps;
    d["desired_demand"] = r.desired_demand;  // None when unbounded
    d["load_shed"] = r.load_shed;
    d["cap_binding"] = r.cap_binding;
    return d;
  }, py::arg("scenario"), py::arg("caps"));

  m.def("solve_mechanism", [](const sm::ScenarioFile& f) {
    const auto r = sm::solve_mechanism(market(f), f.solver);
    const auto sched = sm::incentive_schedule(market(f), r);
    py::dict d = report(r);
    std::vector<double> phi, bound;
    for (const auto& e : sched.producers) {
      phi.push_back(e.payment);
      bound.push_back(e.ir_bound);
    }
    d["payments"] = phi;
    d["ir_bounds"] = bound;
    d["budget"] = sched.budget;
    return d;
  }, py::arg("scenario"));

  m.def("incentive_payments", [](const sm::ScenarioFile& f, std::vector<double> units) {
    const sm::GenerationProfile p(market(f), std::move(units));
    std::vector<double> out;
    for (std::size_t i = 0; i < f.scenario.producer_count; ++i)
      out.push_back(sm::incentive_payment_multi(market(f), p, i));
    return out;
  }, py::arg("scenario"), py::arg("units"));

  m.def("verify_incentive_compatibility", [](const sm::ScenarioFile& f, double tol) {
    const auto c = sm::verify_incentive_compatibility(market(f), f.solver, tol);
    py::dict d;
    d["compatible"] = c.compatible;
    d["unit_deviation"] = c.unit_deviation;
    d["dispatch_deviation"] = c.dispatch_deviation;
    d["best_response_gain"] = c.best_response_gain;
    return d;
  }, py::arg("scenario"), py::arg("tolerance") = 1e-6);

  m.def("solve_multi", [](const sm::ScenarioFile& f) {
    if (!f.multi) throw sm::DomainError("scenario has no multi_interval block");
    sm::MultiConfig mc = f.multi_config;
    mc.solver = f.solver;
    const auto r = sm::solve_multi(sm::EquilibriumKind::Optimal, *f.multi, mc);
    py::dict d;
    py::list intervals;
    for (const auto& rep : r.intervals) intervals.append(report(rep));
    d["intervals"] = intervals;
    d["lambdas"] = r.lambdas;
    d["mus"] = r.mus;
    d["usage"] = r.usage;
    d["slackness"] = r.slackness;
    d["payments"] = r.payments;
    d["social_welfare"] = r.social_welfare;
    return d;
  }, py::arg("scenario"));

  m.def("nodal_price", [](const sm::ScenarioFile& f, std::vector<double> q) {
    return sm::nodal_price(f.scenario.grid, f.scenario.utilities, q);
  }, py::arg("scenario"), py::arg("node_totals"));
  m.def("utility_value", [](const sm::ScenarioFile& f, std::vector<double> q) {
    return sm::utility_value(f.scenario.grid, f.scenario.utilities, q);
  }, py::arg("scenario"), py::arg("node_totals"));

  m.def("run", [](const sm::ScenarioFile& f, const std::string& modes, const std::string& format) {
    if (format != "text" && format != "csv") throw sm::DomainError("format must be text or csv");
    const auto t = sm::run(f, sm::parse_modes(modes));
    return sm::format_table(t, format == "csv" ? sm::OutputFormat::Csv : sm::OutputFormat::Text);
  }, py::arg("scenario"), py::arg("modes") = "all", py::arg("format") = "text");

  m.def("emit_curves", [](const sm::ScenarioFile& f, std::size_t node, std::optional<std::size_t> producer, double step) {
    if (node == 0) throw sm::DomainError("node ids are one-based");
    if (producer && *producer == 0) throw sm::DomainError("producer ids are one-based");
    std::optional<std::size_t> who;
    if (producer) who = *producer - 1;
    const auto c = sm::emit_curves(f, node - 1, who, step);
    py::dict d;
    d["columns"] = c.columns;
    d["rows"] = c.rows;
    return d;
  }, py::arg("scenario"), py::arg("node"), py::arg("producer") = py::none(), py::arg("step") = 1.0);

  m.def("verify", [](const std::string& text) {
    const auto r = sm::verify(text);
    py::dict d;
    d["ok"] = r.ok();
    d["passed"] = r.passed;
    d["failures"] = r.failures;
    return d;
  }, py::arg("text"));
}
