/**
 * Copyright 2026 The cdpsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Python bindings. Plain types in, dicts/strings out; exact quantities come
// back as fractions.Fraction.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cdpsim/comm.hpp"
#include "cdpsim/cost.hpp"
#include "cdpsim/error.hpp"
#include "cdpsim/export.hpp"
#include "cdpsim/profile.hpp"
#include "cdpsim/schedule.hpp"
#include "cdpsim/sgd.hpp"

namespace py = pybind11;
using namespace cdpsim;

namespace {

template <class R>
py::object fraction(const R &r) {
  static py::object cls = py::module_::import("fractions").attr("Fraction");
  return cls(r.numerator(), r.denominator());
}

Scheme scheme_of(const std::string &name) {
  if (auto s = parse_scheme(name)) return *s;
  throw ConfigError("scheme", "unknown scheme '" + name + "'");
}

UpdateRule rule_of(const std::string &name) {
  if (auto r = parse_rule(name)) return *r;
  throw ConfigError("rule", "unknown rule '" + name + "'");
}

py::dict cost_dict(const CostReport &c) {
  py::dict d;
  d["scheme"] = std::string(scheme_name(c.scheme));
  d["n"] = c.n;
  d["peak_activation"] = fraction(c.peak_activation_memory_per_device);
  d["steady_activation"] = fraction(c.steady_activation_memory_per_device);
  d["steady_activation_floor"] = fraction(c.steady_activation_floor);
  d["warmup_activation_peak"] = fraction(c.warmup_activation_peak);
  d["param_memory"] = fraction(c.parameter_memory_per_device);
  d["param_memory_shared"] = fraction(c.parameter_memory_shared);
  d["comm_volume"] = fraction(c.comm_volume_per_training_step);
  d["state_volume"] = fraction(c.state_volume_per_training_step);
  d["max_comm_steps"] = c.max_comm_steps_per_boundary;
  d["collective_boundaries"] = c.collective_boundaries;
  d["device_count"] = c.device_count;
  d["idle_fraction"] = fraction(c.idle_fraction);
  d["min_busy_devices"] = c.min_busy_devices;
  d["max_busy_devices"] = c.max_busy_devices;
  d["max_held_stage_states"] = c.max_held_stage_states;
  d["degenerate_comm"] = c.degenerate_comm;
  return d;
}

py::dict simulate(const std::string &scheme, int n, int steps, int batch, int fwd, int bwd, const std::string &rule,
                  std::int64_t psi_p, std::int64_t psi_a, std::int64_t psi_int, const std::string &profile_json) {
  ParallelismConfig cfg;
  cfg.scheme = scheme_of(scheme);
  cfg.n = n;
  cfg.training_steps = steps;
  cfg.micro_batch_size = batch;
  cfg.cost_weights = {fwd, bwd};
  check_config(cfg);
  const ModelProfile profile =
      profile_json.empty() ? make_homogeneous_profile(n, psi_p, psi_a, psi_int) : parse_profile(profile_json);
  if (profile.num_stages() != n) throw ConfigError("/stages", "profile stage count differs from n");
  const Timeline tl = schedule_comms(build_timeline(cfg, rule_of(rule)), profile);
  const auto report = validate_timeline(tl);

  py::list violations;
  for (const auto &v : report.violations) violations.append(std::string(1, v.check) + ": " + v.message);
  py::dict out;
  out["ok"] = report.ok();
  out["violations"] = violations;
  out["timeline"] = timeline_to_text(tl);
  out["svg"] = timeline_to_svg(tl);
  out["tasks"] = tl.tasks.size();
  out["comm_events"] = tl.comm_events.size();
  out["cost"] = report.ok() ? py::object(cost_dict(measure_costs(tl, profile, cfg))) : py::none();
  return out;
}

py::list table1(const std::vector<int> &n_values, std::int64_t psi_p, std::int64_t psi_a, std::int64_t psi_int,
                int batch, int steps) {
  Table1Params p;
  p.psi_p = psi_p;
  p.psi_a = psi_a;
  p.psi_int = psi_int;
  p.micro_batch_size = batch;
  p.training_steps = steps;
  py::list rows;
  for (const auto &row : verify_table1(n_values, p)) {
    py::dict d;
    d["scheme"] = std::string(scheme_name(row.scheme));
    d["n"] = row.n;
    d["equal"] = row.equal;
    d["closed"] = cost_dict(row.closed);
    d["measured"] = cost_dict(row.measured);
    d["mismatches"] = row.mismatches;
    rows.append(d);
  }
  return rows;
}

py::dict experiment(const std::string &config_json, std::optional<int> steps) {
  ExperimentConfig cfg = parse_experiment_config(config_json);
  if (steps) {
    if (*steps < 1) throw ConfigError("steps", "must be >= 1");
    cfg.steps = *steps;
  }
  const auto result = run_experiment(cfg);
  py::dict runs;
  for (const auto &r : result.runs) {
    py::dict d;
    d["losses"] = r.losses;
    d["steps_to_threshold"] = r.steps_to_threshold;
    runs[py::str(rule_name(r.rule))] = d;
  }
  py::dict out;
  out["runs"] = runs;
  out["reference_loss"] = result.reference_loss;
  out["max_pairwise_divergence"] = result.max_pairwise_divergence;
  out["max_final_loss_spread"] = result.max_final_loss_spread;
  out["trajectory_csv"] = trajectory_csv(result);
  out["summary_json"] = experiment_summary_json(result);
  return out;
}

py::dict extrapolate(const std::vector<double> &series, int n) {
  const auto e = extrapolate_activation_memory(series, n);
  py::dict d;
  d["n"] = e.n;
  d["dp"] = e.dp_series;
  d["cdp"] = e.cdp_series;
  d["dp_peak"] = e.dp_peak;
  d["cdp_peak"] = e.cdp_peak;
  d["peak_ratio"] = e.peak_ratio;
  return d;
}

py::list validate_text(const std::string &text) {
  py::list out;
  for (const auto &v : validate_timeline(timeline_from_text(text)).violations) {
    out.append(std::string(1, v.check) + ": " + v.message);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_cdpsim, m) {
  m.doc() = "Deterministic simulator for cyclic data parallelism and its baselines.";

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<InfeasibleRuleError>(m, "InfeasibleRuleError", error.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", error.ptr());
  py::register_exception<IoError>(m, "IoError", error.ptr());

  py::list schemes;
  for (Scheme s : kAllSchemes) schemes.append(std::string(scheme_name(s)));
  m.attr("SCHEMES") = schemes;

  m.def("simulate", &simulate, py::arg("scheme"), py::arg("n"), py::arg("steps") = 3, py::arg("batch") = 1,
        py::arg("fwd_cost") = 1, py::arg("bwd_cost") = 1, py::arg("rule") = "CDPv2", py::arg("psi_p") = 480,
        py::arg("psi_a") = 960, py::arg("psi_int") = 96, py::arg("profile_json") = "",
        "Build, validate and cost one scheme.");
  m.def("table1", &table1, py::arg("n_values") = std::vector<int>{2, 3, 4, 8}, py::arg("psi_p") = 480,
        py::arg("psi_a") = 960, py::arg("psi_int") = 96, py::arg("batch") = 2, py::arg("steps") = 3,
        "Closed-form costs next to simulator measurements, one row per (scheme, n).");
  m.def("run_experiment", &experiment, py::arg("config_json"), py::arg("steps") = py::none(),
        "Train the toy stage model under each configured update rule.");
  m.def("extrapolate", &extrapolate, py::arg("series"), py::arg("n"));
  m.def("triangular_series", &triangular_series, py::arg("n"));
  m.def("validate_timeline_text", &validate_text, py::arg("text"),
        "Violations of a serialized timeline; empty when valid.");
}
