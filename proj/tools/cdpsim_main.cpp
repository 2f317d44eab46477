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

// cdpsim: timelines, cost tables, toy training and extrapolation.
//
// Exit codes: 0 ok, 2 config error, 3 timeline validation failure,
// 4 closed-form/measured mismatch, 5 numerical divergence, 6 I/O error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cdpsim/comm.hpp"
#include "cdpsim/cost.hpp"
#include "cdpsim/error.hpp"
#include "cdpsim/export.hpp"
#include "cdpsim/profile.hpp"
#include "cdpsim/schedule.hpp"
#include "cdpsim/sgd.hpp"

namespace {

using namespace cdpsim;

enum Exit { kOk = 0, kConfig = 2, kInvalid = 3, kMismatch = 4, kDiverged = 5, kIo = 6 };

struct Common {
  std::string out_dir;
};

std::string output_dir(const Common &c) {
  std::string dir = c.out_dir;
  if (dir.empty()) {
    const char *env = std::getenv("CDPSIM_OUTPUT_DIR");
    dir = env && *env ? env : ".";
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

std::string join_path(const std::string &dir, const std::string &name) {
  return (std::filesystem::path(dir) / name).string();
}

Scheme scheme_arg(const std::string &name) {
  auto s = parse_scheme(name);
  if (!s) throw ConfigError("--scheme", "unknown scheme '" + name + "'");
  return *s;
}

UpdateRule rule_arg(const std::string &name) {
  auto r = parse_rule(name);
  if (!r || r->kind == UpdateRule::Kind::Generic) throw ConfigError("--rule", "expected DP, CDPv1 or CDPv2");
  return *r;
}

struct SimulateArgs {
  std::string scheme = "MultiGpuCDP";
  int n = 3;
  int steps = 2;
  int batch = 1;
  int fwd = 1;
  int bwd = 1;
  std::string rule = "CDPv2";
  std::string profile;
  std::int64_t psi_p = 480, psi_a = 960, psi_int = 96;
  std::vector<std::string> formats{"csv", "svg", "text"};
  std::string name;
};

int cmd_simulate(const SimulateArgs &a, const Common &c) {
  ParallelismConfig cfg;
  cfg.scheme = scheme_arg(a.scheme);
  cfg.n = a.n;
  cfg.training_steps = a.steps;
  cfg.micro_batch_size = a.batch;
  cfg.cost_weights = {a.fwd, a.bwd};
  check_config(cfg);
  const ModelProfile profile =
      a.profile.empty() ? make_homogeneous_profile(a.n, a.psi_p, a.psi_a, a.psi_int) : load_profile(a.profile);
  if (profile.num_stages() != a.n) {
    throw ConfigError("/stages", "profile has " + std::to_string(profile.num_stages()) + " stages, --n is " +
                                     std::to_string(a.n));
  }
  if (a.formats.empty()) throw ConfigError("--formats", "at least one format is required");

  const Timeline tl = schedule_comms(build_timeline(cfg, rule_arg(a.rule)), profile);
  const auto report = validate_timeline(tl);
  const std::string dir = output_dir(c);
  const std::string stem = a.name.empty() ? std::string(scheme_name(cfg.scheme)) + "_n" + std::to_string(a.n) : a.name;
  for (const auto &f : a.formats) {
    if (f == "text") write_text_file(join_path(dir, stem + ".timeline.txt"), timeline_to_text(tl));
    if (f == "svg") write_text_file(join_path(dir, stem + ".svg"), timeline_to_svg(tl));
  }
  if (!report.ok()) {
    for (const auto &v : report.violations) std::cerr << "violation (" << v.check << "): " << v.message << '\n';
    return kInvalid;
  }
  const CostReport cost = measure_costs(tl, profile, cfg);
  for (const auto &f : a.formats) {
    if (f == "csv") write_text_file(join_path(dir, stem + ".cost.csv"), cost_csv({cost}));
  }
  std::cout << scheme_name(cfg.scheme) << " N=" << cfg.n << ": " << tl.tasks.size() << " tasks, "
            << tl.comm_events.size() << " comm events, devices " << cost.device_count << ", steady activations "
            << to_string(cost.steady_activation_memory_per_device) << ", comm volume "
            << to_string(cost.comm_volume_per_training_step) << '\n';
  return kOk;
}

struct Table1Args {
  std::vector<int> n{2, 3, 4, 8};
  std::vector<std::string> schemes;
  std::int64_t psi_p = 480, psi_a = 960, psi_int = 96;
  int batch = 2;
  int steps = 3;
  std::string perturb;
};

int cmd_table1(const Table1Args &a, const Common &c) {
  Table1Params p;
  p.psi_p = a.psi_p;
  p.psi_a = a.psi_a;
  p.psi_int = a.psi_int;
  p.micro_batch_size = a.batch;
  p.training_steps = a.steps;
  if (!a.perturb.empty()) p.perturb_closed_form = scheme_arg(a.perturb);
  std::vector<Scheme> schemes;
  for (const auto &s : a.schemes) schemes.push_back(scheme_arg(s));
  if (schemes.empty()) schemes.assign(std::begin(kAllSchemes), std::end(kAllSchemes));
  const auto rows = verify_table1(a.n, p, schemes);
  write_text_file(join_path(output_dir(c), "table1.csv"), table1_csv(rows));
  bool all = true;
  for (const auto &row : rows) {
    std::cout << (row.equal ? "ok       " : "MISMATCH ") << scheme_name(row.scheme) << " N=" << row.n;
    if (row.measured.degenerate_comm) std::cout << " (comm degenerate)";
    std::cout << '\n';
    for (const auto &m : row.mismatches) std::cout << "    " << m << '\n';
    all = all && row.equal;
  }
  return all ? kOk : kMismatch;
}

struct TrainArgs {
  std::string config;
  int steps = 0;
  double lr = -1.0;
};

int cmd_train(const TrainArgs &a, const Common &c) {
  ExperimentConfig cfg = a.config.empty() ? ExperimentConfig{} : load_experiment_config(a.config);
  if (a.steps > 0) cfg.steps = a.steps;
  if (a.lr >= 0.0) cfg.lr.base = a.lr;
  const ExperimentResult result = run_experiment(cfg);
  const std::string dir = output_dir(c);
  write_text_file(join_path(dir, "trajectory.csv"), trajectory_csv(result));
  write_text_file(join_path(dir, "summary.json"), experiment_summary_json(result));
  for (const auto &run : result.runs) {
    std::cout << rule_name(run.rule) << ": final loss " << run.losses.back() << '\n';
  }
  std::cout << "max final-loss spread " << result.max_final_loss_spread << ", max pairwise divergence "
            << result.max_pairwise_divergence << '\n';
  return kOk;
}

struct ExtrapolateArgs {
  std::string series;
  std::string profile;
  bool triangular = false;
  std::vector<int> n{4, 8, 32};
  bool svg = true;
};

int cmd_extrapolate(const ExtrapolateArgs &a, const Common &c) {
  const int sources = !a.series.empty() + !a.profile.empty() + a.triangular;
  if (sources != 1) throw ConfigError("--series", "give exactly one of --series, --profile, --triangular");
  std::vector<double> pass;
  if (!a.series.empty()) pass = load_series(a.series);
  else if (!a.profile.empty()) pass = activation_pass_series(load_profile(a.profile));

  std::vector<Extrapolation> runs;
  for (int n : a.n) runs.push_back(extrapolate_activation_memory(a.triangular ? triangular_series(n) : pass, n));
  const std::string dir = output_dir(c);
  write_text_file(join_path(dir, "extrapolation.csv"), extrapolation_csv(runs));
  write_text_file(join_path(dir, "peak_ratio.csv"), peak_ratio_csv(runs));
  for (const auto &run : runs) {
    if (a.svg) write_text_file(join_path(dir, "extrapolation_n" + std::to_string(run.n) + ".svg"), extrapolation_svg(run));
    std::cout << "N=" << run.n << " peak ratio CDP/DP " << run.peak_ratio << '\n';
  }
  return kOk;
}

int cmd_validate(const std::string &path) {
  const Timeline tl = timeline_from_text(read_text_file(path));
  const auto report = validate_timeline(tl);
  for (const auto &v : report.violations) std::cout << "violation (" << v.check << "): " << v.message << '\n';
  std::cout << (report.ok() ? "valid" : "invalid") << ": " << tl.tasks.size() << " tasks, "
            << report.violations.size() << " violations\n";
  return report.ok() ? kOk : kInvalid;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Cyclic data parallelism simulator"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--out", common.out_dir, "Output directory (default: $CDPSIM_OUTPUT_DIR or .)");

  SimulateArgs sim;
  auto *s = app.add_subcommand("simulate", "Build, validate and cost one scheme");
  s->add_option("--scheme", sim.scheme, "Scheme name")->capture_default_str();
  s->add_option("--n", sim.n, "Stages = micro-batches")->capture_default_str();
  s->add_option("--steps", sim.steps, "Training steps")->capture_default_str();
  s->add_option("--batch", sim.batch, "Micro-batch size B")->capture_default_str();
  s->add_option("--fwd-cost", sim.fwd, "Time steps per forward pass")->capture_default_str();
  s->add_option("--bwd-cost", sim.bwd, "Time steps per backward pass")->capture_default_str();
  s->add_option("--rule", sim.rule, "Update rule for cyclic schemes")->capture_default_str();
  s->add_option("--profile", sim.profile, "Model profile JSON (default: homogeneous)");
  s->add_option("--psi-p", sim.psi_p, "Total parameter memory")->capture_default_str();
  s->add_option("--psi-a", sim.psi_a, "Activation memory per sample")->capture_default_str();
  s->add_option("--psi-int", sim.psi_int, "Boundary activation memory per sample")->capture_default_str();
  s->add_option("--formats", sim.formats, "Any of csv, svg, text")
      ->check(CLI::IsMember({"csv", "svg", "text"}))
      ->capture_default_str();
  s->add_option("--name", sim.name, "Output file stem (default: <scheme>_n<N>)");

  Table1Args t1;
  auto *t = app.add_subcommand("table1", "Check closed-form costs against the simulator");
  t->add_option("--n", t1.n, "Values of N")->capture_default_str();
  t->add_option("--schemes", t1.schemes, "Subset of schemes (default: all)");
  t->add_option("--psi-p", t1.psi_p, "Total parameter memory")->capture_default_str();
  t->add_option("--psi-a", t1.psi_a, "Activation memory per sample")->capture_default_str();
  t->add_option("--psi-int", t1.psi_int, "Boundary activation memory per sample")->capture_default_str();
  t->add_option("--batch", t1.batch, "Micro-batch size B")->capture_default_str();
  t->add_option("--steps", t1.steps, "Training steps simulated (>= 2)")->capture_default_str();
  t->add_option("--perturb-closed-form", t1.perturb)->group("");

  TrainArgs tr;
  auto *r = app.add_subcommand("train-toy", "Train the toy stage model under DP, CDPv1 and CDPv2");
  r->add_option("--config", tr.config, "Experiment JSON (default: built-in convex task)");
  r->add_option("--steps", tr.steps, "Override the step count");
  r->add_option("--lr", tr.lr, "Override the base learning rate");

  ExtrapolateArgs ex;
  auto *e = app.add_subcommand("extrapolate", "Per-worker activation memory of N DP or CDP workers");
  e->add_option("--series", ex.series, "One sample per line");
  e->add_option("--profile", ex.profile, "Model profile JSON; uses its stage activations");
  e->add_flag("--triangular", ex.triangular, "Use the homogeneous N-stage pass for each N");
  e->add_option("--n", ex.n, "Values of N")->capture_default_str();
  e->add_flag("!--no-svg", ex.svg, "Skip the SVG plots");

  std::string timeline_path;
  auto *v = app.add_subcommand("validate", "Check a timeline text file");
  v->add_option("timeline", timeline_path, "Timeline file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*s) return cmd_simulate(sim, common);
    if (*t) return cmd_table1(t1, common);
    if (*r) return cmd_train(tr, common);
    if (*e) return cmd_extrapolate(ex, common);
    if (*v) return cmd_validate(timeline_path);
  } catch (const DivergenceError &err) {
    std::cerr << "diverged at step " << err.step() << ": " << err.what() << '\n';
    return kDiverged;
  } catch (const InfeasibleRuleError &err) {
    std::cerr << "infeasible rule: " << err.what() << '\n';
    return kConfig;
  } catch (const ConfigError &err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kConfig;
  } catch (const IoError &err) {
    std::cerr << "i/o error: " << err.what() << '\n';
    return kIo;
  } catch (const Error &err) {
    std::cerr << "error: " << err.what() << '\n';
    return kConfig;
  }
  return kOk;
}
