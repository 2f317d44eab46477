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

#include "cdpsim/schedule.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include "cdpsim/error.hpp"

namespace cdpsim {

std::string_view comm_kind_name(CommKind k) {
  switch (k) {
    case CommKind::GradientReduce: return "GradientReduce";
    case CommKind::ActivationHandoff: return "ActivationHandoff";
    case CommKind::StateTransfer: return "StateTransfer";
    case CommKind::CollectiveAllReduce: return "CollectiveAllReduce";
    case CommKind::Broadcast: return "Broadcast";
  }
  return "?";
}

std::optional<CommKind> parse_comm_kind(std::string_view name) {
  for (auto k : {CommKind::GradientReduce, CommKind::ActivationHandoff, CommKind::StateTransfer,
                 CommKind::CollectiveAllReduce, CommKind::Broadcast}) {
    if (comm_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

bool UpdateRule::reads_fresh(int n, int micro_batch, int stage) const {
  switch (kind) {
    case Kind::DP: return true;
    case Kind::CDPv1: return false;
    case Kind::CDPv2: return stage >= n - micro_batch + 1;
    case Kind::Generic:
      return fresh.at(micro_batch - 1).at(stage - 1);
  }
  return true;
}

int UpdateRule::version(int n, int micro_batch, int stage, int training_step) const {
  return reads_fresh(n, micro_batch, stage) ? training_step : training_step - 1;
}

std::string rule_name(const UpdateRule &rule) {
  switch (rule.kind) {
    case UpdateRule::Kind::DP: return "DP";
    case UpdateRule::Kind::CDPv1: return "CDPv1";
    case UpdateRule::Kind::CDPv2: return "CDPv2";
    case UpdateRule::Kind::Generic: return "Generic";
  }
  return "?";
}

std::optional<UpdateRule> parse_rule(std::string_view name) {
  if (name == "DP") return UpdateRule::dp();
  if (name == "CDPv1" || name == "cdp-v1") return UpdateRule::cdp_v1();
  if (name == "CDPv2" || name == "cdp-v2") return UpdateRule::cdp_v2();
  return std::nullopt;
}

int Timeline::gpu_count() const {
  std::set<int> gpus;
  for (const auto &d : devices) gpus.insert(d.gpu);
  return static_cast<int>(gpus.size());
}

std::optional<std::size_t> Timeline::task_at(int device, TimeStep tau) const {
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (tasks[k].device == device && tasks[k].covers(tau)) return k;
  }
  return std::nullopt;
}

std::optional<std::size_t> Timeline::find_task(TaskKind kind, int micro_batch, int stage,
                                               int training_step) const {
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto &task = tasks[k];
    if (task.kind == kind && task.micro_batch == micro_batch && task.stage == stage &&
        task.training_step == training_step) {
      return k;
    }
  }
  return std::nullopt;
}

namespace {

TimeStep step_offset(const ParallelismConfig &cfg, int micro_batch, int training_step) {
  const TimeStep len = static_cast<TimeStep>(cfg.n) *
                       (cfg.cost_weights.forward_cost + cfg.cost_weights.backward_cost);
  TimeStep offset = (training_step - 1) * len;
  // One forward plus one backward per micro-batch: N staggers tile a step.
  if (is_cyclic(cfg.scheme)) {
    offset += static_cast<TimeStep>(cfg.cost_weights.forward_cost + cfg.cost_weights.backward_cost) *
              (micro_batch - 1);
  }
  return offset;
}

void require_scheme(const ParallelismConfig &cfg, std::initializer_list<Scheme> allowed,
                    const char *builder) {
  check_config(cfg);
  for (auto s : allowed) {
    if (cfg.scheme == s) return;
  }
  throw ConfigError("scheme", std::string(builder) + " does not accept scheme " +
                                  std::string(scheme_name(cfg.scheme)));
}

Timeline skeleton(const ParallelismConfig &cfg) {
  Timeline tl;
  tl.scheme = cfg.scheme;
  tl.n = cfg.n;
  tl.training_steps = cfg.training_steps;
  tl.micro_batch_size = cfg.micro_batch_size;
  tl.cost_weights = cfg.cost_weights;
  return tl;
}

// Emits every forward/backward task, placing (i, j, t) on place(i, j, t).
template <typename Place>
void emit_tasks(Timeline &tl, const ParallelismConfig &cfg, const UpdateRule &rule, Place place) {
  const int n = cfg.n;
  for (int t = 1; t <= cfg.training_steps; ++t) {
    for (int i = 1; i <= n; ++i) {
      for (int j = 1; j <= n; ++j) {
        Task f;
        f.kind = TaskKind::Forward;
        f.micro_batch = i;
        f.stage = j;
        f.training_step = t;
        f.param_version = rule.version(n, i, j, t);
        f.device = place(i, j, t);
        f.start = forward_start(cfg, i, j, t);
        f.duration = cfg.cost_weights.forward_cost;
        Task b = f;
        b.kind = TaskKind::Backward;
        b.start = backward_start(cfg, i, j, t);
        b.duration = cfg.cost_weights.backward_cost;
        tl.tasks.push_back(f);
        tl.tasks.push_back(b);
        tl.horizon = std::max({tl.horizon, f.end(), b.end()});
      }
    }
  }
  std::sort(tl.tasks.begin(), tl.tasks.end(), [](const Task &a, const Task &b) {
    return std::tie(a.start, a.device) < std::tie(b.start, b.device);
  });
}

std::vector<Device> replicas(int count, Residency residency, int capacity) {
  std::vector<Device> devices;
  for (int d = 0; d < count; ++d) {
    Device dev;
    dev.id = d;
    dev.gpu = d;
    dev.capacity = capacity;
    dev.residency = residency;
    devices.push_back(dev);
  }
  return devices;
}

}  // namespace

TimeStep forward_start(const ParallelismConfig &cfg, int micro_batch, int stage, int training_step) {
  return step_offset(cfg, micro_batch, training_step) +
         static_cast<TimeStep>(stage - 1) * cfg.cost_weights.forward_cost + 1;
}

TimeStep backward_start(const ParallelismConfig &cfg, int micro_batch, int stage, int training_step) {
  return step_offset(cfg, micro_batch, training_step) +
         static_cast<TimeStep>(cfg.n) * cfg.cost_weights.forward_cost +
         static_cast<TimeStep>(cfg.n - stage) * cfg.cost_weights.backward_cost + 1;
}

void check_rule_feasible(const ParallelismConfig &cfg, const UpdateRule &rule) {
  const int n = cfg.n;
  if (rule.kind == UpdateRule::Kind::Generic) {
    if (rule.fresh.size() != static_cast<std::size_t>(n)) {
      throw ConfigError("rule", "generic rule table must have N rows");
    }
    for (const auto &row : rule.fresh) {
      if (row.size() != static_cast<std::size_t>(n)) {
        throw ConfigError("rule", "generic rule table must have N columns");
      }
    }
  }
  // Steady-state timing repeats every training step, so checking step 2
  // against the backward passes of step 1 covers all steps.
  for (int j = 1; j <= n; ++j) {
    TimeStep available = 0;
    for (int i = 1; i <= n; ++i) {
      available = std::max(available, backward_start(cfg, i, j, 1) + cfg.cost_weights.backward_cost - 1);
    }
    for (int i = 1; i <= n; ++i) {
      if (rule.reads_fresh(n, i, j) && forward_start(cfg, i, j, 2) <= available) {
        throw InfeasibleRuleError(
            i, j,
            "rule reads theta_t of stage " + std::to_string(j) + " for micro-batch " +
                std::to_string(i) + " before the stage update has completed");
      }
    }
  }
}

Timeline build_dp_timeline(const ParallelismConfig &cfg) {
  require_scheme(cfg, {Scheme::SingleGpuDP, Scheme::MultiGpuDP}, "build_dp_timeline");
  Timeline tl = skeleton(cfg);
  if (cfg.scheme == Scheme::SingleGpuDP) {
    tl.devices = replicas(cfg.n, Residency::FollowActivations, 1);
    for (auto &d : tl.devices) d.gpu = 0;
  } else {
    tl.devices = replicas(cfg.n, Residency::FullReplica, 1);
  }
  emit_tasks(tl, cfg, UpdateRule::dp(), [](int i, int, int) { return i - 1; });
  return tl;
}

Timeline build_cdp_timeline(const ParallelismConfig &cfg, const UpdateRule &rule) {
  require_scheme(cfg, {Scheme::SingleGpuCDP, Scheme::MultiGpuCDP}, "build_cdp_timeline");
  check_rule_feasible(cfg, rule);
  Timeline tl = skeleton(cfg);
  if (cfg.scheme == Scheme::SingleGpuCDP) {
    tl.devices = replicas(cfg.n, Residency::FollowActivations, 1);
    for (auto &d : tl.devices) d.gpu = 0;
  } else {
    tl.devices = replicas(cfg.n, Residency::FullReplica, 1);
  }
  emit_tasks(tl, cfg, rule, [](int i, int, int) { return i - 1; });
  return tl;
}

Timeline build_mp_timeline(const ParallelismConfig &cfg, bool cyclic, const UpdateRule &rule) {
  require_scheme(cfg, {Scheme::DpWithMP, Scheme::CdpWithMP}, "build_mp_timeline");
  if (cyclic != (cfg.scheme == Scheme::CdpWithMP)) {
    throw ConfigError("scheme", "cyclic flag disagrees with scheme");
  }
  const int n = cfg.n;
  Timeline tl = skeleton(cfg);
  if (!cyclic) {
    // Device (i, j) is dedicated to micro-batch i and stage j.
    for (int i = 1; i <= n; ++i) {
      for (int j = 1; j <= n; ++j) {
        Device dev;
        dev.id = (i - 1) * n + (j - 1);
        dev.gpu = dev.id;
        dev.capacity = 1;
        dev.residency = Residency::OwnedStages;
        dev.stages = {j};
        tl.devices.push_back(dev);
      }
    }
    emit_tasks(tl, cfg, UpdateRule::dp(), [n](int i, int j, int) { return (i - 1) * n + (j - 1); });
    return tl;
  }

  check_rule_feasible(cfg, rule);
  // Pyramidal assignment: per stage, a micro-batch takes the lowest-numbered
  // device whose previous occupant has finished its backward pass.
  std::map<std::tuple<int, int, int>, int> placement;  // (i, j, t) -> device
  for (int j = 1; j <= n; ++j) {
    std::vector<TimeStep> busy_until;  // per local device
    const int first_id = static_cast<int>(tl.devices.size());
    for (int t = 1; t <= cfg.training_steps; ++t) {
      for (int i = 1; i <= n; ++i) {
        const TimeStep f = forward_start(cfg, i, j, t);
        const TimeStep b_end = backward_start(cfg, i, j, t) + cfg.cost_weights.backward_cost - 1;
        std::size_t local = 0;
        while (local < busy_until.size() && busy_until[local] >= f) ++local;
        if (local == busy_until.size()) busy_until.push_back(0);
        busy_until[local] = b_end;
        placement[{i, j, t}] = first_id + static_cast<int>(local);
      }
    }
    for (std::size_t local = 0; local < busy_until.size(); ++local) {
      Device dev;
      dev.id = first_id + static_cast<int>(local);
      dev.gpu = dev.id;
      dev.capacity = 1;
      dev.residency = Residency::OwnedStages;
      dev.stages = {j};
      tl.devices.push_back(dev);
    }
  }
  emit_tasks(tl, cfg, rule, [&placement](int i, int j, int t) { return placement.at({i, j, t}); });
  return tl;
}

Timeline build_pp_timeline(const ParallelismConfig &cfg, const UpdateRule &rule) {
  require_scheme(cfg, {Scheme::PP}, "build_pp_timeline");
  check_rule_feasible(cfg, rule);
  Timeline tl = skeleton(cfg);
  tl.devices = replicas(cfg.n, Residency::OwnedStages, cfg.n);
  for (auto &d : tl.devices) d.stages = {d.id + 1};
  emit_tasks(tl, cfg, rule, [](int, int j, int) { return j - 1; });
  return tl;
}

Timeline build_zero_timeline(const ParallelismConfig &cfg, bool cyclic, const UpdateRule &rule) {
  require_scheme(cfg, {Scheme::ZeroDP, Scheme::ZeroCDP}, "build_zero_timeline");
  if (cyclic != (cfg.scheme == Scheme::ZeroCDP)) {
    throw ConfigError("scheme", "cyclic flag disagrees with scheme");
  }
  const UpdateRule effective = cyclic ? rule : UpdateRule::dp();
  if (cyclic) check_rule_feasible(cfg, rule);
  Timeline tl = skeleton(cfg);
  tl.devices = replicas(cfg.n, Residency::OwnedStages, 1);
  for (auto &d : tl.devices) d.stages = {d.id + 1};
  emit_tasks(tl, cfg, effective, [](int i, int, int) { return i - 1; });
  return tl;
}

Timeline build_timeline(const ParallelismConfig &cfg, const UpdateRule &rule) {
  switch (cfg.scheme) {
    case Scheme::SingleGpuDP:
    case Scheme::MultiGpuDP:
      return build_dp_timeline(cfg);
    case Scheme::SingleGpuCDP:
    case Scheme::MultiGpuCDP:
      return build_cdp_timeline(cfg, rule);
    case Scheme::DpWithMP:
      return build_mp_timeline(cfg, false);
    case Scheme::CdpWithMP:
      return build_mp_timeline(cfg, true, rule);
    case Scheme::PP:
      return build_pp_timeline(cfg, rule);
    case Scheme::ZeroDP:
      return build_zero_timeline(cfg, false);
    case Scheme::ZeroCDP:
      return build_zero_timeline(cfg, true, rule);
  }
  throw ConfigError("scheme", "unknown scheme");
}

bool ValidationReport::has(char check) const {
  return std::any_of(violations.begin(), violations.end(),
                     [check](const Violation &v) { return v.check == check; });
}

namespace {

struct TaskIndex {
  int n = 0;
  int steps = 0;
  std::vector<long> slots;  // -1 when absent

  explicit TaskIndex(const Timeline &tl) : n(tl.n), steps(0) {
    for (const auto &task : tl.tasks) steps = std::max(steps, task.training_step);
    slots.assign(static_cast<std::size_t>(2) * n * n * std::max(steps, 1), -1);
    for (std::size_t k = 0; k < tl.tasks.size(); ++k) {
      const auto &task = tl.tasks[k];
      if (task.micro_batch < 1 || task.micro_batch > n || task.stage < 1 || task.stage > n ||
          task.training_step < 1) {
        continue;
      }
      slots[key(task.kind, task.micro_batch, task.stage, task.training_step)] = static_cast<long>(k);
    }
  }

  std::size_t key(TaskKind kind, int i, int j, int t) const {
    return ((static_cast<std::size_t>(t - 1) * n + (i - 1)) * n + (j - 1)) * 2 +
           (kind == TaskKind::Backward ? 1 : 0);
  }

  const Task *get(const Timeline &tl, TaskKind kind, int i, int j, int t) const {
    if (i < 1 || i > n || j < 1 || j > n || t < 1 || t > steps) return nullptr;
    long k = slots[key(kind, i, j, t)];
    return k < 0 ? nullptr : &tl.tasks[static_cast<std::size_t>(k)];
  }
};

Violation violation(char check, std::size_t k, const Task &task, std::string message) {
  Violation v;
  v.check = check;
  v.task = k;
  v.micro_batch = task.micro_batch;
  v.stage = task.stage;
  v.training_step = task.training_step;
  v.device = task.device;
  v.time = task.start;
  v.message = std::move(message);
  return v;
}

}  // namespace

ValidationReport validate_timeline(const Timeline &tl) {
  ValidationReport report;
  const TaskIndex index(tl);
  const int n = tl.n;

  // Time at which version v of stage j exists: every backward of stage j in
  // step v-1 has finished. Versions 0 and 1 are the initial parameters.
  auto version_ready = [&](int stage, int version) -> std::optional<TimeStep> {
    if (version <= 1) return TimeStep{0};
    TimeStep ready = 0;
    for (int i = 1; i <= n; ++i) {
      const Task *b = index.get(tl, TaskKind::Backward, i, stage, version - 1);
      if (b == nullptr) return std::nullopt;
      ready = std::max(ready, b->end());
    }
    return ready;
  };

  for (std::size_t k = 0; k < tl.tasks.size(); ++k) {
    const Task &task = tl.tasks[k];
    const int i = task.micro_batch;
    const int j = task.stage;
    const int t = task.training_step;
    if (task.kind == TaskKind::Forward) {
      if (j > 1) {
        const Task *prev = index.get(tl, TaskKind::Forward, i, j - 1, t);
        if (prev == nullptr || prev->end() >= task.start) {
          report.violations.push_back(violation('a', k, task, "forward runs before forward of stage " +
                                                                  std::to_string(j - 1)));
        }
      }
    } else {
      const Task *fwd = index.get(tl, TaskKind::Forward, i, j, t);
      if (fwd == nullptr || fwd->end() >= task.start) {
        report.violations.push_back(violation('b', k, task, "backward runs before its forward"));
      }
      if (j < n) {
        const Task *next = index.get(tl, TaskKind::Backward, i, j + 1, t);
        if (next == nullptr || next->end() >= task.start) {
          report.violations.push_back(violation('b', k, task, "backward runs before backward of stage " +
                                                                  std::to_string(j + 1)));
        }
      }
    }
    if (task.param_version < 0 || task.param_version > t) {
      report.violations.push_back(violation('c', k, task, "parameter version outside [0, t]"));
    } else {
      auto ready = version_ready(j, task.param_version);
      if (!ready || *ready >= task.start) {
        report.violations.push_back(violation(
            'c', k, task, "reads version " + std::to_string(task.param_version) +
                              " of stage " + std::to_string(j) + " before it exists"));
      }
    }
  }

  // (d) and (e): sweep each device.
  std::vector<std::vector<std::size_t>> by_device(tl.devices.size());
  for (std::size_t k = 0; k < tl.tasks.size(); ++k) {
    const int d = tl.tasks[k].device;
    if (d >= 0 && static_cast<std::size_t>(d) < by_device.size()) {
      by_device[static_cast<std::size_t>(d)].push_back(k);
    } else {
      report.violations.push_back(violation('d', k, tl.tasks[k], "task placed on unknown device"));
    }
  }
  for (std::size_t d = 0; d < by_device.size(); ++d) {
    auto &ks = by_device[d];
    std::sort(ks.begin(), ks.end(), [&](std::size_t a, std::size_t b) {
      return tl.tasks[a].start < tl.tasks[b].start;
    });
    for (std::size_t q = 1; q < ks.size(); ++q) {
      const Task &prev = tl.tasks[ks[q - 1]];
      const Task &cur = tl.tasks[ks[q]];
      if (cur.start <= prev.end()) {
        report.violations.push_back(violation('d', ks[q], cur, "device already busy"));
      }
    }
    // Activation intervals [forward start, backward end] per (i, t) instance.
    std::map<std::pair<int, int>, std::pair<TimeStep, TimeStep>> held;
    for (auto k : ks) {
      const Task &task = tl.tasks[k];
      if (task.kind != TaskKind::Forward) continue;
      const Task *b = index.get(tl, TaskKind::Backward, task.micro_batch, task.stage, task.training_step);
      const TimeStep until = b ? b->end() : tl.horizon;
      auto key = std::make_pair(task.micro_batch, task.training_step);
      auto it = held.find(key);
      if (it == held.end()) {
        held[key] = {task.start, until};
      } else {
        it->second.first = std::min(it->second.first, task.start);
        it->second.second = std::max(it->second.second, until);
      }
    }
    std::vector<std::pair<TimeStep, int>> sweep;
    for (const auto &[key, iv] : held) {
      sweep.emplace_back(iv.first, +1);
      sweep.emplace_back(iv.second + 1, -1);
    }
    std::sort(sweep.begin(), sweep.end());
    int live = 0;
    for (const auto &[time, delta] : sweep) {
      live += delta;
      if (live > tl.devices[d].capacity) {
        Violation v;
        v.check = 'e';
        v.device = static_cast<int>(d);
        v.time = time;
        v.message = "device holds activations of " + std::to_string(live) +
                    " micro-batches, capacity " + std::to_string(tl.devices[d].capacity);
        report.violations.push_back(v);
        break;
      }
    }
  }
  return report;
}

std::vector<std::vector<int>> version_matrix(const Timeline &tl, int training_step) {
  std::vector<std::vector<int>> m(tl.n, std::vector<int>(tl.n, -1));
  for (const auto &task : tl.tasks) {
    if (task.kind == TaskKind::Forward && task.training_step == training_step) {
      m[task.micro_batch - 1][task.stage - 1] = task.param_version;
    }
  }
  return m;
}

int stale_read_count(const Timeline &tl, int training_step) {
  int count = 0;
  for (const auto &row : version_matrix(tl, training_step)) {
    for (int v : row) {
      if (v == training_step - 1) ++count;
    }
  }
  return count;
}

int required_param_copies(const Timeline &tl) {
  const TaskIndex index(tl);
  for (int t = 2; t <= tl.training_steps; ++t) {
    for (int j = 1; j <= tl.n; ++j) {
      TimeStep ready = 0;
      for (int i = 1; i <= tl.n; ++i) {
        if (const Task *b = index.get(tl, TaskKind::Backward, i, j, t - 1)) {
          ready = std::max(ready, b->end());
        }
      }
      for (const auto &task : tl.tasks) {
        if (task.kind == TaskKind::Forward && task.stage == j && task.training_step == t &&
            task.param_version == t - 1 && task.start > ready) {
          return 2;
        }
      }
    }
  }
  return 1;
}

}  // namespace cdpsim
