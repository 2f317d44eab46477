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

#include "cdpsim/cost.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "cdpsim/comm.hpp"
#include "cdpsim/error.hpp"

namespace cdpsim {

CostReport closed_form_costs(const ParallelismConfig &cfg, const ModelProfile &profile) {
  check_config(cfg);
  check_profile(profile);
  if (!profile.is_homogeneous()) {
    throw ConfigError("/stages", "closed forms require equal stages");
  }
  if (profile.num_stages() != cfg.n) {
    throw ConfigError("/stages", "profile stage count differs from n");
  }
  const std::int64_t n = cfg.n;
  const Memory b(cfg.micro_batch_size);
  const Memory psi_p(profile.total_params());
  const Memory psi_a(profile.total_acts_per_sample());
  const Memory psi_int(profile.boundary_act_per_sample);
  const Memory half_n1(n + 1, 2);
  const int log_n = tree_depth(cfg.n);

  CostReport r;
  r.scheme = cfg.scheme;
  r.n = cfg.n;
  switch (cfg.scheme) {
    case Scheme::SingleGpuDP:
      r.steady_activation_memory_per_device = Memory(n) * b * psi_a;
      r.parameter_memory_per_device = Memory(n) * psi_p;
      r.device_count = 1;
      break;
    case Scheme::SingleGpuCDP:
      r.steady_activation_memory_per_device = half_n1 * b * psi_a;
      r.parameter_memory_per_device = half_n1 * psi_p;
      r.device_count = 1;
      break;
    case Scheme::MultiGpuDP:
    case Scheme::MultiGpuCDP:
      r.steady_activation_memory_per_device = b * psi_a;
      r.parameter_memory_per_device = psi_p;
      r.comm_volume_per_training_step = psi_p;
      r.max_comm_steps_per_boundary = is_cyclic(cfg.scheme) ? 1 : log_n;
      r.device_count = cfg.n;
      break;
    case Scheme::DpWithMP:
      r.steady_activation_memory_per_device = b * psi_a / Memory(n);
      r.parameter_memory_per_device = psi_p / Memory(n);
      r.comm_volume_per_training_step = psi_p + b * psi_int;
      r.max_comm_steps_per_boundary = log_n;
      r.device_count = cfg.n * cfg.n;
      break;
    case Scheme::CdpWithMP:
      r.steady_activation_memory_per_device = b * psi_a / Memory(n);
      r.parameter_memory_per_device = psi_p / Memory(n);
      // Stage j has N-j+1 replicas; every replica of a shared stage forwards
      // its stage once per step, the lone replica of stage N never does.
      r.comm_volume_per_training_step =
          Memory(n * (n + 1) / 2 - 1, n * n) * psi_p + b * psi_int;
      r.max_comm_steps_per_boundary = 1;
      r.device_count = cfg.n * (cfg.n + 1) / 2;
      break;
    case Scheme::PP:
      r.steady_activation_memory_per_device = b * psi_a;
      r.parameter_memory_per_device = psi_p / Memory(n);
      r.comm_volume_per_training_step = b * psi_int;
      r.max_comm_steps_per_boundary = 1;
      r.device_count = cfg.n;
      break;
    case Scheme::ZeroDP:
    case Scheme::ZeroCDP:
      r.steady_activation_memory_per_device = b * psi_a;
      r.parameter_memory_per_device = psi_p / Memory(n);
      r.comm_volume_per_training_step = psi_p;
      r.max_comm_steps_per_boundary = is_cyclic(cfg.scheme) ? 1 : log_n;
      r.device_count = cfg.n;
      break;
  }
  r.peak_activation_memory_per_device = r.steady_activation_memory_per_device;
  r.parameter_memory_shared = cfg.scheme == Scheme::SingleGpuDP || cfg.scheme == Scheme::SingleGpuCDP
                                  ? psi_p
                                  : r.parameter_memory_per_device;
  r.degenerate_comm = cfg.n == 1 && cfg.scheme != Scheme::SingleGpuDP &&
                      cfg.scheme != Scheme::SingleGpuCDP;
  return r;
}

namespace {

// Difference-array accumulation of exact quantities over [1, horizon].
class Profile1D {
 public:
  explicit Profile1D(TimeStep horizon) : diff_(static_cast<std::size_t>(horizon) + 2, Memory(0)) {}
  void add(TimeStep from, TimeStep to, Memory amount) {
    if (from > to || amount == Memory(0)) return;
    diff_[static_cast<std::size_t>(from)] += amount;
    diff_[static_cast<std::size_t>(to) + 1] -= amount;
  }
  std::vector<Memory> values() const {
    std::vector<Memory> out(diff_.size(), Memory(0));
    Memory run(0);
    for (std::size_t k = 0; k < diff_.size(); ++k) {
      run += diff_[k];
      out[k] = run;
    }
    return out;
  }

 private:
  std::vector<Memory> diff_;
};

}  // namespace

CostReport measure_costs(const Timeline &tl, const ModelProfile &profile, const ParallelismConfig &cfg) {
  check_profile(profile);
  if (profile.num_stages() != tl.n || cfg.n != tl.n) {
    throw ConfigError("/stages", "profile, config and timeline disagree on n");
  }
  CostReport r;
  r.scheme = tl.scheme;
  r.n = tl.n;
  r.device_count = tl.gpu_count();
  r.degenerate_comm = tl.n == 1 && tl.scheme != Scheme::SingleGpuDP && tl.scheme != Scheme::SingleGpuCDP;

  const TimeStep horizon = tl.horizon;
  const TimeStep w_begin = tl.has_window() ? tl.window_begin() : 1;
  const TimeStep w_end = tl.has_window() ? tl.window_end() : horizon;
  const TimeStep step_len = tl.step_length();
  r.window_steps = tl.has_window() ? tl.training_steps - 1 : 1;
  const Memory b(cfg.micro_batch_size);

  std::map<int, std::size_t> gpu_slot;
  for (const auto &d : tl.devices) gpu_slot.emplace(d.gpu, gpu_slot.size());
  std::vector<Profile1D> acts(gpu_slot.size(), Profile1D(horizon));
  std::vector<Profile1D> params(gpu_slot.size(), Profile1D(horizon));

  // Pair forwards with backwards to get activation lifetimes.
  std::map<std::tuple<int, int, int>, const Task *> backward;
  for (const auto &task : tl.tasks) {
    if (task.kind == TaskKind::Backward) backward[{task.micro_batch, task.stage, task.training_step}] = &task;
  }
  for (const auto &task : tl.tasks) {
    if (task.kind != TaskKind::Forward) continue;
    auto it = backward.find({task.micro_batch, task.stage, task.training_step});
    const TimeStep until = it == backward.end() ? horizon : it->second->end();
    const Device &dev = tl.devices.at(task.device);
    const std::size_t g = gpu_slot.at(dev.gpu);
    acts[g].add(task.start, until, b * Memory(profile.stage_acts_per_sample[task.stage - 1]));
    if (dev.residency == Residency::FollowActivations) {
      params[g].add(task.start, until, Memory(profile.stage_params[task.stage - 1]));
    }
  }
  for (const auto &dev : tl.devices) {
    const std::size_t g = gpu_slot.at(dev.gpu);
    if (dev.residency == Residency::FullReplica) {
      params[g].add(1, horizon, Memory(profile.total_params()));
    } else if (dev.residency == Residency::OwnedStages) {
      for (int j : dev.stages) params[g].add(1, horizon, Memory(profile.stage_params[j - 1]));
    }
  }

  bool floor_set = false;
  std::vector<std::vector<Memory>> act_values, param_values;
  for (std::size_t g = 0; g < acts.size(); ++g) {
    act_values.push_back(acts[g].values());
    param_values.push_back(params[g].values());
  }
  for (TimeStep tau = 1; tau <= horizon; ++tau) {
    Memory act_max(0), param_max(0);
    for (std::size_t g = 0; g < acts.size(); ++g) {
      act_max = std::max(act_max, act_values[g][static_cast<std::size_t>(tau)]);
      param_max = std::max(param_max, param_values[g][static_cast<std::size_t>(tau)]);
    }
    r.peak_activation_memory_per_device = std::max(r.peak_activation_memory_per_device, act_max);
    if (tau <= step_len) r.warmup_activation_peak = std::max(r.warmup_activation_peak, act_max);
    if (tau >= w_begin && tau <= w_end) {
      r.steady_activation_memory_per_device = std::max(r.steady_activation_memory_per_device, act_max);
      r.parameter_memory_per_device = std::max(r.parameter_memory_per_device, param_max);
      if (!floor_set || act_max < r.steady_activation_floor) {
        r.steady_activation_floor = act_max;
        floor_set = true;
      }
    }
  }
  const bool single_gpu = tl.scheme == Scheme::SingleGpuDP || tl.scheme == Scheme::SingleGpuCDP;
  r.parameter_memory_shared = single_gpu ? Memory(profile.total_params()) : r.parameter_memory_per_device;

  // Occupancy: idle lanes and busy GPUs over the window.
  const std::size_t span = static_cast<std::size_t>(std::max<TimeStep>(0, w_end - w_begin + 1));
  std::vector<std::set<int>> busy_gpus(span);
  long busy_slots = 0;
  for (const auto &task : tl.tasks) {
    for (TimeStep tau = std::max(task.start, w_begin); tau <= std::min(task.end(), w_end); ++tau) {
      ++busy_slots;
      busy_gpus[static_cast<std::size_t>(tau - w_begin)].insert(tl.devices.at(task.device).gpu);
    }
  }
  const long total_slots = static_cast<long>(span) * static_cast<long>(tl.devices.size());
  r.idle_fraction = total_slots > 0 ? Fraction(total_slots - busy_slots, total_slots) : Fraction(0);
  if (span > 0) {
    r.min_busy_devices = static_cast<int>(busy_gpus.front().size());
    for (const auto &s : busy_gpus) {
      r.min_busy_devices = std::min(r.min_busy_devices, static_cast<int>(s.size()));
      r.max_busy_devices = std::max(r.max_busy_devices, static_cast<int>(s.size()));
    }
  }

  // Communication within the window.
  Memory volume(0), state_volume(0);
  std::set<TimeStep> collective_at;
  for (const auto &ev : tl.comm_events) {
    if (ev.boundary < w_begin || ev.boundary > w_end) continue;
    r.max_comm_steps_per_boundary = std::max(r.max_comm_steps_per_boundary, ev.depth);
    Memory moved(0);
    if (ev.is_collective()) {
      collective_at.insert(ev.boundary);
      const auto receivers = ev.kind == CommKind::Broadcast ? ev.participants.size() - 1
                                                            : ev.participants.size();
      moved = ev.payload * Memory(static_cast<std::int64_t>(receivers));
    } else if (tl.devices.at(ev.src).gpu != tl.devices.at(ev.dst).gpu) {
      moved = ev.payload;
    }
    if (ev.kind == CommKind::StateTransfer || ev.kind == CommKind::Broadcast) {
      state_volume += moved;
    } else {
      volume += moved;
    }
  }
  r.collective_boundaries = static_cast<int>(collective_at.size());
  const Memory per(static_cast<std::int64_t>(r.window_steps) * tl.n);
  r.comm_volume_per_training_step = volume / per;
  r.state_volume_per_training_step = state_volume / per;

  // Model-state residency for ZeRO.
  if (tl.scheme == Scheme::ZeroDP || tl.scheme == Scheme::ZeroCDP) {
    std::vector<int> holder(tl.n + 1);
    for (int j = 1; j <= tl.n; ++j) holder[j] = j - 1;
    std::multimap<TimeStep, const CommEvent *> transfers;
    for (const auto &ev : tl.comm_events) {
      if (ev.kind == CommKind::StateTransfer) transfers.emplace(ev.boundary, &ev);
    }
    std::vector<std::vector<int>> active(static_cast<std::size_t>(horizon) + 1);
    for (const auto &task : tl.tasks) {
      for (TimeStep tau = task.start; tau <= task.end(); ++tau) {
        active[static_cast<std::size_t>(tau)].push_back(task.stage);
      }
    }
    auto it = transfers.begin();
    for (TimeStep tau = 1; tau <= horizon; ++tau) {
      for (; it != transfers.end() && it->first < tau; ++it) holder[it->second->stage] = it->second->dst;
      if (tau < w_begin || tau > w_end) continue;
      for (const auto &dev : tl.devices) {
        std::set<int> held(dev.stages.begin(), dev.stages.end());
        if (tl.scheme == Scheme::ZeroCDP) {
          for (int j = 1; j <= tl.n; ++j) {
            if (holder[j] == dev.id) held.insert(j);
          }
        } else {
          for (int j : active[static_cast<std::size_t>(tau)]) held.insert(j);
        }
        r.max_held_stage_states = std::max(r.max_held_stage_states, static_cast<int>(held.size()));
      }
    }
  }
  return r;
}

std::vector<Table1Row> verify_table1(const std::vector<int> &n_values, const Table1Params &params,
                                     const std::vector<Scheme> &schemes) {
  std::vector<Table1Row> rows;
  for (Scheme scheme : schemes) {
    for (int n : n_values) {
      if (n < 1) throw ConfigError("n", "every n must be at least 1");
      ParallelismConfig cfg;
      cfg.scheme = scheme;
      cfg.n = n;
      cfg.micro_batch_size = params.micro_batch_size;
      cfg.training_steps = params.training_steps;
      const auto profile = make_homogeneous_profile(n, params.psi_p, params.psi_a, params.psi_int);

      Table1Row row;
      row.scheme = scheme;
      row.n = n;
      row.closed = closed_form_costs(cfg, profile);
      if (params.perturb_closed_form && *params.perturb_closed_form == scheme) {
        row.closed.steady_activation_memory_per_device += 1;
      }
      const Timeline tl = schedule_comms(build_timeline(cfg), profile);
      const auto report = validate_timeline(tl);
      if (!report.ok()) {
        row.mismatches.push_back("timeline has " + std::to_string(report.violations.size()) +
                                 " violations, first: " + report.violations.front().message);
      }
      row.measured = measure_costs(tl, profile, cfg);
      const auto &c = row.closed;
      const auto &m = row.measured;
      auto expect = [&](const char *field, const Memory &closed, const Memory &measured) {
        if (closed != measured) {
          row.mismatches.push_back(std::string(field) + ": closed " + to_string(closed) +
                                   " != measured " + to_string(measured));
        }
      };
      expect("activations", c.steady_activation_memory_per_device, m.steady_activation_memory_per_device);
      expect("parameters", c.parameter_memory_per_device, m.parameter_memory_per_device);
      expect("devices", Memory(c.device_count), Memory(m.device_count));
      if (!c.degenerate_comm) {
        expect("volume", c.comm_volume_per_training_step, m.comm_volume_per_training_step);
        if (m.max_comm_steps_per_boundary > c.max_comm_steps_per_boundary) {
          row.mismatches.push_back("comm steps: measured " + std::to_string(m.max_comm_steps_per_boundary) +
                                   " exceeds bound " + std::to_string(c.max_comm_steps_per_boundary));
        }
        // A single GPU communicates nothing, so the one-step claim is vacuous there.
        if (is_cyclic(scheme) && n >= 2 && scheme != Scheme::SingleGpuCDP &&
            m.max_comm_steps_per_boundary != 1) {
          row.mismatches.push_back("comm steps: cyclic scheme needs exactly one step per boundary");
        }
        if (!is_cyclic(scheme) && n >= 2 && scheme != Scheme::SingleGpuDP) {
          const int expected = scheme == Scheme::ZeroDP
                                   ? static_cast<int>(tl.step_length()) * m.window_steps
                                   : m.window_steps;
          if (m.collective_boundaries != expected) {
            row.mismatches.push_back("collective boundaries: " + std::to_string(m.collective_boundaries) +
                                     " instead of " + std::to_string(expected));
          }
        }
      }
      row.equal = row.mismatches.empty();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace cdpsim
