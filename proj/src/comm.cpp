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

#include "cdpsim/comm.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "cdpsim/error.hpp"

namespace cdpsim {

int tree_depth(int n) {
  int depth = 0;
  for (long reach = 1; reach < n; reach *= 2) ++depth;
  return depth;
}

namespace {

using TaskKey = std::tuple<TaskKind, int, int, int>;

std::map<TaskKey, const Task *> index_tasks(const Timeline &tl) {
  std::map<TaskKey, const Task *> index;
  for (const auto &task : tl.tasks) {
    index[{task.kind, task.micro_batch, task.stage, task.training_step}] = &task;
  }
  return index;
}

const Task &lookup(const std::map<TaskKey, const Task *> &index, TaskKind kind, int i, int j, int t) {
  auto it = index.find({kind, i, j, t});
  if (it == index.end()) {
    throw Error("timeline is missing task (" + std::to_string(i) + ", " + std::to_string(j) +
                ", " + std::to_string(t) + ")");
  }
  return *it->second;
}

void require(const Timeline &tl, std::initializer_list<Scheme> allowed, const char *op) {
  for (auto s : allowed) {
    if (tl.scheme == s) return;
  }
  throw ConfigError("scheme", std::string(op) + " does not apply to scheme " +
                                  std::string(scheme_name(tl.scheme)));
}

void check_profile_matches(const Timeline &tl, const ModelProfile &profile) {
  check_profile(profile);
  if (profile.num_stages() != tl.n) {
    throw ConfigError("/stages", "profile has " + std::to_string(profile.num_stages()) +
                                     " stages, timeline has " + std::to_string(tl.n));
  }
}

std::vector<int> all_device_ids(const Timeline &tl) {
  std::vector<int> ids;
  for (const auto &d : tl.devices) ids.push_back(d.id);
  return ids;
}

void sort_events(Timeline &tl) {
  std::stable_sort(tl.comm_events.begin(), tl.comm_events.end(),
                   [](const CommEvent &a, const CommEvent &b) { return a.boundary < b.boundary; });
}

}  // namespace

Timeline schedule_cdp_ring_reduce(Timeline tl, const ModelProfile &profile) {
  require(tl, {Scheme::MultiGpuCDP, Scheme::ZeroCDP, Scheme::CdpWithMP}, "schedule_cdp_ring_reduce");
  check_profile_matches(tl, profile);
  const int n = tl.n;
  const auto index = index_tasks(tl);
  for (int j = 1; j <= n; ++j) {
    std::set<int> holders;
    for (const auto &task : tl.tasks) {
      if (task.stage == j && task.kind == TaskKind::Backward) holders.insert(task.device);
    }
    const int k = static_cast<int>(holders.size());
    if (k < 2 || profile.stage_params[j - 1] == 0) continue;
    for (int t = 1; t <= tl.training_steps; ++t) {
      for (int i = n - k + 1; i <= n; ++i) {
        const Task &from = lookup(index, TaskKind::Backward, i, j, t);
        const Task &to = lookup(index, TaskKind::Backward, i < n ? i + 1 : n - k + 1, j, t);
        CommEvent ev;
        ev.boundary = from.end();
        ev.kind = CommKind::GradientReduce;
        ev.src = from.device;
        ev.dst = to.device;
        ev.payload = Memory(profile.stage_params[j - 1]);
        ev.stage = j;
        ev.micro_batch = i;
        ev.training_step = t;
        ev.depth = 1;
        tl.comm_events.push_back(ev);
      }
    }
  }
  sort_events(tl);
  return tl;
}

Timeline schedule_dp_allreduce(Timeline tl, const ModelProfile &profile) {
  require(tl, {Scheme::MultiGpuDP, Scheme::ZeroDP, Scheme::DpWithMP}, "schedule_dp_allreduce");
  check_profile_matches(tl, profile);
  const int n = tl.n;
  if (n == 1) return tl;
  std::vector<TimeStep> step_end(tl.training_steps + 1, 0);
  for (const auto &task : tl.tasks) {
    step_end[task.training_step] = std::max(step_end[task.training_step], task.end());
  }
  for (int t = 1; t <= tl.training_steps; ++t) {
    auto collective = [&](Memory payload, int stage, std::vector<int> participants) {
      if (payload == Memory(0)) return;
      CommEvent ev;
      ev.boundary = step_end[t];
      ev.kind = CommKind::CollectiveAllReduce;
      ev.src = kAllDevices;
      ev.dst = kAllDevices;
      ev.payload = payload;
      ev.stage = stage;
      ev.training_step = t;
      ev.depth = tree_depth(static_cast<int>(participants.size()));
      ev.participants = std::move(participants);
      tl.comm_events.push_back(std::move(ev));
    };
    if (tl.scheme == Scheme::DpWithMP) {
      for (int j = 1; j <= n; ++j) {
        std::vector<int> members;
        for (const auto &d : tl.devices) {
          if (!d.stages.empty() && d.stages.front() == j) members.push_back(d.id);
        }
        collective(Memory(profile.stage_params[j - 1]), j, members);
      }
    } else {
      collective(Memory(profile.total_params()), 0, all_device_ids(tl));
    }
  }
  sort_events(tl);
  return tl;
}

Timeline schedule_zero_transfers(Timeline tl, bool cyclic, const ModelProfile &profile) {
  require(tl, {Scheme::ZeroDP, Scheme::ZeroCDP}, "schedule_zero_transfers");
  if (cyclic != (tl.scheme == Scheme::ZeroCDP)) {
    throw ConfigError("scheme", "cyclic flag disagrees with timeline scheme");
  }
  check_profile_matches(tl, profile);
  const int n = tl.n;
  if (n == 1) return tl;
  auto owner = [](int stage) { return stage - 1; };

  if (!cyclic) {
    std::set<TimeStep> seen;
    for (const auto &task : tl.tasks) {
      if (!seen.insert(task.start).second) continue;
      const Memory payload(profile.stage_params[task.stage - 1]);
      if (payload == Memory(0)) continue;
      CommEvent ev;
      ev.boundary = task.start - 1;
      ev.kind = CommKind::Broadcast;
      ev.src = owner(task.stage);
      ev.dst = kAllDevices;
      ev.payload = payload;
      ev.stage = task.stage;
      ev.training_step = task.training_step;
      ev.depth = tree_depth(n);
      ev.participants = all_device_ids(tl);
      tl.comm_events.push_back(std::move(ev));
    }
  } else {
    for (int j = 1; j <= n; ++j) {
      std::vector<const Task *> uses;
      for (const auto &task : tl.tasks) {
        if (task.stage == j) uses.push_back(&task);
      }
      std::sort(uses.begin(), uses.end(),
                [](const Task *a, const Task *b) { return a->start < b->start; });
      int holder = owner(j);
      const Memory payload(profile.stage_params[j - 1]);
      for (const Task *task : uses) {
        if (task->device == holder) continue;
        if (payload > Memory(0)) {
          CommEvent ev;
          ev.boundary = task->start - 1;
          ev.kind = CommKind::StateTransfer;
          ev.src = holder;
          ev.dst = task->device;
          ev.payload = payload;
          ev.stage = j;
          ev.micro_batch = task->micro_batch;
          ev.training_step = task->training_step;
          ev.depth = 1;
          tl.comm_events.push_back(ev);
        }
        holder = task->device;
      }
    }
  }
  sort_events(tl);
  return tl;
}

Timeline schedule_activation_handoffs(Timeline tl, const ModelProfile &profile) {
  require(tl, {Scheme::DpWithMP, Scheme::CdpWithMP, Scheme::PP}, "schedule_activation_handoffs");
  check_profile_matches(tl, profile);
  const int n = tl.n;
  if (n == 1 || profile.boundary_act_per_sample == 0) return tl;
  const Memory payload(static_cast<std::int64_t>(tl.micro_batch_size) * profile.boundary_act_per_sample,
                       2 * static_cast<std::int64_t>(n - 1));
  const auto index = index_tasks(tl);
  for (const auto &task : tl.tasks) {
    const bool forward = task.kind == TaskKind::Forward;
    if ((forward && task.stage == n) || (!forward && task.stage == 1)) continue;
    const Task &next = lookup(index, task.kind, task.micro_batch,
                              forward ? task.stage + 1 : task.stage - 1, task.training_step);
    if (tl.devices.at(next.device).gpu == tl.devices.at(task.device).gpu) continue;
    CommEvent ev;
    ev.boundary = task.end();
    ev.kind = CommKind::ActivationHandoff;
    ev.src = task.device;
    ev.dst = next.device;
    ev.payload = payload;
    ev.stage = task.stage;
    ev.micro_batch = task.micro_batch;
    ev.training_step = task.training_step;
    ev.depth = 1;
    tl.comm_events.push_back(ev);
  }
  sort_events(tl);
  return tl;
}

Timeline schedule_comms(Timeline tl, const ModelProfile &profile) {
  switch (tl.scheme) {
    case Scheme::SingleGpuDP:
    case Scheme::SingleGpuCDP:
      return tl;
    case Scheme::MultiGpuDP:
      return schedule_dp_allreduce(std::move(tl), profile);
    case Scheme::MultiGpuCDP:
      return schedule_cdp_ring_reduce(std::move(tl), profile);
    case Scheme::DpWithMP:
      return schedule_dp_allreduce(schedule_activation_handoffs(std::move(tl), profile), profile);
    case Scheme::CdpWithMP:
      return schedule_cdp_ring_reduce(schedule_activation_handoffs(std::move(tl), profile), profile);
    case Scheme::PP:
      return schedule_activation_handoffs(std::move(tl), profile);
    case Scheme::ZeroDP:
      return schedule_zero_transfers(schedule_dp_allreduce(std::move(tl), profile), false, profile);
    case Scheme::ZeroCDP:
      return schedule_zero_transfers(schedule_cdp_ring_reduce(std::move(tl), profile), true, profile);
  }
  return tl;
}

BalanceReport balance_report(const Timeline &tl) {
  BalanceReport report;
  std::map<TimeStep, BoundaryStats> stats;
  std::map<TimeStep, std::map<int, std::pair<int, int>>> per_device;  // sends, receives
  for (const auto &ev : tl.comm_events) {
    auto &s = stats[ev.boundary];
    s.boundary = ev.boundary;
    s.max_depth = std::max(s.max_depth, ev.depth);
    auto &dev = per_device[ev.boundary];
    switch (ev.kind) {
      case CommKind::CollectiveAllReduce:
        for (int p : ev.participants) {
          ++s.sends;
          ++s.receives;
          ++dev[p].first;
          ++dev[p].second;
        }
        break;
      case CommKind::Broadcast:
        ++s.sends;
        ++dev[ev.src].first;
        for (int p : ev.participants) {
          if (p == ev.src) continue;
          ++s.receives;
          ++dev[p].second;
        }
        break;
      default:
        ++s.sends;
        ++s.receives;
        ++dev[ev.src].first;
        ++dev[ev.dst].second;
        break;
    }
  }
  long total = 0;
  for (auto &[b, s] : stats) {
    for (const auto &[d, sr] : per_device[b]) {
      s.max_sends_per_device = std::max(s.max_sends_per_device, sr.first);
      s.max_receives_per_device = std::max(s.max_receives_per_device, sr.second);
    }
    report.histogram.push_back(s);
    report.max_sends = std::max(report.max_sends, s.sends);
    report.max_depth = std::max(report.max_depth, s.max_depth);
    total += s.sends;
    if (is_cyclic(tl.scheme) && s.max_depth > 1) report.deep_boundaries.push_back(b);
  }
  const long boundaries = tl.horizon + 1;
  report.min_sends = static_cast<long>(stats.size()) < boundaries ? 0 : report.max_sends;
  for (const auto &[b, s] : stats) report.min_sends = std::min(report.min_sends, s.sends);
  report.mean_sends = boundaries > 0 ? static_cast<double>(total) / static_cast<double>(boundaries) : 0.0;
  return report;
}

RingCheck check_ring_reduction(const Timeline &tl) {
  RingCheck check;
  const int n = tl.n;
  // Replay order: backward completions at time tau, then hops on boundary tau.
  struct Item {
    TimeStep time;
    int phase;
    const Task *task;
    const CommEvent *event;
  };
  std::vector<Item> items;
  for (const auto &task : tl.tasks) {
    if (task.kind == TaskKind::Backward) items.push_back({task.end(), 0, &task, nullptr});
  }
  for (const auto &ev : tl.comm_events) {
    if (ev.kind == CommKind::GradientReduce) items.push_back({ev.boundary, 1, nullptr, &ev});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item &a, const Item &b) {
    return std::tie(a.time, a.phase) < std::tie(b.time, b.phase);
  });

  using Tag = std::pair<int, int>;  // (training step, micro-batch)
  std::map<std::pair<int, int>, std::set<Tag>> acc;   // (device, stage) -> tags
  std::map<std::pair<int, int>, TimeStep> ready;      // (stage, version) -> time
  auto fail = [&](std::string why) {
    if (check.ok) {
      check.ok = false;
      check.failure = std::move(why);
    }
  };

  for (const auto &item : items) {
    if (item.task != nullptr) {
      const Task &task = *item.task;
      auto &tags = acc[{task.device, task.stage}];
      tags.insert({task.training_step, task.micro_batch});
      if (task.micro_batch != n) continue;
      std::set<Tag> expected;
      for (int i = 1; i <= n; ++i) expected.insert({task.training_step, i});
      ++check.updates_checked;
      if (tags != expected) {
        fail("stage " + std::to_string(task.stage) + " update of step " +
             std::to_string(task.training_step) + " on device " + std::to_string(task.device) +
             " holds " + std::to_string(tags.size()) + " contributions instead of " +
             std::to_string(n));
      }
      ready[{task.stage, task.training_step + 1}] = task.end();
      tags.clear();
    } else {
      const CommEvent &ev = *item.event;
      // The hop after micro-batch N carries updated parameters, not partial sums.
      if (ev.micro_batch && *ev.micro_batch == n) continue;
      auto &src = acc[{ev.src, ev.stage}];
      auto &dst = acc[{ev.dst, ev.stage}];
      dst.insert(src.begin(), src.end());
      src.clear();
    }
  }
  std::set<int> stages;
  for (const auto &task : tl.tasks) {
    if (task.kind != TaskKind::Forward) continue;
    stages.insert(task.stage);
    if (task.param_version < 2) continue;
    auto it = ready.find({task.stage, task.param_version});
    if (it == ready.end() || it->second >= task.start) {
      fail("forward (i=" + std::to_string(task.micro_batch) + ", j=" + std::to_string(task.stage) +
           ", t=" + std::to_string(task.training_step) + ") reads version " +
           std::to_string(task.param_version) + " before the reduced update is applied");
    }
  }
  check.stages_checked = static_cast<int>(stages.size());
  return check;
}

}  // namespace cdpsim
