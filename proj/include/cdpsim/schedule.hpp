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

#ifndef CDPSIM_SCHEDULE_HPP_
#define CDPSIM_SCHEDULE_HPP_

#include <optional>
#include <string>
#include <vector>

#include "cdpsim/profile.hpp"

namespace cdpsim {

// Time steps are 1-based; time step `tau` is the duration of one stage pass at
// unit cost. Communication happens on boundaries: boundary `b` separates time
// step b from time step b + 1 (boundary 0 precedes the first step).
using TimeStep = long;

enum class TaskKind { Forward, Backward };

struct Task {
  TaskKind kind = TaskKind::Forward;
  int micro_batch = 1;    // i in [1, N]
  int stage = 1;          // j in [1, N]
  int training_step = 1;  // t >= 1
  int param_version = 1;  // training-step index of theta^j read by this task
  int device = 0;
  TimeStep start = 1;
  int duration = 1;

  TimeStep end() const { return start + duration - 1; }
  bool covers(TimeStep tau) const { return tau >= start && tau <= end(); }
};

// What parameter memory a device keeps resident.
enum class Residency {
  FullReplica,        // the whole model, all the time
  OwnedStages,        // the stages listed in Device::stages
  FollowActivations,  // stage j while activations of stage j are held
};

struct Device {
  int id = 0;
  int gpu = 0;        // physical GPU; several logical lanes may share one
  int capacity = 1;   // max micro-batches whose activations may be held at once
  Residency residency = Residency::FullReplica;
  std::vector<int> stages;
};

enum class CommKind { GradientReduce, ActivationHandoff, StateTransfer, CollectiveAllReduce, Broadcast };

std::string_view comm_kind_name(CommKind k);
std::optional<CommKind> parse_comm_kind(std::string_view name);

inline constexpr int kAllDevices = -1;

struct CommEvent {
  TimeStep boundary = 0;
  CommKind kind = CommKind::GradientReduce;
  int src = 0;                   // kAllDevices for all-reduce
  int dst = 0;                   // kAllDevices for collectives
  Memory payload{0};             // per participant for collectives
  int stage = 1;
  std::optional<int> micro_batch;
  int training_step = 1;
  int depth = 1;                 // dependent communication rounds
  std::vector<int> participants;  // collectives only

  bool is_collective() const {
    return kind == CommKind::CollectiveAllReduce || kind == CommKind::Broadcast;
  }
};

// Version-selection rule u_{i,j}: read theta^j_t ("fresh") or theta^j_{t-1}.
struct UpdateRule {
  enum class Kind { DP, CDPv1, CDPv2, Generic };
  Kind kind = Kind::CDPv2;
  // Generic only: fresh[i-1][j-1] is true when micro-batch i reads theta^j_t.
  std::vector<std::vector<bool>> fresh;

  static UpdateRule dp() { return {Kind::DP, {}}; }
  static UpdateRule cdp_v1() { return {Kind::CDPv1, {}}; }
  static UpdateRule cdp_v2() { return {Kind::CDPv2, {}}; }
  static UpdateRule generic(std::vector<std::vector<bool>> table) {
    return {Kind::Generic, std::move(table)};
  }

  bool reads_fresh(int n, int micro_batch, int stage) const;
  // Version tag read by (i, j) during training step t. Step 1 stale reads
  // resolve to version 0, which aliases the initial parameters.
  int version(int n, int micro_batch, int stage, int training_step) const;
};

std::string rule_name(const UpdateRule &rule);
std::optional<UpdateRule> parse_rule(std::string_view name);

struct Timeline {
  Scheme scheme = Scheme::MultiGpuDP;
  int n = 1;
  int training_steps = 1;
  int micro_batch_size = 1;
  CostWeights cost_weights;
  std::vector<Device> devices;
  std::vector<Task> tasks;
  std::vector<CommEvent> comm_events;
  TimeStep horizon = 0;

  TimeStep step_length() const {
    return static_cast<TimeStep>(n) * (cost_weights.forward_cost + cost_weights.backward_cost);
  }
  // Steady-state window [begin, end]: training steps 2..T of micro-batch 1.
  // Empty (begin > end) when only one step is simulated.
  TimeStep window_begin() const { return step_length() + 1; }
  TimeStep window_end() const { return step_length() * training_steps; }
  bool has_window() const { return training_steps >= 2; }
  int gpu_count() const;

  // Index of the task occupying (device, tau), if any.
  std::optional<std::size_t> task_at(int device, TimeStep tau) const;
  // Index of task (kind, i, j, t), if present.
  std::optional<std::size_t> find_task(TaskKind kind, int micro_batch, int stage,
                                       int training_step) const;
};

// Per-(i, t) placement and timing of the stage passes; exposed for tests.
TimeStep forward_start(const ParallelismConfig &cfg, int micro_batch, int stage, int training_step);
TimeStep backward_start(const ParallelismConfig &cfg, int micro_batch, int stage, int training_step);

Timeline build_dp_timeline(const ParallelismConfig &cfg);
Timeline build_cdp_timeline(const ParallelismConfig &cfg, const UpdateRule &rule);
Timeline build_mp_timeline(const ParallelismConfig &cfg, bool cyclic,
                           const UpdateRule &rule = UpdateRule::cdp_v2());
Timeline build_pp_timeline(const ParallelismConfig &cfg, const UpdateRule &rule);
Timeline build_zero_timeline(const ParallelismConfig &cfg, bool cyclic,
                             const UpdateRule &rule = UpdateRule::cdp_v2());
// Dispatches on cfg.scheme; `rule` is ignored by non-cyclic schemes.
Timeline build_timeline(const ParallelismConfig &cfg, const UpdateRule &rule = UpdateRule::cdp_v2());

// Throws InfeasibleRuleError for the first (i, j) whose fresh read cannot be
// honoured under the configured stagger.
void check_rule_feasible(const ParallelismConfig &cfg, const UpdateRule &rule);

struct Violation {
  char check = 'a';  // 'a'..'e' as documented on validate_timeline
  std::size_t task = 0;
  int micro_batch = 0;
  int stage = 0;
  int training_step = 0;
  int device = -1;
  TimeStep time = 0;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(char check) const;
};

// Checks, in order of the `check` code:
//  a) forward (i,j,t) follows forward (i,j-1,t)
//  b) backward (i,j,t) follows backward (i,j+1,t) and forward (i,j,t)
//  c) a task reading version v of stage j starts after every backward of
//     stage j in step v-1 has finished
//  d) one task per device per time step
//  e) activations held per device never exceed its capacity
ValidationReport validate_timeline(const Timeline &tl);

// N x N table of the versions read in training step t (row i-1, column j-1).
std::vector<std::vector<int>> version_matrix(const Timeline &tl, int training_step);
// Reads of theta_{t-1} during step t.
int stale_read_count(const Timeline &tl, int training_step);
// Parameter copies a stage must keep: 2 when some stale forward read of
// stage j happens after theta^j_t became available, else 1. Backward passes
// are assumed to reuse the weights stashed by their forward.
int required_param_copies(const Timeline &tl);

}  // namespace cdpsim

#endif  // CDPSIM_SCHEDULE_HPP_
