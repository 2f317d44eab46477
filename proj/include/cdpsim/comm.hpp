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

#ifndef CDPSIM_COMM_HPP_
#define CDPSIM_COMM_HPP_

#include <string>
#include <vector>

#include "cdpsim/profile.hpp"
#include "cdpsim/schedule.hpp"

namespace cdpsim {

// ceil(log2(n)) rounds of a tree reduction over n parties; 0 for n <= 1.
int tree_depth(int n);

// Gradient ring for cyclic schemes (MultiGpuCDP, ZeroCDP, CdpWithMP). For a
// stage held by k replicas, each of the last k backward passes of a training
// step forwards the running sum to the replica that computes the next
// micro-batch; the hop after micro-batch N carries the applied update back to
// the start of the ring. One hop departs on the boundary right after the
// backward that produced it. Stages with a single replica never communicate.
Timeline schedule_cdp_ring_reduce(Timeline tl, const ModelProfile &profile);

// One collective per training step on its final boundary (MultiGpuDP,
// ZeroDP: whole model; DpWithMP: one collective per stage among its N
// replicas).
Timeline schedule_dp_allreduce(Timeline tl, const ModelProfile &profile);

// Model-state movement for ZeRO. Non-cyclic: the owner of the active stage
// broadcasts it before every time step. Cyclic: the states follow the single
// device computing the stage, one point-to-point hop per change of holder.
Timeline schedule_zero_transfers(Timeline tl, bool cyclic, const ModelProfile &profile);

// Boundary tensors between stage devices (DpWithMP, CdpWithMP, PP). Each
// forward hand-off and each backward hand-off carries B * Psi_int / (2 (N-1)),
// so one micro-batch moves B * Psi_int per training step.
Timeline schedule_activation_handoffs(Timeline tl, const ModelProfile &profile);

// Every communication a scheme performs.
Timeline schedule_comms(Timeline tl, const ModelProfile &profile);

struct BoundaryStats {
  TimeStep boundary = 0;
  int sends = 0;
  int receives = 0;
  int max_depth = 0;
  int max_sends_per_device = 0;
  int max_receives_per_device = 0;
};

struct BalanceReport {
  std::vector<BoundaryStats> histogram;  // boundaries carrying at least one event
  int max_sends = 0;
  int min_sends = 0;                     // over every boundary in [0, horizon]
  double mean_sends = 0.0;
  int max_depth = 0;
  std::vector<TimeStep> deep_boundaries;  // depth > 1 on a cyclic scheme
};

BalanceReport balance_report(const Timeline &tl);

struct RingCheck {
  bool ok = true;
  int stages_checked = 0;
  int updates_checked = 0;
  std::string failure;
};

// Replays tasks and ring hops with symbolic per-micro-batch gradient tags.
// Passes iff every update of stage j in step t holds exactly the N tags of
// step t, and every forward read of the resulting version happens after it.
RingCheck check_ring_reduction(const Timeline &tl);

}  // namespace cdpsim

#endif  // CDPSIM_COMM_HPP_
