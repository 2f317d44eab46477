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

#ifndef CDPSIM_SGD_HPP_
#define CDPSIM_SGD_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdpsim/schedule.hpp"

namespace cdpsim {

enum class StageKind {
  Tanh,            // affine + tanh per stage, last stage affine only
  AdditiveLinear,  // stage j adds W_j x^(j) for its slice of the input; convex
};

enum class LossKind { MeanSquaredError, SoftmaxCrossEntropy };

using StageParams = std::vector<std::vector<double>>;

struct StageModel {
  int n = 1;
  StageKind kind = StageKind::Tanh;
  LossKind loss = LossKind::MeanSquaredError;
  int input_dim = 4;
  int hidden_dim = 4;
  int output_dim = 1;

  // Layout of stage j (1-based): row-major weights, then bias if any.
  int stage_in(int stage) const;
  int stage_out(int stage) const;
  bool stage_has_bias(int stage) const;
  std::size_t stage_param_count(int stage) const;
  void check() const;
};

// Row-major samples.
struct Batch {
  int size = 0;
  int input_dim = 0;
  int target_dim = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
};

struct StageGradients {
  double loss = 0.0;  // mean over the batch
  StageParams grads;
};

// Loss of the batch under `params` (one vector per stage).
double evaluate_loss(const StageModel &model, std::span<const std::vector<double>> params,
                     const Batch &batch);

// Reverse-mode gradient of the mean batch loss with respect to each stage's
// parameters. Throws DivergenceError (step 0) naming the first stage whose
// intermediate values are not finite.
StageGradients grad_stagewise(const StageModel &model, std::span<const std::vector<double>> params,
                              const Batch &batch);

StageParams init_params(const StageModel &model, std::uint64_t seed);

enum class ToyTaskKind { Convex, Nonconvex };

struct ToyTaskSpec {
  ToyTaskKind kind = ToyTaskKind::Convex;
  LossKind loss = LossKind::MeanSquaredError;
  int n = 4;
  int micro_batch_size = 16;
  int mini_batches_per_epoch = 1;
  int input_dim = 8;
  int hidden_dim = 8;
  int output_dim = 2;
  double noise = 0.1;
  std::uint64_t seed = 1;
};

// A fixed synthetic dataset of n * B * mini_batches_per_epoch samples.
struct ToyTask {
  ToyTaskSpec spec;
  StageModel model;
  Batch dataset;

  // The N micro-batches of training step t (1-based): a function of
  // (seed, t) only.
  std::vector<Batch> micro_batches(int training_step) const;
};

ToyTask make_toy_task(const ToyTaskSpec &spec);

// Minimum of the full-dataset loss for a convex MSE task (normal equations).
double convex_optimum_loss(const ToyTask &task);

// theta_t, theta_{t-1} and the gradient sum of the current step.
struct VersionedParams {
  int version = 1;  // t
  StageParams current;
  StageParams previous;
  StageParams accumulators;
  StageParams velocity;  // momentum buffer, unused at momentum 0

  static VersionedParams initial(StageParams theta);
};

struct VersionRead {
  int micro_batch = 1;
  int stage = 1;
  int training_step = 1;
  int version = 1;
};

using VersionTrace = std::vector<VersionRead>;

struct StepOptions {
  double momentum = 0.0;  // applied to the averaged gradient
};

// theta_{t+1} = theta_t - lr/N * sum_i grad f_i(theta_t).
VersionedParams step_dp(VersionedParams state, const ToyTask &task, int training_step, double lr,
                        const StepOptions &options = {}, VersionTrace *trace = nullptr);

// theta_{t+1} = theta_t - lr/N * sum_i grad f_i(theta_hat_{i,t}), where stage j
// of theta_hat_{i,t} is theta^j_t or theta^j_{t-1} as the rule selects.
// Micro-batch gradients are summed in ascending i.
VersionedParams step_cdp(VersionedParams state, const ToyTask &task, int training_step, double lr,
                         const UpdateRule &rule, const StepOptions &options = {},
                         VersionTrace *trace = nullptr);

struct LearningRateSchedule {
  double base = 0.05;
  double decay_factor = 1.0;
  std::vector<int> milestones;  // steps at which lr is multiplied by decay_factor
  double at(int training_step) const;
};

struct ExperimentConfig {
  ToyTaskSpec task;
  LearningRateSchedule lr;
  int steps = 2000;
  std::uint64_t seed = 1;  // parameter initialisation
  std::vector<UpdateRule> rules{UpdateRule::dp(), UpdateRule::cdp_v1(), UpdateRule::cdp_v2()};
  double momentum = 0.0;
  double threshold = 1e-8;  // suboptimality target for steps_to_threshold
};

struct RuleTrajectory {
  UpdateRule rule;
  std::vector<double> losses;  // losses[k] = full-dataset loss of theta_{k+1}
  StageParams final_params;
  VersionTrace trace;
  std::optional<int> steps_to_threshold;  // relative to reference_loss
};

struct ExperimentResult {
  std::vector<RuleTrajectory> runs;
  double reference_loss = 0.0;  // convex optimum, or 0 for non-convex tasks
  double max_pairwise_divergence = 0.0;
  double max_final_loss_spread = 0.0;  // (max - min) / min over final losses
};

// Throws DivergenceError with the first training step whose loss is not
// finite.
ExperimentResult run_experiment(const ExperimentConfig &cfg);

ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::string &path);

struct ConsistencyResult {
  bool ok = true;
  std::optional<VersionRead> mismatch;  // the engine's read
  int expected_version = -1;            // the timeline's param_version there
  std::string message;
};

// Every (i, j, t) version the numeric engine used must equal the
// param_version of the matching forward task in `tl`.
ConsistencyResult schedule_consistency_check(const Timeline &tl, const VersionTrace &trace);

}  // namespace cdpsim

#endif  // CDPSIM_SGD_HPP_
