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

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "cdpsim/error.hpp"
#include "cdpsim/schedule.hpp"
#include "cdpsim/sgd.hpp"
#include "sgd_oracle.hpp"

namespace cdpsim {
namespace {

using namespace oracle;

StageParams engine_run(const ToyTask &task, const StageParams &theta, double lr, int steps,
                       const UpdateRule &rule, VersionTrace *trace = nullptr) {
  auto state = VersionedParams::initial(theta);
  for (int t = 1; t <= steps; ++t) state = step_cdp(std::move(state), task, t, lr, rule, {}, trace);
  return state.current;
}

ToyTaskSpec spec(ToyTaskKind kind, LossKind loss = LossKind::MeanSquaredError, int n = 4) {
  ToyTaskSpec s;
  s.kind = kind;
  s.loss = loss;
  s.n = n;
  s.micro_batch_size = 4;
  s.mini_batches_per_epoch = 3;
  s.output_dim = loss == LossKind::SoftmaxCrossEntropy ? 3 : 2;
  return s;
}

TEST(Model, LayoutAndChecks) {
  StageModel m{3, StageKind::Tanh, LossKind::MeanSquaredError, 5, 4, 2};
  EXPECT_EQ(m.stage_param_count(1), 4u * 5 + 4);
  EXPECT_EQ(m.stage_param_count(3), 2u * 4 + 2);
  StageModel a{3, StageKind::AdditiveLinear, LossKind::MeanSquaredError, 6, 4, 2};
  EXPECT_EQ(a.stage_param_count(1), 2u * 2);
  EXPECT_EQ(a.stage_param_count(3), 2u * 2 + 2);
  a.input_dim = 7;
  EXPECT_THROW(a.check(), ConfigError);
}

TEST(Gradients, MatchCentralFiniteDifferences) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  for (int instance = 0; instance < 100; ++instance) {
    EXPECT_LT(fd_relative_error(rng, instance), 1e-6) << "instance " << instance;
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
}

TEST(Gradients, MatchEigenOracle) {
  for (auto kind : {ToyTaskKind::Convex, ToyTaskKind::Nonconvex}) {
    for (auto loss : {LossKind::MeanSquaredError, LossKind::SoftmaxCrossEntropy}) {
      auto task = make_toy_task(spec(kind, loss));
      auto p = init_params(task.model, 9);
      auto g = grad_stagewise(task.model, p, task.dataset).grads;
      EXPECT_LT(max_abs_diff(g, oracle_grads(task.model, p, task.dataset)), 1e-13);
    }
  }
}

TEST(Gradients, NonFiniteNamesTheStage) {
  auto task = make_toy_task(spec(ToyTaskKind::Nonconvex));
  auto p = init_params(task.model, 1);
  p[2][0] = std::numeric_limits<double>::infinity();
  try {
    grad_stagewise(task.model, p, task.dataset);
    FAIL();
  } catch (const DivergenceError &e) {
    EXPECT_EQ(e.stage(), 3);
  }
}

class DelayedSgd : public ::testing::TestWithParam<ToyTaskKind> {};

TEST_P(DelayedSgd, EngineMatchesOracleFor1000Steps) {
  auto task = make_toy_task(spec(GetParam()));
  const auto theta = init_params(task.model, 3);
  for (const auto &rule : {UpdateRule::dp(), UpdateRule::cdp_v1(), UpdateRule::cdp_v2()}) {
    auto engine = engine_run(task, theta, 0.05, 1000, rule);
    auto oracle = oracle_run(task, theta, 0.05, 1000, rule);
    EXPECT_LE(max_abs_diff(engine, oracle), 1e-12) << rule_name(rule);
  }
}

INSTANTIATE_TEST_SUITE_P(Tasks, DelayedSgd, ::testing::Values(ToyTaskKind::Convex, ToyTaskKind::Nonconvex));

TEST(DelayedSgd, FirstStepIsPlainSgd) {
  auto task = make_toy_task(spec(ToyTaskKind::Nonconvex));
  const auto theta = init_params(task.model, 5);
  auto dp = engine_run(task, theta, 0.1, 1, UpdateRule::dp());
  EXPECT_EQ(engine_run(task, theta, 0.1, 1, UpdateRule::cdp_v1()), dp);
  EXPECT_EQ(engine_run(task, theta, 0.1, 1, UpdateRule::cdp_v2()), dp);
  EXPECT_NE(engine_run(task, theta, 0.1, 2, UpdateRule::cdp_v1()), engine_run(task, theta, 0.1, 2, UpdateRule::dp()));
}

TEST(DelayedSgd, StepChecksVersion) {
  auto task = make_toy_task(spec(ToyTaskKind::Convex));
  auto state = VersionedParams::initial(init_params(task.model, 1));
  EXPECT_THROW(step_dp(state, task, 2, 0.1), Error);
}

TEST(DelayedSgd, MomentumZeroIsPlain) {
  auto task = make_toy_task(spec(ToyTaskKind::Convex));
  auto theta = init_params(task.model, 1);
  auto a = VersionedParams::initial(theta);
  auto b = VersionedParams::initial(theta);
  for (int t = 1; t <= 5; ++t) {
    a = step_cdp(std::move(a), task, t, 0.05, UpdateRule::cdp_v2(), {0.0});
    b = step_cdp(std::move(b), task, t, 0.05, UpdateRule::cdp_v2(), {0.9});
  }
  EXPECT_GT(max_abs_diff(a.current, b.current), 0.0);
  EXPECT_EQ(a.current, engine_run(task, theta, 0.05, 5, UpdateRule::cdp_v2()));
}

TEST(Consistency, TraceMatchesTimeline) {
  auto task = make_toy_task(spec(ToyTaskKind::Nonconvex));
  const auto theta = init_params(task.model, 1);
  for (const auto &rule : {UpdateRule::cdp_v1(), UpdateRule::cdp_v2()}) {
    VersionTrace trace;
    engine_run(task, theta, 0.05, 6, rule, &trace);
    EXPECT_EQ(trace.size(), 6u * 16);
    ParallelismConfig cfg;
    cfg.scheme = Scheme::MultiGpuCDP;
    cfg.n = 4;
    cfg.training_steps = 6;
    auto ok = schedule_consistency_check(build_timeline(cfg, rule), trace);
    EXPECT_TRUE(ok.ok) << ok.message;
    // The other rule's timeline must disagree.
    auto other = rule.kind == UpdateRule::Kind::CDPv1 ? UpdateRule::cdp_v2() : UpdateRule::cdp_v1();
    auto bad = schedule_consistency_check(build_timeline(cfg, other), trace);
    EXPECT_FALSE(bad.ok);
    ASSERT_TRUE(bad.mismatch);
    EXPECT_NE(bad.expected_version, bad.mismatch->version);
  }
}

TEST(Data, MicroBatchesPartitionEachEpoch) {
  auto s = spec(ToyTaskKind::Convex);
  auto task = make_toy_task(s);
  for (int epoch = 0; epoch < 2; ++epoch) {
    std::vector<double> seen;
    for (int k = 1; k <= s.mini_batches_per_epoch; ++k) {
      for (const auto &mb : task.micro_batches(epoch * s.mini_batches_per_epoch + k)) {
        EXPECT_EQ(mb.size, s.micro_batch_size);
        for (int r = 0; r < mb.size; ++r) seen.push_back(mb.inputs[r * mb.input_dim]);
      }
    }
    std::vector<double> all;
    for (int r = 0; r < task.dataset.size; ++r) all.push_back(task.dataset.inputs[r * task.dataset.input_dim]);
    std::sort(seen.begin(), seen.end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(seen, all);
  }
  EXPECT_NE(task.micro_batches(1)[0].inputs, task.micro_batches(4)[0].inputs);  // reshuffled
  EXPECT_EQ(make_toy_task(s).dataset.inputs, task.dataset.inputs);
}

TEST(Convex, OptimumMatchesEigen) {
  auto task = make_toy_task(spec(ToyTaskKind::Convex));
  const auto &d = task.dataset;
  Mat x(d.size, d.input_dim + 1);
  Mat y(d.size, d.target_dim);
  for (int s = 0; s < d.size; ++s) {
    for (int c = 0; c < d.input_dim; ++c) x(s, c) = d.inputs[s * d.input_dim + c];
    x(s, d.input_dim) = 1.0;
    for (int c = 0; c < d.target_dim; ++c) y(s, c) = d.targets[s * d.target_dim + c];
  }
  Mat w = x.colPivHouseholderQr().solve(y);
  const double expect = 0.5 * (x * w - y).squaredNorm() / d.size;
  EXPECT_NEAR(convex_optimum_loss(task), expect, 1e-13);
  EXPECT_THROW(convex_optimum_loss(make_toy_task(spec(ToyTaskKind::Nonconvex))), ConfigError);
}

// Gradient descent on a quadratic is stable iff lr < 2 / lambda_max.
TEST(Convex, StabilityBound) {
  auto s = spec(ToyTaskKind::Convex);
  s.mini_batches_per_epoch = 1;
  auto task = make_toy_task(s);
  const auto &d = task.dataset;
  Mat x(d.size, d.input_dim + 1);
  for (int r = 0; r < d.size; ++r) {
    for (int c = 0; c < d.input_dim; ++c) x(r, c) = d.inputs[r * d.input_dim + c];
    x(r, d.input_dim) = 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(x.transpose() * x / d.size);
  const double bound = 2.0 / eig.eigenvalues().maxCoeff();

  ExperimentConfig cfg;
  cfg.task = s;
  cfg.rules = {UpdateRule::dp()};
  cfg.steps = 3000;
  cfg.lr.base = 0.9 * bound;
  auto ok = run_experiment(cfg);
  EXPECT_LT(ok.runs[0].losses.back() - ok.reference_loss, 1e-8);

  cfg.lr.base = 1.5 * bound;
  cfg.steps = 20000;
  try {
    run_experiment(cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError &e) {
    EXPECT_GT(e.step(), 1);
    EXPECT_LT(e.step(), 20000);
  }
}

TEST(Experiment, DeterministicAndConvergent) {
  ExperimentConfig cfg;
  auto a = run_experiment(cfg);
  auto b = run_experiment(cfg);
  ASSERT_EQ(a.runs.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(a.runs[r].losses, b.runs[r].losses);
    ASSERT_TRUE(a.runs[r].steps_to_threshold) << rule_name(a.runs[r].rule);
  }
  EXPECT_LE(a.max_final_loss_spread, 0.10);
}

TEST(Experiment, ScheduleDecays) {
  LearningRateSchedule lr{0.1, 0.5, {10, 20}};
  EXPECT_DOUBLE_EQ(lr.at(10), 0.1);
  EXPECT_DOUBLE_EQ(lr.at(11), 0.05);
  EXPECT_DOUBLE_EQ(lr.at(21), 0.025);
}

TEST(Config, ParsesAndRejects) {
  auto cfg = parse_experiment_config(R"({"task": "nonconvex", "n": 3, "rules": ["CDPv2"],
                                        "lr_decay": {"factor": 0.1, "milestones": [5]}})");
  EXPECT_EQ(cfg.task.kind, ToyTaskKind::Nonconvex);
  EXPECT_EQ(cfg.task.n, 3);
  ASSERT_EQ(cfg.rules.size(), 1u);
  EXPECT_EQ(cfg.rules[0].kind, UpdateRule::Kind::CDPv2);
  EXPECT_EQ(cfg.lr.milestones, std::vector<int>{5});
  EXPECT_THROW(parse_experiment_config(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"rules": ["CDPv9"]})"), ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"n": "four"})"), ConfigError);
  EXPECT_THROW(parse_experiment_config("[1, 2"), ConfigError);
  for (const char *f : {"/convex_experiment.json", "/nonconvex_experiment.json"}) {
    EXPECT_NO_THROW(load_experiment_config(std::string(CDPSIM_DATA_DIR) + f));
  }
}

}  // namespace
}  // namespace cdpsim
