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

#include "cdpsim/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <tuple>

#include "cdpsim/error.hpp"
#include "json.hpp"

namespace cdpsim {

int StageModel::stage_in(int stage) const {
  if (kind == StageKind::AdditiveLinear) return input_dim / n;
  return stage == 1 ? input_dim : hidden_dim;
}

int StageModel::stage_out(int stage) const {
  if (kind == StageKind::AdditiveLinear) return output_dim;
  return stage == n ? output_dim : hidden_dim;
}

bool StageModel::stage_has_bias(int stage) const {
  return kind == StageKind::Tanh || stage == n;
}

std::size_t StageModel::stage_param_count(int stage) const {
  const auto in = static_cast<std::size_t>(stage_in(stage));
  const auto out = static_cast<std::size_t>(stage_out(stage));
  return out * in + (stage_has_bias(stage) ? out : 0);
}

void StageModel::check() const {
  if (n < 1) throw ConfigError("n", "must be at least 1");
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
    throw ConfigError("dims", "dimensions must be positive");
  }
  if (kind == StageKind::AdditiveLinear && input_dim % n != 0) {
    throw ConfigError("input_dim", "additive stages need input_dim divisible by n");
  }
  if (loss == LossKind::SoftmaxCrossEntropy && output_dim < 2) {
    throw ConfigError("output_dim", "cross-entropy needs at least two classes");
  }
}

namespace {

void check_shapes(const StageModel &model, std::span<const std::vector<double>> params, const Batch &batch) {
  if (params.size() != static_cast<std::size_t>(model.n)) {
    throw ConfigError("params", "expected one parameter vector per stage");
  }
  for (int j = 1; j <= model.n; ++j) {
    if (params[j - 1].size() != model.stage_param_count(j)) {
      throw ConfigError("params/" + std::to_string(j), "wrong parameter count for stage");
    }
  }
  if (batch.size < 1) throw ConfigError("batch", "micro-batch is empty");
  if (batch.input_dim != model.input_dim || batch.target_dim != model.output_dim) {
    throw ConfigError("batch", "sample dimensions do not match the model");
  }
}

// y = W x (+ b) for stage parameters laid out as [W row-major | b].
void affine(const std::vector<double> &p, int in, int out, bool bias, const double *x, double *y) {
  for (int r = 0; r < out; ++r) {
    double acc = bias ? p[static_cast<std::size_t>(out) * in + r] : 0.0;
    const double *row = p.data() + static_cast<std::size_t>(r) * in;
    for (int c = 0; c < in; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void require_finite(const std::vector<double> &v, int stage) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw DivergenceError(0, stage, "non-finite activation at stage " + std::to_string(stage));
    }
  }
}

// Per-sample loss and its derivative with respect to the output.
double sample_loss(LossKind loss, const std::vector<double> &z, const double *y, std::vector<double> *dz) {
  const std::size_t k = z.size();
  if (loss == LossKind::MeanSquaredError) {
    double l = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double r = z[c] - y[c];
      l += 0.5 * r * r;
      if (dz) (*dz)[c] = r;
    }
    return l;
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double lse = zmax + std::log(sum);
  double l = lse;
  for (std::size_t c = 0; c < k; ++c) {
    l -= y[c] * z[c];
    if (dz) (*dz)[c] = std::exp(z[c] - lse) - y[c];
  }
  return l;
}

// Forward pass of one sample; acts[j] is the output of stage j (acts[0] = x
// for Tanh models). Returns the model output.
std::vector<double> forward_sample(const StageModel &model, std::span<const std::vector<double>> params,
                                   const double *x, std::vector<std::vector<double>> &acts) {
  const int n = model.n;
  if (model.kind == StageKind::Tanh) {
    acts.assign(n + 1, {});
    acts[0].assign(x, x + model.input_dim);
    for (int j = 1; j <= n; ++j) {
      acts[j].assign(model.stage_out(j), 0.0);
      affine(params[j - 1], model.stage_in(j), model.stage_out(j), true, acts[j - 1].data(), acts[j].data());
      if (j < n) {
        for (double &v : acts[j]) v = std::tanh(v);
      }
      require_finite(acts[j], j);
    }
    return acts[n];
  }
  const int slice = model.stage_in(1);
  std::vector<double> h(model.output_dim, 0.0), part(model.output_dim, 0.0);
  for (int j = 1; j <= n; ++j) {
    affine(params[j - 1], slice, model.output_dim, model.stage_has_bias(j),
           x + static_cast<std::size_t>(j - 1) * slice, part.data());
    for (int c = 0; c < model.output_dim; ++c) h[c] += part[c];
    require_finite(h, j);
  }
  return h;
}

}  // namespace

double evaluate_loss(const StageModel &model, std::span<const std::vector<double>> params, const Batch &batch) {
  model.check();
  check_shapes(model, params, batch);
  std::vector<std::vector<double>> acts;
  double total = 0.0;
  for (int s = 0; s < batch.size; ++s) {
    const double *x = batch.inputs.data() + static_cast<std::size_t>(s) * batch.input_dim;
    const double *y = batch.targets.data() + static_cast<std::size_t>(s) * batch.target_dim;
    auto z = forward_sample(model, params, x, acts);
    total += sample_loss(model.loss, z, y, nullptr);
  }
  return total / batch.size;
}

StageGradients grad_stagewise(const StageModel &model, std::span<const std::vector<double>> params,
                              const Batch &batch) {
  model.check();
  check_shapes(model, params, batch);
  const int n = model.n;
  for (int j = 1; j <= n; ++j) {
    for (double v : params[j - 1]) {
      if (!std::isfinite(v)) {
        throw DivergenceError(0, j, "non-finite parameters at stage " + std::to_string(j));
      }
    }
  }
  StageGradients out;
  out.grads.resize(n);
  for (int j = 1; j <= n; ++j) out.grads[j - 1].assign(model.stage_param_count(j), 0.0);

  const double inv_m = 1.0 / batch.size;
  std::vector<std::vector<double>> acts;
  std::vector<double> delta(model.output_dim), prev;
  for (int s = 0; s < batch.size; ++s) {
    const double *x = batch.inputs.data() + static_cast<std::size_t>(s) * batch.input_dim;
    const double *y = batch.targets.data() + static_cast<std::size_t>(s) * batch.target_dim;
    auto z = forward_sample(model, params, x, acts);
    delta.assign(model.output_dim, 0.0);
    out.loss += sample_loss(model.loss, z, y, &delta);
    for (double &d : delta) d *= inv_m;

    if (model.kind == StageKind::AdditiveLinear) {
      const int slice = model.stage_in(1);
      for (int j = 1; j <= n; ++j) {
        auto &g = out.grads[j - 1];
        const double *xs = x + static_cast<std::size_t>(j - 1) * slice;
        for (int r = 0; r < model.output_dim; ++r) {
          for (int c = 0; c < slice; ++c) g[static_cast<std::size_t>(r) * slice + c] += delta[r] * xs[c];
        }
        if (model.stage_has_bias(j)) {
          for (int r = 0; r < model.output_dim; ++r) g[static_cast<std::size_t>(model.output_dim) * slice + r] += delta[r];
        }
      }
      continue;
    }
    for (int j = n; j >= 1; --j) {
      const int in = model.stage_in(j);
      const int outd = model.stage_out(j);
      auto &g = out.grads[j - 1];
      const auto &a = acts[j - 1];
      for (int r = 0; r < outd; ++r) {
        for (int c = 0; c < in; ++c) g[static_cast<std::size_t>(r) * in + c] += delta[r] * a[c];
        g[static_cast<std::size_t>(outd) * in + r] += delta[r];
      }
      if (j == 1) break;
      prev.assign(in, 0.0);
      const auto &w = params[j - 1];
      for (int r = 0; r < outd; ++r) {
        for (int c = 0; c < in; ++c) prev[c] += w[static_cast<std::size_t>(r) * in + c] * delta[r];
      }
      for (int c = 0; c < in; ++c) prev[c] *= 1.0 - a[c] * a[c];
      require_finite(prev, j);
      delta.swap(prev);
    }
  }
  out.loss /= batch.size;
  for (int j = 1; j <= n; ++j) {
    for (double g : out.grads[j - 1]) {
      if (!std::isfinite(g)) {
        throw DivergenceError(0, j, "non-finite gradient at stage " + std::to_string(j));
      }
    }
  }
  return out;
}

StageParams init_params(const StageModel &model, std::uint64_t seed) {
  model.check();
  std::mt19937_64 rng(seed);
  StageParams params(model.n);
  for (int j = 1; j <= model.n; ++j) {
    const int in = model.stage_in(j);
    const int out = model.stage_out(j);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    auto &p = params[j - 1];
    p.assign(model.stage_param_count(j), 0.0);
    for (std::size_t k = 0; k < static_cast<std::size_t>(out) * in; ++k) p[k] = normal(rng);
  }
  return params;
}

ToyTask make_toy_task(const ToyTaskSpec &spec) {
  if (spec.micro_batch_size < 1) throw ConfigError("micro_batch_size", "must be at least 1");
  if (spec.mini_batches_per_epoch < 1) throw ConfigError("mini_batches_per_epoch", "must be at least 1");
  if (spec.noise < 0.0) throw ConfigError("noise", "must be non-negative");
  ToyTask task;
  task.spec = spec;
  task.model.n = spec.n;
  task.model.kind = spec.kind == ToyTaskKind::Convex ? StageKind::AdditiveLinear : StageKind::Tanh;
  task.model.loss = spec.loss;
  task.model.input_dim = spec.input_dim;
  task.model.hidden_dim = spec.hidden_dim;
  task.model.output_dim = spec.output_dim;
  task.model.check();

  const int samples = spec.n * spec.micro_batch_size * spec.mini_batches_per_epoch;
  if (samples > 4096) throw ConfigError("micro_batch_size", "toy datasets are limited to 4096 samples");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch &data = task.dataset;
  data.size = samples;
  data.input_dim = spec.input_dim;
  data.target_dim = spec.output_dim;
  data.inputs.resize(static_cast<std::size_t>(samples) * spec.input_dim);
  for (double &v : data.inputs) v = normal(rng);

  // Teacher of the same architecture, scaled up so targets are not trivial.
  StageParams teacher = init_params(task.model, spec.seed ^ 0x5DEECE66DULL);
  for (auto &stage : teacher) {
    for (double &v : stage) v *= 1.5;
  }
  data.targets.assign(static_cast<std::size_t>(samples) * spec.output_dim, 0.0);
  std::vector<std::vector<double>> acts;
  for (int s = 0; s < samples; ++s) {
    auto z = forward_sample(task.model, teacher, data.inputs.data() + static_cast<std::size_t>(s) * spec.input_dim, acts);
    double *y = data.targets.data() + static_cast<std::size_t>(s) * spec.output_dim;
    if (spec.loss == LossKind::MeanSquaredError) {
      for (int c = 0; c < spec.output_dim; ++c) y[c] = z[c] + spec.noise * normal(rng);
    } else {
      for (double &v : z) v += spec.noise * normal(rng);
      y[std::max_element(z.begin(), z.end()) - z.begin()] = 1.0;
    }
  }
  return task;
}

std::vector<Batch> ToyTask::micro_batches(int training_step) const {
  const int n = spec.n;
  const int b = spec.micro_batch_size;
  const int epoch = (training_step - 1) / spec.mini_batches_per_epoch;
  const int slot = (training_step - 1) % spec.mini_batches_per_epoch;
  std::vector<int> order(dataset.size);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch) + 1);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> out(n);
  for (int i = 0; i < n; ++i) {
    Batch &mb = out[i];
    mb.size = b;
    mb.input_dim = dataset.input_dim;
    mb.target_dim = dataset.target_dim;
    for (int s = 0; s < b; ++s) {
      const auto src = static_cast<std::size_t>(order[static_cast<std::size_t>(slot) * n * b + i * b + s]);
      mb.inputs.insert(mb.inputs.end(), dataset.inputs.begin() + src * dataset.input_dim,
                       dataset.inputs.begin() + (src + 1) * dataset.input_dim);
      mb.targets.insert(mb.targets.end(), dataset.targets.begin() + src * dataset.target_dim,
                        dataset.targets.begin() + (src + 1) * dataset.target_dim);
    }
  }
  return out;
}

double convex_optimum_loss(const ToyTask &task) {
  if (task.model.kind != StageKind::AdditiveLinear || task.model.loss != LossKind::MeanSquaredError) {
    throw ConfigError("task", "closed-form optimum needs the convex MSE task");
  }
  const Batch &data = task.dataset;
  const int d = data.input_dim + 1;  // features plus the bias column
  std::vector<double> gram(static_cast<std::size_t>(d) * d, 0.0);
  auto feature = [&](int s, int c) {
    return c < data.input_dim ? data.inputs[static_cast<std::size_t>(s) * data.input_dim + c] : 1.0;
  };
  for (int s = 0; s < data.size; ++s) {
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) gram[static_cast<std::size_t>(r) * d + c] += feature(s, r) * feature(s, c);
    }
  }
  // Cholesky factor of the Gram matrix.
  std::vector<double> chol(gram.size(), 0.0);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c <= r; ++c) {
      double acc = gram[static_cast<std::size_t>(r) * d + c];
      for (int k = 0; k < c; ++k) acc -= chol[static_cast<std::size_t>(r) * d + k] * chol[static_cast<std::size_t>(c) * d + k];
      if (r == c) {
        if (acc <= 0.0) throw Error("design matrix is rank deficient");
        chol[static_cast<std::size_t>(r) * d + r] = std::sqrt(acc);
      } else {
        chol[static_cast<std::size_t>(r) * d + c] = acc / chol[static_cast<std::size_t>(c) * d + c];
      }
    }
  }
  double total = 0.0;
  for (int o = 0; o < data.target_dim; ++o) {
    std::vector<double> rhs(d, 0.0), w(d, 0.0);
    for (int s = 0; s < data.size; ++s) {
      const double y = data.targets[static_cast<std::size_t>(s) * data.target_dim + o];
      for (int r = 0; r < d; ++r) rhs[r] += feature(s, r) * y;
    }
    for (int r = 0; r < d; ++r) {
      double acc = rhs[r];
      for (int k = 0; k < r; ++k) acc -= chol[static_cast<std::size_t>(r) * d + k] * w[k];
      w[r] = acc / chol[static_cast<std::size_t>(r) * d + r];
    }
    for (int r = d - 1; r >= 0; --r) {
      double acc = w[r];
      for (int k = r + 1; k < d; ++k) acc -= chol[static_cast<std::size_t>(k) * d + r] * w[k];
      w[r] = acc / chol[static_cast<std::size_t>(r) * d + r];
    }
    for (int s = 0; s < data.size; ++s) {
      double pred = 0.0;
      for (int r = 0; r < d; ++r) pred += w[r] * feature(s, r);
      const double res = pred - data.targets[static_cast<std::size_t>(s) * data.target_dim + o];
      total += 0.5 * res * res;
    }
  }
  return total / data.size;
}

VersionedParams VersionedParams::initial(StageParams theta) {
  VersionedParams state;
  state.version = 1;
  state.previous = theta;
  state.accumulators = theta;
  for (auto &stage : state.accumulators) std::fill(stage.begin(), stage.end(), 0.0);
  state.velocity = state.accumulators;
  state.current = std::move(theta);
  return state;
}

VersionedParams step_cdp(VersionedParams state, const ToyTask &task, int training_step, double lr,
                         const UpdateRule &rule, const StepOptions &options, VersionTrace *trace) {
  if (state.version != training_step) {
    throw Error("state holds version " + std::to_string(state.version) + ", step " +
                std::to_string(training_step) + " requested");
  }
  const int n = task.model.n;
  if (rule.kind == UpdateRule::Kind::Generic) {
    ParallelismConfig cfg;
    cfg.scheme = Scheme::MultiGpuCDP;
    cfg.n = n;
    check_rule_feasible(cfg, rule);
  }
  const auto batches = task.micro_batches(training_step);
  StageParams mixed(n);
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      const bool fresh = rule.reads_fresh(n, i, j);
      mixed[j - 1] = fresh ? state.current[j - 1] : state.previous[j - 1];
      if (trace) trace->push_back({i, j, training_step, rule.version(n, i, j, training_step)});
    }
    StageGradients g;
    try {
      g = grad_stagewise(task.model, mixed, batches[i - 1]);
    } catch (const DivergenceError &e) {
      throw DivergenceError(training_step, e.stage(), e.what());
    }
    for (int j = 0; j < n; ++j) {
      auto &acc = state.accumulators[j];
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g.grads[j][k];
    }
  }

  StageParams next = state.current;
  const double scale = lr / n;
  for (int j = 0; j < n; ++j) {
    auto &theta = next[j];
    const auto &acc = state.accumulators[j];
    if (options.momentum == 0.0) {
      for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= scale * acc[k];
    } else {
      auto &v = state.velocity[j];
      for (std::size_t k = 0; k < theta.size(); ++k) {
        v[k] = options.momentum * v[k] + acc[k] / n;
        theta[k] -= lr * v[k];
      }
    }
    for (double x : theta) {
      if (!std::isfinite(x)) {
        throw DivergenceError(training_step, j + 1,
                              "non-finite parameters after step " + std::to_string(training_step));
      }
    }
    std::fill(state.accumulators[j].begin(), state.accumulators[j].end(), 0.0);
  }
  state.previous = std::move(state.current);
  state.current = std::move(next);
  state.version = training_step + 1;
  return state;
}

VersionedParams step_dp(VersionedParams state, const ToyTask &task, int training_step, double lr,
                        const StepOptions &options, VersionTrace *trace) {
  return step_cdp(std::move(state), task, training_step, lr, UpdateRule::dp(), options, trace);
}

double LearningRateSchedule::at(int training_step) const {
  double lr = base;
  for (int m : milestones) {
    if (training_step > m) lr *= decay_factor;
  }
  return lr;
}

ExperimentResult run_experiment(const ExperimentConfig &cfg) {
  if (cfg.steps < 1) throw ConfigError("steps", "must be at least 1");
  if (cfg.rules.empty()) throw ConfigError("rules", "at least one rule is required");
  const ToyTask task = make_toy_task(cfg.task);
  const StageParams theta0 = init_params(task.model, cfg.seed);

  ExperimentResult result;
  const bool convex = task.model.kind == StageKind::AdditiveLinear &&
                      task.model.loss == LossKind::MeanSquaredError;
  result.reference_loss = convex ? convex_optimum_loss(task) : 0.0;
  const StepOptions options{cfg.momentum};

  for (const auto &rule : cfg.rules) {
    RuleTrajectory run;
    run.rule = rule;
    VersionedParams state = VersionedParams::initial(theta0);
    run.losses.push_back(evaluate_loss(task.model, state.current, task.dataset));
    for (int t = 1; t <= cfg.steps; ++t) {
      state = step_cdp(std::move(state), task, t, cfg.lr.at(t), rule, options, &run.trace);
      double loss = 0.0;
      try {
        loss = evaluate_loss(task.model, state.current, task.dataset);
      } catch (const DivergenceError &e) {
        throw DivergenceError(t, e.stage(), e.what());
      }
      if (!std::isfinite(loss)) {
        throw DivergenceError(t, 0, rule_name(rule) + " diverged at step " + std::to_string(t));
      }
      run.losses.push_back(loss);
      if (!run.steps_to_threshold && loss - result.reference_loss <= cfg.threshold) {
        run.steps_to_threshold = t;
      }
    }
    run.final_params = state.current;
    result.runs.push_back(std::move(run));
  }

  double lo = result.runs.front().losses.back();
  double hi = lo;
  for (std::size_t a = 0; a < result.runs.size(); ++a) {
    lo = std::min(lo, result.runs[a].losses.back());
    hi = std::max(hi, result.runs[a].losses.back());
    for (std::size_t b = a + 1; b < result.runs.size(); ++b) {
      const auto &la = result.runs[a].losses;
      const auto &lb = result.runs[b].losses;
      for (std::size_t k = 0; k < la.size(); ++k) {
        result.max_pairwise_divergence = std::max(result.max_pairwise_divergence, std::abs(la[k] - lb[k]));
      }
    }
  }
  result.max_final_loss_spread = lo > 0.0 ? (hi - lo) / lo : hi - lo;
  return result;
}

namespace {

using nlohmann::json;

template <typename T>
T read_number(const json &doc, const char *key, T fallback) {
  if (!doc.contains(key)) return fallback;
  const auto &v = doc.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(std::string("/") + key, "expected an integer");
  } else {
    if (!v.is_number()) throw ConfigError(std::string("/") + key, "expected a number");
  }
  return v.get<T>();
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error &e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("/", "expected an object");
  static const char *kKeys[] = {"task",  "loss",          "n",        "micro_batch_size", "mini_batches_per_epoch",
                                "input_dim", "hidden_dim", "output_dim", "noise", "data_seed",
                                "seed", "learning_rate", "lr_decay", "steps", "rules", "momentum", "threshold"};
  for (const auto &[key, _] : doc.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char *k) { return key == k; }) ==
        std::end(kKeys)) {
      throw ConfigError("/" + key, "unknown key");
    }
  }
  ExperimentConfig cfg;
  if (doc.contains("task")) {
    const auto name = doc["task"].is_string() ? doc["task"].get<std::string>() : "";
    if (name == "convex") cfg.task.kind = ToyTaskKind::Convex;
    else if (name == "nonconvex") cfg.task.kind = ToyTaskKind::Nonconvex;
    else throw ConfigError("/task", "expected \"convex\" or \"nonconvex\"");
  }
  if (doc.contains("loss")) {
    const auto name = doc["loss"].is_string() ? doc["loss"].get<std::string>() : "";
    if (name == "mse") cfg.task.loss = LossKind::MeanSquaredError;
    else if (name == "cross_entropy") cfg.task.loss = LossKind::SoftmaxCrossEntropy;
    else throw ConfigError("/loss", "expected \"mse\" or \"cross_entropy\"");
  }
  cfg.task.n = read_number(doc, "n", cfg.task.n);
  cfg.task.micro_batch_size = read_number(doc, "micro_batch_size", cfg.task.micro_batch_size);
  cfg.task.mini_batches_per_epoch = read_number(doc, "mini_batches_per_epoch", cfg.task.mini_batches_per_epoch);
  cfg.task.input_dim = read_number(doc, "input_dim", cfg.task.input_dim);
  cfg.task.hidden_dim = read_number(doc, "hidden_dim", cfg.task.hidden_dim);
  cfg.task.output_dim = read_number(doc, "output_dim", cfg.task.output_dim);
  cfg.task.noise = read_number(doc, "noise", cfg.task.noise);
  cfg.task.seed = read_number<std::uint64_t>(doc, "data_seed", cfg.task.seed);
  cfg.seed = read_number<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.lr.base = read_number(doc, "learning_rate", cfg.lr.base);
  cfg.steps = read_number(doc, "steps", cfg.steps);
  cfg.momentum = read_number(doc, "momentum", cfg.momentum);
  cfg.threshold = read_number(doc, "threshold", cfg.threshold);
  if (doc.contains("lr_decay")) {
    const auto &d = doc["lr_decay"];
    if (!d.is_object()) throw ConfigError("/lr_decay", "expected an object");
    for (const auto &[key, _] : d.items()) {
      if (key != "factor" && key != "milestones") throw ConfigError("/lr_decay/" + key, "unknown key");
    }
    cfg.lr.decay_factor = read_number(d, "factor", 1.0);
    if (d.contains("milestones")) {
      if (!d["milestones"].is_array()) throw ConfigError("/lr_decay/milestones", "expected an array");
      for (const auto &m : d["milestones"]) {
        if (!m.is_number_integer()) throw ConfigError("/lr_decay/milestones", "expected integers");
        cfg.lr.milestones.push_back(m.get<int>());
      }
    }
  }
  if (doc.contains("rules")) {
    if (!doc["rules"].is_array()) throw ConfigError("/rules", "expected an array");
    cfg.rules.clear();
    for (std::size_t k = 0; k < doc["rules"].size(); ++k) {
      const auto &r = doc["rules"][k];
      auto rule = r.is_string() ? parse_rule(r.get<std::string>()) : std::nullopt;
      if (!rule) throw ConfigError("/rules/" + std::to_string(k), "expected DP, CDPv1 or CDPv2");
      cfg.rules.push_back(*rule);
    }
  }
  if (cfg.task.n < 1) throw ConfigError("/n", "must be at least 1");
  if (cfg.steps < 1) throw ConfigError("/steps", "must be at least 1");
  if (!(cfg.lr.base >= 0.0)) throw ConfigError("/learning_rate", "must be non-negative");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open experiment config");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

ConsistencyResult schedule_consistency_check(const Timeline &tl, const VersionTrace &trace) {
  std::map<std::tuple<int, int, int>, int> expected;
  for (const auto &task : tl.tasks) {
    if (task.kind == TaskKind::Forward) {
      expected[{task.micro_batch, task.stage, task.training_step}] = task.param_version;
    }
  }
  ConsistencyResult result;
  for (const auto &read : trace) {
    if (read.training_step > tl.training_steps) continue;
    auto it = expected.find({read.micro_batch, read.stage, read.training_step});
    const int want = it == expected.end() ? -1 : it->second;
    if (want != read.version) {
      result.ok = false;
      result.mismatch = read;
      result.expected_version = want;
      result.message = "(i=" + std::to_string(read.micro_batch) + ", j=" + std::to_string(read.stage) +
                       ", t=" + std::to_string(read.training_step) + "): engine read version " +
                       std::to_string(read.version) + ", timeline says " + std::to_string(want);
      return result;
    }
  }
  return result;
}

}  // namespace cdpsim
