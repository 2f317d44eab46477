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

#include <chrono>
#include <numeric>

#include "cdpsim/comm.hpp"
#include "cdpsim/cost.hpp"
#include "cdpsim/error.hpp"
#include "cdpsim/export.hpp"

namespace cdpsim {
namespace {

ParallelismConfig config(Scheme s, int n, int batch = 1, int steps = 3) {
  ParallelismConfig cfg;
  cfg.scheme = s;
  cfg.n = n;
  cfg.micro_batch_size = batch;
  cfg.training_steps = steps;
  return cfg;
}

CostReport measure(Scheme s, int n, const ModelProfile &p, int batch = 1, int steps = 3) {
  auto cfg = config(s, n, batch, steps);
  return measure_costs(schedule_comms(build_timeline(cfg), p), p, cfg);
}

TEST(ClosedForm, SingleGpuCdpExample) {
  auto p = make_homogeneous_profile(3, 30, 300, 0);
  auto r = closed_form_costs(config(Scheme::SingleGpuCDP, 3), p);
  EXPECT_EQ(r.steady_activation_memory_per_device, Memory(600));
  EXPECT_EQ(r.parameter_memory_per_device, Memory(60));
  auto m = measure(Scheme::SingleGpuCDP, 3, p);
  EXPECT_EQ(m.steady_activation_memory_per_device, Memory(600));
  EXPECT_EQ(m.parameter_memory_per_device, Memory(60));
  EXPECT_EQ(m.parameter_memory_shared, Memory(30));
}

TEST(ClosedForm, RejectsHeterogeneousProfiles) {
  ModelProfile p{{1, 2}, {3, 3}, 0};
  EXPECT_THROW(closed_form_costs(config(Scheme::PP, 2), p), ConfigError);
}

TEST(Occupancy, CyclicHasNoIdleSlots) {
  for (int n = 1; n <= 16; ++n) {
    auto p = make_homogeneous_profile(n, n, n, 0);
    EXPECT_EQ(measure(Scheme::MultiGpuCDP, n, p).idle_fraction, Fraction(0)) << n;
    EXPECT_EQ(measure(Scheme::PP, n, p).idle_fraction, Fraction(0)) << n;
  }
}

TEST(Occupancy, ModelParallelBusyDevices) {
  for (int n = 1; n <= 16; ++n) {
    auto p = make_homogeneous_profile(n, n, n, 0);
    auto dp = measure(Scheme::DpWithMP, n, p);
    EXPECT_EQ(Fraction(1) - dp.idle_fraction, Fraction(1, n));
    EXPECT_EQ(dp.device_count, n * n);
    auto cdp = measure(Scheme::CdpWithMP, n, p);
    EXPECT_EQ(cdp.device_count, n * (n + 1) / 2);
    EXPECT_EQ(cdp.min_busy_devices, n);
    EXPECT_EQ(cdp.max_busy_devices, n);
  }
}

TEST(SingleGpu, CyclicActivationsAreFlat) {
  for (int n = 1; n <= 16; ++n) {
    const std::int64_t psi_a = 6 * n;
    auto p = make_homogeneous_profile(n, n, psi_a, 0);
    auto cdp = measure(Scheme::SingleGpuCDP, n, p, 2);
    auto dp = measure(Scheme::SingleGpuDP, n, p, 2);
    const Memory expect = Memory(n + 1, 2) * Memory(2 * psi_a);
    EXPECT_EQ(cdp.steady_activation_memory_per_device, expect);
    EXPECT_EQ(cdp.steady_activation_floor, expect) << "not constant at N=" << n;
    EXPECT_EQ(dp.peak_activation_memory_per_device, Memory(n * 2 * psi_a));
    EXPECT_EQ(cdp.steady_activation_memory_per_device / dp.peak_activation_memory_per_device,
              Memory(n + 1, 2 * n));
  }
}

TEST(Zero, AtMostTwoStagesResident) {
  for (int n = 2; n <= 8; ++n) {
    auto p = make_homogeneous_profile(n, 10 * n, n, 0);
    EXPECT_LE(measure(Scheme::ZeroDP, n, p).max_held_stage_states, 2);
    EXPECT_LE(measure(Scheme::ZeroCDP, n, p).max_held_stage_states, 2);
    EXPECT_GT(measure(Scheme::ZeroCDP, n, p).state_volume_per_training_step, Memory(0));
  }
}

TEST(Table1, AllRowsMatchFast) {
  const auto t0 = std::chrono::steady_clock::now();
  auto rows = verify_table1({1, 2, 3, 4, 8, 16}, Table1Params{});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 10.0);
  EXPECT_EQ(rows.size(), std::size(kAllSchemes) * 6);
  for (const auto &row : rows) {
    EXPECT_TRUE(row.equal) << scheme_name(row.scheme) << " N=" << row.n << ": "
                           << (row.mismatches.empty() ? "" : row.mismatches.front());
    EXPECT_EQ(row.measured.degenerate_comm,
              row.n == 1 && row.scheme != Scheme::SingleGpuDP && row.scheme != Scheme::SingleGpuCDP);
  }
}

TEST(Table1, OtherSizesToo) {
  Table1Params p;
  p.psi_p = 7 * 16 * 15;
  p.psi_a = 11 * 16 * 15;
  p.psi_int = 5 * 15 * 14;
  p.micro_batch_size = 3;
  p.training_steps = 4;
  for (const auto &row : verify_table1({2, 3, 5, 15, 16}, p)) {
    EXPECT_TRUE(row.equal) << scheme_name(row.scheme) << " N=" << row.n;
  }
}

TEST(Table1, InjectedFaultIsReported) {
  Table1Params p;
  p.perturb_closed_form = Scheme::PP;
  auto rows = verify_table1({3}, p);
  for (const auto &row : rows) {
    EXPECT_EQ(row.equal, row.scheme != Scheme::PP) << scheme_name(row.scheme);
  }
}

TEST(Table1, CdpWithMpVolumeTendsToHalf) {
  // The exact volume approaches the table's leading term 1/2 Psi_P.
  auto p = make_homogeneous_profile(64, 64 * 64, 64, 0);
  auto r = closed_form_costs(config(Scheme::CdpWithMP, 64), p);
  const double v = boost::rational_cast<double>(r.comm_volume_per_training_step) / (64.0 * 64.0);
  EXPECT_NEAR(v, 0.5, 0.01);
}

TEST(Measure, HeterogeneousProfile) {
  auto p = load_profile(std::string(CDPSIM_DATA_DIR) + "/resnet_like_profile.json");
  auto pp = measure(Scheme::PP, 4, p);
  EXPECT_EQ(pp.device_count, 4);
  EXPECT_EQ(pp.parameter_memory_per_device, Memory(240));  // largest stage
  auto dp = measure(Scheme::SingleGpuDP, 4, p);
  auto cdp = measure(Scheme::SingleGpuCDP, 4, p);
  EXPECT_LT(cdp.steady_activation_memory_per_device, dp.peak_activation_memory_per_device);
}

TEST(Extrapolation, TriangularRatioExact) {
  for (int n : {1, 2, 4, 8, 32}) {
    auto e = extrapolate_activation_memory(triangular_series(n), n);
    EXPECT_DOUBLE_EQ(e.peak_ratio, (n + 1.0) / (2.0 * n)) << n;
    EXPECT_DOUBLE_EQ(e.dp_peak, n);
  }
}

TEST(Extrapolation, ConstantSeriesRatioOne) {
  auto e = extrapolate_activation_memory(std::vector<double>(10, 3.5), 7);
  EXPECT_DOUBLE_EQ(e.peak_ratio, 1.0);
}

TEST(Extrapolation, AveragingPreservesTheMean) {
  auto s = load_series(std::string(CDPSIM_DATA_DIR) + "/resnet_like_activation.csv");
  for (int n : {2, 3, 4, 8, 32}) {
    auto e = extrapolate_activation_memory(s, n);
    const double a = std::accumulate(e.dp_series.begin(), e.dp_series.end(), 0.0);
    const double b = std::accumulate(e.cdp_series.begin(), e.cdp_series.end(), 0.0);
    EXPECT_NEAR(a, b, 1e-9 * a) << n;
    EXPECT_LE(e.cdp_peak, e.dp_peak);
  }
}

TEST(Extrapolation, HeterogeneousIsLessEffective) {
  auto s = load_series(std::string(CDPSIM_DATA_DIR) + "/resnet_like_activation.csv");
  for (int n : {4, 8, 32}) {
    auto e = extrapolate_activation_memory(s, n);
    EXPECT_GT(e.peak_ratio, 0.5);
    EXPECT_LT(e.peak_ratio, 1.0);
    EXPECT_GT(e.peak_ratio, (n + 1.0) / (2.0 * n));
  }
}

TEST(Extrapolation, BadInput) {
  EXPECT_THROW(extrapolate_activation_memory({}, 4), ConfigError);
  EXPECT_THROW(extrapolate_activation_memory({1.0}, 0), ConfigError);
  EXPECT_THROW(triangular_series(0), ConfigError);
}

TEST(Extrapolation, ProfilePassSeries) {
  ModelProfile p{{1, 1, 1}, {4, 2, 1}, 0};
  EXPECT_EQ(activation_pass_series(p), (std::vector<double>{4, 6, 7, 7, 6, 4}));
}

}  // namespace
}  // namespace cdpsim
