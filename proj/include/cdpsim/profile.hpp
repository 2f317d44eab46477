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

#ifndef CDPSIM_PROFILE_HPP_
#define CDPSIM_PROFILE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/rational.hpp>

namespace cdpsim {

// Memory is counted in abstract integral units. Derived quantities such as
// (N+1)/2 * B * Psi_A are kept as exact rationals.
using Memory = boost::rational<std::int64_t>;

std::string to_string(const Memory &m);
// Accepts "7" or "3/2".
Memory parse_memory(std::string_view text);

// Per-stage cost description of a model.
struct ModelProfile {
  std::vector<std::int64_t> stage_params;
  std::vector<std::int64_t> stage_acts_per_sample;
  std::int64_t boundary_act_per_sample = 0;

  int num_stages() const { return static_cast<int>(stage_params.size()); }
  std::int64_t total_params() const;
  std::int64_t total_acts_per_sample() const;
  bool is_homogeneous() const;

  friend bool operator==(const ModelProfile &, const ModelProfile &) = default;
};

// Throws ConfigError naming the offending field.
void check_profile(const ModelProfile &profile);

// Uniform split of Psi_P and Psi_A over n stages; totals must divide evenly.
ModelProfile make_homogeneous_profile(int n, std::int64_t psi_p, std::int64_t psi_a,
                                      std::int64_t psi_int);

// Profile document (JSON):
//   { "stages": [ {"params": <int>, "acts_per_sample": <int>}, ... ],
//     "boundary_act_per_sample": <int> }
// Unknown keys are rejected.
ModelProfile parse_profile(std::string_view text);
ModelProfile load_profile(const std::string &path);
std::string emit_profile(const ModelProfile &profile);

enum class Scheme {
  SingleGpuDP,
  SingleGpuCDP,
  MultiGpuDP,
  MultiGpuCDP,
  DpWithMP,
  CdpWithMP,
  PP,
  ZeroDP,
  ZeroCDP,
};

inline constexpr Scheme kAllSchemes[] = {
    Scheme::SingleGpuDP, Scheme::SingleGpuCDP, Scheme::MultiGpuDP,
    Scheme::MultiGpuCDP, Scheme::DpWithMP,     Scheme::CdpWithMP,
    Scheme::PP,          Scheme::ZeroDP,       Scheme::ZeroCDP,
};

std::string_view scheme_name(Scheme s);
std::optional<Scheme> parse_scheme(std::string_view name);
// True for the schemes whose micro-batches run staggered.
bool is_cyclic(Scheme s);

struct CostWeights {
  int forward_cost = 1;
  int backward_cost = 1;
  bool is_unit() const { return forward_cost == 1 && backward_cost == 1; }
};

struct ParallelismConfig {
  Scheme scheme = Scheme::MultiGpuDP;
  int n = 1;                  // stages == micro-batches
  int micro_batch_size = 1;   // B
  int training_steps = 1;
  CostWeights cost_weights;
};

void check_config(const ParallelismConfig &cfg);

}  // namespace cdpsim

#endif  // CDPSIM_PROFILE_HPP_
