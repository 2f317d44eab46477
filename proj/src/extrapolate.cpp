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

#include <algorithm>
#include <cmath>

#include "cdpsim/cost.hpp"
#include "cdpsim/error.hpp"

namespace cdpsim {

namespace {

void check_series(const std::vector<double> &series, int n) {
  if (series.empty()) throw ConfigError("series", "activation series is empty");
  if (n < 1) throw ConfigError("n", "must be at least 1");
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (!std::isfinite(series[k])) {
      throw ConfigError("series/" + std::to_string(k), "sample is not finite");
    }
  }
}

double peak(const std::vector<double> &series) {
  return *std::max_element(series.begin(), series.end());
}

}  // namespace

std::vector<double> extrapolate_series(const std::vector<double> &single_pass, int n,
                                       ExtrapolationMode mode) {
  check_series(single_pass, n);
  if (mode == ExtrapolationMode::DP) return single_pass;

  const long len = static_cast<long>(single_pass.size());
  std::vector<double> out(single_pass.size(), 0.0);
  for (long p = 0; p < len; ++p) {
    double sum = 0.0;
    for (long k = 0; k < n; ++k) {
      // Offset k * len / n split into whole samples and a fractional part.
      const long whole = (k * len) / n;
      const long rem = (k * len) % n;
      const long at = (p + whole) % len;
      const double lo = single_pass[static_cast<std::size_t>(at)];
      if (rem == 0) {
        sum += lo;
      } else {
        const double hi = single_pass[static_cast<std::size_t>((at + 1) % len)];
        const double frac = static_cast<double>(rem) / static_cast<double>(n);
        sum += lo + (hi - lo) * frac;
      }
    }
    out[static_cast<std::size_t>(p)] = sum / static_cast<double>(n);
  }
  return out;
}

Extrapolation extrapolate_activation_memory(const std::vector<double> &single_pass, int n) {
  Extrapolation e;
  e.n = n;
  e.dp_series = extrapolate_series(single_pass, n, ExtrapolationMode::DP);
  e.cdp_series = extrapolate_series(single_pass, n, ExtrapolationMode::CDP);
  e.dp_peak = peak(e.dp_series);
  e.cdp_peak = peak(e.cdp_series);
  e.peak_ratio = e.dp_peak > 0.0 ? e.cdp_peak / e.dp_peak : 1.0;
  return e;
}

std::vector<double> activation_pass_series(const ModelProfile &profile) {
  check_profile(profile);
  const int n = profile.num_stages();
  std::vector<double> prefix(n + 1, 0.0);
  for (int j = 0; j < n; ++j) {
    prefix[j + 1] = prefix[j] + static_cast<double>(profile.stage_acts_per_sample[j]);
  }
  std::vector<double> series;
  for (int j = 1; j <= n; ++j) series.push_back(prefix[j]);  // forward of stage j
  for (int j = n; j >= 1; --j) series.push_back(prefix[j]);  // backward of stage j
  return series;
}

std::vector<double> triangular_series(int n) {
  if (n < 1) throw ConfigError("n", "must be at least 1");
  std::vector<double> series;
  for (int k = 1; k <= n; ++k) series.push_back(k);
  for (int k = n; k >= 1; --k) series.push_back(k);
  return series;
}

}  // namespace cdpsim
