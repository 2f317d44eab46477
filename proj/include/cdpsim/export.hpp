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

#ifndef CDPSIM_EXPORT_HPP_
#define CDPSIM_EXPORT_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "cdpsim/cost.hpp"
#include "cdpsim/schedule.hpp"
#include "cdpsim/sgd.hpp"

namespace cdpsim {

// Timeline text format, version 1. Line oriented, '#' starts a comment line
// except for the mandatory first line:
//
//   # cdpsim-timeline v1
//   config <scheme> <n> <training_steps> <micro_batch_size> <fwd_cost> <bwd_cost> <horizon>
//   device <id> <gpu> <capacity> <residency> <stages: comma list or ->
//   slot <device> <start> <F|B> <i> <j> <t> <version> <duration>
//   comm <boundary> <kind> <src> <dst> <payload> <stage> <i or -> <t> <depth> <participants or ->
//
// src/dst of -1 mean "all devices". Records appear in that order; slots are
// sorted by (device, start), comm records by (boundary, kind, src, dst).
inline constexpr std::string_view kTimelineHeader = "# cdpsim-timeline v1";

std::string timeline_to_text(const Timeline &tl);
// Throws ConfigError("line <k>", ...) on malformed input.
Timeline timeline_from_text(std::string_view text);

// Gantt chart: one row per device, one rect per task coloured by micro-batch
// (fixed palette, see kMicroBatchPalette), forwards solid and backwards
// hatched-by-opacity; communication drawn as arrows on boundaries, single
// headed for point-to-point and double headed for collectives, thin within
// a GPU and thick across GPUs.
inline constexpr const char *kMicroBatchPalette[] = {
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
};
std::string timeline_to_svg(const Timeline &tl);

// CSV writers. The first line of each carries the format name and version.
inline constexpr std::string_view kTable1Header = "# cdpsim-table1 v1";
inline constexpr std::string_view kCostHeader = "# cdpsim-cost v1";
inline constexpr std::string_view kTrajectoryHeader = "# cdpsim-trajectory v1";
inline constexpr std::string_view kExtrapolationHeader = "# cdpsim-extrapolation v1";
inline constexpr std::string_view kRatioHeader = "# cdpsim-peak-ratio v1";

std::string table1_csv(const std::vector<Table1Row> &rows);
std::string cost_csv(const std::vector<CostReport> &reports);
std::string trajectory_csv(const ExperimentResult &result);
std::string experiment_summary_json(const ExperimentResult &result);
std::string extrapolation_csv(const std::vector<Extrapolation> &runs);
std::string peak_ratio_csv(const std::vector<Extrapolation> &runs);
std::string extrapolation_svg(const Extrapolation &run);

// Series file: one number per line, '#' comments and blank lines skipped.
std::vector<double> parse_series(std::string_view text);
std::vector<double> load_series(const std::string &path);

// Throws IoError.
void write_text_file(const std::string &path, std::string_view content);
std::string read_text_file(const std::string &path);

}  // namespace cdpsim

#endif  // CDPSIM_EXPORT_HPP_
