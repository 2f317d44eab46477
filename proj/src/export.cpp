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

#include "cdpsim/export.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "cdpsim/error.hpp"
#include "json.hpp"

namespace cdpsim {

namespace {

std::string_view residency_name(Residency r) {
  switch (r) {
    case Residency::FullReplica:
      return "full";
    case Residency::OwnedStages:
      return "owned";
    case Residency::FollowActivations:
      return "follow";
  }
  return "full";
}

std::optional<Residency> parse_residency(std::string_view s) {
  if (s == "full") return Residency::FullReplica;
  if (s == "owned") return Residency::OwnedStages;
  if (s == "follow") return Residency::FollowActivations;
  return std::nullopt;
}

std::string join_ints(const std::vector<int> &v) {
  if (v.empty()) return "-";
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(v[k]);
  }
  return out;
}

// Shortest text that round-trips; stable across runs.
std::string fmt_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

struct LineReader {
  int line = 0;
  [[noreturn]] void fail(const std::string &what) const {
    throw ConfigError("line " + std::to_string(line), what);
  }
  long to_long(const std::string &s) const {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("expected an integer, got '" + s + "'");
    return v;
  }
  int to_int(const std::string &s) const { return static_cast<int>(to_long(s)); }
  std::vector<int> to_ints(const std::string &s) const {
    std::vector<int> out;
    if (s == "-") return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_int(item));
    return out;
  }
};

}  // namespace

std::string timeline_to_text(const Timeline &tl) {
  std::ostringstream out;
  out << kTimelineHeader << '\n';
  out << "config " << scheme_name(tl.scheme) << ' ' << tl.n << ' ' << tl.training_steps << ' '
      << tl.micro_batch_size << ' ' << tl.cost_weights.forward_cost << ' ' << tl.cost_weights.backward_cost
      << ' ' << tl.horizon << '\n';
  for (const auto &d : tl.devices) {
    out << "device " << d.id << ' ' << d.gpu << ' ' << d.capacity << ' ' << residency_name(d.residency) << ' '
        << join_ints(d.stages) << '\n';
  }
  std::vector<const Task *> tasks;
  for (const auto &t : tl.tasks) tasks.push_back(&t);
  std::stable_sort(tasks.begin(), tasks.end(), [](const Task *a, const Task *b) {
    return std::tie(a->device, a->start) < std::tie(b->device, b->start);
  });
  for (const Task *t : tasks) {
    out << "slot " << t->device << ' ' << t->start << ' ' << (t->kind == TaskKind::Forward ? 'F' : 'B') << ' '
        << t->micro_batch << ' ' << t->stage << ' ' << t->training_step << ' ' << t->param_version << ' '
        << t->duration << '\n';
  }
  std::vector<const CommEvent *> events;
  for (const auto &e : tl.comm_events) events.push_back(&e);
  std::stable_sort(events.begin(), events.end(), [](const CommEvent *a, const CommEvent *b) {
    return std::make_tuple(a->boundary, static_cast<int>(a->kind), a->src, a->dst) <
           std::make_tuple(b->boundary, static_cast<int>(b->kind), b->src, b->dst);
  });
  for (const CommEvent *e : events) {
    out << "comm " << e->boundary << ' ' << comm_kind_name(e->kind) << ' ' << e->src << ' ' << e->dst << ' '
        << to_string(e->payload) << ' ' << e->stage << ' '
        << (e->micro_batch ? std::to_string(*e->micro_batch) : std::string("-")) << ' ' << e->training_step
        << ' ' << e->depth << ' ' << join_ints(e->participants) << '\n';
  }
  return out.str();
}

Timeline timeline_from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string raw;
  LineReader rd;
  Timeline tl;
  bool have_config = false;
  while (std::getline(in, raw)) {
    ++rd.line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (rd.line == 1) {
      if (raw != kTimelineHeader) rd.fail("expected header '" + std::string(kTimelineHeader) + "'");
      continue;
    }
    if (raw.empty() || raw[0] == '#') continue;
    std::istringstream ls(raw);
    std::vector<std::string> f;
    for (std::string w; ls >> w;) f.push_back(w);
    const std::string &rec = f[0];
    auto need = [&](std::size_t count) {
      if (f.size() != count) {
        rd.fail("'" + rec + "' record needs " + std::to_string(count - 1) + " fields, got " +
                std::to_string(f.size() - 1));
      }
    };
    if (rec == "config") {
      need(8);
      auto scheme = parse_scheme(f[1]);
      if (!scheme) rd.fail("unknown scheme '" + f[1] + "'");
      tl.scheme = *scheme;
      tl.n = rd.to_int(f[2]);
      tl.training_steps = rd.to_int(f[3]);
      tl.micro_batch_size = rd.to_int(f[4]);
      tl.cost_weights.forward_cost = rd.to_int(f[5]);
      tl.cost_weights.backward_cost = rd.to_int(f[6]);
      tl.horizon = rd.to_long(f[7]);
      if (tl.n < 1 || tl.training_steps < 1 || tl.cost_weights.forward_cost < 1 ||
          tl.cost_weights.backward_cost < 1) {
        rd.fail("config values must be positive");
      }
      have_config = true;
    } else if (!have_config) {
      rd.fail("'config' record must come first");
    } else if (rec == "device") {
      need(6);
      Device d;
      d.id = rd.to_int(f[1]);
      d.gpu = rd.to_int(f[2]);
      d.capacity = rd.to_int(f[3]);
      auto r = parse_residency(f[4]);
      if (!r) rd.fail("unknown residency '" + f[4] + "'");
      d.residency = *r;
      d.stages = rd.to_ints(f[5]);
      if (d.id != static_cast<int>(tl.devices.size())) rd.fail("device ids must be 0, 1, 2, ... in order");
      tl.devices.push_back(std::move(d));
    } else if (rec == "slot") {
      need(9);
      Task t;
      t.device = rd.to_int(f[1]);
      t.start = rd.to_long(f[2]);
      if (f[3] == "F") t.kind = TaskKind::Forward;
      else if (f[3] == "B") t.kind = TaskKind::Backward;
      else rd.fail("task kind must be F or B");
      t.micro_batch = rd.to_int(f[4]);
      t.stage = rd.to_int(f[5]);
      t.training_step = rd.to_int(f[6]);
      t.param_version = rd.to_int(f[7]);
      t.duration = rd.to_int(f[8]);
      if (t.device < 0 || t.device >= static_cast<int>(tl.devices.size())) rd.fail("unknown device");
      if (t.micro_batch < 1 || t.micro_batch > tl.n || t.stage < 1 || t.stage > tl.n) {
        rd.fail("micro-batch and stage must lie in [1, n]");
      }
      if (t.duration < 1 || t.start < 1) rd.fail("start and duration must be positive");
      tl.tasks.push_back(t);
    } else if (rec == "comm") {
      need(11);
      CommEvent e;
      e.boundary = rd.to_long(f[1]);
      auto kind = parse_comm_kind(f[2]);
      if (!kind) rd.fail("unknown comm kind '" + f[2] + "'");
      e.kind = *kind;
      e.src = rd.to_int(f[3]);
      e.dst = rd.to_int(f[4]);
      try {
        e.payload = parse_memory(f[5]);
      } catch (const Error &) {
        rd.fail("bad payload '" + f[5] + "'");
      }
      e.stage = rd.to_int(f[6]);
      if (f[7] != "-") e.micro_batch = rd.to_int(f[7]);
      e.training_step = rd.to_int(f[8]);
      e.depth = rd.to_int(f[9]);
      e.participants = rd.to_ints(f[10]);
      tl.comm_events.push_back(std::move(e));
    } else {
      rd.fail("unknown record '" + rec + "'");
    }
  }
  if (rd.line == 0) throw ConfigError("line 1", "empty timeline file");
  if (!have_config) throw ConfigError("config", "missing 'config' record");
  return tl;
}

std::string timeline_to_svg(const Timeline &tl) {
  constexpr int kCell = 24;
  constexpr int kRow = 28;
  constexpr int kLeft = 90;
  constexpr int kTop = 30;
  const TimeStep horizon = std::max<TimeStep>(tl.horizon, 1);
  const int rows = static_cast<int>(tl.devices.size());
  const long width = kLeft + horizon * kCell + 20;
  const long height = kTop + rows * kRow + 20;
  auto row_mid = [&](int dev) { return kTop + dev * kRow + kRow / 2; };
  auto palette = [](int mb) {
    constexpr auto count = std::size(kMicroBatchPalette);
    return kMicroBatchPalette[static_cast<std::size_t>(mb - 1) % count];
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"monospace\" font-size=\"10\">\n";
  out << "<defs>\n"
      << "<marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" orient=\"auto\">"
         "<path d=\"M0,0 L6,3 L0,6 z\" fill=\"#333\"/></marker>\n"
      << "<marker id=\"tail\" markerWidth=\"6\" markerHeight=\"6\" refX=\"1\" refY=\"3\" orient=\"auto\">"
         "<path d=\"M6,0 L0,3 L6,6 z\" fill=\"#333\"/></marker>\n"
      << "</defs>\n";
  out << "<text class=\"title\" x=\"4\" y=\"14\">" << scheme_name(tl.scheme) << " N=" << tl.n
      << " steps=" << tl.training_steps << "</text>\n";
  for (const auto &d : tl.devices) {
    out << "<text class=\"row-label\" x=\"4\" y=\"" << row_mid(d.id) + 4 << "\">dev " << d.id << " gpu " << d.gpu
        << "</text>\n";
  }
  std::vector<const Task *> tasks;
  for (const auto &t : tl.tasks) tasks.push_back(&t);
  std::stable_sort(tasks.begin(), tasks.end(), [](const Task *a, const Task *b) {
    return std::tie(a->device, a->start) < std::tie(b->device, b->start);
  });
  for (const Task *t : tasks) {
    const bool fwd = t->kind == TaskKind::Forward;
    const long x = kLeft + (t->start - 1) * kCell;
    const int y = kTop + t->device * kRow + 3;
    out << "<rect class=\"task " << (fwd ? "forward" : "backward") << " mb" << t->micro_batch << "\" x=\"" << x
        << "\" y=\"" << y << "\" width=\"" << t->duration * kCell - 1 << "\" height=\"" << kRow - 6
        << "\" fill=\"" << palette(t->micro_batch) << "\" fill-opacity=\"" << (fwd ? "1" : "0.55") << "\"/>\n";
    out << "<text x=\"" << x + 2 << "\" y=\"" << y + 14 << "\">" << (fwd ? 'F' : 'B') << t->stage << "</text>\n";
  }
  for (const auto &e : tl.comm_events) {
    const long x = kLeft + e.boundary * kCell;
    int top = 0;
    int bottom = rows - 1;
    if (!e.is_collective()) {
      top = std::min(e.src, e.dst);
      bottom = std::max(e.src, e.dst);
    } else if (!e.participants.empty()) {
      top = *std::min_element(e.participants.begin(), e.participants.end());
      bottom = *std::max_element(e.participants.begin(), e.participants.end());
    }
    const bool p2p = !e.is_collective();
    const bool inter = !p2p || tl.devices.at(e.src).gpu != tl.devices.at(e.dst).gpu;
    int y1 = row_mid(top);
    int y2 = row_mid(bottom);
    if (p2p && e.src > e.dst) std::swap(y1, y2);
    if (y1 == y2) y2 += kRow / 3;
    out << "<line class=\"comm " << (p2p ? "p2p" : "collective") << ' ' << (inter ? "inter" : "intra") << ' '
        << comm_kind_name(e.kind) << "\" x1=\"" << x << "\" y1=\"" << y1 << "\" x2=\"" << x << "\" y2=\"" << y2
        << "\" stroke=\"#333\" stroke-width=\"" << (inter ? 2.5 : 1) << "\" marker-end=\"url(#head)\""
        << (p2p ? "" : " marker-start=\"url(#tail)\"") << "/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

namespace {

using CostField = std::pair<const char *, std::string (*)(const CostReport &)>;

const std::vector<CostField> &cost_fields() {
  static const std::vector<CostField> fields = {
      {"peak_activation", [](const CostReport &r) { return to_string(r.peak_activation_memory_per_device); }},
      {"steady_activation", [](const CostReport &r) { return to_string(r.steady_activation_memory_per_device); }},
      {"steady_activation_floor", [](const CostReport &r) { return to_string(r.steady_activation_floor); }},
      {"warmup_activation_peak", [](const CostReport &r) { return to_string(r.warmup_activation_peak); }},
      {"param_memory", [](const CostReport &r) { return to_string(r.parameter_memory_per_device); }},
      {"param_memory_shared", [](const CostReport &r) { return to_string(r.parameter_memory_shared); }},
      {"comm_volume", [](const CostReport &r) { return to_string(r.comm_volume_per_training_step); }},
      {"state_volume", [](const CostReport &r) { return to_string(r.state_volume_per_training_step); }},
      {"max_comm_steps", [](const CostReport &r) { return std::to_string(r.max_comm_steps_per_boundary); }},
      {"collective_boundaries", [](const CostReport &r) { return std::to_string(r.collective_boundaries); }},
      {"device_count", [](const CostReport &r) { return std::to_string(r.device_count); }},
      {"idle_fraction", [](const CostReport &r) { return to_string(r.idle_fraction); }},
      {"min_busy_devices", [](const CostReport &r) { return std::to_string(r.min_busy_devices); }},
      {"max_busy_devices", [](const CostReport &r) { return std::to_string(r.max_busy_devices); }},
      {"max_held_stage_states", [](const CostReport &r) { return std::to_string(r.max_held_stage_states); }},
      {"window_steps", [](const CostReport &r) { return std::to_string(r.window_steps); }},
      {"degenerate_comm", [](const CostReport &r) { return std::string(r.degenerate_comm ? "1" : "0"); }},
  };
  return fields;
}

std::string csv_quote(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::string table1_csv(const std::vector<Table1Row> &rows) {
  std::ostringstream out;
  out << kTable1Header << "\nscheme,n,equal";
  for (const auto &[name, _] : cost_fields()) out << ',' << name << "_closed," << name << "_measured";
  out << ",mismatches\n";
  for (const auto &row : rows) {
    out << scheme_name(row.scheme) << ',' << row.n << ',' << (row.equal ? 1 : 0);
    for (const auto &[_, get] : cost_fields()) out << ',' << get(row.closed) << ',' << get(row.measured);
    std::string joined;
    for (const auto &m : row.mismatches) joined += (joined.empty() ? "" : "; ") + m;
    out << ',' << csv_quote(joined) << '\n';
  }
  return out.str();
}

std::string cost_csv(const std::vector<CostReport> &reports) {
  std::ostringstream out;
  out << kCostHeader << "\nscheme,n";
  for (const auto &[name, _] : cost_fields()) out << ',' << name;
  out << '\n';
  for (const auto &r : reports) {
    out << scheme_name(r.scheme) << ',' << r.n;
    for (const auto &[_, get] : cost_fields()) out << ',' << get(r);
    out << '\n';
  }
  return out.str();
}

std::string trajectory_csv(const ExperimentResult &result) {
  std::ostringstream out;
  out << kTrajectoryHeader << "\nstep,rule,loss\n";
  for (const auto &run : result.runs) {
    const std::string name = rule_name(run.rule);
    for (std::size_t k = 0; k < run.losses.size(); ++k) {
      out << k << ',' << name << ',' << fmt_double(run.losses[k]) << '\n';
    }
  }
  return out.str();
}

std::string experiment_summary_json(const ExperimentResult &result) {
  nlohmann::ordered_json doc;
  doc["format"] = "cdpsim-summary v1";
  doc["reference_loss"] = result.reference_loss;
  auto runs = nlohmann::ordered_json::array();
  for (const auto &run : result.runs) {
    nlohmann::ordered_json r;
    r["rule"] = rule_name(run.rule);
    r["initial_loss"] = run.losses.front();
    r["final_loss"] = run.losses.back();
    r["suboptimality"] = run.losses.back() - result.reference_loss;
    r["steps_to_threshold"] = run.steps_to_threshold ? nlohmann::ordered_json(*run.steps_to_threshold)
                                                      : nlohmann::ordered_json(nullptr);
    runs.push_back(std::move(r));
  }
  doc["runs"] = std::move(runs);
  doc["max_pairwise_divergence"] = result.max_pairwise_divergence;
  doc["max_final_loss_spread"] = result.max_final_loss_spread;
  doc["final_losses_within_10_percent"] = result.max_final_loss_spread <= 0.10;
  return doc.dump(2) + "\n";
}

std::string extrapolation_csv(const std::vector<Extrapolation> &runs) {
  std::ostringstream out;
  out << kExtrapolationHeader << "\nn,sample,dp,cdp\n";
  for (const auto &run : runs) {
    for (std::size_t k = 0; k < run.dp_series.size(); ++k) {
      out << run.n << ',' << k << ',' << fmt_double(run.dp_series[k]) << ',' << fmt_double(run.cdp_series[k])
          << '\n';
    }
  }
  return out.str();
}

std::string peak_ratio_csv(const std::vector<Extrapolation> &runs) {
  std::ostringstream out;
  out << kRatioHeader << "\nn,dp_peak,cdp_peak,ratio\n";
  for (const auto &run : runs) {
    out << run.n << ',' << fmt_double(run.dp_peak) << ',' << fmt_double(run.cdp_peak) << ','
        << fmt_double(run.peak_ratio) << '\n';
  }
  return out.str();
}

std::string extrapolation_svg(const Extrapolation &run) {
  constexpr double kW = 480.0;
  constexpr double kH = 240.0;
  constexpr double kPad = 30.0;
  const std::size_t count = run.dp_series.size();
  const double top = std::max(run.dp_peak, 1e-12);
  auto polyline = [&](const std::vector<double> &s, const char *cls, const char *colour) {
    std::ostringstream pts;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double x = kPad + (count > 1 ? kW * k / (count - 1) : 0.0);
      const double y = kPad + kH - kH * s[k] / top;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", k ? " " : "", x, y);
      pts << buf;
    }
    return "<polyline class=\"" + std::string(cls) + "\" fill=\"none\" stroke=\"" + colour +
           "\" stroke-width=\"1.5\" points=\"" + pts.str() + "\"/>\n";
  };
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW + 2 * kPad << "\" height=\"" << kH + 2 * kPad
      << "\" font-family=\"monospace\" font-size=\"10\">\n";
  out << "<text class=\"title\" x=\"4\" y=\"14\">activation memory per worker, N=" << run.n
      << " ratio=" << fmt_double(run.peak_ratio) << "</text>\n";
  out << polyline(run.dp_series, "dp", kMicroBatchPalette[0]);
  out << polyline(run.cdp_series, "cdp", kMicroBatchPalette[1]);
  out << "</svg>\n";
  return out.str();
}

std::vector<double> parse_series(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::vector<double> out;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto b = raw.find_first_not_of(" \t\r");
    if (b == std::string::npos || raw[b] == '#') continue;
    const auto e = raw.find_last_not_of(" \t\r");
    const std::string item = raw.substr(b, e - b + 1);
    double v = 0.0;
    auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size() || !std::isfinite(v) || v < 0.0) {
      throw ConfigError("line " + std::to_string(line), "expected a non-negative number, got '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("series", "no samples");
  return out;
}

std::vector<double> load_series(const std::string &path) { return parse_series(read_text_file(path)); }

void write_text_file(const std::string &path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::string read_text_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace cdpsim
