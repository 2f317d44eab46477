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

#include "cdpsim/profile.hpp"

#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cdpsim/error.hpp"
#include "json.hpp"

namespace cdpsim {

using nlohmann::json;

std::string to_string(const Memory &m) {
  if (m.denominator() == 1) {
    return std::to_string(m.numerator());
  }
  return std::to_string(m.numerator()) + "/" + std::to_string(m.denominator());
}

namespace {

std::int64_t parse_int(std::string_view text) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("", "not an integer: '" + std::string(text) + "'");
  }
  return value;
}

std::int64_t read_quantity(const json &node, const std::string &path) {
  if (!node.is_number_integer()) {
    throw ConfigError(path, "expected a non-negative integer");
  }
  if (node.is_number_unsigned()) {
    auto v = node.get<std::uint64_t>();
    if (v > static_cast<std::uint64_t>(INT64_MAX)) {
      throw ConfigError(path, "value out of range");
    }
    return static_cast<std::int64_t>(v);
  }
  auto v = node.get<std::int64_t>();
  if (v < 0) {
    throw ConfigError(path, "must be non-negative, got " + std::to_string(v));
  }
  return v;
}

void reject_unknown_keys(const json &obj, std::initializer_list<std::string_view> allowed,
                         const std::string &path) {
  for (const auto &[key, _] : obj.items()) {
    bool known = false;
    for (auto a : allowed) {
      known = known || key == a;
    }
    if (!known) {
      throw ConfigError(path + "/" + key, "unknown key");
    }
  }
}

}  // namespace

Memory parse_memory(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    return Memory(parse_int(text));
  }
  auto den = parse_int(text.substr(slash + 1));
  if (den == 0) {
    throw ConfigError("", "zero denominator");
  }
  return Memory(parse_int(text.substr(0, slash)), den);
}

std::int64_t ModelProfile::total_params() const {
  return std::accumulate(stage_params.begin(), stage_params.end(), std::int64_t{0});
}

std::int64_t ModelProfile::total_acts_per_sample() const {
  return std::accumulate(stage_acts_per_sample.begin(), stage_acts_per_sample.end(),
                         std::int64_t{0});
}

bool ModelProfile::is_homogeneous() const {
  for (std::size_t j = 1; j < stage_params.size(); ++j) {
    if (stage_params[j] != stage_params[0] ||
        stage_acts_per_sample[j] != stage_acts_per_sample[0]) {
      return false;
    }
  }
  return true;
}

void check_profile(const ModelProfile &p) {
  if (p.stage_params.empty()) {
    throw ConfigError("/stages", "at least one stage is required");
  }
  if (p.stage_params.size() != p.stage_acts_per_sample.size()) {
    throw ConfigError("/stages", "params and acts_per_sample lists differ in length");
  }
  for (std::size_t j = 0; j < p.stage_params.size(); ++j) {
    const auto base = "/stages/" + std::to_string(j);
    if (p.stage_params[j] < 0) {
      throw ConfigError(base + "/params", "must be non-negative");
    }
    if (p.stage_acts_per_sample[j] < 0) {
      throw ConfigError(base + "/acts_per_sample", "must be non-negative");
    }
  }
  if (p.boundary_act_per_sample < 0) {
    throw ConfigError("/boundary_act_per_sample", "must be non-negative");
  }
  if (p.boundary_act_per_sample > p.total_acts_per_sample()) {
    throw ConfigError("/boundary_act_per_sample",
                      "exceeds the total activation memory per sample");
  }
}

ModelProfile make_homogeneous_profile(int n, std::int64_t psi_p, std::int64_t psi_a,
                                      std::int64_t psi_int) {
  if (n < 1) {
    throw ConfigError("n", "number of stages must be at least 1");
  }
  if (psi_p < 0 || psi_a < 0 || psi_int < 0) {
    throw ConfigError("", "memory quantities must be non-negative");
  }
  if (psi_p % n != 0) {
    throw ConfigError("psi_p", "not divisible by n=" + std::to_string(n));
  }
  if (psi_a % n != 0) {
    throw ConfigError("psi_a", "not divisible by n=" + std::to_string(n));
  }
  ModelProfile p;
  p.stage_params.assign(n, psi_p / n);
  p.stage_acts_per_sample.assign(n, psi_a / n);
  p.boundary_act_per_sample = psi_int;
  check_profile(p);
  return p;
}

ModelProfile parse_profile(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ConfigError("/", "expected an object");
  }
  reject_unknown_keys(doc, {"stages", "boundary_act_per_sample"}, "");
  if (!doc.contains("stages")) {
    throw ConfigError("/stages", "missing");
  }
  if (!doc.contains("boundary_act_per_sample")) {
    throw ConfigError("/boundary_act_per_sample", "missing");
  }
  const auto &stages = doc["stages"];
  if (!stages.is_array()) {
    throw ConfigError("/stages", "expected an array");
  }
  ModelProfile p;
  for (std::size_t j = 0; j < stages.size(); ++j) {
    const auto base = "/stages/" + std::to_string(j);
    const auto &s = stages[j];
    if (!s.is_object()) {
      throw ConfigError(base, "expected an object");
    }
    reject_unknown_keys(s, {"params", "acts_per_sample"}, base);
    if (!s.contains("params")) throw ConfigError(base + "/params", "missing");
    if (!s.contains("acts_per_sample")) throw ConfigError(base + "/acts_per_sample", "missing");
    p.stage_params.push_back(read_quantity(s["params"], base + "/params"));
    p.stage_acts_per_sample.push_back(read_quantity(s["acts_per_sample"], base + "/acts_per_sample"));
  }
  p.boundary_act_per_sample =
      read_quantity(doc["boundary_act_per_sample"], "/boundary_act_per_sample");
  check_profile(p);
  return p;
}

ModelProfile load_profile(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(path, "cannot open profile file");
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_profile(buf.str());
}

std::string emit_profile(const ModelProfile &p) {
  json doc;
  doc["stages"] = json::array();
  for (std::size_t j = 0; j < p.stage_params.size(); ++j) {
    doc["stages"].push_back({{"params", p.stage_params[j]},
                             {"acts_per_sample", p.stage_acts_per_sample[j]}});
  }
  doc["boundary_act_per_sample"] = p.boundary_act_per_sample;
  return doc.dump(2) + "\n";
}

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::SingleGpuDP: return "SingleGpuDP";
    case Scheme::SingleGpuCDP: return "SingleGpuCDP";
    case Scheme::MultiGpuDP: return "MultiGpuDP";
    case Scheme::MultiGpuCDP: return "MultiGpuCDP";
    case Scheme::DpWithMP: return "DpWithMP";
    case Scheme::CdpWithMP: return "CdpWithMP";
    case Scheme::PP: return "PP";
    case Scheme::ZeroDP: return "ZeroDP";
    case Scheme::ZeroCDP: return "ZeroCDP";
  }
  return "?";
}

std::optional<Scheme> parse_scheme(std::string_view name) {
  for (auto s : kAllSchemes) {
    if (scheme_name(s) == name) {
      return s;
    }
  }
  return std::nullopt;
}

bool is_cyclic(Scheme s) {
  switch (s) {
    case Scheme::SingleGpuCDP:
    case Scheme::MultiGpuCDP:
    case Scheme::CdpWithMP:
    case Scheme::PP:
    case Scheme::ZeroCDP:
      return true;
    default:
      return false;
  }
}

void check_config(const ParallelismConfig &cfg) {
  if (cfg.n < 1) throw ConfigError("n", "must be at least 1");
  if (cfg.micro_batch_size < 1) throw ConfigError("micro_batch_size", "must be at least 1");
  if (cfg.training_steps < 1) throw ConfigError("training_steps", "must be at least 1");
  if (cfg.cost_weights.forward_cost < 1) throw ConfigError("cost_weights/forward_cost", "must be positive");
  if (cfg.cost_weights.backward_cost < 1) throw ConfigError("cost_weights/backward_cost", "must be positive");
}

}  // namespace cdpsim
