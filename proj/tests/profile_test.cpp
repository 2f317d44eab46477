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

#include "cdpsim/error.hpp"
#include "cdpsim/profile.hpp"

namespace cdpsim {
namespace {

TEST(MemoryText, RoundTrips) {
  EXPECT_EQ(to_string(Memory(7)), "7");
  EXPECT_EQ(to_string(Memory(3, 2)), "3/2");
  EXPECT_EQ(parse_memory("3/2"), Memory(3, 2));
  EXPECT_EQ(parse_memory("-4"), Memory(-4));
  EXPECT_THROW(parse_memory("1/0"), Error);
  EXPECT_THROW(parse_memory("abc"), Error);
}

TEST(Profile, HomogeneousSplit) {
  auto p = make_homogeneous_profile(4, 400, 80, 12);
  EXPECT_EQ(p.num_stages(), 4);
  EXPECT_EQ(p.total_params(), 400);
  EXPECT_EQ(p.total_acts_per_sample(), 80);
  EXPECT_TRUE(p.is_homogeneous());
  EXPECT_THROW(make_homogeneous_profile(3, 400, 80, 12), ConfigError);
}

TEST(Profile, ParseEmitRoundTrip) {
  const char *doc = R"({"stages": [{"params": 3, "acts_per_sample": 9},
                                   {"params": 5, "acts_per_sample": 1}],
                        "boundary_act_per_sample": 2})";
  auto p = parse_profile(doc);
  EXPECT_EQ(p.stage_params, (std::vector<std::int64_t>{3, 5}));
  EXPECT_FALSE(p.is_homogeneous());
  EXPECT_EQ(parse_profile(emit_profile(p)), p);
}

TEST(Profile, ErrorsNameTheField) {
  try {
    parse_profile(R"({"stages": [{"params": 1, "acts_per_sample": 1},
                                 {"params": 1, "acts_per_sample": -3}],
                      "boundary_act_per_sample": 0})");
    FAIL() << "negative activations accepted";
  } catch (const ConfigError &e) {
    EXPECT_NE(e.field().find("/stages/1"), std::string::npos) << e.field();
  }
  EXPECT_THROW(parse_profile(R"({"stages": [], "boundary_act_per_sample": 0})"), ConfigError);
  EXPECT_THROW(parse_profile(R"({"stages": [{"params": 1, "acts_per_sample": 1}], "extra": 1})"),
               ConfigError);
  EXPECT_THROW(parse_profile("{not json"), ConfigError);
  EXPECT_THROW(load_profile("/nonexistent/profile.json"), ConfigError);
}

TEST(Profile, ShippedProfileLoads) {
  auto p = load_profile(std::string(CDPSIM_DATA_DIR) + "/resnet_like_profile.json");
  EXPECT_EQ(p.num_stages(), 4);
  EXPECT_FALSE(p.is_homogeneous());
}

TEST(Scheme, NamesRoundTrip) {
  for (Scheme s : kAllSchemes) EXPECT_EQ(parse_scheme(scheme_name(s)), s);
  EXPECT_FALSE(parse_scheme("Bogus"));
  EXPECT_TRUE(is_cyclic(Scheme::PP));
  EXPECT_TRUE(is_cyclic(Scheme::ZeroCDP));
  EXPECT_FALSE(is_cyclic(Scheme::DpWithMP));
}

TEST(Config, RejectsBadValues) {
  ParallelismConfig cfg;
  cfg.n = 0;
  EXPECT_THROW(check_config(cfg), ConfigError);
  cfg.n = 2;
  cfg.micro_batch_size = 0;
  EXPECT_THROW(check_config(cfg), ConfigError);
  cfg.micro_batch_size = 1;
  cfg.cost_weights.backward_cost = 0;
  EXPECT_THROW(check_config(cfg), ConfigError);
  cfg.cost_weights.backward_cost = 2;
  EXPECT_NO_THROW(check_config(cfg));
}

}  // namespace
}  // namespace cdpsim
