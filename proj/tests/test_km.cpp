// Copyright 2026 The rdgcomp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <random>
#include <sstream>
#include <vector>

#include "fixtures.hpp"
#include "rdgcomp/km.hpp"

using namespace rdg;

TEST_CASE("km_curve small cases") {
  std::vector<TimeToEvent> a{{5, true}, {10, true}};
  auto c = km_curve(a, 10);
  CHECK(c.at(0) == 1.0);
  CHECK(c.at(4) == 1.0);
  CHECK(c.at(5) == 0.5);
  CHECK(c.at(10) == 0.0);
  CHECK(survival_quantile(c, 0.5) == 5);

  std::vector<TimeToEvent> b{{5, false}, {10, true}};
  c = km_curve(b, 10);
  CHECK(c.at(5) == 1.0);
  CHECK(c.at(10) == 0.0);

  CHECK_THROWS_AS(km_curve(std::vector<TimeToEvent>{}, 10), std::invalid_argument);
}

TEST_CASE("km_curve matches the hand-computed product-limit table") {
  const auto c = km_curve(fixtures::km_fixture(), 12);
  const auto table = fixtures::km_fixture_table();
  REQUIRE(c.values.size() == table.size());
  for (std::size_t t = 0; t < table.size(); ++t) {
    CAPTURE(t);
    CHECK(c.values[t] == doctest::Approx(table[t]).epsilon(1e-15));
  }
}

TEST_CASE("km_curve without censoring is the empirical survival function") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> day(1, 60);
  std::vector<TimeToEvent> d(137);
  for (auto& x : d) x = {day(rng), true};
  const auto c = km_curve(d, 60);
  for (int t = 0; t <= 60; ++t) {
    int alive = 0;
    for (const auto& x : d) alive += x.time > t;
    CHECK(c.at(t) == static_cast<double>(alive) / static_cast<double>(d.size()));
  }
}

TEST_CASE("adding a censored observation never lowers earlier survival") {
  auto d = fixtures::km_fixture();
  const auto before = km_curve(d, 12);
  d.push_back({7, false});
  const auto after = km_curve(d, 12);
  int drops_before = 0, drops_after = 0;
  for (int t = 1; t <= 12; ++t) {
    if (t < 7) CHECK(after.at(t) >= before.at(t));
    drops_before += before.at(t) < before.at(t - 1);
    drops_after += after.at(t) < after.at(t - 1);
  }
  CHECK(drops_after <= drops_before);
}

TEST_CASE("survival_quantile") {
  SurvivalCurve c;
  c.values.assign(101, 1.0);
  for (int t = 40; t <= 100; ++t) c.values[t] = 0.90;
  for (int t = 80; t <= 100; ++t) c.values[t] = 0.84;
  CHECK(survival_quantile(c, 0.15) == 80);
  SurvivalCurve flat;
  flat.values.assign(31, 1.0);
  CHECK(survival_quantile(flat, 0.15) == 31);
  CHECK_THROWS(survival_quantile(flat, 0.0));
}

TEST_CASE("curve CSV export") {
  SurvivalCurve c;
  c.values = {1.0, 0.5};
  std::ostringstream out;
  write_curve_csv(out, c);
  CHECK(out.str() == "t,S,se_log\n0,1,\n1,0.5,\n");
}
