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

#include <sstream>
#include <vector>

#include "rdgcomp/domain.hpp"
#include "rdgcomp/ingest.hpp"

using namespace rdg;

namespace {

constexpr Date kU = 13000;

// Date of follow-up day t.
Date on(Day t) { return kU + t - 1; }

FillRecord fill(Day t, Formulation form, int days, double cost = 0.0) {
  return {"p", on(t), form, days, cost};
}

PatientHistory history(std::vector<FillRecord> fills, std::vector<EventRecord> events = {}) {
  return build_history("p", kU, BaselineCovariates{.age = 40}, fills, events, {});
}

}  // namespace

TEST_CASE("regime_cost steps by p every 30 days") {
  Regime r{Arm::Brand, 20.0};
  CHECK(regime_cost(r, 1) == 20);
  CHECK(regime_cost(r, 30) == 20);
  CHECK(regime_cost(r, 31) == 40);
  CHECK(regime_cost(r, 270) == 180);
  for (Day t = 1; t + 30 <= 270; ++t) {
    CHECK(regime_cost(r, t + 30) - regime_cost(r, t) == doctest::Approx(20.0));
  }
  CHECK_THROWS_AS(regime_cost(r, 0), std::out_of_range);
  CHECK_THROWS_AS(regime_cost(r, 271), std::out_of_range);
}

TEST_CASE("derive_exposure stacks same-form refills") {
  std::vector<FillRecord> f{fill(1, Formulation::ImBrand, 30), fill(20, Formulation::ImBrand, 30)};
  const auto e = derive_exposure(f, kU);
  // Supplies add: days 1..30 + 30 = 1..60.
  for (Day t = 1; t <= 60; ++t) CHECK(e.z1[t - 1] == Exposure::ImBrand);
  CHECK(e.z1[60] == Exposure::None);
}

TEST_CASE("derive_exposure truncates on a switch of form") {
  std::vector<FillRecord> f{fill(1, Formulation::ImBrand, 30), fill(15, Formulation::Other, 30)};
  const auto e = derive_exposure(f, kU);
  for (Day t = 1; t <= 14; ++t) CHECK(e.z1[t - 1] == Exposure::ImBrand);
  for (Day t = 15; t <= 44; ++t) CHECK(e.z1[t - 1] == Exposure::Other);
  CHECK(e.z1[44] == Exposure::None);
}

TEST_CASE("derive_exposure accumulates cost") {
  std::vector<FillRecord> f{fill(1, Formulation::ImGeneric, 30, 5.0)};
  const auto e = derive_exposure(f, kU);
  for (Day t = 1; t <= 30; ++t) CHECK(e.z1[t - 1] == Exposure::ImGeneric);
  for (Day t = 31; t <= 270; ++t) CHECK(e.z1[t - 1] == Exposure::None);
  for (double z : e.z2) CHECK(z == 5.0);
}

TEST_CASE("derive_exposure covered days and monotone cost") {
  std::vector<FillRecord> f{fill(1, Formulation::ImBrand, 30, 3), fill(10, Formulation::ImBrand, 60, 4),
                            fill(50, Formulation::ImGeneric, 30, 1), fill(120, Formulation::Other, 90, 2)};
  const auto e = derive_exposure(f, kU);
  int covered = 0;
  for (auto z : e.z1) covered += z != Exposure::None;
  // brand 1..49, generic 50..79, other 120..209
  CHECK(covered == 49 + 30 + 90);
  for (std::size_t t = 1; t < e.z2.size(); ++t) CHECK(e.z2[t] >= e.z2[t - 1]);
  CHECK(e.z2.back() == 10.0);
}

TEST_CASE("derive_exposure sums duplicate same-day fills") {
  std::vector<FillRecord> f{fill(1, Formulation::ImBrand, 30), fill(1, Formulation::ImBrand, 30)};
  const auto e = derive_exposure(f, kU);
  CHECK(e.z1[59] == Exposure::ImBrand);
  CHECK(e.z1[60] == Exposure::None);
}

TEST_CASE("derive_exposure same-day different forms: later record wins") {
  std::vector<FillRecord> f{fill(1, Formulation::ImBrand, 30), fill(1, Formulation::ImGeneric, 30)};
  const auto e = derive_exposure(f, kU);
  CHECK(e.z1[0] == Exposure::ImGeneric);
  CHECK_FALSE(e.warnings.empty());
}

TEST_CASE("build_history rejects a non-IM first fill") {
  CHECK_THROWS_AS(history({fill(1, Formulation::Other, 30)}), RejectedPatient);
  CHECK_THROWS_AS(history({fill(2, Formulation::ImBrand, 30)}), RejectedPatient);
}

TEST_CASE("derive_failure takes the earliest failure or censoring") {
  std::vector<EventRecord> a{{"p", on(70), EventKind::ClinicalProgression},
                             {"p", on(170), EventKind::TreatmentChange}};
  auto y = derive_failure(a, kU);
  CHECK(y.follow_up == 70);
  CHECK(y.failure);

  std::vector<EventRecord> b{{"p", on(100), EventKind::Disenrollment}};
  y = derive_failure(b, kU);
  CHECK(y.follow_up == 100);
  CHECK_FALSE(y.failure);

  y = derive_failure({}, kU);
  CHECK(y.follow_up == 270);
  CHECK_FALSE(y.failure);

  std::vector<EventRecord> c{{"p", on(1), EventKind::Death}};
  y = derive_failure(c, kU);
  CHECK(y.follow_up == 1);
  CHECK(y.failure);

  std::vector<EventRecord> late{{"p", on(300), EventKind::Death}};
  CHECK(derive_failure(late, kU).follow_up == 270);
}

TEST_CASE("derive_failure monotone under an earlier failure") {
  std::vector<EventRecord> e{{"p", on(40), EventKind::Disenrollment},
                             {"p", on(90), EventKind::Death}};
  auto before = derive_failure(e, kU);
  CHECK(before.follow_up == 40);
  CHECK_FALSE(before.failure);
  e.push_back({"p", on(20), EventKind::TreatmentChange});
  auto after = derive_failure(e, kU);
  CHECK(after.follow_up <= before.follow_up);
  CHECK(after.failure);
}

TEST_CASE("adherence_prefix follows the regime path") {
  Regime brand{Arm::Brand, 20.0};
  std::vector<FillRecord> f;
  for (Day t = 1; t <= 270; t += 30) f.push_back(fill(t, Formulation::ImBrand, 30, 20.0));
  const auto full = history(f);
  CHECK(adherence_prefix(full, brand) == 270);

  f[2].oop_cost = 25.0;  // day 61
  CHECK(adherence_prefix(history(f), brand) == 60);

  const auto generic = history({fill(1, Formulation::ImGeneric, 30, 20.0)});
  CHECK(adherence_prefix(generic, brand) == 0);
}

TEST_CASE("adherence_prefix is bounded by follow-up and monotone in truncation") {
  Regime brand{Arm::Brand, 20.0};
  std::vector<FillRecord> f;
  for (Day t = 1; t <= 270; t += 30) f.push_back(fill(t, Formulation::ImBrand, 30, 20.0));
  const auto censored = history(f, {{"p", on(100), EventKind::Disenrollment}});
  CHECK(adherence_prefix(censored, brand) == 100);
  CHECK(adherence_prefix(censored, brand) <= censored.follow_up);
  const auto earlier = history(f, {{"p", on(50), EventKind::Disenrollment}});
  CHECK(adherence_prefix(earlier, brand) <= adherence_prefix(censored, brand));
}

TEST_CASE("last_observed_day excludes the disenrollment day") {
  const auto h = history({fill(1, Formulation::ImBrand, 30)}, {{"p", on(100), EventKind::Disenrollment}});
  CHECK(h.last_observed_day() == 99);
  const auto g = history({fill(1, Formulation::ImBrand, 30)}, {{"p", on(100), EventKind::Death}});
  CHECK(g.last_observed_day() == 100);
  CHECK(history({fill(1, Formulation::ImBrand, 30)}).last_observed_day() == 270);
}

TEST_CASE("generic entry date offset") {
  CHECK(parse_iso_date("2006-08-08") == kGenericEntryDate);
  CHECK(parse_iso_date("1970-01-01") == 0);
  CHECK(format_iso_date(13368) == "2006-08-08");
  CHECK(format_iso_month(13368) == "2006-08");
}

TEST_CASE("ingestion reports line numbers") {
  std::istringstream patients(
      "id,init_date,age,sex,race,ses,cci,out,oop_1,rxb_1\n"
      "a,2006-01-01,40,female,x,3,0,1,10,0\n"
      "b,2006-13-01,40,female,x,3,0,1,10,0\n");
  std::istringstream fills("id,date,form,days_supply,oop_cost\n");
  std::istringstream events("id,date,kind\n");
  try {
    read_tables(patients, fills, events);
    FAIL("expected an ingestion error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("ingestion builds histories and counts rejections") {
  std::istringstream patients(
      "id,init_date,age,sex,race,ses,cci,out,oop_1,rxb_1\n"
      "a,2006-01-01,40,female,x,3,0,1,10,0\n"
      "b,2006-01-05,50,male,y,4,1,0,0,2\n");
  std::istringstream fills(
      "id,date,form,days_supply,oop_cost\n"
      "a,2006-01-01,IM-brand,30,20\n"
      "b,2006-01-05,other-venlafaxine,30,20\n");
  std::istringstream events("id,date,kind\na,2006-02-09,death\n");
  const auto raw = read_tables(patients, fills, events);
  const auto data = build_dataset(raw);
  REQUIRE(data.patients.size() == 1);
  CHECK(data.rejected == 1);
  CHECK(data.patients[0].follow_up == 40);
  CHECK(data.patients[0].failure);
}
