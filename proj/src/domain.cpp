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

#include "rdgcomp/domain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace rdg {

namespace {

int parse_int_field(std::string_view text, std::string_view what) {
  int value = 0;
  bool any = false;
  for (char c : text) {
    if (c < '0' || c > '9') {
      throw DomainError("malformed " + std::string(what) + " '" +
                        std::string(text) + "'");
    }
    value = value * 10 + (c - '0');
    any = true;
  }
  if (!any) throw DomainError("empty " + std::string(what));
  return value;
}

}  // namespace

Date parse_iso_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw DomainError("expected ISO-8601 date YYYY-MM-DD, got '" +
                      std::string(text) + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{parse_int_field(text.substr(0, 4), "year")},
                           month{static_cast<unsigned>(
                               parse_int_field(text.substr(5, 2), "month"))},
                           day{static_cast<unsigned>(
                               parse_int_field(text.substr(8, 2), "day"))}};
  if (!ymd.ok()) throw DomainError("invalid date '" + std::string(text) + "'");
  return static_cast<Date>(sys_days{ymd}.time_since_epoch().count());
}

std::string format_iso_date(Date date) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{date}}};
  char buffer[16];
  std::snprintf(buffer, sizeof(buffer), "%04d-%02u-%02u",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buffer;
}

std::string format_iso_month(Date date) {
  return format_iso_date(date).substr(0, 7);
}

std::string_view to_string(Arm arm) {
  return arm == Arm::Brand ? "brand" : "generic";
}

std::string_view to_string(Formulation form) {
  switch (form) {
    case Formulation::ImBrand: return "IM-brand";
    case Formulation::ImGeneric: return "IM-generic";
    case Formulation::Other: return "other-venlafaxine";
  }
  return "?";
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::TreatmentChange: return "treatment-change";
    case EventKind::ClinicalProgression: return "clinical-progression";
    case EventKind::Death: return "death";
    case EventKind::Disenrollment: return "disenrollment";
  }
  return "?";
}

std::string_view to_string(Sex sex) {
  return sex == Sex::Male ? "male" : "female";
}

Formulation parse_formulation(std::string_view text) {
  if (text == "IM-brand") return Formulation::ImBrand;
  if (text == "IM-generic") return Formulation::ImGeneric;
  if (text == "other-venlafaxine") return Formulation::Other;
  throw DomainError("unknown formulation '" + std::string(text) + "'");
}

EventKind parse_event_kind(std::string_view text) {
  if (text == "treatment-change") return EventKind::TreatmentChange;
  if (text == "clinical-progression") return EventKind::ClinicalProgression;
  if (text == "death") return EventKind::Death;
  if (text == "disenrollment") return EventKind::Disenrollment;
  throw DomainError("unknown event kind '" + std::string(text) + "'");
}

Sex parse_sex(std::string_view text) {
  if (text == "male" || text == "M" || text == "m") return Sex::Male;
  if (text == "female" || text == "F" || text == "f") return Sex::Female;
  throw DomainError("unknown sex '" + std::string(text) + "'");
}

Arm parse_arm(std::string_view text) {
  if (text == "brand") return Arm::Brand;
  if (text == "generic") return Arm::Generic;
  throw DomainError("unknown arm '" + std::string(text) + "'");
}

Arm PatientHistory::initiating_arm() const {
  if (daily.empty()) throw DomainError("patient " + id + " has no follow-up");
  const Exposure first = daily.front().z1;
  if (first == Exposure::ImBrand) return Arm::Brand;
  if (first == Exposure::ImGeneric) return Arm::Generic;
  throw DomainError("patient " + id + " did not initiate on an IM form");
}

Day PatientHistory::last_observed_day(int horizon) const {
  if (failure || follow_up >= horizon) return follow_up;
  return follow_up - 1;
}

void PatientHistory::validate(int horizon) const {
  auto fail = [&](const std::string& what) {
    throw DomainError("patient " + id + ": " + what);
  };
  if (follow_up < 1 || follow_up > horizon) fail("follow-up outside 1..horizon");
  if (static_cast<int>(daily.size()) != follow_up) {
    fail("daily series length differs from follow-up");
  }
  const Exposure first = daily.front().z1;
  if (first != Exposure::ImBrand && first != Exposure::ImGeneric) {
    fail("Z1 on day 1 must be IM brand or IM generic");
  }
  if (!(baseline.age > 0)) fail("age must be positive");
  if (baseline.ses < 0 || baseline.ses > 9) fail("ses outside 0..9");
  if (baseline.cci < 0 || baseline.out < 0 || baseline.rxb_1 < 0) {
    fail("negative count covariate");
  }
  if (!(baseline.oop_1 >= 0)) fail("oop_1 must be non-negative");
  double previous = 0.0;
  for (const auto& d : daily) {
    if (d.z2 < 0 || d.z2 < previous) fail("Z2 must be non-negative and non-decreasing");
    if (d.rxb < 0 || !(d.oop >= 0)) fail("time-varying covariate out of range");
    previous = d.z2;
  }
}

double regime_cost(const Regime& regime, Day t) {
  if (t < 1 || t > regime.horizon) {
    throw std::out_of_range("regime_cost: day " + std::to_string(t) +
                            " outside 1.." + std::to_string(regime.horizon));
  }
  const int fills = (t - 1) / 30 + 1;
  return regime.per_fill_cost * fills;
}

ExposureSeries derive_exposure(std::span<const FillRecord> fills,
                               Date initiation, int horizon) {
  if (fills.empty()) throw RejectedPatient("no venlafaxine fills");
  const FillRecord& first = fills.front();
  if (first.date != initiation ||
      (first.form != Formulation::ImBrand && first.form != Formulation::ImGeneric)) {
    throw RejectedPatient("first fill is not an IM fill on the initiation date");
  }
  for (std::size_t i = 1; i < fills.size(); ++i) {
    if (fills[i].date < fills[i - 1].date) {
      throw DomainError("fills must be sorted by date");
    }
  }

  ExposureSeries series;
  series.z1.assign(horizon, Exposure::None);
  series.z2.assign(horizon, 0.0);

  Exposure current = Exposure::None;
  Day supply_end = 0;  // last covered day
  double cumulative = 0.0;
  std::size_t next = 0;
  for (Day t = 1; t <= horizon; ++t) {
    Exposure first_form_today = Exposure::None;
    while (next < fills.size() && fills[next].date - initiation + 1 == t) {
      const FillRecord& fill = fills[next++];
      if (fill.days_supply < 1) {
        throw DomainError("days_supply must be at least 1");
      }
      if (!(fill.oop_cost >= 0)) throw DomainError("oop_cost must be non-negative");
      const auto form = static_cast<Exposure>(fill.form);
      if (first_form_today == Exposure::None) {
        first_form_today = form;
      } else if (form != first_form_today) {
        series.warnings.push_back("day " + std::to_string(t) +
                                  ": same-day fills of different forms; the "
                                  "later record wins");
      }
      cumulative += fill.oop_cost;
      if (form == current) {
        supply_end = std::max(supply_end, t - 1) + fill.days_supply;
      } else {
        current = form;
        supply_end = t + fill.days_supply - 1;
      }
    }
    series.z1[t - 1] = supply_end >= t ? current : Exposure::None;
    series.z2[t - 1] = cumulative;
  }
  return series;
}

FailureOutcome derive_failure(std::span<const EventRecord> events,
                              Date initiation, int horizon) {
  int failure_day = std::numeric_limits<int>::max();
  int censor_day = std::numeric_limits<int>::max();
  for (const auto& e : events) {
    const Day t = e.date - initiation + 1;
    if (t < 1) throw DomainError("event dated before initiation");
    if (t > horizon) continue;
    if (is_failure(e.kind)) {
      failure_day = std::min(failure_day, t);
    } else {
      censor_day = std::min(censor_day, t);
    }
  }
  if (failure_day <= horizon && failure_day <= censor_day) {
    return {failure_day, true};
  }
  if (censor_day <= horizon) return {censor_day, false};
  return {horizon, false};
}

Day adherence_prefix(const PatientHistory& history, const Regime& regime) {
  const Exposure target = regime.exposure();
  const int last = std::min<int>(history.follow_up, regime.horizon);
  for (Day t = 1; t <= last; ++t) {
    const DailyRecord& d = history.day(t);
    const double g = regime_cost(regime, t);
    if (d.z1 != target || std::abs(d.z2 - g) > 1e-6 * std::max(1.0, g)) {
      return t - 1;
    }
  }
  return last;
}

PatientHistory build_history(std::string id, Date initiation,
                             const BaselineCovariates& baseline,
                             std::span<const FillRecord> fills,
                             std::span<const EventRecord> events,
                             std::span<const CovariateRecord> covariates,
                             int horizon, std::vector<std::string>* warnings) {
  PatientHistory h;
  h.id = std::move(id);
  h.initiation = initiation;
  h.baseline = baseline;

  ExposureSeries exposure = derive_exposure(fills, initiation, horizon);
  if (warnings) {
    for (auto& w : exposure.warnings) warnings->push_back(h.id + ": " + w);
  }
  const FailureOutcome outcome = derive_failure(events, initiation, horizon);
  h.follow_up = outcome.follow_up;
  h.failure = outcome.failure;

  for (const auto& f : fills) {
    const Day t = f.date - initiation + 1;
    if (t > horizon) break;
    h.fills.push_back({t, f.form, f.days_supply, f.oop_cost});
  }

  std::vector<CovariateRecord> changes(covariates.begin(), covariates.end());
  std::stable_sort(changes.begin(), changes.end(),
                   [](const auto& a, const auto& b) { return a.date < b.date; });
  int rxb = baseline.rxb_1;
  double oop = baseline.oop_1;
  std::size_t next = 0;
  h.daily.resize(h.follow_up);
  for (Day t = 1; t <= h.follow_up; ++t) {
    while (next < changes.size() && changes[next].date - initiation + 1 <= t) {
      if (changes[next].date - initiation + 1 > 1) {
        rxb = changes[next].rxb;
        oop = changes[next].oop;
      }
      ++next;
    }
    h.daily[t - 1] = {rxb, oop, exposure.z1[t - 1], exposure.z2[t - 1]};
  }
  h.validate(horizon);
  return h;
}

}  // namespace rdg
