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

#ifndef RDGCOMP_DOMAIN_HPP
#define RDGCOMP_DOMAIN_HPP

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rdg {

/// Calendar date as whole days since 1970-01-01.
using Date = int;

/// Day of follow-up; day 1 is the initiation date.
using Day = int;

inline constexpr int kDefaultHorizon = 270;

/// First generic initiation, 2006-08-08.
inline constexpr Date kGenericEntryDate = 13368;

Date parse_iso_date(std::string_view text);
std::string format_iso_date(Date date);
/// "YYYY-MM" of a date.
std::string format_iso_month(Date date);

enum class Arm { Brand = 1, Generic = 2 };

/// Exposure category on hand: 0 none, 1 IM brand, 2 IM generic, 3 other.
enum class Exposure { None = 0, ImBrand = 1, ImGeneric = 2, Other = 3 };

enum class Formulation { ImBrand = 1, ImGeneric = 2, Other = 3 };

enum class EventKind {
  TreatmentChange,
  ClinicalProgression,
  Death,
  Disenrollment,
};

enum class Sex { Male = 0, Female = 1 };

std::string_view to_string(Arm arm);
std::string_view to_string(Formulation form);
std::string_view to_string(EventKind kind);
std::string_view to_string(Sex sex);
Formulation parse_formulation(std::string_view text);
EventKind parse_event_kind(std::string_view text);
Sex parse_sex(std::string_view text);
Arm parse_arm(std::string_view text);

constexpr bool is_failure(EventKind kind) {
  return kind != EventKind::Disenrollment;
}

/// Thrown for patients that fail the inclusion rules (first fill not IM).
class RejectedPatient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BaselineCovariates {
  double age = 0.0;
  Sex sex = Sex::Female;
  int race = 0;       // index into Dataset::race_labels
  int ses = 0;        // income decile 0..9
  int cci = 0;        // Charlson index; modeled as cci > 0
  int out = 0;        // prior outpatient visits; modeled as 0, 1, >1
  int rxb_1 = 0;      // prescription burden on day 1
  double oop_1 = 0.0; // trailing-180-day non-venlafaxine out-of-pocket
};

/// Covariates and exposure observed on one day of follow-up.
struct DailyRecord {
  int rxb = 0;
  double oop = 0.0;
  Exposure z1 = Exposure::None;
  double z2 = 0.0;  // cumulative venlafaxine out-of-pocket cost
};

struct FillRecord {
  std::string id;
  Date date = 0;
  Formulation form = Formulation::ImBrand;
  int days_supply = 1;
  double oop_cost = 0.0;
};

struct EventRecord {
  std::string id;
  Date date = 0;
  EventKind kind = EventKind::Disenrollment;
};

/// A change point of the time-varying covariates; values carry forward.
struct CovariateRecord {
  std::string id;
  Date date = 0;
  int rxb = 0;
  double oop = 0.0;
};

/// A fill expressed on the follow-up day scale.
struct Fill {
  Day day = 1;
  Formulation form = Formulation::ImBrand;
  int days_supply = 1;
  double cost = 0.0;
};

struct PatientHistory {
  std::string id;
  Date initiation = 0;  // U
  BaselineCovariates baseline;
  std::vector<DailyRecord> daily;  // entries for t = 1..follow_up
  std::vector<Fill> fills;         // fills on days 1..horizon
  int follow_up = 0;               // Y
  bool failure = false;            // Delta

  Arm initiating_arm() const;
  const DailyRecord& day(Day t) const { return daily.at(t - 1); }
  /// Last day observed at risk and uncensored: Y for failures and for
  /// administrative censoring at the horizon, Y - 1 after disenrollment.
  Day last_observed_day(int horizon = kDefaultHorizon) const;
  /// Throws DomainError when an invariant is violated.
  void validate(int horizon = kDefaultHorizon) const;
};

/// A sustained treatment regime: one 30-day fill of `arm` every 30 days at a
/// fixed per-fill cost.
struct Regime {
  Arm arm = Arm::Brand;
  double per_fill_cost = 0.0;  // p
  int horizon = kDefaultHorizon;

  Exposure exposure() const { return static_cast<Exposure>(arm); }
};

/// g(t): cumulative cost after the fills on days 1, 31, 61, ...
double regime_cost(const Regime& regime, Day t);

struct ExposureSeries {
  std::vector<Exposure> z1;  // index t-1
  std::vector<double> z2;
  std::vector<std::string> warnings;
};

/// Daily exposure from fills. A refill of the same form stacks supply;
/// a different form replaces the current supply from its fill date.
/// `fills` must be in date order (file order breaks same-day ties).
ExposureSeries derive_exposure(std::span<const FillRecord> fills,
                               Date initiation,
                               int horizon = kDefaultHorizon);

struct FailureOutcome {
  int follow_up = kDefaultHorizon;  // Y
  bool failure = false;             // Delta
};

FailureOutcome derive_failure(std::span<const EventRecord> events,
                              Date initiation,
                              int horizon = kDefaultHorizon);

/// Largest t* with Z_t = (arm, g(t)) for every t <= t*; 0 if day 1 fails.
Day adherence_prefix(const PatientHistory& history, const Regime& regime);

/// Assembles a history from raw records of a single patient. Events and
/// fills past the horizon are ignored. Throws RejectedPatient when the first
/// fill is not an IM fill on the initiation date.
PatientHistory build_history(std::string id, Date initiation,
                             const BaselineCovariates& baseline,
                             std::span<const FillRecord> fills,
                             std::span<const EventRecord> events,
                             std::span<const CovariateRecord> covariates,
                             int horizon = kDefaultHorizon,
                             std::vector<std::string>* warnings = nullptr);

}  // namespace rdg

#endif  // RDGCOMP_DOMAIN_HPP
