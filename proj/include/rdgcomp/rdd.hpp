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

#ifndef RDGCOMP_RDD_HPP
#define RDGCOMP_RDD_HPP

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rdgcomp/domain.hpp"
#include "rdgcomp/gcomp.hpp"

namespace rdg {

struct CutoffDesign {
  Date u_star = kGenericEntryDate;
  double bandwidth = 365.0;  // h, days
  /// Brand initiators on or after u* are dropped (sharp design). When
  /// false they stay in the generic era, where they are non-adherent to
  /// the generic regime from day 1.
  bool exclude_late_brand = true;
};

struct EraSplit {
  std::vector<PatientHistory> brand;    // U < u*
  std::vector<PatientHistory> generic;  // U >= u*
  std::vector<PatientHistory> excluded;
};

/// Partitions histories by initiation date. Throws when an era is empty.
EraSplit split_eras(std::span<const PatientHistory> data, const CutoffDesign& design);

/// F_1(. | u*): baseline rows drawn with probability proportional to
/// phi((U - u*) / h), times the optional patient frequency weights.
/// Throws when every weight underflows.
WeightedSampler kernel_sampler(std::span<const PatientHistory> era,
                               const CutoffDesign& design,
                               std::span<const double> patient_weights = {});

/// Unweighted draws from the era's baseline rows (F_1 without localization).
WeightedSampler uniform_sampler(std::span<const PatientHistory> era,
                                const CutoffDesign& design,
                                std::span<const double> patient_weights = {});

/// Median per-fill cost of the arm's IM fills among era patients with
/// |U - u*| <= 1.96 h (all era patients if the window holds none).
double default_fill_cost(std::span<const PatientHistory> era, Arm arm,
                         const CutoffDesign& design);

struct PositivityReport {
  struct Day {
    int day = 0;
    int at_risk = 0;   // uncensored and failure-free through the day
    int adherent = 0;  // at risk and following the regime through the day
    int censored = 0;  // censored on this day
    bool flag = false; // first day without adherent patients
  };
  Arm era = Arm::Brand;
  std::vector<Day> days;
  int first_empty_day = 0;  // 0 when every day has adherent patients
};

PositivityReport positivity_diagnostics(std::span<const PatientHistory> era,
                                        const Regime& regime,
                                        int horizon = kDefaultHorizon);

/// Columns era, day, at_risk, adherent, censored, flag.
void write_positivity_csv(std::ostream& out, std::span<const PositivityReport> reports);

}  // namespace rdg

#endif  // RDGCOMP_RDD_HPP
