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

#include "rdgcomp/rdd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rdgcomp/csv.hpp"
#include "rdgcomp/stats/design.hpp"

namespace rdg {

EraSplit split_eras(std::span<const PatientHistory> data, const CutoffDesign& design) {
  EraSplit split;
  for (const auto& h : data) {
    const bool generic_era = h.initiation >= design.u_star;
    const Arm arm = h.initiating_arm();
    if (!generic_era && arm == Arm::Brand) {
      split.brand.push_back(h);
    } else if (generic_era && arm == Arm::Generic) {
      split.generic.push_back(h);
    } else if (generic_era && !design.exclude_late_brand) {
      split.generic.push_back(h);
    } else {
      // brand after u*, or generic before it
      split.excluded.push_back(h);
    }
  }
  if (split.brand.empty()) throw std::invalid_argument("split_eras: the brand era is empty");
  if (split.generic.empty()) throw std::invalid_argument("split_eras: the generic era is empty");
  return split;
}

namespace {

void check_weights(std::span<const PatientHistory> era, std::span<const double> w) {
  if (!w.empty() && w.size() != era.size()) {
    throw std::invalid_argument("baseline sampler: weight count mismatch");
  }
}

}  // namespace

WeightedSampler kernel_sampler(std::span<const PatientHistory> era,
                               const CutoffDesign& design,
                               std::span<const double> patient_weights) {
  if (era.empty()) throw std::invalid_argument("kernel_sampler: empty era");
  if (!(design.bandwidth > 0)) throw std::invalid_argument("bandwidth must be positive");
  check_weights(era, patient_weights);
  std::vector<VarRow> rows;
  std::vector<double> weights;
  const stats::KernelWeighting kw{static_cast<double>(design.u_star), design.bandwidth};
  double total = 0.0;
  for (std::size_t i = 0; i < era.size(); ++i) {
    rows.push_back(baseline_row(era[i], design.u_star));
    const double m = patient_weights.empty() ? 1.0 : patient_weights[i];
    weights.push_back(m * stats::kernel_weight(era[i].initiation, kw));
    total += weights.back();
  }
  if (!(total > 0)) {
    throw std::invalid_argument(
        "kernel_sampler: all kernel weights underflow to zero; use a larger bandwidth");
  }
  return WeightedSampler(std::move(rows), std::move(weights));
}

WeightedSampler uniform_sampler(std::span<const PatientHistory> era,
                                const CutoffDesign& design,
                                std::span<const double> patient_weights) {
  if (era.empty()) throw std::invalid_argument("uniform_sampler: empty era");
  check_weights(era, patient_weights);
  std::vector<VarRow> rows;
  for (const auto& h : era) rows.push_back(baseline_row(h, design.u_star));
  return WeightedSampler(std::move(rows),
                         std::vector<double>(patient_weights.begin(), patient_weights.end()));
}

double default_fill_cost(std::span<const PatientHistory> era, Arm arm,
                         const CutoffDesign& design) {
  const auto form = static_cast<Formulation>(arm);
  auto collect = [&](bool windowed) {
    std::vector<double> costs;
    for (const auto& h : era) {
      if (windowed && std::abs(h.initiation - design.u_star) > 1.96 * design.bandwidth) continue;
      for (const auto& f : h.fills) {
        if (f.form == form) costs.push_back(f.cost);
      }
    }
    return costs;
  };
  auto costs = collect(true);
  if (costs.empty()) costs = collect(false);
  if (costs.empty()) {
    throw std::invalid_argument("no " + std::string(to_string(arm)) +
                                " fills to set the regime cost from");
  }
  std::sort(costs.begin(), costs.end());
  const std::size_t n = costs.size();
  return n % 2 ? costs[n / 2] : 0.5 * (costs[n / 2 - 1] + costs[n / 2]);
}

PositivityReport positivity_diagnostics(std::span<const PatientHistory> era,
                                        const Regime& regime, int horizon) {
  PositivityReport report;
  report.era = regime.arm;
  std::vector<int> at_risk(static_cast<std::size_t>(horizon) + 2, 0);
  std::vector<int> adherent(static_cast<std::size_t>(horizon) + 2, 0);
  std::vector<int> censored(static_cast<std::size_t>(horizon) + 2, 0);
  for (const auto& h : era) {
    const int last = std::min(h.last_observed_day(horizon), horizon);
    const int adh = std::min(adherence_prefix(h, regime), last);
    // difference arrays: counted on days 1..last and 1..adh
    ++at_risk[1];
    --at_risk[static_cast<std::size_t>(last) + 1];
    ++adherent[1];
    --adherent[static_cast<std::size_t>(std::max(adh, 0)) + 1];
    if (!h.failure && h.follow_up <= horizon && !(h.follow_up == horizon && last == horizon)) {
      ++censored[static_cast<std::size_t>(h.follow_up)];
    }
  }
  int r = 0, a = 0;
  for (int t = 1; t <= horizon; ++t) {
    r += at_risk[static_cast<std::size_t>(t)];
    a += adherent[static_cast<std::size_t>(t)];
    PositivityReport::Day d{t, r, a, censored[static_cast<std::size_t>(t)], false};
    if (a == 0 && report.first_empty_day == 0) {
      report.first_empty_day = t;
      d.flag = true;
    }
    report.days.push_back(d);
  }
  return report;
}

void write_positivity_csv(std::ostream& out, std::span<const PositivityReport> reports) {
  CsvWriter w(out);
  w.header({"era", "day", "at_risk", "adherent", "censored", "flag"});
  for (const auto& rep : reports) {
    for (const auto& d : rep.days) {
      w.field(std::string(to_string(rep.era))).field(d.day).field(d.at_risk)
          .field(d.adherent).field(d.censored).field(d.flag ? 1 : 0);
      w.end_row();
    }
  }
}

}  // namespace rdg
