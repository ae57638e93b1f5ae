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

#ifndef RDGCOMP_KM_HPP
#define RDGCOMP_KM_HPP

#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace rdg {

/// Survival probabilities S(t) for t = 0..horizon, S(0) = 1.
struct SurvivalCurve {
  std::vector<double> values;
  std::optional<std::vector<double>> se_log;  // pointwise SE of log S(t)

  int horizon() const { return static_cast<int>(values.size()) - 1; }
  double at(int t) const { return values.at(static_cast<std::size_t>(t)); }
};

struct TimeToEvent {
  int time = 1;       // Y
  bool event = false;  // Delta
};

/// Product-limit estimator. Units censored at t remain in the risk set at t.
SurvivalCurve km_curve(std::span<const TimeToEvent> data, int horizon);

/// Smallest t with S(t) <= 1 - q, or horizon + 1 when never reached.
int survival_quantile(const SurvivalCurve& curve, double q);

/// Columns t, S, se_log (empty when absent).
void write_curve_csv(std::ostream& out, const SurvivalCurve& curve);

}  // namespace rdg

#endif  // RDGCOMP_KM_HPP
