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

#include "rdgcomp/km.hpp"

#include <stdexcept>
#include <string>

#include "rdgcomp/csv.hpp"

namespace rdg {

SurvivalCurve km_curve(std::span<const TimeToEvent> data, int horizon) {
  if (data.empty()) throw std::invalid_argument("km_curve: no observations");
  if (horizon < 1) throw std::invalid_argument("km_curve: horizon must be >= 1");
  std::vector<int> events(static_cast<std::size_t>(horizon) + 1, 0);
  std::vector<int> exits(static_cast<std::size_t>(horizon) + 1, 0);
  for (const auto& d : data) {
    if (d.time < 1 || d.time > horizon) {
      throw std::invalid_argument("km_curve: time " + std::to_string(d.time) +
                                  " outside 1.." + std::to_string(horizon));
    }
    ++exits[static_cast<std::size_t>(d.time)];
    if (d.event) ++events[static_cast<std::size_t>(d.time)];
  }
  SurvivalCurve curve;
  curve.values.assign(static_cast<std::size_t>(horizon) + 1, 1.0);
  const long n = static_cast<long>(data.size());
  long at_risk = n;
  bool censored = false;  // until the first censoring S(t) is survivors / n
  double s = 1.0;
  for (int t = 1; t <= horizon; ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (!censored) {
      s = static_cast<double>(at_risk - events[i]) / static_cast<double>(n);
    } else if (at_risk > 0 && events[i] > 0) {
      s *= 1.0 - static_cast<double>(events[i]) / static_cast<double>(at_risk);
    }
    curve.values[i] = s;
    censored = censored || exits[i] > events[i];
    at_risk -= exits[i];
  }
  return curve;
}

int survival_quantile(const SurvivalCurve& curve, double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile must be in (0, 1)");
  const double level = 1.0 - q;
  for (int t = 0; t <= curve.horizon(); ++t) {
    if (curve.at(t) <= level) return t;
  }
  return curve.horizon() + 1;
}

void write_curve_csv(std::ostream& out, const SurvivalCurve& curve) {
  CsvWriter w(out);
  w.header({"t", "S", "se_log"});
  for (int t = 0; t <= curve.horizon(); ++t) {
    w.field(t).field(curve.at(t));
    if (curve.se_log) {
      w.field(curve.se_log->at(static_cast<std::size_t>(t)));
    } else {
      w.field(std::string());
    }
    w.end_row();
  }
}

}  // namespace rdg
