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

#ifndef RDGCOMP_INFERENCE_HPP
#define RDGCOMP_INFERENCE_HPP

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdgcomp/km.hpp"

namespace rdg {

/// Point estimates of one analysis.
struct AnalysisEstimate {
  SurvivalCurve brand;
  SurvivalCurve generic;
  double rmst_difference = 0.0;
};

/// An analysis run under patient frequency weights with its own seed.
using WeightedAnalysis =
    std::function<AnalysisEstimate(std::span<const double> weights, std::uint64_t seed)>;

struct BootstrapResult {
  int requested = 0;                  // R
  int used = 0;                       // resamples that completed
  std::vector<double> se_log_brand;   // t = 0..horizon, NaN when undefined
  std::vector<double> se_log_generic;
  double rmst_difference_se = 0.0;
  double rmst_brand_se = 0.0;
  double rmst_generic_se = 0.0;
  std::vector<double> rmst_differences;  // per completed resample
  std::vector<std::string> warnings;
};

/// Resampling unit is the patient: resample r draws n patients with
/// replacement from derive_seed(seed, kTagBootstrap, r) and reruns the
/// analysis with seed derive_seed(seed, kTagAnalysis, r). Failed resamples
/// are dropped with a warning; more than 20% failures is an error.
BootstrapResult bootstrap(std::size_t n_patients, const WeightedAnalysis& analysis,
                          int resamples, std::uint64_t seed, int jobs = 1);

/// Multinomial patient multiplicities summing to n.
std::vector<double> resample_weights(std::size_t n, std::uint64_t seed);

/// (1 / P) sqrt(sum SE_p^2).
double combine_partition_ses(std::span<const double> ses);

std::pair<double, double> confidence_interval(double estimate, double se,
                                              double multiplier);

/// Random assignment of n patients to P near-equal partitions.
std::vector<int> partition_patients(std::size_t n, int partitions, std::uint64_t seed);

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_sd(std::span<const double> values);

struct ResultRow {
  std::string quantity;
  double estimate = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double h = 0.0;
  int partitions = 1;
  int resamples = 0;
  int paths = 0;
  std::uint64_t seed = 0;
};

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows);

}  // namespace rdg

#endif  // RDGCOMP_INFERENCE_HPP
