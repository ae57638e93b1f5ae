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

#include "rdgcomp/inference.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "rdgcomp/csv.hpp"
#include "rdgcomp/gcomp.hpp"
#include "rdgcomp/random.hpp"

namespace rdg {

std::vector<double> resample_weights(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) w[pick(rng)] += 1.0;
  return w;
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  // Shifted by the first value so that constant input gives exactly zero.
  const double shift = v.front();
  double mean = 0.0;
  for (double x : v) mean += x - shift;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - shift - mean) * (x - shift - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

namespace {

std::vector<double> pointwise_se_log(const std::vector<const SurvivalCurve*>& curves) {
  const int horizon = curves.front()->horizon();
  std::vector<double> se(static_cast<std::size_t>(horizon) + 1);
  std::vector<double> logs;
  for (int t = 0; t <= horizon; ++t) {
    logs.clear();
    for (const auto* c : curves) {
      const double s = c->at(t);
      if (s > 0) logs.push_back(std::log(s));
    }
    // undefined once a resample reaches zero survival
    se[static_cast<std::size_t>(t)] = logs.size() == curves.size() && logs.size() >= 2
                                          ? sample_sd(logs)
                                          : std::numeric_limits<double>::quiet_NaN();
  }
  return se;
}

}  // namespace

BootstrapResult bootstrap(std::size_t n_patients, const WeightedAnalysis& analysis,
                          int resamples, std::uint64_t seed, int jobs) {
  if (resamples < 2) throw std::invalid_argument("bootstrap: R must be >= 2");
  if (n_patients == 0) throw std::invalid_argument("bootstrap: no patients");
  const auto r_count = static_cast<std::size_t>(resamples);
  std::vector<std::optional<AnalysisEstimate>> results(r_count);
  std::vector<std::string> errors(r_count);
  parallel_for(r_count, jobs, [&](std::size_t r) {
    const auto w = resample_weights(n_patients, derive_seed(seed, kTagBootstrap, r));
    try {
      results[r] = analysis(w, derive_seed(seed, kTagAnalysis, r));
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });

  BootstrapResult out;
  out.requested = resamples;
  std::vector<const SurvivalCurve*> brand, generic;
  std::vector<double> rmst_brand, rmst_generic;
  for (std::size_t r = 0; r < r_count; ++r) {
    if (!results[r]) {
      out.warnings.push_back("bootstrap resample " + std::to_string(r) +
                             " dropped: " + errors[r]);
      continue;
    }
    brand.push_back(&results[r]->brand);
    generic.push_back(&results[r]->generic);
    out.rmst_differences.push_back(results[r]->rmst_difference);
    rmst_brand.push_back(rmst(results[r]->brand));
    rmst_generic.push_back(rmst(results[r]->generic));
  }
  out.used = static_cast<int>(brand.size());
  const int dropped = resamples - out.used;
  if (dropped * 5 > resamples || out.used < 2) {
    std::string msg = "bootstrap: " + std::to_string(dropped) + " of " +
                      std::to_string(resamples) + " resamples failed";
    if (!out.warnings.empty()) msg += " (first: " + out.warnings.front() + ")";
    throw std::runtime_error(msg);
  }
  out.se_log_brand = pointwise_se_log(brand);
  out.se_log_generic = pointwise_se_log(generic);
  out.rmst_difference_se = sample_sd(out.rmst_differences);
  out.rmst_brand_se = sample_sd(rmst_brand);
  out.rmst_generic_se = sample_sd(rmst_generic);
  return out;
}

double combine_partition_ses(std::span<const double> ses) {
  if (ses.empty()) throw std::invalid_argument("combine_partition_ses: no standard errors");
  double ss = 0.0;
  for (double s : ses) {
    if (!(s >= 0)) throw std::invalid_argument("combine_partition_ses: negative standard error");
    ss += s * s;
  }
  return std::sqrt(ss) / static_cast<double>(ses.size());
}

std::pair<double, double> confidence_interval(double estimate, double se, double multiplier) {
  if (!(se >= 0)) throw std::invalid_argument("confidence_interval: negative standard error");
  return {estimate - multiplier * se, estimate + multiplier * se};
}

std::vector<int> partition_patients(std::size_t n, int partitions, std::uint64_t seed) {
  if (partitions < 1) throw std::invalid_argument("partitions must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kTagPartition));
  // Fisher-Yates with an explicit index draw keeps the permutation portable
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  std::vector<int> assignment(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    assignment[order[k]] = static_cast<int>(k % static_cast<std::size_t>(partitions));
  }
  return assignment;
}

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows) {
  CsvWriter w(out);
  w.header({"quantity", "estimate", "se", "ci_lo", "ci_hi", "h", "P", "R", "M", "seed"});
  for (const auto& r : rows) {
    w.field(r.quantity).field(r.estimate).field(r.se).field(r.ci_lo).field(r.ci_hi)
        .field(r.h).field(r.partitions).field(r.resamples).field(r.paths)
        .field(std::to_string(r.seed));
    w.end_row();
  }
}

}  // namespace rdg
