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

#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "rdgcomp/inference.hpp"
#include "rdgcomp/random.hpp"

using namespace rdg;

namespace {

AnalysisEstimate constant_estimate() {
  AnalysisEstimate e;
  e.brand.values = {1.0, 0.9, 0.8};
  e.generic.values = {1.0, 0.95, 0.7};
  e.rmst_difference = 0.0;
  return e;
}

}  // namespace

TEST_CASE("combine_partition_ses") {
  const std::vector<double> a{3, 4, 5};
  CHECK(std::abs(combine_partition_ses(a) - std::sqrt(50.0) / 3.0) < 1e-12);
  CHECK(std::abs(combine_partition_ses(a) - 2.3570) < 5e-5);
  const std::vector<double> s{2.5, 2.5, 2.5};
  CHECK(combine_partition_ses(s) == doctest::Approx(2.5 / std::sqrt(3.0)).epsilon(1e-14));
  const std::vector<double> one{1.7};
  CHECK(combine_partition_ses(one) == 1.7);
  const std::vector<double> perm{5, 3, 4};
  CHECK(combine_partition_ses(perm) == doctest::Approx(combine_partition_ses(a)).epsilon(1e-15));
  const std::vector<double> scaled{6, 8, 10};
  CHECK(combine_partition_ses(scaled) == doctest::Approx(2 * combine_partition_ses(a)).epsilon(1e-15));
  CHECK_THROWS(combine_partition_ses(std::vector<double>{}));
  CHECK_THROWS(combine_partition_ses(std::vector<double>{1.0, -1.0}));
}

TEST_CASE("confidence_interval") {
  auto [lo, hi] = confidence_interval(10.54, 9.58, 2.0);
  CHECK(std::round(lo * 100) / 100 == -8.62);
  CHECK(std::round(hi * 100) / 100 == 29.70);
  std::tie(lo, hi) = confidence_interval(10.54, 9.58, 1.96);
  CHECK(std::round(lo * 100) / 100 == -8.24);
  CHECK(std::round(hi * 100) / 100 == 29.32);
  std::tie(lo, hi) = confidence_interval(3.0, 0.0, 1.96);
  CHECK(lo == 3.0);
  CHECK(hi == 3.0);
  const auto w1 = confidence_interval(0.0, 1.0, 2.0);
  const auto w2 = confidence_interval(0.0, 2.0, 2.0);
  CHECK(w2.second - w2.first == doctest::Approx(2 * (w1.second - w1.first)));
  CHECK_THROWS(confidence_interval(0.0, -1.0, 2.0));
}

TEST_CASE("bootstrap of a constant analysis has zero standard errors") {
  const auto r = bootstrap(20, [](std::span<const double>, std::uint64_t) { return constant_estimate(); },
                           10, 1);
  CHECK(r.used == 10);
  CHECK(r.rmst_difference_se == 0.0);
  for (double v : r.se_log_brand) CHECK(v == 0.0);
  for (double v : r.se_log_generic) CHECK(v == 0.0);
}

TEST_CASE("bootstrap is seed-deterministic under any job count") {
  auto analysis = [](std::span<const double> w, std::uint64_t seed) {
    AnalysisEstimate e = constant_estimate();
    double m = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) m += w[i] * static_cast<double>(i);
    e.rmst_difference = m + static_cast<double>(seed % 7);
    e.brand.values[2] = 0.5 + 0.01 * (m / 100.0);
    return e;
  };
  const auto a = bootstrap(30, analysis, 25, 77, 1);
  const auto b = bootstrap(30, analysis, 25, 77, 4);
  CHECK(a.rmst_differences == b.rmst_differences);
  CHECK(a.rmst_difference_se == b.rmst_difference_se);
  CHECK(a.rmst_difference_se > 0.0);
  CHECK(a.se_log_brand[2] > 0.0);
  CHECK_THROWS(bootstrap(30, analysis, 1, 77));
}

TEST_CASE("bootstrap drops failed resamples up to 20 percent") {
  std::atomic<int> calls{0};
  auto sometimes = [&](std::span<const double>, std::uint64_t seed) {
    ++calls;
    if (seed % 10 == 0) throw std::runtime_error("fit failed");
    return constant_estimate();
  };
  const auto r = bootstrap(10, sometimes, 40, 3);
  CHECK(r.used <= 40);
  CHECK(r.used + static_cast<int>(r.warnings.size()) >= 40);
  auto always = [](std::span<const double>, std::uint64_t) -> AnalysisEstimate {
    throw std::runtime_error("fit failed");
  };
  CHECK_THROWS(bootstrap(10, always, 10, 3));
}

TEST_CASE("resampling and partition helpers") {
  const auto w = resample_weights(57, 12);
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == 57.0);
  CHECK(resample_weights(57, 12) == w);
  const auto p = partition_patients(100, 3, 5);
  std::vector<int> sizes(3, 0);
  for (int k : p) ++sizes.at(static_cast<std::size_t>(k));
  for (int s : sizes) CHECK((s == 33 || s == 34));
  CHECK(sample_sd(std::vector<double>{1, 2, 3, 4}) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(sample_sd(std::vector<double>{4}) == 0.0);
}

TEST_CASE("results CSV columns") {
  std::ostringstream out;
  std::vector<ResultRow> rows{{"rmst_difference", 1, 2, 3, 4, 365, 1, 50, 5000, 9}};
  write_results_csv(out, rows);
  CHECK(out.str().rfind("quantity,estimate,se,ci_lo,ci_hi,h,P,R,M,seed\n", 0) == 0);
}

TEST_CASE("derive_seed separates stages and indices") {
  CHECK(derive_seed(1, kTagPaths, 0) != derive_seed(1, kTagPaths, 1));
  CHECK(derive_seed(1, kTagPaths, 0) != derive_seed(1, kTagBootstrap, 0));
  CHECK(derive_seed(1, kTagPaths, 0) != derive_seed(2, kTagPaths, 0));
  CHECK(derive_seed(1, kTagPaths, 5) == derive_seed(1, kTagPaths, 5));
}
