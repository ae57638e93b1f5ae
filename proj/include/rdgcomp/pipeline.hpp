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

#ifndef RDGCOMP_PIPELINE_HPP
#define RDGCOMP_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdgcomp/gcomp.hpp"
#include "rdgcomp/inference.hpp"
#include "rdgcomp/ingest.hpp"
#include "rdgcomp/rdd.hpp"
#include "rdgcomp/simgen.hpp"

namespace rdg {

/// Settings of one brand-versus-generic analysis.
struct AnalysisConfig {
  ModelSetOptions models;
  bool kernel_weighted = true;
  Date u_star = kGenericEntryDate;
  bool exclude_late_brand = true;
  std::vector<double> bandwidths{365.0};  // h
  int paths = 5000;                       // M
  int resamples = 50;                     // R
  int partitions = 1;                     // P
  int horizon = kDefaultHorizon;
  /// Per-fill regime cost p for both arms; by default each arm's median
  /// fill cost near u*.
  std::optional<double> per_fill_cost;
  std::uint64_t seed = 1;
  double ci_multiplier = 1.96;
  int jobs = 1;
  bool allow_extrapolation = false;
  bool goodness_of_fit = true;
  stats::FitOptions glm;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const AnalysisConfig& config);
/// Fields absent from `doc` keep the values already in `config`.
void apply_json(const nlohmann::json& doc, AnalysisConfig& config);

/// Era split, regimes and person-day data shared by every estimate of one
/// dataset. Patient weights are indexed brand era first, then generic era.
class Analysis {
 public:
  Analysis(std::span<const PatientHistory> data, const AnalysisConfig& config);

  std::size_t n_patients() const { return eras_.brand.size() + eras_.generic.size(); }
  const EraSplit& eras() const { return eras_; }
  const Regime& regime(Arm arm) const { return arm == Arm::Brand ? brand_ : generic_; }
  const PersonDays& person_days(Arm arm) const {
    return arm == Arm::Brand ? brand_days_ : generic_days_;
  }

  struct Fits {
    FittedModelSet brand;
    FittedModelSet generic;
  };

  /// Point estimate at bandwidth h. Both eras are fitted under `weights`
  /// (empty = all one) and simulated from substreams of `seed`. `start`
  /// supplies Newton starting values, `fits` receives the fitted models.
  AnalysisEstimate estimate(double h, std::span<const double> weights, std::uint64_t seed,
                            int jobs = 1, Fits* fits = nullptr,
                            const Fits* start = nullptr) const;

 private:
  AnalysisConfig config_;
  EraSplit eras_;
  Regime brand_, generic_;
  PersonDays brand_days_, generic_days_;
};

/// One bandwidth's estimates after partition averaging.
struct BandwidthResult {
  double h = 0.0;
  SurvivalCurve brand;
  SurvivalCurve generic;
  double rmst_brand = 0.0, rmst_brand_se = 0.0;
  double rmst_generic = 0.0, rmst_generic_se = 0.0;
  double rmst_difference = 0.0, rmst_difference_se = 0.0;
  std::pair<double, double> ci;
  std::vector<double> partition_estimates;  // RMST difference per partition
  std::vector<double> partition_ses;
  std::vector<std::string> warnings;
};

struct AnalysisReport {
  std::vector<BandwidthResult> bandwidths;
  std::vector<std::string> files;  // relative to the output directory
  std::vector<std::string> warnings;
};

/// Full analysis: estimates, bootstrap SEs and the result bundle written to
/// `out_dir` (nothing is written when out_dir is empty).
AnalysisReport run_analysis(const Dataset& data, const AnalysisConfig& config,
                            const std::filesystem::path& out_dir);

/// Simulation study settings.
struct StudyConfig {
  std::vector<SimScenario> scenarios;
  std::vector<StudyArm> arms = all_study_arms();
  int replications = 200;
  int n = 1000;
  int paths = 5000;
  int resamples = 50;
  double bandwidth = 365.0;
  double ci_multiplier = 1.96;
  std::uint64_t seed = 1;
  int jobs = 1;
  /// Oracle paths when a scenario carries no frozen truth.
  long truth_paths = 1000000;
  /// An arm is aborted when more replications than this fraction fail.
  double max_failure_rate = 0.05;

  void validate() const;
};

struct StudyArmResult {
  std::string scenario;
  StudyArm arm = StudyArm::Both;
  double truth = 0.0;
  int replications = 0;
  int failed = 0;
  bool aborted = false;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double root_mse = 0.0;
  double coverage = 0.0;  // fraction of CIs covering the truth
  double mean_se = 0.0;
  std::vector<double> estimates;  // completed replications
  std::vector<double> ses;
  std::vector<std::string> errors;
};

struct StudyReport {
  std::vector<StudyArmResult> rows;
  std::vector<std::string> files;
};

/// Replication r of scenario s simulates from
/// derive_seed(derive_seed(seed, kTagReplicate, s), kTagReplicate, r) and
/// analyses every arm from substreams of that seed.
StudyReport run_simulation_study(const StudyConfig& config,
                                 const std::filesystem::path& out_dir,
                                 const std::function<void(const std::string&)>& log = {});

/// Calendar-month diagnostics of a dataset.
struct MonthRow {
  std::string month;       // YYYY-MM
  int brand = 0;           // incident brand initiators
  int generic = 0;         // incident generic initiators
  int initiators = 0;
  int q15 = 0;             // KM 15th-percentile survival time (horizon + 1 if not reached)
};

std::vector<MonthRow> monthly_diagnostics(std::span<const PatientHistory> data,
                                          int horizon = kDefaultHorizon);

/// Lag-1 autocorrelation of a series.
double lag1_autocorrelation(std::span<const double> series);
/// Share of random permutations whose lag-1 autocorrelation is at least the
/// observed one (with the observed series counted once).
double autocorrelation_p_value(std::span<const double> series, int permutations,
                               std::uint64_t seed);

struct DiagnosticsReport {
  std::vector<MonthRow> months;
  std::vector<std::string> files;
};

DiagnosticsReport run_diagnostics(const Dataset& data, int horizon,
                                  const std::filesystem::path& out_dir);

}  // namespace rdg

#endif  // RDGCOMP_PIPELINE_HPP
