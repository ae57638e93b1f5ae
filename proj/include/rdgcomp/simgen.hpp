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

#ifndef RDGCOMP_SIMGEN_HPP
#define RDGCOMP_SIMGEN_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rdgcomp/domain.hpp"
#include "rdgcomp/gcomp.hpp"
#include "rdgcomp/ingest.hpp"
#include "rdgcomp/km.hpp"

namespace rdg {

enum class SimTrend { Linear, Sine };

/// Synthetic data-generating process.
///
/// Every patient initiates on day 1 (brand when U < u*, generic otherwise).
/// Each day t:
///   L*_t    logit = a0 + a1 L*_{t-1} + e[Z1_{t-1}]   (L*_1 ~ Bernoulli)
///   fill    on fill opportunities only: continue / switch IM form /
///           other venlafaxine / no fill, multinomial logit in
///           (1, L*_t, (U - u*) / 365.25) with "continue" as reference
///   D_t     days supply from a fixed distribution; 1 when not filling
///   cost    exp(log(cost[form]) + sd * N(0, 1)) rounded to cents
///   S_t     logit = b0 + b1 L*_t + bz[Z1_t] + b3 trend(U)
/// with trend(U) = (U - u*) / 365 (linear) or sin(U / u_bar) (sine).
/// Nothing else is random: no censoring, inert baseline covariates.
struct SimScenario {
  std::string name = "custom";
  SimTrend trend = SimTrend::Linear;
  int n = 1000;
  int horizon = kDefaultHorizon;
  Date u_star = kGenericEntryDate;
  int u_half_width = 1095;  // U ~ uniform on u* +- half width

  double lstar_initial = 0.35;
  double lstar_intercept = -4.0;
  double lstar_lag = 7.0;
  std::array<double, 4> lstar_exposure{0.0, -0.8, -0.8, -0.4};  // by Z1 category

  // rows: switch, other, none; columns: intercept, L*, (U - u*) / 365.25
  std::array<std::array<double, 3>, 3> fill{};

  std::vector<int> supply_days{30, 60, 90};
  std::vector<double> supply_probabilities{0.95, 0.04, 0.01};

  std::array<double, 4> cost{0.0, 20.0, 10.0, 25.0};  // by Z1 category
  double cost_log_sd = 0.0;

  double hazard_intercept = -6.0;
  double hazard_lstar = 1.0;
  std::array<double, 4> hazard_exposure{0.5, 0.0, 0.15, 0.2};  // by Z1 category
  double hazard_trend = 0.3;
  double u_bar = 13368.0 / (14.0 * 3.14159265358979323846);

  double oop = 50.0;  // constant non-venlafaxine out-of-pocket

  /// Frozen oracle truths (RMST of each regime at u*) when available.
  struct Truth {
    double brand_rmst = 0.0;
    double generic_rmst = 0.0;
    double difference = 0.0;
    double difference_mc_se = 0.0;
    long paths = 0;
    std::uint64_t seed = 0;
  };
  std::optional<Truth> truth;

  /// Trend term of the hazard at initiation date u.
  double trend_value(double u) const;
  /// Daily failure probability.
  double hazard(double u, int lstar, Exposure z1) const;
};

SimScenario scenario_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SimScenario& scenario);
SimScenario load_scenario(const std::filesystem::path& path);

/// Bundled scenarios: "linear", "sine" and "null" (no exposure effect and
/// no trend).
SimScenario bundled_scenario(std::string_view name);
std::vector<std::string> bundled_scenario_names();

/// Raw records in the ingestion schema. Patient i uses the substream
/// derive_seed(seed, kTagSimPatient, i).
RawDataset simulate_dataset(const SimScenario& scenario, int n, std::uint64_t seed,
                            int jobs = 1);

struct TruthResult {
  SurvivalCurve curve;
  double rmst = 0.0;
  double rmst_mc_se = 0.0;
};

/// Hazard chain with exposure forced to the regime's arm every day and U
/// forced to u*. No censoring, adherence never broken.
TruthResult counterfactual_truth(const SimScenario& scenario, Arm arm, long paths,
                                 std::uint64_t seed, int jobs = 1);

/// The four analyses of the simulation study.
enum class StudyArm { Both, TimeVarying, Temporal, Neither };

std::string_view to_string(StudyArm arm);
std::vector<StudyArm> all_study_arms();

struct StudyArmConfig {
  StudyArm arm = StudyArm::Both;
  ModelSetOptions models;
  bool kernel_weighted = true;  // baseline draws localized at u*
};

/// Both: the base configuration. Time-varying: no U terms, unweighted
/// baseline draws. Temporal: U terms and kernel kept, no time-varying L
/// terms in the hazard and no covariate simulation. Neither: both removed.
std::vector<StudyArmConfig> study_arms(const ModelSetOptions& base);

/// Model options matching a scenario's trend: linear u_rel or ns(u, 5).
ModelSetOptions scenario_model_options(const SimScenario& scenario);

}  // namespace rdg

#endif  // RDGCOMP_SIMGEN_HPP
