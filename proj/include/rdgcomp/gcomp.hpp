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

#ifndef RDGCOMP_GCOMP_HPP
#define RDGCOMP_GCOMP_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdgcomp/domain.hpp"
#include "rdgcomp/km.hpp"
#include "rdgcomp/random.hpp"
#include "rdgcomp/stats/design.hpp"
#include "rdgcomp/stats/glm.hpp"

namespace rdg {

/// Variables available to the sequential models. Names are fixed; model
/// specifications refer to them by name.
///
///   baseline  u (initiation date), u_rel = (u - u*) / 365.25, age, sex,
///             race, ses, cci (indicator of cci > 0), out (0, 1, >1 as 2)
///   day       t, z1 (exposure category), z_arm (z1 equals the era's arm),
///             z2 (cumulative venlafaxine cost)
///   dynamic   rxb (0..3, >3 as 4), oop (asinh scale), zero = I(oop > 0),
///             lstar = I(rxb > 0), their *_lag values, z_arm_lag
///   response  event, oop_recip (1 / oop when oop > 0)
enum Var : int {
  kU, kURel, kAge, kSex, kRace, kSes, kCci, kOut,
  kT, kZ1, kZArm, kZ2,
  kRxb, kRxbLag, kOop, kOopLag, kZero, kZeroLag, kLstar, kLstarLag, kZArmLag,
  kEvent, kOopRecip,
  kNumVars
};

const std::vector<std::string>& variable_names();
int variable_index(std::string_view name);

enum class VarClass { Baseline, Day, Dynamic };
VarClass variable_class(int var);

using VarRow = std::array<double, kNumVars>;

/// Which person-days enter the model fits.
enum class RowFilter {
  /// Regime-adherent rows: covariate models use days t >= 2 adherent
  /// through t - 1, the hazard model days adherent through t.
  Adherent,
  /// Every at-risk, uncensored day regardless of exposure.
  AtRisk,
};

/// Long-format person-day data of one era.
struct PersonDays {
  Arm era = Arm::Brand;
  stats::Frame frame;
  std::vector<std::size_t> patient;  // index into the history span
  std::vector<char> covariate_row;   // usable by covariate models
  std::vector<char> hazard_row;      // usable by the hazard model
  std::size_t n_patients = 0;
};

PersonDays build_person_days(std::span<const PatientHistory> histories,
                             const Regime& regime, Date u_star,
                             RowFilter filter = RowFilter::Adherent,
                             int horizon = kDefaultHorizon);

/// Baseline row of one patient: baseline covariates and L_1.
VarRow baseline_row(const PatientHistory& history, Date u_star);

/// A covariate model inside the day loop. `gate` names a 0/1 variable
/// that must be 1 for the model to apply; otherwise `target` is set to
/// `gate_off_value`. With `reciprocal` the model describes 1 / target.
struct CovariateModelSpec {
  stats::ModelSpec model;
  std::string target;
  std::string gate;
  double gate_off_value = 0.0;
  bool reciprocal = false;
};

struct SequentialModelSpec {
  Arm era = Arm::Brand;
  std::vector<CovariateModelSpec> covariates;  // simulated in this order
  stats::ModelSpec hazard;
  RowFilter rows = RowFilter::Adherent;
  bool simulate_covariates = true;
};

enum class ModelSetKind { Full, Indicator };
enum class TrendKind { None, Linear, Spline };

struct ModelSetOptions {
  ModelSetKind kind = ModelSetKind::Full;
  TrendKind trend = TrendKind::Spline;  // how U enters every model
  int trend_df = 5;
  bool hazard_covariates = true;        // time-varying L terms in the hazard
  bool simulate_covariates = true;
  bool oop_reciprocal = false;
  int t_df = 3, age_df = 3, oop_df = 3, z2_df = 3;
  RowFilter rows = RowFilter::Adherent;
};

/// Full: rxb (ordinal), zero (logistic), oop given zero = 1 (gamma, log
/// link) and the daily failure hazard (logistic), each with ns(t), the
/// baseline covariates, Z_t and the trend in U.
/// Indicator: lstar (logistic) and the hazard on lstar.
SequentialModelSpec make_model_spec(Arm era, const ModelSetOptions& options);

struct GoodnessOfFit {
  struct Rate {
    std::string model;
    double error_rate = 0.0;  // held-out most-probable-category error
    double rows = 0.0;
  };
  std::vector<Rate> error_rates;
  std::optional<double> ks_distance;  // quantile residuals, continuous model
};

struct FittedModelSet {
  Arm era = Arm::Brand;
  SequentialModelSpec spec;
  std::vector<stats::FittedModel> covariates;
  stats::FittedModel hazard;
  std::vector<std::string> warnings;
  std::optional<double> bandwidth;
  std::optional<GoodnessOfFit> goodness_of_fit;
};

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No adherent person-days at some day of follow-up.
class PositivityError : public PipelineError {
 public:
  PositivityError(const std::string& what, int day)
      : PipelineError(what), day_(day) {}
  int day() const { return day_; }

 private:
  int day_;
};

struct FitSequentialOptions {
  stats::FitOptions glm;
  /// Per-patient frequency weights (bootstrap multiplicities); empty = 1.
  std::span<const double> patient_weights;
  /// Fits with a day lacking hazard rows proceed with a warning.
  bool allow_extrapolation = false;
  int horizon = kDefaultHorizon;
  /// Earlier fits of the same specification used as Newton starting values.
  const FittedModelSet* warm_start = nullptr;
};

FittedModelSet fit_sequential(const PersonDays& data,
                              const SequentialModelSpec& spec,
                              const FitSequentialOptions& options = {});

/// Held-out checks: fit on a random half of patients, score the other half.
GoodnessOfFit goodness_of_fit(const PersonDays& data,
                              const SequentialModelSpec& spec,
                              std::uint64_t seed,
                              const stats::FitOptions& glm = {});

nlohmann::json to_json(const FittedModelSet& set);

/// Source of baseline rows for Algorithm 1.
class BaselineSampler {
 public:
  virtual ~BaselineSampler() = default;
  /// Row for Monte Carlo path `path`.
  virtual const VarRow& draw(Rng& rng, std::size_t path) const = 0;
};

class SamplerExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Draws rows with replacement, probability proportional to weight.
class WeightedSampler : public BaselineSampler {
 public:
  WeightedSampler(std::vector<VarRow> rows, std::vector<double> weights = {});
  const VarRow& draw(Rng& rng, std::size_t path) const override;
  std::size_t size() const { return rows_.size(); }
  std::size_t index(Rng& rng) const;

 private:
  std::vector<VarRow> rows_;
  std::vector<double> cumulative_;
};

/// Path m uses row m; more paths than rows throws SamplerExhausted.
class SequentialSampler : public BaselineSampler {
 public:
  explicit SequentialSampler(std::vector<VarRow> rows) : rows_(std::move(rows)) {}
  const VarRow& draw(Rng& rng, std::size_t path) const override;

 private:
  std::vector<VarRow> rows_;
};

struct GcompOptions {
  int paths = 5000;                      // M
  int horizon = kDefaultHorizon;
  std::optional<double> force_u;         // U used for every path (u*)
  std::uint64_t seed = 1;
  int jobs = 1;
};

/// Paths per random substream. Path block b draws from
/// derive_seed(seed, kTagPaths, b), so the result does not depend on jobs.
inline constexpr std::size_t kPathBlock = 256;

/// Algorithm 1 in a single pass: each path is simulated to the horizon (or
/// failure) under the regime, and gamma(t) = 1 - #(failed by t) / M.
SurvivalCurve gcomp_survival(const FittedModelSet& models, const Regime& regime,
                             const BaselineSampler& sampler,
                             const GcompOptions& options);

/// Sum of S(t) over t = 1..horizon.
double rmst(const SurvivalCurve& curve, int horizon);
double rmst(const SurvivalCurve& curve);
double rmst_difference(const SurvivalCurve& brand, const SurvivalCurve& generic);

}  // namespace rdg

#endif  // RDGCOMP_GCOMP_HPP
