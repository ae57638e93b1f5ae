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

#ifndef RDGCOMP_STATS_GLM_HPP
#define RDGCOMP_STATS_GLM_HPP

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rdgcomp/random.hpp"
#include "rdgcomp/stats/design.hpp"

namespace rdg::stats {

enum class Family { Binomial, Ordinal, Multinomial, Gamma, Gaussian };

std::string_view to_string(Family family);
Family parse_family(std::string_view text);

struct ModelSpec {
  std::string name;
  Family family = Family::Binomial;
  std::string response;
  std::vector<TermSpec> terms;
};

struct FitOptions {
  int max_iterations = 100;
  double coefficient_tolerance = 1e-8;
  double deviance_tolerance = 1e-10;
  double separation_ridge = 1e-6;
  /// Starting values in the parameters() layout. Used only when the size
  /// matches the fitted active set and the likelihood is finite there.
  Eigen::VectorXd start;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  /// Objective (deviance or -2 log-likelihood) after each iteration.
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

/// A fitted model. Coefficients are stored over the full expanded design,
/// with dropped (aliased) columns held at zero and marked inactive.
///
/// Linear predictor: eta = intercept + sum_j beta_j x_j. Ordinal models have
/// no intercept and P(Y <= level_j) = logistic(cutpoint_j - eta).
/// Multinomial models hold one coefficient row per non-reference level.
struct FittedModel {
  ModelSpec spec;
  std::vector<Term> terms;
  std::vector<std::string> columns;  // full design, intercept first if any
  std::vector<bool> active;
  Eigen::VectorXd beta;              // single-predictor families
  Eigen::MatrixXd beta_multi;        // multinomial: (levels - 1) x columns
  std::vector<double> cutpoints;     // ordinal
  std::vector<double> levels;        // response levels (sorted) for ordinal/multinomial
  double dispersion = 1.0;           // gamma shape, gaussian sd
  Eigen::MatrixXd covariance;        // over parameters()
  double log_likelihood = 0.0;
  double n_obs = 0.0;                // total weight
  int iterations = 0;
  std::vector<std::string> warnings;

  bool has_intercept() const { return spec.family != Family::Ordinal; }
  std::size_t width() const { return columns.size(); }
};

/// Fits by weighted maximum likelihood. Weights are non-negative frequency
/// weights (empty = all one); rows with zero weight are ignored, including
/// when resolving factor levels and spline knots.
FittedModel fit_glm(const ModelSpec& spec, const Frame& data,
                    std::span<const double> weights = {},
                    const FitOptions& options = {});

/// Design matrix over the full column layout of `model`.
Eigen::MatrixXd design_matrix(const FittedModel& model, const Frame& data);

/// Free parameters as a flat vector: active coefficients, preceded by the
/// cutpoints for ordinal models and laid out level by level for
/// multinomial models. Dispersion is not included.
Eigen::VectorXd parameters(const FittedModel& model);
FittedModel with_parameters(const FittedModel& model,
                            const Eigen::VectorXd& theta);

/// Weighted log-likelihood and its gradient over parameters(), with the
/// dispersion held at the fitted value.
double log_likelihood(const FittedModel& model, const Frame& data,
                      std::span<const double> weights,
                      const Eigen::VectorXd& theta);
Eigen::VectorXd score(const FittedModel& model, const Frame& data,
                      std::span<const double> weights,
                      const Eigen::VectorXd& theta);

/// Standard errors of parameters().
Eigen::VectorXd standard_errors(const FittedModel& model);

struct Prediction {
  Family family = Family::Binomial;
  double probability = 0.0;            // binomial
  std::vector<double> probabilities;   // ordinal, multinomial (per level)
  double mean = 0.0;                   // gamma, gaussian
  double dispersion = 0.0;             // gamma shape, gaussian sd
};

/// Linear predictor from an already expanded design row (full layout).
double linear_predictor(const FittedModel& model, std::span<const double> x);

Prediction predict_from_design(const FittedModel& model,
                               std::span<const double> x);
/// Prediction for row `row` of `data`.
Prediction predict(const FittedModel& model, const Frame& data,
                   std::size_t row = 0);

double sample_outcome(const Prediction& prediction,
                      const std::vector<double>& levels, Rng& rng);
double sample_outcome(const FittedModel& model, const Frame& data,
                      std::size_t row, Rng& rng);

/// Inverse-CDF draw from a gamma distribution with shape and mean.
double sample_gamma(double shape, double mean, Rng& rng);

/// CDF of the fitted outcome distribution at y, used for randomized
/// quantile residuals (continuous families only).
double outcome_cdf(const Prediction& prediction, double y);

nlohmann::json to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const TermSpec& spec);
TermSpec term_spec_from_json(const nlohmann::json& doc);

double logistic(double x);

}  // namespace rdg::stats

#endif  // RDGCOMP_STATS_GLM_HPP
