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

#ifndef RDGCOMP_STATS_SPLINE_HPP
#define RDGCOMP_STATS_SPLINE_HPP

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace rdg::stats {

class DegenerateBasis : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Type-7 sample quantile of x, where observation i is repeated weights[i]
/// times (weights must be non-negative integers; empty means all ones).
double weighted_quantile(std::span<const double> x,
                         std::span<const double> weights, double prob);

/// Several quantiles with one sort.
std::vector<double> weighted_quantiles(std::span<const double> x,
                                       std::span<const double> weights,
                                       std::span<const double> probs);

/// Natural cubic spline basis without intercept (df columns).
///
/// Uses the truncated-power construction on x rescaled to [0, 1] over the
/// boundary knots:
///   N_1(s) = s,  N_{k+1}(s) = d_k(s) - d_{K-1}(s),
///   d_k(s) = ((s - k_k)_+^3 - (s - k_K)_+^3) / (k_K - k_k)
/// with K = df + 1 knots. Each column is linear outside the boundary knots.
class NaturalSpline {
 public:
  NaturalSpline() = default;
  NaturalSpline(std::vector<double> interior_knots, double lower, double upper);

  /// Boundary knots at min/max of x, interior knots at equally spaced
  /// quantiles. Duplicate quantiles are merged, lowering df; fewer than
  /// df + 1 distinct values throws DegenerateBasis.
  static NaturalSpline from_data(std::span<const double> x, int df,
                                 std::span<const double> weights = {});

  int df() const { return static_cast<int>(interior_.size()) + 1; }
  const std::vector<double>& interior_knots() const { return interior_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }

  /// Writes df() basis values at x into out.
  void evaluate(double x, double* out) const;
  Eigen::MatrixXd basis(std::span<const double> x) const;

 private:
  std::vector<double> interior_;
  double lower_ = 0.0;
  double upper_ = 1.0;
  std::vector<double> scaled_;  // all knots on the [0, 1] scale
};

/// ns_basis(x, df, knots): evaluates the natural spline basis on x. When
/// `interior_knots` is given, boundary knots are min/max of x.
Eigen::MatrixXd ns_basis(std::span<const double> x, int df,
                         std::optional<std::vector<double>> interior_knots = {});

}  // namespace rdg::stats

#endif  // RDGCOMP_STATS_SPLINE_HPP
