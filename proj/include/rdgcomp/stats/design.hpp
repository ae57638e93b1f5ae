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

#ifndef RDGCOMP_STATS_DESIGN_HPP
#define RDGCOMP_STATS_DESIGN_HPP

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rdgcomp/stats/spline.hpp"

namespace rdg::stats {

/// Missing column, unknown variable or unseen factor level.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Column store of named numeric variables. Factors are stored as numeric
/// codes and interpreted by the terms that use them.
class Frame {
 public:
  Frame() = default;
  explicit Frame(std::size_t rows) : rows_(rows) {}

  std::size_t rows() const { return rows_; }
  std::size_t columns() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  /// Adds or replaces a column. The first column fixes the row count.
  void set(std::string name, std::vector<double> values);
  bool has(std::string_view name) const;
  std::span<const double> column(std::string_view name) const;
  std::vector<double>& mutable_column(std::string_view name);

  /// Rows selected by index, in the given order.
  Frame select(std::span<const std::size_t> rows) const;

 private:
  std::size_t index_of(std::string_view name) const;

  std::size_t rows_ = 0;
  bool sized_ = false;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
};

/// Declarative model term.
struct TermSpec {
  enum class Kind { Linear, Factor, Spline, Interaction };

  Kind kind = Kind::Linear;
  std::string variable;
  int df = 0;                   // Spline
  std::vector<TermSpec> parts;  // Interaction (exactly two)

  static TermSpec linear(std::string variable);
  static TermSpec factor(std::string variable);
  static TermSpec spline(std::string variable, int df);
  static TermSpec interaction(TermSpec a, TermSpec b);

  std::string label() const;
  /// Variables this term reads.
  std::vector<std::string> variables() const;
  bool operator==(const TermSpec&) const = default;
};

/// A term resolved against training data: factor levels and spline knots
/// are frozen at fit time and reused unchanged for prediction.
class Term {
 public:
  Term() = default;
  /// Resolves `spec` on frame rows with positive weight (empty = all).
  static Term resolve(const TermSpec& spec, const Frame& frame,
                      std::span<const double> weights = {});

  const TermSpec& spec() const { return spec_; }
  std::size_t width() const { return width_; }
  std::vector<std::string> column_names() const;

  const std::vector<double>& levels() const { return levels_; }
  const std::optional<NaturalSpline>& spline() const { return spline_; }
  const std::vector<Term>& parts() const { return parts_; }

  /// Expands every frame row into `out` (rows x width()).
  void expand(const Frame& frame, Eigen::Ref<Eigen::MatrixXd> out) const;

  /// Binds variables to slots of a row vector for expand_row().
  void bind(const std::vector<std::string>& schema);
  /// Variable slot indices after bind() (one per variable()).
  void expand_row(std::span<const double> row, double* out) const;
  /// Scalar expansion for non-interaction terms.
  void expand_value(double x, double* out) const;

  // Construction from stored state (serialization, hand-built models).
  static Term from_parts(TermSpec spec, std::vector<double> levels,
                         std::optional<NaturalSpline> spline,
                         std::vector<Term> parts);

 private:
  void compute_width();

  TermSpec spec_;
  std::vector<double> levels_;  // first entry is the reference level
  std::optional<NaturalSpline> spline_;
  std::vector<Term> parts_;
  std::size_t width_ = 0;
  int slot_ = -1;
};

/// Standard normal density of (u - u_star) / h, unnormalized in h.
struct KernelWeighting {
  double u_star = 0.0;
  double bandwidth = 365.0;
};

double kernel_weight(double u, const KernelWeighting& w);

/// ln(x + sqrt(x^2 + 1)) and its inverse.
double asinh(double x);
double asinh_inv(double y);

}  // namespace rdg::stats

#endif  // RDGCOMP_STATS_DESIGN_HPP
