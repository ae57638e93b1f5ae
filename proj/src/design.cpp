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

#include "rdgcomp/stats/design.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rdgcomp/csv.hpp"

namespace rdg::stats {

void Frame::set(std::string name, std::vector<double> values) {
  if (!sized_ && names_.empty()) {
    rows_ = values.size();
    sized_ = true;
  } else if (values.size() != rows_) {
    throw SchemaError("column '" + name + "' has " +
                      std::to_string(values.size()) + " rows, frame has " +
                      std::to_string(rows_));
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) {
      columns_[i] = std::move(values);
      return;
    }
  }
  names_.push_back(std::move(name));
  columns_.push_back(std::move(values));
}

std::size_t Frame::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw SchemaError("missing covariate '" + std::string(name) + "'");
}

bool Frame::has(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::span<const double> Frame::column(std::string_view name) const {
  return columns_[index_of(name)];
}

std::vector<double>& Frame::mutable_column(std::string_view name) {
  return columns_[index_of(name)];
}

Frame Frame::select(std::span<const std::size_t> rows) const {
  Frame out;
  for (std::size_t c = 0; c < names_.size(); ++c) {
    std::vector<double> values;
    values.reserve(rows.size());
    for (std::size_t r : rows) values.push_back(columns_[c][r]);
    out.set(names_[c], std::move(values));
  }
  if (names_.empty()) out.rows_ = rows.size();
  return out;
}

TermSpec TermSpec::linear(std::string variable) {
  return {Kind::Linear, std::move(variable), 0, {}};
}

TermSpec TermSpec::factor(std::string variable) {
  return {Kind::Factor, std::move(variable), 0, {}};
}

TermSpec TermSpec::spline(std::string variable, int df) {
  return {Kind::Spline, std::move(variable), df, {}};
}

TermSpec TermSpec::interaction(TermSpec a, TermSpec b) {
  return {Kind::Interaction, "", 0, {std::move(a), std::move(b)}};
}

std::string TermSpec::label() const {
  switch (kind) {
    case Kind::Linear: return variable;
    case Kind::Factor: return "factor(" + variable + ")";
    case Kind::Spline: return "ns(" + variable + "," + std::to_string(df) + ")";
    case Kind::Interaction: return parts.at(0).label() + ":" + parts.at(1).label();
  }
  return "?";
}

std::vector<std::string> TermSpec::variables() const {
  if (kind != Kind::Interaction) return {variable};
  std::vector<std::string> out = parts.at(0).variables();
  for (auto& v : parts.at(1).variables()) out.push_back(std::move(v));
  return out;
}

Term Term::resolve(const TermSpec& spec, const Frame& frame,
                   std::span<const double> weights) {
  Term t;
  t.spec_ = spec;
  switch (spec.kind) {
    case TermSpec::Kind::Linear:
      (void)frame.column(spec.variable);
      break;
    case TermSpec::Kind::Factor: {
      const auto x = frame.column(spec.variable);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!weights.empty() && weights[i] <= 0) continue;
        if (std::find(t.levels_.begin(), t.levels_.end(), x[i]) == t.levels_.end()) {
          t.levels_.push_back(x[i]);
        }
      }
      if (t.levels_.empty()) {
        throw SchemaError("factor '" + spec.variable + "' has no observed level");
      }
      break;
    }
    case TermSpec::Kind::Spline:
      t.spline_ = NaturalSpline::from_data(frame.column(spec.variable), spec.df,
                                           weights);
      break;
    case TermSpec::Kind::Interaction:
      if (spec.parts.size() != 2) {
        throw SchemaError("interaction terms take exactly two parts");
      }
      for (const auto& p : spec.parts) {
        if (p.kind == TermSpec::Kind::Interaction) {
          throw SchemaError("nested interactions are not supported");
        }
        t.parts_.push_back(resolve(p, frame, weights));
      }
      break;
  }
  t.compute_width();
  return t;
}

Term Term::from_parts(TermSpec spec, std::vector<double> levels,
                      std::optional<NaturalSpline> spline,
                      std::vector<Term> parts) {
  Term t;
  t.spec_ = std::move(spec);
  t.levels_ = std::move(levels);
  t.spline_ = std::move(spline);
  t.parts_ = std::move(parts);
  t.compute_width();
  return t;
}

void Term::compute_width() {
  switch (spec_.kind) {
    case TermSpec::Kind::Linear: width_ = 1; break;
    case TermSpec::Kind::Factor:
      width_ = levels_.empty() ? 0 : levels_.size() - 1;
      break;
    case TermSpec::Kind::Spline:
      width_ = spline_ ? static_cast<std::size_t>(spline_->df()) : 0;
      break;
    case TermSpec::Kind::Interaction:
      width_ = parts_.size() == 2 ? parts_[0].width() * parts_[1].width() : 0;
      break;
  }
}

std::vector<std::string> Term::column_names() const {
  std::vector<std::string> names;
  switch (spec_.kind) {
    case TermSpec::Kind::Linear: names.push_back(spec_.variable); break;
    case TermSpec::Kind::Factor:
      for (std::size_t i = 1; i < levels_.size(); ++i) {
        names.push_back(spec_.variable + "=" + format_double(levels_[i]));
      }
      break;
    case TermSpec::Kind::Spline:
      for (std::size_t i = 0; i < width_; ++i) {
        names.push_back(spec_.label() + "[" + std::to_string(i + 1) + "]");
      }
      break;
    case TermSpec::Kind::Interaction: {
      const auto a = parts_[0].column_names();
      const auto b = parts_[1].column_names();
      for (const auto& x : a) {
        for (const auto& y : b) names.push_back(x + ":" + y);
      }
      break;
    }
  }
  return names;
}

void Term::expand_value(double x, double* out) const {
  switch (spec_.kind) {
    case TermSpec::Kind::Linear: out[0] = x; return;
    case TermSpec::Kind::Factor: {
      std::size_t level = levels_.size();
      for (std::size_t i = 0; i < levels_.size(); ++i) {
        if (levels_[i] == x) {
          level = i;
          break;
        }
      }
      if (level == levels_.size()) {
        throw SchemaError("factor '" + spec_.variable + "': level " +
                          format_double(x) + " was not seen at fit time");
      }
      for (std::size_t i = 1; i < levels_.size(); ++i) out[i - 1] = 0.0;
      if (level > 0) out[level - 1] = 1.0;
      return;
    }
    case TermSpec::Kind::Spline: spline_->evaluate(x, out); return;
    case TermSpec::Kind::Interaction:
      throw std::logic_error("expand_value on an interaction term");
  }
}

void Term::expand(const Frame& frame, Eigen::Ref<Eigen::MatrixXd> out) const {
  const auto n = static_cast<Eigen::Index>(frame.rows());
  if (spec_.kind == TermSpec::Kind::Interaction) {
    Eigen::MatrixXd a(n, static_cast<Eigen::Index>(parts_[0].width()));
    Eigen::MatrixXd b(n, static_cast<Eigen::Index>(parts_[1].width()));
    parts_[0].expand(frame, a);
    parts_[1].expand(frame, b);
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
      for (Eigen::Index j = 0; j < b.cols(); ++j) {
        out.col(i * b.cols() + j) = a.col(i).cwiseProduct(b.col(j));
      }
    }
    return;
  }
  const auto x = frame.column(spec_.variable);
  const std::size_t w = width_;
  if (w == 0) return;
  if (spec_.kind == TermSpec::Kind::Linear) {
    for (Eigen::Index r = 0; r < n; ++r) out(r, 0) = x[r];
    return;
  }
  double buffer[64];
  std::vector<double> heap;
  double* row = buffer;
  if (w > 64) {
    heap.resize(w);
    row = heap.data();
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    expand_value(x[r], row);
    for (std::size_t c = 0; c < w; ++c) out(r, static_cast<Eigen::Index>(c)) = row[c];
  }
}

void Term::bind(const std::vector<std::string>& schema) {
  if (spec_.kind == TermSpec::Kind::Interaction) {
    for (auto& p : parts_) p.bind(schema);
    return;
  }
  const auto it = std::find(schema.begin(), schema.end(), spec_.variable);
  if (it == schema.end()) {
    throw SchemaError("missing covariate '" + spec_.variable + "'");
  }
  slot_ = static_cast<int>(it - schema.begin());
}

void Term::expand_row(std::span<const double> row, double* out) const {
  if (spec_.kind == TermSpec::Kind::Interaction) {
    const std::size_t wa = parts_[0].width(), wb = parts_[1].width();
    double a[64], b[64];
    if (wa > 64 || wb > 64) throw std::length_error("interaction part too wide");
    parts_[0].expand_row(row, a);
    parts_[1].expand_row(row, b);
    for (std::size_t i = 0; i < wa; ++i) {
      for (std::size_t j = 0; j < wb; ++j) out[i * wb + j] = a[i] * b[j];
    }
    return;
  }
  if (slot_ < 0) throw std::logic_error("term '" + spec_.label() + "' is not bound");
  if (width_ > 0) expand_value(row[static_cast<std::size_t>(slot_)], out);
}

double kernel_weight(double u, const KernelWeighting& w) {
  const double z = (u - w.u_star) / w.bandwidth;
  return std::exp(-0.5 * z * z) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

double asinh(double x) { return std::asinh(x); }
double asinh_inv(double y) { return std::sinh(y); }

}  // namespace rdg::stats
