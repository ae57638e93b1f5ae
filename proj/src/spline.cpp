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

#include "rdgcomp/stats/spline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rdg::stats {

std::vector<double> weighted_quantiles(std::span<const double> x,
                                       std::span<const double> weights,
                                       std::span<const double> probs) {
  if (x.empty()) throw std::invalid_argument("quantile of empty data");
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  auto weight = [&](std::size_t i) {
    return weights.empty() ? 1.0 : weights[i];
  };
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += weight(i);
  if (!(total > 0)) throw std::invalid_argument("quantile with zero total weight");

  auto order_stat = [&](double rank) {
    double seen = 0.0;
    for (std::size_t k : order) {
      seen += weight(k);
      if (rank < seen) return x[k];
    }
    return x[order.back()];
  };

  // type 7 on the expanded sample: h = (N - 1) p, interpolate order
  // statistics floor(h) and floor(h) + 1 (0-based)
  std::vector<double> result;
  result.reserve(probs.size());
  for (double prob : probs) {
    const double h = (total - 1.0) * prob;
    const double lo_rank = std::floor(h);
    const double frac = h - lo_rank;
    const double lo = order_stat(lo_rank);
    result.push_back(frac == 0.0 ? lo
                                 : lo + frac * (order_stat(lo_rank + 1.0) - lo));
  }
  return result;
}

double weighted_quantile(std::span<const double> x,
                         std::span<const double> weights, double prob) {
  const double probs[] = {prob};
  return weighted_quantiles(x, weights, probs).front();
}

NaturalSpline::NaturalSpline(std::vector<double> interior_knots, double lower,
                             double upper)
    : interior_(std::move(interior_knots)), lower_(lower), upper_(upper) {
  if (!(upper_ > lower_)) {
    throw DegenerateBasis("spline boundary knots must satisfy lower < upper");
  }
  double previous = lower_;
  for (double k : interior_) {
    if (!(k > previous)) {
      throw DegenerateBasis("spline knots must be strictly increasing");
    }
    previous = k;
  }
  if (!(upper_ > previous)) {
    throw DegenerateBasis("interior knots must lie inside the boundary knots");
  }
  const double range = upper_ - lower_;
  scaled_.reserve(interior_.size() + 2);
  scaled_.push_back(0.0);
  for (double k : interior_) scaled_.push_back((k - lower_) / range);
  scaled_.push_back(1.0);
}

NaturalSpline NaturalSpline::from_data(std::span<const double> x, int df,
                                       std::span<const double> weights) {
  if (df < 1) throw std::invalid_argument("spline df must be >= 1");
  std::vector<double> distinct;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!weights.empty() && weights[i] <= 0) continue;
    if (!std::isfinite(x[i])) throw std::invalid_argument("non-finite spline input");
    distinct.push_back(x[i]);
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<int>(distinct.size()) < df + 1) {
    throw DegenerateBasis("natural spline with df=" + std::to_string(df) +
                          " needs at least " + std::to_string(df + 1) +
                          " distinct values, found " +
                          std::to_string(distinct.size()));
  }
  const double lower = distinct.front();
  const double upper = distinct.back();
  std::vector<double> probs;
  for (int j = 1; j < df; ++j) probs.push_back(static_cast<double>(j) / df);
  std::vector<double> knots;
  for (double q : weighted_quantiles(x, weights, probs)) {
    if (q > lower && q < upper && (knots.empty() || q > knots.back())) {
      knots.push_back(q);
    }
  }
  return NaturalSpline(std::move(knots), lower, upper);
}

void NaturalSpline::evaluate(double x, double* out) const {
  const double s = (x - lower_) / (upper_ - lower_);
  const std::size_t n_knots = scaled_.size();
  out[0] = s;
  if (n_knots <= 2) return;
  const double last = scaled_[n_knots - 1];
  auto cube_plus = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
  const double tail = cube_plus(s - last);
  auto d = [&](std::size_t k) {
    return (cube_plus(s - scaled_[k]) - tail) / (last - scaled_[k]);
  };
  const double d_penultimate = d(n_knots - 2);
  for (std::size_t k = 0; k + 2 < n_knots; ++k) {
    out[k + 1] = d(k) - d_penultimate;
  }
}

Eigen::MatrixXd NaturalSpline::basis(std::span<const double> x) const {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> b(
      static_cast<Eigen::Index>(x.size()), df());
  for (std::size_t i = 0; i < x.size(); ++i) {
    evaluate(x[i], b.row(static_cast<Eigen::Index>(i)).data());
  }
  return b;
}

Eigen::MatrixXd ns_basis(std::span<const double> x, int df,
                         std::optional<std::vector<double>> interior_knots) {
  if (!interior_knots) return NaturalSpline::from_data(x, df).basis(x);
  if (x.empty()) throw DegenerateBasis("ns_basis on empty input");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return NaturalSpline(std::move(*interior_knots), *lo, *hi).basis(x);
}

}  // namespace rdg::stats
