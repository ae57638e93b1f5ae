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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "fixtures.hpp"
#include "rdgcomp/random.hpp"
#include "rdgcomp/stats/design.hpp"
#include "rdgcomp/stats/glm.hpp"
#include "rdgcomp/stats/spline.hpp"

using namespace rdg;
using namespace rdg::stats;

namespace {

std::vector<double> grid(double lo, double hi, int n) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = lo + (hi - lo) * i / (n - 1);
  return x;
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd& x, const std::vector<double>& y) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  const Eigen::VectorXd yy = Eigen::Map<const Eigen::VectorXd>(y.data(), x.rows());
  return a.colPivHouseholderQr().solve(yy);
}

}  // namespace

TEST_CASE("natural spline is linear beyond the boundary knots") {
  const auto x = grid(0.0, 10.0, 40);
  const auto s = NaturalSpline::from_data(x, 4);
  for (double at : {-7.0, -2.0, 12.0, 25.0}) {
    std::vector<double> lo(s.df()), mid(s.df()), hi(s.df());
    const double h = 0.5;
    s.evaluate(at - h, lo.data());
    s.evaluate(at, mid.data());
    s.evaluate(at + h, hi.data());
    for (int j = 0; j < s.df(); ++j) {
      CHECK(std::abs(lo[j] - 2 * mid[j] + hi[j]) / (h * h) < 1e-8);
    }
  }
}

TEST_CASE("spline df=1 recovers a linear response") {
  const auto x = grid(-3.0, 5.0, 30);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 2.0 - 0.5 * x[i];
  const Eigen::MatrixXd b = ns_basis(x, 1);
  REQUIRE(b.cols() == 1);
  const auto coef = least_squares(b, y);
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    CHECK(coef[0] + coef[1] * b(i, 0) == doctest::Approx(y[i]).epsilon(1e-12));
  }
}

TEST_CASE("spline df=3 on 100 points has rank 3") {
  const auto x = grid(0.0, 1.0, 100);
  const Eigen::MatrixXd b = ns_basis(x, 3);
  CHECK(b.rows() == 100);
  CHECK(b.cols() == 3);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b);
  const auto sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv[i] > 1e-10 * sv[0];
  CHECK(rank == 3);
}

TEST_CASE("spline interpolates a cubic at its knots") {
  const auto x = grid(0.0, 6.0, 61);
  const auto s = NaturalSpline::from_data(x, 5);
  std::vector<double> knots{s.lower()};
  for (double k : s.interior_knots()) knots.push_back(k);
  knots.push_back(s.upper());
  std::vector<double> y;
  for (double k : knots) y.push_back(1.0 - k + 0.5 * k * k - 0.1 * k * k * k);
  const Eigen::MatrixXd b = s.basis(knots);
  REQUIRE(b.rows() == b.cols() + 1);
  const auto coef = least_squares(b, y);
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    const double fit = coef[0] + b.row(i).dot(coef.tail(b.cols()));
    CHECK(std::abs(fit - y[i]) < 1e-8);
  }
}

TEST_CASE("spline with too few distinct values is degenerate") {
  const std::vector<double> x{1, 1, 2, 2, 3};
  CHECK_THROWS_AS(ns_basis(x, 3), DegenerateBasis);
}

TEST_CASE("kernel weight is the standard normal density") {
  const KernelWeighting w{13368.0, 365.0};
  CHECK(kernel_weight(13368.0, w) == doctest::Approx(0.39894).epsilon(1e-5));
  CHECK(kernel_weight(13368.0 + 365.0, w) == doctest::Approx(0.24197).epsilon(1e-5));
  CHECK(kernel_weight(13368.0 - 365.0, w) == doctest::Approx(0.24197).epsilon(1e-5));
  for (double d : {1.0, 50.0, 400.0, 3000.0}) {
    CHECK(kernel_weight(13368.0 + d, w) == kernel_weight(13368.0 - d, w));
    CHECK(kernel_weight(13368.0 + d, w) < kernel_weight(13368.0, w));
    CHECK(kernel_weight(13368.0 + d, w) > 0.0);
  }
}

TEST_CASE("asinh transform") {
  CHECK(stats::asinh(0.0) == 0.0);
  CHECK(stats::asinh(1.0) == doctest::Approx(0.881374).epsilon(1e-6));
  CHECK(std::abs(asinh_inv(stats::asinh(137.7)) - 137.7) < 1e-9);
  for (double x : {-3.0, 0.25, 7.0, 1e4}) {
    CHECK(stats::asinh(x) == doctest::Approx(std::log(x + std::sqrt(x * x + 1))).epsilon(1e-12));
  }
}

TEST_CASE("intercept-only fits") {
  Frame f;
  f.set("y", {1, 1, 0, 0});
  auto m = fit_glm({"b", Family::Binomial, "y", {}}, f);
  CHECK(std::abs(m.beta[0]) < 1e-8);
  Frame g;
  g.set("y", {1, 2, 3, 4});
  m = fit_glm({"g", Family::Gamma, "y", {}}, g);
  CHECK(m.beta[0] == doctest::Approx(std::log(2.5)).epsilon(1e-10));
}

TEST_CASE("GLM fits match the brute-force oracle for every family") {
  for (Family family : {Family::Binomial, Family::Ordinal, Family::Multinomial, Family::Gamma,
                        Family::Gaussian}) {
    CAPTURE(to_string(family));
    const auto fx = fixtures::glm_fixture(family);
    const auto model = fit_glm(fx.spec, fx.frame);
    const Eigen::VectorXd oracle = fixtures::oracle_fit(fx);
    const Eigen::VectorXd theta = parameters(model);
    const Eigen::Index k = theta.size();
    REQUIRE(k <= oracle.size());
    CHECK((theta - oracle.head(k)).cwiseAbs().maxCoeff() < 1e-6);
    if (family == Family::Gamma || family == Family::Gaussian) {
      CHECK(std::abs(model.dispersion - std::exp(oracle[k])) < 1e-6);
    }
    // Likelihood at the fit is at least the oracle's.
    Eigen::VectorXd full = oracle;
    full.head(k) = theta;
    if (family == Family::Gamma || family == Family::Gaussian) full[k] = std::log(model.dispersion);
    CHECK(fixtures::oracle_log_likelihood(fx, full) >=
          fixtures::oracle_log_likelihood(fx, oracle) - 1e-6);
    CHECK(model.log_likelihood == doctest::Approx(fixtures::oracle_log_likelihood(fx, full)).epsilon(1e-10));
  }
}

TEST_CASE("analytic score agrees with finite differences") {
  for (Family family : {Family::Binomial, Family::Ordinal, Family::Multinomial, Family::Gamma,
                        Family::Gaussian}) {
    CAPTURE(to_string(family));
    const auto fx = fixtures::glm_fixture(family);
    const auto model = fit_glm(fx.spec, fx.frame);
    const Eigen::VectorXd theta = parameters(model);
    auto ll = [&](const Eigen::VectorXd& th) { return log_likelihood(model, fx.frame, {}, th); };
    const Eigen::VectorXd g = score(model, fx.frame, {}, theta);
    const Eigen::VectorXd fd = fixtures::fd_gradient(ll, theta, 1e-5);
    CHECK(g.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(fd.cwiseAbs().maxCoeff() < 1e-6);
    Eigen::VectorXd away = theta;
    away.array() += 0.1;
    const Eigen::VectorXd ga = score(model, fx.frame, {}, away);
    const Eigen::VectorXd fa = fixtures::fd_gradient(ll, away, 1e-5);
    CHECK((ga - fa).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, ga.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("predict") {
  const auto bx = fixtures::glm_fixture(Family::Binomial);
  auto zero = fit_glm(bx.spec, bx.frame);
  zero = with_parameters(zero, Eigen::VectorXd::Zero(parameters(zero).size()));
  CHECK(predict(zero, bx.frame, 3).probability == 0.5);

  const auto ox = fixtures::glm_fixture(Family::Ordinal);
  const auto om = fit_glm(ox.spec, ox.frame);
  for (std::size_t r = 0; r < ox.frame.rows(); ++r) {
    const auto p = predict(om, ox.frame, r).probabilities;
    double total = 0.0, cumulative = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      total += v;
      CHECK(cumulative + v >= cumulative);
      cumulative += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  for (std::size_t j = 1; j < om.cutpoints.size(); ++j) CHECK(om.cutpoints[j] > om.cutpoints[j - 1]);

  const auto mx = fixtures::glm_fixture(Family::Multinomial);
  const auto mm = fit_glm(mx.spec, mx.frame);
  const auto x1 = mx.frame.column("x1");
  const auto x2 = mx.frame.column("x2");
  for (std::size_t r = 0; r < mx.frame.rows(); ++r) {
    const auto p = predict(mm, mx.frame, r).probabilities;
    REQUIRE(p.size() == 3);
    double e[3] = {0.0, 0.0, 0.0};
    for (int k = 1; k < 3; ++k) {
      e[k] = mm.beta_multi(k - 1, 0) + mm.beta_multi(k - 1, 1) * x1[r] +
             mm.beta_multi(k - 1, 2) * x2[r];
    }
    const double z = std::exp(e[0]) + std::exp(e[1]) + std::exp(e[2]);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(p[k] - std::exp(e[k]) / z) < 1e-12);
  }

  Frame missing;
  missing.set("x1", {0.0});
  CHECK_THROWS_AS(predict(om, missing, 0), SchemaError);
}

TEST_CASE("sample_outcome") {
  Prediction certain;
  certain.family = Family::Binomial;
  certain.probability = 1.0;
  Rng rng(7);
  for (int i = 0; i < 100; ++i) CHECK(sample_outcome(certain, {}, rng) == 1.0);

  Prediction g;
  g.family = Family::Gamma;
  g.mean = 3.0;
  g.dispersion = 2.0;
  Rng r1(11);
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_outcome(g, {}, r1);
  const double se = g.mean / std::sqrt(g.dispersion) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sum / n - g.mean) < 3 * se);

  Rng a(99), b(99);
  CHECK(sample_outcome(g, {}, a) == sample_outcome(g, {}, b));
}

TEST_CASE("complete separation falls back to a ridge fit") {
  Frame f;
  f.set("y", {0, 0, 0, 1, 1, 1});
  f.set("x", {1, 2, 3, 4, 5, 6});
  const auto m = fit_glm({"sep", Family::Binomial, "y", {TermSpec::linear("x")}}, f);
  CHECK_FALSE(m.warnings.empty());
  CHECK(std::isfinite(m.beta[1]));
}

TEST_CASE("aliased columns are dropped") {
  Frame f;
  f.set("y", {0, 1, 0, 1, 1, 0});
  f.set("a", {1, 2, 3, 4, 5, 6});
  f.set("b", {2, 4, 6, 8, 10, 12});
  const auto m = fit_glm({"alias", Family::Binomial, "y", {TermSpec::linear("a"), TermSpec::linear("b")}}, f);
  CHECK(std::count(m.active.begin(), m.active.end(), false) == 1);
  CHECK_FALSE(m.warnings.empty());
}

TEST_CASE("fitted model JSON round trip") {
  const auto fx = fixtures::glm_fixture(Family::Ordinal);
  const ModelSpec spec{"rt", Family::Ordinal, "y",
                       {TermSpec::spline("x1", 3), TermSpec::factor("x2"),
                        TermSpec::interaction(TermSpec::factor("x2"), TermSpec::linear("x1"))}};
  const auto m = fit_glm(spec, fx.frame);
  const auto back = model_from_json(to_json(m));
  CHECK(to_json(back) == to_json(m));
  for (std::size_t r = 0; r < fx.frame.rows(); ++r) {
    const auto a = predict(m, fx.frame, r).probabilities;
    const auto b = predict(back, fx.frame, r).probabilities;
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
  }
}
