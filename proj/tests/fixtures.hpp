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

// Fixtures and independent oracles shared by the unit and acceptance tests.

#ifndef RDGCOMP_TESTS_FIXTURES_HPP
#define RDGCOMP_TESTS_FIXTURES_HPP

#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rdgcomp/gcomp.hpp"
#include "rdgcomp/km.hpp"
#include "rdgcomp/stats/glm.hpp"

namespace fixtures {

using rdg::stats::Family;
using rdg::stats::Frame;
using rdg::stats::ModelSpec;
using rdg::stats::TermSpec;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// GLM fixtures: n = 50, covariates x1 ~ N(0, 1) and x2 ~ Bernoulli(0.5).

struct GlmFixture {
  Family family;
  Frame frame;
  ModelSpec spec;
  int levels = 0;  // ordinal and multinomial response levels
};

inline GlmFixture glm_fixture(Family family) {
  std::mt19937_64 rng(20260 + static_cast<int>(family));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = 50;
  std::vector<double> x1(n), x2(n), y(n);
  for (int i = 0; i < n; ++i) {
    x1[i] = normal(rng);
    x2[i] = unif(rng) < 0.5 ? 1.0 : 0.0;
  }
  GlmFixture f{family, {}, {}, 0};
  for (int i = 0; i < n; ++i) {
    const double u = unif(rng);
    switch (family) {
      case Family::Binomial:
        y[i] = u < sigmoid(-0.3 + 0.8 * x1[i] - 0.6 * x2[i]) ? 1.0 : 0.0;
        break;
      case Family::Ordinal: {
        const double eta = 0.7 * x1[i] + 0.5 * x2[i];
        y[i] = u < sigmoid(-0.5 - eta) ? 0.0 : (u < sigmoid(0.9 - eta) ? 1.0 : 2.0);
        break;
      }
      case Family::Multinomial: {
        const double e1 = std::exp(0.2 + 0.9 * x1[i] - 0.4 * x2[i]);
        const double e2 = std::exp(-0.3 - 0.5 * x1[i] + 0.8 * x2[i]);
        const double z = 1.0 + e1 + e2;
        y[i] = u < 1.0 / z ? 0.0 : (u < (1.0 + e1) / z ? 1.0 : 2.0);
        break;
      }
      case Family::Gamma: {
        const double mu = std::exp(1.0 + 0.4 * x1[i] - 0.3 * x2[i]);
        std::gamma_distribution<double> g(2.5, mu / 2.5);
        y[i] = g(rng);
        break;
      }
      case Family::Gaussian:
        y[i] = 2.0 + 1.5 * x1[i] - 0.7 * x2[i] + 0.8 * normal(rng);
        break;
    }
  }
  f.frame.set("y", y);
  f.frame.set("x1", x1);
  f.frame.set("x2", x2);
  f.spec = {"fixture", family, "y", {TermSpec::linear("x1"), TermSpec::linear("x2")}};
  f.levels = (family == Family::Ordinal || family == Family::Multinomial) ? 3 : 0;
  return f;
}

// Log-likelihood written from the textbook densities. Parameter layout:
//   binomial     b0 b1 b2
//   ordinal      c1 c2 b1 b2            P(Y <= j) = sigmoid(c_j - eta)
//   multinomial  a1 b11 b12 a2 b21 b22  reference level 0
//   gamma        b0 b1 b2 log(shape)
//   gaussian     b0 b1 b2 log(sd)
inline double oracle_log_likelihood(const GlmFixture& f, const Eigen::VectorXd& th) {
  const auto y = f.frame.column("y");
  const auto x1 = f.frame.column("x1");
  const auto x2 = f.frame.column("x2");
  double ll = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    switch (f.family) {
      case Family::Binomial: {
        const double p = sigmoid(th[0] + th[1] * x1[i] + th[2] * x2[i]);
        ll += y[i] == 1.0 ? std::log(p) : std::log(1.0 - p);
        break;
      }
      case Family::Ordinal: {
        const double eta = th[2] * x1[i] + th[3] * x2[i];
        const double f1 = sigmoid(th[0] - eta), f2 = sigmoid(th[1] - eta);
        const double p = y[i] == 0.0 ? f1 : (y[i] == 1.0 ? f2 - f1 : 1.0 - f2);
        ll += std::log(p);
        break;
      }
      case Family::Multinomial: {
        const double e1 = th[0] + th[1] * x1[i] + th[2] * x2[i];
        const double e2 = th[3] + th[4] * x1[i] + th[5] * x2[i];
        const double lz = std::log(1.0 + std::exp(e1) + std::exp(e2));
        ll += (y[i] == 0.0 ? 0.0 : (y[i] == 1.0 ? e1 : e2)) - lz;
        break;
      }
      case Family::Gamma: {
        const double mu = std::exp(th[0] + th[1] * x1[i] + th[2] * x2[i]);
        const double k = std::exp(th[3]);
        ll += k * std::log(k / mu) + (k - 1.0) * std::log(y[i]) - k * y[i] / mu -
              std::lgamma(k);
        break;
      }
      case Family::Gaussian: {
        const double mu = th[0] + th[1] * x1[i] + th[2] * x2[i];
        const double sd = std::exp(th[3]);
        const double r = (y[i] - mu) / sd;
        ll += -0.5 * std::log(2.0 * M_PI) - std::log(sd) - 0.5 * r * r;
        break;
      }
    }
  }
  return ll;
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd a = x, b = x;
    a[j] += h;
    b[j] -= h;
    g[j] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

// Brute-force maximizer: a coarse grid over the first coordinates picks the
// start, then Newton steps on finite-difference derivatives with halving.
inline Eigen::VectorXd oracle_fit(const GlmFixture& f) {
  auto ll = [&](const Eigen::VectorXd& th) { return oracle_log_likelihood(f, th); };
  Eigen::VectorXd x;
  const auto y = f.frame.column("y");
  double ybar = 0.0;
  for (double v : y) ybar += v / static_cast<double>(y.size());
  switch (f.family) {
    case Family::Binomial: x = Eigen::VectorXd::Zero(3); break;
    case Family::Ordinal: x = Eigen::VectorXd::Zero(4); x[0] = -1.0; x[1] = 1.0; break;
    case Family::Multinomial: x = Eigen::VectorXd::Zero(6); break;
    case Family::Gamma: x = Eigen::VectorXd::Zero(4); x[0] = std::log(ybar); break;
    case Family::Gaussian: x = Eigen::VectorXd::Zero(4); x[0] = ybar; break;
  }
  // Grid over the slope coordinates.
  const Eigen::Index s0 = f.family == Family::Ordinal ? 2 : 1;
  Eigen::VectorXd best = x;
  double best_ll = ll(x);
  for (int a = -8; a <= 8; ++a) {
    for (int b = -8; b <= 8; ++b) {
      Eigen::VectorXd c = x;
      c[s0] = 0.25 * a;
      c[s0 + 1] = 0.25 * b;
      const double v = ll(c);
      if (std::isfinite(v) && v > best_ll) {
        best_ll = v;
        best = c;
      }
    }
  }
  x = best;
  for (int it = 0; it < 500; ++it) {
    const Eigen::VectorXd g = fd_gradient(ll, x, 1e-5);
    Eigen::MatrixXd hess(x.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Eigen::VectorXd a = x, b = x;
      a[j] += 1e-4;
      b[j] -= 1e-4;
      hess.col(j) = (fd_gradient(ll, a, 1e-5) - fd_gradient(ll, b, 1e-5)) / 2e-4;
    }
    hess = 0.5 * (hess + hess.transpose()).eval();
    Eigen::VectorXd step = -hess.ldlt().solve(g);
    if (!step.allFinite() || g.dot(step) <= 0) step = 0.1 * g;
    const double cur = ll(x);
    double scale = 1.0;
    Eigen::VectorXd next = x + step;
    while (!(ll(next) >= cur) && scale > 1e-12) {
      scale *= 0.5;
      next = x + scale * step;
    }
    const double change = (next - x).cwiseAbs().maxCoeff();
    x = next;
    if (change < 1e-13) break;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Two-day system with a binary covariate and saturated (tabular) models.

struct TabularSystem {
  rdg::FittedModelSet models;
  rdg::WeightedSampler sampler{{rdg::VarRow{}}};
  std::array<double, 3> exact{};  // gamma(0..2) by path enumeration
};

inline rdg::stats::FittedModel set_parameters(const ModelSpec& spec, const Frame& frame,
                                               const std::vector<double>& theta) {
  const auto m = rdg::stats::fit_glm(spec, frame);
  return rdg::stats::with_parameters(
      m, Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size())));
}

/// P(L1 = 1) = q; logit P(L2 = 1 | L1) = a0 + a1 L1;
/// logit P(S_t = 1 | L_t) = h0 + h1 L + h2 t + h3 L t.
inline TabularSystem tabular_system(double q, std::array<double, 2> a, std::array<double, 4> h) {
  TabularSystem s;
  Frame lf;
  lf.set("lstar", {0, 1, 0, 1});
  lf.set("lstar_lag", {0, 0, 1, 1});
  const ModelSpec lspec{"lstar", Family::Binomial, "lstar", {TermSpec::linear("lstar_lag")}};
  Frame hf;
  hf.set("event", {0, 1, 0, 1, 0, 1, 0, 1});
  hf.set("lstar", {0, 0, 1, 1, 0, 0, 1, 1});
  hf.set("t", {1, 1, 1, 1, 2, 2, 2, 2});
  const ModelSpec hspec{"hazard", Family::Binomial, "event",
                        {TermSpec::linear("lstar"), TermSpec::linear("t"),
                         TermSpec::interaction(TermSpec::linear("lstar"), TermSpec::linear("t"))}};
  s.models.era = rdg::Arm::Brand;
  s.models.spec.era = rdg::Arm::Brand;
  s.models.spec.covariates = {{lspec, "lstar", "", 0.0, false}};
  s.models.spec.hazard = hspec;
  s.models.covariates = {set_parameters(lspec, lf, {a[0], a[1]})};
  s.models.hazard = set_parameters(hspec, hf, {h[0], h[1], h[2], h[3]});

  rdg::VarRow r0{}, r1{};
  r1[rdg::kLstar] = r1[rdg::kRxb] = r1[rdg::kLstarLag] = r1[rdg::kRxbLag] = 1.0;
  s.sampler = rdg::WeightedSampler({r0, r1}, {1.0 - q, q});

  // Enumerate (L1, S1, L2, S2); S2 is summed over only for survivors of day 1.
  auto haz = [&](int l, int t) { return sigmoid(h[0] + h[1] * l + h[2] * t + h[3] * l * t); };
  double g1 = 0.0, g2 = 0.0;
  for (int l1 = 0; l1 <= 1; ++l1) {
    const double p1 = l1 ? q : 1.0 - q;
    for (int s1 = 0; s1 <= 1; ++s1) {
      const double ps1 = s1 ? haz(l1, 1) : 1.0 - haz(l1, 1);
      if (s1 == 0) g1 += p1 * ps1;
      for (int l2 = 0; l2 <= 1; ++l2) {
        const double pl2 = sigmoid(a[0] + a[1] * l1);
        const double p2 = l2 ? pl2 : 1.0 - pl2;
        for (int s2 = 0; s2 <= 1; ++s2) {
          const double ps2 = s2 ? haz(l2, 2) : 1.0 - haz(l2, 2);
          if (s1 == 0 && s2 == 0) g2 += p1 * ps1 * p2 * ps2;
        }
      }
    }
  }
  s.exact = {1.0, g1, g2};
  return s;
}

/// The tabular system used by the acceptance run.
inline TabularSystem reference_tabular_system() {
  return tabular_system(0.4, {-0.5, 1.5}, {-2.0, 0.8, 0.3, -0.4});
}

// ---------------------------------------------------------------------------
// Constant daily hazard with inert covariates.

inline rdg::FittedModelSet constant_hazard_models(double lambda) {
  Frame hf;
  hf.set("event", {0, 1});
  const ModelSpec hspec{"hazard", Family::Binomial, "event", {}};
  Frame lf;
  lf.set("lstar", {0, 1, 0, 1});
  lf.set("lstar_lag", {0, 0, 1, 1});
  const ModelSpec lspec{"lstar", Family::Binomial, "lstar", {TermSpec::linear("lstar_lag")}};
  rdg::FittedModelSet m;
  m.spec.covariates = {{lspec, "lstar", "", 0.0, false}};
  m.spec.hazard = hspec;
  m.covariates = {set_parameters(lspec, lf, {0.3, -0.2})};
  m.hazard = set_parameters(hspec, hf, {std::log(lambda / (1.0 - lambda))});
  return m;
}

/// sum_{t=1}^{T} (1 - lambda)^t
inline double geometric_rmst(double lambda, int horizon) {
  const double r = 1.0 - lambda;
  return r * (1.0 - std::pow(r, horizon)) / lambda;
}

/// Standard deviation of one path's contribution sum_t I(T > t) when the
/// failure day T is geometric with parameter lambda, truncated at horizon.
inline double geometric_rmst_sd(double lambda, int horizon) {
  double m1 = 0.0, m2 = 0.0, alive = 1.0;
  for (int k = 0; k <= horizon; ++k) {
    // P(contribution = k): fail on day k + 1, or survive all days when k = horizon.
    const double p = k < horizon ? alive * lambda : alive;
    m1 += p * k;
    m2 += p * k * static_cast<double>(k);
    alive *= 1.0 - lambda;
  }
  return std::sqrt(m2 - m1 * m1);
}

// ---------------------------------------------------------------------------
// Kaplan-Meier hand table: 12 patients with ties and censoring.

inline std::vector<rdg::TimeToEvent> km_fixture() {
  return {{2, true}, {3, true}, {3, true}, {3, false}, {5, true},  {6, false},
          {6, true}, {8, true}, {8, true}, {9, false}, {11, true}, {12, false}};
}

// S(t), t = 0..12, worked by hand:
//   t  at risk  events  S
//   2    12       1     11/12
//   3    11       2     11/12 * 9/11 = 3/4
//   5     8       1     3/4 * 7/8 = 21/32
//   6     7       1     21/32 * 6/7 = 9/16
//   8     5       2     9/16 * 3/5 = 27/80
//  11     2       1     27/80 * 1/2 = 27/160
inline std::vector<double> km_fixture_table() {
  return {1.0,         1.0,         11.0 / 12.0, 0.75,        0.75,
          21.0 / 32.0, 9.0 / 16.0,  9.0 / 16.0,  27.0 / 80.0, 27.0 / 80.0,
          27.0 / 80.0, 27.0 / 160.0, 27.0 / 160.0};
}

}  // namespace fixtures

#endif  // RDGCOMP_TESTS_FIXTURES_HPP
