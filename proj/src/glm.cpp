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

#include "rdgcomp/stats/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

namespace rdg::stats {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Everything the likelihood needs, restricted to active columns and to
/// rows with positive weight.
struct Problem {
  Family family = Family::Binomial;
  MatrixXd x;
  VectorXd y;  // coded level index for ordinal/multinomial
  VectorXd w;
  int levels = 2;
  double dispersion = 1.0;

  Index p() const { return x.cols(); }
  Index n_params() const {
    switch (family) {
      case Family::Ordinal: return levels - 1 + p();
      case Family::Multinomial: return (levels - 1) * p();
      default: return p();
    }
  }
};

struct Evaluation {
  double ll = 0.0;
  VectorXd grad;
  MatrixXd hess;
};

bool cutpoints_increasing(const Problem& pr, const VectorXd& theta) {
  if (pr.family != Family::Ordinal) return true;
  for (int j = 1; j < pr.levels - 1; ++j) {
    if (!(theta[j] > theta[j - 1])) return false;
  }
  return true;
}

/// X' diag(w) X for non-negative w.
MatrixXd weighted_gram(const MatrixXd& x, const VectorXd& w) {
  const MatrixXd xw = x.array().colwise() * w.array().sqrt();
  MatrixXd g = MatrixXd::Zero(x.cols(), x.cols());
  g.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
  return g.selfadjointView<Eigen::Lower>();
}

Evaluation evaluate(const Problem& pr, const VectorXd& theta, bool derivatives) {
  Evaluation ev;
  const Index n = pr.x.rows();
  const Index p = pr.p();
  const Index q = pr.n_params();
  if (derivatives) {
    ev.grad = VectorXd::Zero(q);
    ev.hess = MatrixXd::Zero(q, q);
  }
  switch (pr.family) {
    case Family::Binomial: {
      const VectorXd eta = pr.x * theta;
      VectorXd resid(n), curv(n);
      for (Index i = 0; i < n; ++i) {
        // one exponential serves both softplus and the mean
        const double e = std::exp(-std::abs(eta[i]));
        const double mu = eta[i] >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        ev.ll += pr.w[i] * (pr.y[i] * eta[i] - std::max(eta[i], 0.0) - std::log1p(e));
        resid[i] = pr.w[i] * (pr.y[i] - mu);
        curv[i] = pr.w[i] * mu * (1.0 - mu);
      }
      if (derivatives) {
        ev.grad.noalias() = pr.x.transpose() * resid;
        ev.hess = -weighted_gram(pr.x, curv);
      }
      break;
    }
    case Family::Gamma: {
      const double a = pr.dispersion;
      const VectorXd eta = pr.x * theta;
      VectorXd resid(n), curv(n);
      for (Index i = 0; i < n; ++i) {
        const double mu = std::exp(eta[i]);
        const double r = pr.y[i] / mu;
        ev.ll += pr.w[i] * (a * std::log(a * r) - a * r - std::log(pr.y[i]) -
                            std::lgamma(a));
        resid[i] = pr.w[i] * a * (r - 1.0);
        curv[i] = pr.w[i] * a * r;
      }
      if (derivatives) {
        ev.grad.noalias() = pr.x.transpose() * resid;
        ev.hess = -weighted_gram(pr.x, curv);
      }
      break;
    }
    case Family::Gaussian: {
      const double s2 = pr.dispersion * pr.dispersion;
      const VectorXd r = pr.y - pr.x * theta;
      for (Index i = 0; i < n; ++i) {
        ev.ll -= 0.5 * pr.w[i] *
                 (std::log(2.0 * std::numbers::pi * s2) + r[i] * r[i] / s2);
      }
      if (derivatives) {
        ev.grad = pr.x.transpose() * pr.w.cwiseProduct(r) / s2;
        ev.hess = -weighted_gram(pr.x, pr.w) / s2;
      }
      break;
    }
    case Family::Multinomial: {
      const int k_free = pr.levels - 1;
      MatrixXd eta(n, k_free);
      for (int k = 0; k < k_free; ++k) {
        eta.col(k) = pr.x * theta.segment(k * p, p);
      }
      MatrixXd prob(n, k_free);
      MatrixXd resid(n, k_free);
      for (Index i = 0; i < n; ++i) {
        double m = 0.0;
        for (int k = 0; k < k_free; ++k) m = std::max(m, eta(i, k));
        double denom = std::exp(-m);
        for (int k = 0; k < k_free; ++k) denom += std::exp(eta(i, k) - m);
        const int yi = static_cast<int>(pr.y[i]);
        const double eta_y = yi == 0 ? 0.0 : eta(i, yi - 1);
        ev.ll += pr.w[i] * (eta_y - m - std::log(denom));
        for (int k = 0; k < k_free; ++k) {
          prob(i, k) = std::exp(eta(i, k) - m) / denom;
          resid(i, k) = pr.w[i] * ((yi == k + 1 ? 1.0 : 0.0) - prob(i, k));
        }
      }
      if (derivatives) {
        for (int j = 0; j < k_free; ++j) {
          ev.grad.segment(j * p, p) = pr.x.transpose() * resid.col(j);
          for (int k = j; k < k_free; ++k) {
            VectorXd c(n);
            for (Index i = 0; i < n; ++i) {
              c[i] = pr.w[i] * prob(i, j) * ((j == k ? 1.0 : 0.0) - prob(i, k));
            }
            const MatrixXd block = -(pr.x.transpose() * c.asDiagonal() * pr.x);
            ev.hess.block(j * p, k * p, p, p) = block;
            if (k != j) ev.hess.block(k * p, j * p, p, p) = block.transpose();
          }
        }
      }
      break;
    }
    case Family::Ordinal: {
      const int nc = pr.levels - 1;
      const VectorXd eta = pr.x * theta.tail(p);
      VectorXd d_beta(n), c_beta(n);
      MatrixXd cross = MatrixXd::Zero(nc, p);
      for (Index i = 0; i < n; ++i) {
        const int j = static_cast<int>(pr.y[i]);
        const double a = j < nc ? theta[j] - eta[i] : kInf;
        const double b = j > 0 ? theta[j - 1] - eta[i] : -kInf;
        const double fa_cdf = j < nc ? logistic(a) : 1.0;
        const double fb_cdf = j > 0 ? logistic(b) : 0.0;
        // upper tail form keeps precision when both cdfs are near 1
        double prob = fa_cdf - fb_cdf;
        if (j > 0 && j < nc && fb_cdf > 0.5) {
          prob = logistic(-b) - logistic(-a);
        }
        if (!(prob > 0)) prob = std::numeric_limits<double>::min();
        ev.ll += pr.w[i] * std::log(prob);
        if (!derivatives) continue;
        const double fa = fa_cdf * (1.0 - fa_cdf);
        const double fb = fb_cdf * (1.0 - fb_cdf);
        const double A = fa / prob, B = fb / prob;
        const double A2 = fa * (1.0 - 2.0 * fa_cdf) / prob;
        const double B2 = fb * (1.0 - 2.0 * fb_cdf) / prob;
        const double w = pr.w[i];
        d_beta[i] = -w * (A - B);
        c_beta[i] = w * ((A2 - B2) - (A - B) * (A - B));
        if (j < nc) {
          ev.grad[j] += w * A;
          ev.hess(j, j) += w * (A2 - A * A);
          cross.row(j) += w * (-A2 + A * (A - B)) * pr.x.row(i);
        }
        if (j > 0) {
          ev.grad[j - 1] -= w * B;
          ev.hess(j - 1, j - 1) += w * (-B2 - B * B);
          cross.row(j - 1) += w * (B2 - B * (A - B)) * pr.x.row(i);
        }
        if (j > 0 && j < nc) {
          ev.hess(j, j - 1) += w * A * B;
          ev.hess(j - 1, j) += w * A * B;
        }
      }
      if (derivatives) {
        ev.grad.tail(p) = pr.x.transpose() * d_beta;
        ev.hess.bottomRightCorner(p, p) = pr.x.transpose() * c_beta.asDiagonal() * pr.x;
        ev.hess.topRightCorner(nc, p) = cross;
        ev.hess.bottomLeftCorner(p, nc) = cross.transpose();
      }
      break;
    }
  }
  return ev;
}

/// Ridge applies to slope-like parameters only (not ordinal cutpoints).
VectorXd ridge_mask(const Problem& pr) {
  VectorXd mask = VectorXd::Ones(pr.n_params());
  if (pr.family == Family::Ordinal) mask.head(pr.levels - 1).setZero();
  return mask;
}

struct NewtonResult {
  VectorXd theta;
  Evaluation ev;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

NewtonResult newton(const Problem& pr, VectorXd theta, double ridge,
                    const FitOptions& opt) {
  NewtonResult res;
  const VectorXd mask = ridge_mask(pr);
  auto penalized = [&](const VectorXd& th, double ll) {
    return ll - 0.5 * ridge * th.cwiseProduct(mask).squaredNorm();
  };
  Evaluation ev = evaluate(pr, theta, true);
  double obj = penalized(theta, ev.ll);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    res.iterations = it;
    VectorXd g = ev.grad - ridge * theta.cwiseProduct(mask);
    MatrixXd info = -ev.hess;
    info.diagonal() += ridge * mask;
    VectorXd step;
    double jitter = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      MatrixXd m = info;
      if (jitter > 0) m.diagonal().array() += jitter;
      Eigen::LLT<MatrixXd> llt(m);
      if (llt.info() == Eigen::Success) {
        step = llt.solve(g);
        if (step.allFinite()) break;
      }
      jitter = jitter == 0.0 ? 1e-10 * std::max(1.0, info.diagonal().cwiseAbs().maxCoeff())
                             : jitter * 100.0;
      step.resize(0);
    }
    if (step.size() == 0) break;
    double t = 1.0;
    VectorXd next;
    Evaluation next_ev;
    double next_obj = -kInf;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      next = theta + t * step;
      if (cutpoints_increasing(pr, next)) {
        // full steps are usually accepted, so derivatives come along
        next_ev = evaluate(pr, next, half == 0);
        next_obj = penalized(next, next_ev.ll);
        if (std::isfinite(next_obj) &&
            next_obj >= obj - 1e-12 * std::max(1.0, std::abs(obj))) {
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) {
      // no ascent direction left at machine precision
      res.converged = g.cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, std::abs(obj));
      res.trace.push_back(-2.0 * obj);
      break;
    }
    const double change = (t * step).cwiseAbs().maxCoeff();
    const double dev_old = -2.0 * obj, dev_new = -2.0 * next_obj;
    theta = next;
    obj = next_obj;
    res.trace.push_back(dev_new);
    ev = next_ev.grad.size() > 0 ? std::move(next_ev) : evaluate(pr, theta, true);
    if (change < opt.coefficient_tolerance ||
        std::abs(dev_new - dev_old) / (std::abs(dev_new) + 0.1) < opt.deviance_tolerance) {
      res.converged = true;
      break;
    }
  }
  res.theta = theta;
  res.ev = std::move(ev);
  return res;
}

/// Greedy column selection on the weighted Gram matrix: a column is kept
/// when its residual after projection on the kept columns is non-negligible.
std::vector<bool> independent_columns(const MatrixXd& x, const VectorXd& w) {
  const MatrixXd gram = x.transpose() * w.asDiagonal() * x;
  const Index p = gram.rows();
  std::vector<bool> keep(static_cast<std::size_t>(p), false);
  std::vector<Index> kept;
  MatrixXd l = MatrixXd::Zero(p, p);
  for (Index j = 0; j < p; ++j) {
    const double gjj = gram(j, j);
    if (!(gjj > 0)) continue;
    const Index k = static_cast<Index>(kept.size());
    VectorXd z(k);
    for (Index a = 0; a < k; ++a) {
      double s = gram(kept[static_cast<std::size_t>(a)], j);
      for (Index b = 0; b < a; ++b) s -= l(a, b) * z[b];
      z[a] = s / l(a, a);
    }
    const double resid = gjj - z.squaredNorm();
    if (resid > 1e-9 * gjj) {
      for (Index b = 0; b < k; ++b) l(k, b) = z[b];
      l(k, k) = std::sqrt(resid);
      kept.push_back(j);
      keep[static_cast<std::size_t>(j)] = true;
    }
  }
  return keep;
}

double gamma_shape_mle(const VectorXd& y, const VectorXd& mu, const VectorXd& w) {
  double s = 0.0, total = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double r = y[i] / mu[i];
    s += w[i] * (r - std::log(r) - 1.0);
    total += w[i];
  }
  s /= total;
  if (!(s > 1e-12)) return 1e6;  // essentially deterministic outcome
  // solve log(a) - digamma(a) = s
  double a = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  for (int it = 0; it < 100; ++it) {
    const double f = std::log(a) - boost::math::digamma(a) - s;
    const double df = 1.0 / a - boost::math::trigamma(a);
    double next = a - f / df;
    if (!(next > 0)) next = a / 2.0;
    if (std::abs(next - a) < 1e-12 * a) {
      a = next;
      break;
    }
    a = next;
  }
  return a;
}

std::vector<std::size_t> positive_rows(const Frame& data,
                                       std::span<const double> weights) {
  std::vector<std::size_t> rows;
  rows.reserve(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (weights.empty()) {
      rows.push_back(i);
    } else if (weights[i] < 0 || !std::isfinite(weights[i])) {
      throw std::invalid_argument("weights must be finite and non-negative");
    } else if (weights[i] > 0) {
      rows.push_back(i);
    }
  }
  return rows;
}

/// The given rows of the variables `spec` reads.
Frame model_rows(const ModelSpec& spec, const Frame& data, std::span<const std::size_t> rows) {
  std::vector<std::string> needed{spec.response};
  for (const auto& t : spec.terms) {
    for (auto& v : t.variables()) needed.push_back(std::move(v));
  }
  Frame sub;
  for (const auto& name : needed) {
    if (sub.has(name)) continue;
    const auto col = data.column(name);
    std::vector<double> values(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) values[i] = col[rows[i]];
    sub.set(name, std::move(values));
  }
  return sub;
}

/// Active-column design and coded response for `model` on `data`.
Problem make_problem(const FittedModel& model, const Frame& data,
                     std::span<const double> weights) {
  Problem pr;
  pr.family = model.spec.family;
  pr.dispersion = model.dispersion;
  pr.levels = static_cast<int>(model.levels.size());
  const auto rows = positive_rows(data, weights);
  const bool all = rows.size() == data.rows();
  const Frame sub = all ? Frame() : model_rows(model.spec, data, rows);
  const Frame& f = all ? data : sub;
  const MatrixXd full = design_matrix(model, f);
  std::vector<Index> cols;
  for (std::size_t j = 0; j < model.active.size(); ++j) {
    if (model.active[j]) cols.push_back(static_cast<Index>(j));
  }
  pr.x = full(Eigen::all, cols);
  const auto y = f.column(model.spec.response);
  pr.y.resize(static_cast<Index>(rows.size()));
  pr.w.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    pr.w[static_cast<Index>(i)] = weights.empty() ? 1.0 : weights[rows[i]];
    double v = y[i];
    if (pr.family == Family::Ordinal || pr.family == Family::Multinomial) {
      const auto it = std::find(model.levels.begin(), model.levels.end(), v);
      if (it == model.levels.end()) {
        throw SchemaError("response level " + std::to_string(v) +
                          " was not seen at fit time");
      }
      v = static_cast<double>(it - model.levels.begin());
    }
    pr.y[static_cast<Index>(i)] = v;
  }
  return pr;
}

void check_response(const ModelSpec& spec, const VectorXd& y) {
  for (Index i = 0; i < y.size(); ++i) {
    const double v = y[i];
    bool ok = std::isfinite(v);
    switch (spec.family) {
      case Family::Binomial: ok = ok && (v == 0.0 || v == 1.0); break;
      case Family::Gamma: ok = ok && v > 0.0; break;
      default: break;
    }
    if (!ok) {
      throw std::invalid_argument("model '" + spec.name + "': response value " +
                                  std::to_string(v) + " outside the support of " +
                                  std::string(to_string(spec.family)));
    }
  }
}

void store_parameters(FittedModel& m, const VectorXd& theta) {
  const Index width = static_cast<Index>(m.width());
  std::vector<Index> cols;
  for (std::size_t j = 0; j < m.active.size(); ++j) {
    if (m.active[j]) cols.push_back(static_cast<Index>(j));
  }
  const Index p = static_cast<Index>(cols.size());
  auto scatter = [&](const VectorXd& packed) {
    VectorXd full = VectorXd::Zero(width);
    for (Index k = 0; k < p; ++k) full[cols[static_cast<std::size_t>(k)]] = packed[k];
    return full;
  };
  switch (m.spec.family) {
    case Family::Ordinal: {
      const Index nc = static_cast<Index>(m.levels.size()) - 1;
      m.cutpoints.assign(theta.data(), theta.data() + nc);
      m.beta = scatter(theta.tail(p));
      break;
    }
    case Family::Multinomial: {
      const Index k_free = static_cast<Index>(m.levels.size()) - 1;
      m.beta_multi = MatrixXd::Zero(k_free, width);
      for (Index k = 0; k < k_free; ++k) {
        m.beta_multi.row(k) = scatter(theta.segment(k * p, p)).transpose();
      }
      break;
    }
    default: m.beta = scatter(theta); break;
  }
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::Binomial: return "binomial-logit";
    case Family::Ordinal: return "ordinal-proportional-odds";
    case Family::Multinomial: return "multinomial-logit";
    case Family::Gamma: return "gamma-log";
    case Family::Gaussian: return "gaussian-identity";
  }
  return "?";
}

Family parse_family(std::string_view text) {
  for (Family f : {Family::Binomial, Family::Ordinal, Family::Multinomial,
                   Family::Gamma, Family::Gaussian}) {
    if (to_string(f) == text) return f;
  }
  throw std::invalid_argument("unknown model family '" + std::string(text) + "'");
}

MatrixXd design_matrix(const FittedModel& model, const Frame& data) {
  const Index n = static_cast<Index>(data.rows());
  MatrixXd x(n, static_cast<Index>(model.width()));
  Index col = 0;
  if (model.has_intercept()) x.col(col++).setOnes();
  for (const Term& term : model.terms) {
    const Index w = static_cast<Index>(term.width());
    if (w == 0) continue;
    term.expand(data, x.middleCols(col, w));
    col += w;
  }
  return x;
}

FittedModel fit_glm(const ModelSpec& spec, const Frame& data,
                    std::span<const double> weights, const FitOptions& options) {
  if (!weights.empty() && weights.size() != data.rows()) {
    throw std::invalid_argument("weights length does not match data rows");
  }
  const auto rows = positive_rows(data, weights);
  if (rows.empty()) {
    throw std::invalid_argument("model '" + spec.name + "': no rows with positive weight");
  }
  const bool all = rows.size() == data.rows();
  const Frame sub = all ? Frame() : model_rows(spec, data, rows);
  const Frame& f = all ? data : sub;
  std::vector<double> w(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    w[i] = weights.empty() ? 1.0 : weights[rows[i]];
  }

  FittedModel m;
  m.spec = spec;
  for (const auto& ts : spec.terms) m.terms.push_back(Term::resolve(ts, f, w));
  if (m.has_intercept()) m.columns.push_back("(Intercept)");
  for (const auto& t : m.terms) {
    for (auto& c : t.column_names()) m.columns.push_back(std::move(c));
  }

  const Index n = static_cast<Index>(rows.size());
  const VectorXd wv = Eigen::Map<const VectorXd>(w.data(), n);
  VectorXd y(n);
  {
    const auto col = f.column(spec.response);
    for (Index i = 0; i < n; ++i) y[i] = col[static_cast<std::size_t>(i)];
  }
  check_response(spec, y);
  m.n_obs = wv.sum();

  // rank check always includes the implicit intercept
  MatrixXd x_full = design_matrix(m, f);
  {
    MatrixXd check = x_full;
    if (!m.has_intercept()) {
      check.resize(n, x_full.cols() + 1);
      check.col(0).setOnes();
      check.rightCols(x_full.cols()) = x_full;
    }
    auto keep = independent_columns(check, wv);
    if (!m.has_intercept()) keep.erase(keep.begin());
    m.active = keep;
  }
  std::vector<Index> cols;
  for (std::size_t j = 0; j < m.active.size(); ++j) {
    if (m.active[j]) {
      cols.push_back(static_cast<Index>(j));
    } else {
      m.warnings.push_back("model '" + spec.name + "': dropped aliased column " +
                           m.columns[j]);
    }
  }

  Problem pr;
  pr.family = spec.family;
  pr.x = x_full(Eigen::all, cols);
  pr.w = wv;
  pr.y = y;
  const Index p = pr.p();
  const double total = wv.sum();

  if (spec.family == Family::Ordinal || spec.family == Family::Multinomial) {
    for (Index i = 0; i < n; ++i) m.levels.push_back(y[i]);
    std::sort(m.levels.begin(), m.levels.end());
    m.levels.erase(std::unique(m.levels.begin(), m.levels.end()), m.levels.end());
    if (m.levels.size() < 2) {
      throw std::invalid_argument("model '" + spec.name +
                                  "': categorical response has a single level");
    }
    for (Index i = 0; i < n; ++i) {
      pr.y[i] = static_cast<double>(
          std::lower_bound(m.levels.begin(), m.levels.end(), y[i]) - m.levels.begin());
    }
    pr.levels = static_cast<int>(m.levels.size());
  }

  // starting values
  VectorXd theta = VectorXd::Zero(pr.n_params());
  std::vector<double> level_weight(m.levels.size(), 0.0);
  for (Index i = 0; i < n && !m.levels.empty(); ++i) {
    level_weight[static_cast<std::size_t>(pr.y[i])] += wv[i];
  }
  const bool intercept_active = m.has_intercept() && m.active[0];
  switch (spec.family) {
    case Family::Binomial: {
      const double mean = std::clamp(wv.dot(y) / total, 1e-6, 1.0 - 1e-6);
      if (intercept_active) theta[0] = std::log(mean / (1.0 - mean));
      break;
    }
    case Family::Gamma:
      if (intercept_active) theta[0] = std::log(wv.dot(y) / total);
      break;
    case Family::Ordinal: {
      double cum = 0.0;
      for (int j = 0; j + 1 < pr.levels; ++j) {
        cum += level_weight[static_cast<std::size_t>(j)];
        const double c = std::clamp(cum / total, 1e-6, 1.0 - 1e-6);
        theta[j] = std::log(c / (1.0 - c)) + 1e-6 * j;
      }
      break;
    }
    case Family::Multinomial:
      if (intercept_active) {
        const double ref = std::max(level_weight[0], 0.5);
        for (int k = 1; k < pr.levels; ++k) {
          theta[(k - 1) * p] = std::log(std::max(level_weight[static_cast<std::size_t>(k)], 0.5) / ref);
        }
      }
      break;
    case Family::Gaussian: break;
  }

  if (options.start.size() == theta.size() && options.start.allFinite() &&
      cutpoints_increasing(pr, options.start) &&
      std::isfinite(evaluate(pr, options.start, false).ll)) {
    theta = options.start;
  }
  NewtonResult fit = newton(pr, theta, 0.0, options);
  bool separated = false;
  if (spec.family == Family::Binomial) {
    const VectorXd eta = pr.x * fit.theta;
    separated = eta.cwiseAbs().maxCoeff() > 30.0;
  } else if (spec.family == Family::Ordinal || spec.family == Family::Multinomial) {
    separated = !fit.converged || !fit.theta.allFinite() ||
                fit.theta.cwiseAbs().maxCoeff() > 30.0;
  }
  const bool ridged =
      separated || (!fit.converged && spec.family == Family::Binomial);
  if (ridged) {
    m.warnings.push_back("model '" + spec.name +
                         "': separation detected; refit with ridge penalty " +
                         std::to_string(options.separation_ridge));
    fit = newton(pr, theta, options.separation_ridge, options);
  }
  if (!fit.converged) {
    throw ConvergenceError("model '" + spec.name + "' (" +
                               std::string(to_string(spec.family)) +
                               ") did not converge in " +
                               std::to_string(fit.iterations) + " iterations",
                           fit.trace);
  }
  m.iterations = fit.iterations;

  // dispersion, then refresh the likelihood and information at the MLE
  if (spec.family == Family::Gamma) {
    const VectorXd mu = (pr.x * fit.theta).array().exp();
    pr.dispersion = gamma_shape_mle(y, mu, wv);
  } else if (spec.family == Family::Gaussian) {
    const VectorXd r = y - pr.x * fit.theta;
    pr.dispersion = std::sqrt(wv.dot(r.cwiseProduct(r)) / total);
    if (!(pr.dispersion > 0)) pr.dispersion = 1e-12;
  }
  m.dispersion = pr.dispersion;
  const Evaluation final_ev = evaluate(pr, fit.theta, true);
  m.log_likelihood = final_ev.ll;
  {
    MatrixXd info = -final_ev.hess;
    if (ridged) {
      info.diagonal() += options.separation_ridge * ridge_mask(pr);
    }
    Eigen::LDLT<MatrixXd> ldlt(info);
    m.covariance = ldlt.solve(MatrixXd::Identity(info.rows(), info.cols()));
  }
  store_parameters(m, fit.theta);
  return m;
}

VectorXd parameters(const FittedModel& model) {
  std::vector<Index> cols;
  for (std::size_t j = 0; j < model.active.size(); ++j) {
    if (model.active[j]) cols.push_back(static_cast<Index>(j));
  }
  const Index p = static_cast<Index>(cols.size());
  switch (model.spec.family) {
    case Family::Ordinal: {
      const Index nc = static_cast<Index>(model.cutpoints.size());
      VectorXd theta(nc + p);
      for (Index j = 0; j < nc; ++j) theta[j] = model.cutpoints[static_cast<std::size_t>(j)];
      for (Index k = 0; k < p; ++k) theta[nc + k] = model.beta[cols[static_cast<std::size_t>(k)]];
      return theta;
    }
    case Family::Multinomial: {
      const Index k_free = model.beta_multi.rows();
      VectorXd theta(k_free * p);
      for (Index k = 0; k < k_free; ++k) {
        for (Index c = 0; c < p; ++c) {
          theta[k * p + c] = model.beta_multi(k, cols[static_cast<std::size_t>(c)]);
        }
      }
      return theta;
    }
    default: {
      VectorXd theta(p);
      for (Index k = 0; k < p; ++k) theta[k] = model.beta[cols[static_cast<std::size_t>(k)]];
      return theta;
    }
  }
}

FittedModel with_parameters(const FittedModel& model, const VectorXd& theta) {
  FittedModel m = model;
  if (theta.size() != parameters(model).size()) {
    throw std::invalid_argument("parameter vector has the wrong length");
  }
  store_parameters(m, theta);
  return m;
}

double log_likelihood(const FittedModel& model, const Frame& data,
                      std::span<const double> weights, const VectorXd& theta) {
  const Problem pr = make_problem(model, data, weights);
  if (!cutpoints_increasing(pr, theta)) return -kInf;
  return evaluate(pr, theta, false).ll;
}

VectorXd score(const FittedModel& model, const Frame& data,
               std::span<const double> weights, const VectorXd& theta) {
  const Problem pr = make_problem(model, data, weights);
  return evaluate(pr, theta, true).grad;
}

VectorXd standard_errors(const FittedModel& model) {
  return model.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

double linear_predictor(const FittedModel& model, std::span<const double> x) {
  double eta = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) eta += model.beta[static_cast<Index>(j)] * x[j];
  return eta;
}

Prediction predict_from_design(const FittedModel& model, std::span<const double> x) {
  if (x.size() != model.width()) {
    throw SchemaError("design row has " + std::to_string(x.size()) +
                      " columns, model expects " + std::to_string(model.width()));
  }
  Prediction out;
  out.family = model.spec.family;
  switch (model.spec.family) {
    case Family::Binomial: out.probability = logistic(linear_predictor(model, x)); break;
    case Family::Gamma:
      out.mean = std::exp(linear_predictor(model, x));
      out.dispersion = model.dispersion;
      break;
    case Family::Gaussian:
      out.mean = linear_predictor(model, x);
      out.dispersion = model.dispersion;
      break;
    case Family::Ordinal: {
      const double eta = linear_predictor(model, x);
      double previous = 0.0;
      for (double c : model.cutpoints) {
        const double cdf = logistic(c - eta);
        out.probabilities.push_back(cdf - previous);
        previous = cdf;
      }
      out.probabilities.push_back(1.0 - previous);
      break;
    }
    case Family::Multinomial: {
      const Index k_free = model.beta_multi.rows();
      std::vector<double> eta(static_cast<std::size_t>(k_free) + 1, 0.0);
      for (Index k = 0; k < k_free; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) s += model.beta_multi(k, static_cast<Index>(j)) * x[j];
        eta[static_cast<std::size_t>(k) + 1] = s;
      }
      const double m = *std::max_element(eta.begin(), eta.end());
      double denom = 0.0;
      for (double e : eta) denom += std::exp(e - m);
      for (double e : eta) out.probabilities.push_back(std::exp(e - m) / denom);
      break;
    }
  }
  return out;
}

Prediction predict(const FittedModel& model, const Frame& data, std::size_t row) {
  const std::size_t idx[] = {row};
  const MatrixXd x = design_matrix(model, data.select(idx));
  const VectorXd r = x.row(0).transpose();
  return predict_from_design(model, std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
}

double sample_gamma(double shape, double mean, Rng& rng) {
  double u = uniform01(rng);
  if (u <= 0.0) u = std::numeric_limits<double>::min();
  return boost::math::gamma_p_inv(shape, u) * mean / shape;
}

double sample_outcome(const Prediction& pred, const std::vector<double>& levels,
                      Rng& rng) {
  switch (pred.family) {
    case Family::Binomial: return uniform01(rng) < pred.probability ? 1.0 : 0.0;
    case Family::Gamma: return sample_gamma(pred.dispersion, pred.mean, rng);
    case Family::Gaussian: {
      double u = uniform01(rng);
      if (u <= 0.0) u = std::numeric_limits<double>::min();
      return pred.mean + pred.dispersion * boost::math::quantile(boost::math::normal(), u);
    }
    case Family::Ordinal:
    case Family::Multinomial: {
      const double u = uniform01(rng);
      double cum = 0.0;
      for (std::size_t k = 0; k + 1 < pred.probabilities.size(); ++k) {
        cum += pred.probabilities[k];
        if (u < cum) return levels.at(k);
      }
      return levels.back();
    }
  }
  return 0.0;
}

double sample_outcome(const FittedModel& model, const Frame& data,
                      std::size_t row, Rng& rng) {
  return sample_outcome(predict(model, data, row), model.levels, rng);
}

double outcome_cdf(const Prediction& pred, double y) {
  switch (pred.family) {
    case Family::Gamma:
      if (y <= 0) return 0.0;
      return boost::math::gamma_p(pred.dispersion, y * pred.dispersion / pred.mean);
    case Family::Gaussian:
      return boost::math::cdf(boost::math::normal(pred.mean, pred.dispersion), y);
    default:
      throw std::invalid_argument("outcome_cdf applies to continuous families");
  }
}

// ---- serialization ----

nlohmann::json to_json(const TermSpec& spec) {
  nlohmann::json j;
  switch (spec.kind) {
    case TermSpec::Kind::Linear: j["kind"] = "linear"; break;
    case TermSpec::Kind::Factor: j["kind"] = "factor"; break;
    case TermSpec::Kind::Spline: j["kind"] = "spline"; break;
    case TermSpec::Kind::Interaction: j["kind"] = "interaction"; break;
  }
  if (spec.kind == TermSpec::Kind::Interaction) {
    j["parts"] = {to_json(spec.parts.at(0)), to_json(spec.parts.at(1))};
  } else {
    j["variable"] = spec.variable;
  }
  if (spec.kind == TermSpec::Kind::Spline) j["df"] = spec.df;
  return j;
}

TermSpec term_spec_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind");
  if (kind == "linear") return TermSpec::linear(j.at("variable"));
  if (kind == "factor") return TermSpec::factor(j.at("variable"));
  if (kind == "spline") return TermSpec::spline(j.at("variable"), j.at("df"));
  if (kind == "interaction") {
    return TermSpec::interaction(term_spec_from_json(j.at("parts").at(0)),
                                 term_spec_from_json(j.at("parts").at(1)));
  }
  throw std::invalid_argument("unknown term kind '" + kind + "'");
}

namespace {

nlohmann::json term_to_json(const Term& t) {
  nlohmann::json j;
  j["spec"] = to_json(t.spec());
  if (!t.levels().empty()) j["levels"] = t.levels();
  if (t.spline()) {
    j["knots"] = {{"interior", t.spline()->interior_knots()},
                  {"lower", t.spline()->lower()},
                  {"upper", t.spline()->upper()}};
  }
  if (!t.parts().empty()) {
    j["parts"] = nlohmann::json::array();
    for (const auto& p : t.parts()) j["parts"].push_back(term_to_json(p));
  }
  return j;
}

Term term_from_json(const nlohmann::json& j) {
  std::vector<double> levels;
  if (j.contains("levels")) levels = j.at("levels").get<std::vector<double>>();
  std::optional<NaturalSpline> spline;
  if (j.contains("knots")) {
    const auto& k = j.at("knots");
    spline = NaturalSpline(k.at("interior").get<std::vector<double>>(),
                           k.at("lower"), k.at("upper"));
  }
  std::vector<Term> parts;
  if (j.contains("parts")) {
    for (const auto& p : j.at("parts")) parts.push_back(term_from_json(p));
  }
  return Term::from_parts(term_spec_from_json(j.at("spec")), std::move(levels),
                          std::move(spline), std::move(parts));
}

nlohmann::json matrix_to_json(const MatrixXd& m) {
  auto j = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    j.push_back(row);
  }
  return j;
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j.at(0).size()) : 0;
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

}  // namespace

nlohmann::json to_json(const FittedModel& m) {
  nlohmann::json j;
  j["name"] = m.spec.name;
  j["family"] = std::string(to_string(m.spec.family));
  j["response"] = m.spec.response;
  j["terms"] = nlohmann::json::array();
  for (const auto& t : m.terms) j["terms"].push_back(term_to_json(t));
  j["columns"] = m.columns;
  j["active"] = m.active;
  j["coefficients"] = std::vector<double>(m.beta.data(), m.beta.data() + m.beta.size());
  if (m.spec.family == Family::Multinomial) j["coefficients"] = matrix_to_json(m.beta_multi);
  if (!m.cutpoints.empty()) j["cutpoints"] = m.cutpoints;
  if (!m.levels.empty()) j["response_levels"] = m.levels;
  if (m.spec.family == Family::Gamma) j["shape"] = m.dispersion;
  if (m.spec.family == Family::Gaussian) j["sd"] = m.dispersion;
  j["standard_errors"] = [&] {
    const VectorXd se = standard_errors(m);
    return std::vector<double>(se.data(), se.data() + se.size());
  }();
  j["covariance"] = matrix_to_json(m.covariance);
  j["log_likelihood"] = m.log_likelihood;
  j["n_obs"] = m.n_obs;
  j["iterations"] = m.iterations;
  j["warnings"] = m.warnings;
  return j;
}

FittedModel model_from_json(const nlohmann::json& j) {
  FittedModel m;
  m.spec.name = j.at("name");
  m.spec.family = parse_family(j.at("family").get<std::string>());
  m.spec.response = j.at("response");
  for (const auto& t : j.at("terms")) {
    m.terms.push_back(term_from_json(t));
    m.spec.terms.push_back(m.terms.back().spec());
  }
  m.columns = j.at("columns").get<std::vector<std::string>>();
  m.active = j.at("active").get<std::vector<bool>>();
  if (m.spec.family == Family::Multinomial) {
    m.beta_multi = matrix_from_json(j.at("coefficients"));
  } else {
    const auto b = j.at("coefficients").get<std::vector<double>>();
    m.beta = Eigen::Map<const VectorXd>(b.data(), static_cast<Index>(b.size()));
  }
  if (j.contains("cutpoints")) m.cutpoints = j.at("cutpoints").get<std::vector<double>>();
  if (j.contains("response_levels")) m.levels = j.at("response_levels").get<std::vector<double>>();
  if (j.contains("shape")) m.dispersion = j.at("shape");
  if (j.contains("sd")) m.dispersion = j.at("sd");
  m.covariance = matrix_from_json(j.at("covariance"));
  m.log_likelihood = j.at("log_likelihood");
  m.n_obs = j.at("n_obs");
  m.iterations = j.at("iterations");
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (m.columns.size() != m.active.size()) {
    throw std::invalid_argument("model JSON: columns and active mask differ in length");
  }
  return m;
}

}  // namespace rdg::stats
