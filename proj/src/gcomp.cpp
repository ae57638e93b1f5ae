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

#include "rdgcomp/gcomp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rdg {

using stats::Family;
using stats::FittedModel;
using stats::Frame;
using stats::TermSpec;

const std::vector<std::string>& variable_names() {
  static const std::vector<std::string> names = {
      "u",     "u_rel",   "age",      "sex",   "race",      "ses",
      "cci",   "out",     "t",        "z1",    "z_arm",     "z2",
      "rxb",   "rxb_lag", "oop",      "oop_lag", "zero",    "zero_lag",
      "lstar", "lstar_lag", "z_arm_lag", "event", "oop_recip"};
  return names;
}

int variable_index(std::string_view name) {
  const auto& names = variable_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw stats::SchemaError("unknown variable '" + std::string(name) + "'");
  }
  return static_cast<int>(it - names.begin());
}

VarClass variable_class(int var) {
  if (var <= kOut) return VarClass::Baseline;
  if (var <= kZ2) return VarClass::Day;
  return VarClass::Dynamic;
}

namespace {

double clip_rxb(int rxb) { return static_cast<double>(std::min(rxb, 4)); }

void set_covariates(VarRow& row, int rxb, double oop) {
  row[kRxb] = clip_rxb(rxb);
  row[kOop] = stats::asinh(oop);
  row[kZero] = oop > 0 ? 1.0 : 0.0;
  row[kLstar] = rxb > 0 ? 1.0 : 0.0;
  row[kOopRecip] = row[kOop] > 0 ? 1.0 / row[kOop] : 0.0;
}

}  // namespace

VarRow baseline_row(const PatientHistory& h, Date u_star) {
  VarRow row{};
  const auto& b = h.baseline;
  row[kU] = h.initiation;
  row[kURel] = (h.initiation - u_star) / 365.25;
  row[kAge] = b.age;
  row[kSex] = static_cast<double>(b.sex);
  row[kRace] = b.race;
  row[kSes] = b.ses;
  row[kCci] = b.cci > 0 ? 1.0 : 0.0;
  row[kOut] = std::min(b.out, 2);
  if (h.daily.empty()) {
    set_covariates(row, b.rxb_1, b.oop_1);
  } else {
    set_covariates(row, h.daily.front().rxb, h.daily.front().oop);
  }
  row[kT] = 1;
  row[kRxbLag] = row[kRxb];
  row[kOopLag] = row[kOop];
  row[kZeroLag] = row[kZero];
  row[kLstarLag] = row[kLstar];
  return row;
}

PersonDays build_person_days(std::span<const PatientHistory> histories,
                             const Regime& regime, Date u_star, RowFilter filter,
                             int horizon) {
  PersonDays pd;
  pd.era = regime.arm;
  pd.n_patients = histories.size();
  std::vector<std::vector<double>> cols(kNumVars);
  for (std::size_t i = 0; i < histories.size(); ++i) {
    const PatientHistory& h = histories[i];
    if (h.initiating_arm() != regime.arm) continue;
    const int last = std::min(h.last_observed_day(horizon), horizon);
    const int adherent = adherence_prefix(h, regime);
    const int upto = filter == RowFilter::AtRisk ? last : std::min(last, adherent + 1);
    VarRow row = baseline_row(h, u_star);
    for (int t = 1; t <= upto; ++t) {
      const DailyRecord& d = h.day(t);
      if (t > 1) {
        row[kRxbLag] = row[kRxb];
        row[kOopLag] = row[kOop];
        row[kZeroLag] = row[kZero];
        row[kLstarLag] = row[kLstar];
        row[kZArmLag] = row[kZArm];
        set_covariates(row, d.rxb, d.oop);
      }
      row[kT] = t;
      row[kZ1] = static_cast<double>(d.z1);
      row[kZArm] = d.z1 == regime.exposure() ? 1.0 : 0.0;
      row[kZ2] = d.z2;
      if (t == 1) row[kZArmLag] = row[kZArm];
      row[kEvent] = h.failure && t == h.follow_up ? 1.0 : 0.0;
      for (int v = 0; v < kNumVars; ++v) cols[static_cast<std::size_t>(v)].push_back(row[static_cast<std::size_t>(v)]);
      pd.patient.push_back(i);
      const bool at_risk = filter == RowFilter::AtRisk;
      pd.covariate_row.push_back(t >= 2 && (at_risk || adherent >= t - 1));
      pd.hazard_row.push_back(at_risk || adherent >= t);
    }
  }
  for (int v = 0; v < kNumVars; ++v) {
    pd.frame.set(variable_names()[static_cast<std::size_t>(v)],
                 std::move(cols[static_cast<std::size_t>(v)]));
  }
  return pd;
}

SequentialModelSpec make_model_spec(Arm era, const ModelSetOptions& o) {
  SequentialModelSpec spec;
  spec.era = era;
  spec.rows = o.rows;
  spec.simulate_covariates = o.simulate_covariates;

  std::vector<TermSpec> trend;
  if (o.trend == TrendKind::Linear) trend.push_back(TermSpec::linear("u_rel"));
  if (o.trend == TrendKind::Spline) trend.push_back(TermSpec::spline("u", o.trend_df));
  const auto tt = TermSpec::spline("t", o.t_df);
  auto join = [](std::initializer_list<std::vector<TermSpec>> groups) {
    std::vector<TermSpec> out;
    for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
    return out;
  };

  // Adherent rows follow the regime, so z_arm is constant there.
  const bool exposure_varies = o.rows == RowFilter::AtRisk;
  std::vector<TermSpec> z_arm, z_arm_lag;
  if (exposure_varies) {
    z_arm.push_back(TermSpec::linear("z_arm"));
    z_arm_lag.push_back(TermSpec::linear("z_arm_lag"));
  }

  if (o.kind == ModelSetKind::Indicator) {
    if (o.simulate_covariates) {
      CovariateModelSpec lstar;
      lstar.target = "lstar";
      lstar.model = {"lstar", Family::Binomial, "lstar",
                     join({{TermSpec::linear("lstar_lag")}, z_arm_lag, trend, {tt}})};
      spec.covariates.push_back(std::move(lstar));
    }
    std::vector<TermSpec> l_terms;
    if (o.hazard_covariates) l_terms.push_back(TermSpec::linear("lstar"));
    spec.hazard = {"hazard", Family::Binomial, "event",
                   join({trend, l_terms, {tt}, z_arm})};
    return spec;
  }

  const std::vector<TermSpec> x = {
      TermSpec::spline("age", o.age_df), TermSpec::factor("race"),
      TermSpec::factor("sex"), TermSpec::factor("ses"), TermSpec::factor("cci"),
      TermSpec::factor("out")};
  const std::vector<TermSpec> z = join({z_arm, {TermSpec::spline("z2", o.z2_df)}});
  const auto oop_lag = TermSpec::spline("oop_lag", o.oop_df);
  if (o.simulate_covariates) {
    CovariateModelSpec rxb;
    rxb.target = "rxb";
    rxb.model = {"rxb", Family::Ordinal, "rxb",
                 join({trend, x, {TermSpec::factor("rxb_lag"), oop_lag}, z, {tt}})};
    CovariateModelSpec zero;
    zero.target = "zero";
    zero.model = {"zero", Family::Binomial, "zero",
                  join({trend, x, {TermSpec::factor("rxb"), oop_lag,
                                   TermSpec::linear("zero_lag")}, z, {tt}})};
    CovariateModelSpec oop;
    oop.target = "oop";
    oop.gate = "zero";
    oop.gate_off_value = 0.0;
    oop.reciprocal = o.oop_reciprocal;
    oop.model = {"oop", Family::Gamma, o.oop_reciprocal ? "oop_recip" : "oop",
                 join({trend, x, {TermSpec::factor("rxb"), oop_lag}, z, {tt}})};
    spec.covariates = {std::move(rxb), std::move(zero), std::move(oop)};
  }
  std::vector<TermSpec> l_terms;
  if (o.hazard_covariates) {
    l_terms = {TermSpec::factor("rxb"), TermSpec::spline("oop", o.oop_df),
               TermSpec::linear("zero")};
  }
  spec.hazard = {"hazard", Family::Binomial, "event", join({trend, x, l_terms, z, {tt}})};
  return spec;
}

namespace {

std::vector<double> row_weights(const PersonDays& pd, std::span<const double> pw,
                                const std::vector<char>& usable,
                                const std::string& gate) {
  const std::size_t n = pd.frame.rows();
  std::vector<double> w(n, 0.0);
  std::span<const double> gate_col;
  if (!gate.empty()) gate_col = pd.frame.column(gate);
  for (std::size_t r = 0; r < n; ++r) {
    if (!usable[r]) continue;
    if (!gate.empty() && gate_col[r] != 1.0) continue;
    w[r] = pw.empty() ? 1.0 : pw[pd.patient[r]];
  }
  return w;
}

stats::FittedModel fit_named(const stats::ModelSpec& spec, const PersonDays& pd,
                             const std::vector<double>& w, const stats::FitOptions& opt) {
  try {
    return stats::fit_glm(spec, pd.frame, w, opt);
  } catch (const stats::ConvergenceError& e) {
    throw PipelineError(std::string(to_string(pd.era)) + " era, model '" + spec.name +
                        "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw PipelineError(std::string(to_string(pd.era)) + " era, model '" + spec.name +
                        "': " + e.what());
  }
}

}  // namespace

FittedModelSet fit_sequential(const PersonDays& pd, const SequentialModelSpec& spec,
                              const FitSequentialOptions& options) {
  if (!options.patient_weights.empty() &&
      options.patient_weights.size() != pd.n_patients) {
    throw std::invalid_argument("patient weights do not match the patient count");
  }
  FittedModelSet set;
  set.era = spec.era;
  set.spec = spec;

  const auto hazard_w = row_weights(pd, options.patient_weights, pd.hazard_row, "");
  {
    std::vector<double> per_day(static_cast<std::size_t>(options.horizon) + 2, 0.0);
    const auto t = pd.frame.column("t");
    for (std::size_t r = 0; r < hazard_w.size(); ++r) {
      const int day = static_cast<int>(t[r]);
      if (day >= 1 && day <= options.horizon) per_day[static_cast<std::size_t>(day)] += hazard_w[r];
    }
    for (int day = 1; day <= options.horizon; ++day) {
      if (per_day[static_cast<std::size_t>(day)] > 0) continue;
      const std::string msg = std::string(to_string(spec.era)) +
                              " era: no adherent person-days at day " + std::to_string(day) +
                              "; estimates beyond it extrapolate (see the positivity report)";
      if (!options.allow_extrapolation) throw PositivityError(msg, day);
      set.warnings.push_back(msg);
      break;
    }
  }

  if (spec.simulate_covariates) {
    for (std::size_t k = 0; k < spec.covariates.size(); ++k) {
      const auto& cov = spec.covariates[k];
      const auto w = row_weights(pd, options.patient_weights, pd.covariate_row, cov.gate);
      stats::FitOptions glm = options.glm;
      if (options.warm_start && k < options.warm_start->covariates.size()) {
        glm.start = stats::parameters(options.warm_start->covariates[k]);
      }
      set.covariates.push_back(fit_named(cov.model, pd, w, glm));
    }
  }
  stats::FitOptions glm = options.glm;
  if (options.warm_start) glm.start = stats::parameters(options.warm_start->hazard);
  set.hazard = fit_named(spec.hazard, pd, hazard_w, glm);
  for (const auto& m : set.covariates) {
    set.warnings.insert(set.warnings.end(), m.warnings.begin(), m.warnings.end());
  }
  set.warnings.insert(set.warnings.end(), set.hazard.warnings.begin(),
                      set.hazard.warnings.end());
  return set;
}

GoodnessOfFit goodness_of_fit(const PersonDays& pd, const SequentialModelSpec& spec,
                              std::uint64_t seed, const stats::FitOptions& glm) {
  Rng rng(derive_seed(seed, kTagGoodnessOfFit));
  std::vector<double> train(pd.n_patients, 0.0);
  for (auto& w : train) w = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  FitSequentialOptions fo;
  fo.glm = glm;
  fo.patient_weights = train;
  fo.allow_extrapolation = true;
  const FittedModelSet fitted = fit_sequential(pd, spec, fo);

  std::vector<double> test(pd.n_patients);
  for (std::size_t i = 0; i < test.size(); ++i) test[i] = 1.0 - train[i];

  GoodnessOfFit gof;
  auto score_model = [&](const FittedModel& m, const std::vector<double>& w) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < w.size(); ++r) {
      if (w[r] > 0) rows.push_back(r);
    }
    const Frame sub = pd.frame.select(rows);
    const auto y = sub.column(m.spec.response);
    double wrong = 0.0, used = 0.0;
    std::vector<double> pit;
    for (std::size_t r = 0; r < sub.rows(); ++r) {
      stats::Prediction pred;
      try {
        pred = stats::predict(m, sub, r);
      } catch (const stats::SchemaError&) {
        continue;  // level unseen in the training half
      }
      used += 1.0;
      switch (m.spec.family) {
        case Family::Binomial:
          wrong += ((pred.probability > 0.5 ? 1.0 : 0.0) != y[r]) ? 1.0 : 0.0;
          break;
        case Family::Ordinal:
        case Family::Multinomial: {
          const auto best = std::max_element(pred.probabilities.begin(),
                                             pred.probabilities.end()) -
                            pred.probabilities.begin();
          wrong += m.levels[static_cast<std::size_t>(best)] != y[r] ? 1.0 : 0.0;
          break;
        }
        case Family::Gamma:
        case Family::Gaussian: pit.push_back(stats::outcome_cdf(pred, y[r])); break;
      }
    }
    if (m.spec.family == Family::Gamma || m.spec.family == Family::Gaussian) {
      std::sort(pit.begin(), pit.end());
      double d = 0.0;
      const double n = static_cast<double>(pit.size());
      for (std::size_t i = 0; i < pit.size(); ++i) {
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - pit[i],
                      pit[i] - static_cast<double>(i) / n});
      }
      if (!pit.empty()) gof.ks_distance = d;
    } else {
      gof.error_rates.push_back({m.spec.name, used > 0 ? wrong / used : 0.0, used});
    }
  };
  if (spec.simulate_covariates) {
    for (std::size_t k = 0; k < spec.covariates.size(); ++k) {
      score_model(fitted.covariates[k],
                  row_weights(pd, test, pd.covariate_row, spec.covariates[k].gate));
    }
  }
  score_model(fitted.hazard, row_weights(pd, test, pd.hazard_row, ""));
  return gof;
}

nlohmann::json to_json(const FittedModelSet& set) {
  nlohmann::json j;
  j["era"] = std::string(to_string(set.era));
  j["row_filter"] = set.spec.rows == RowFilter::Adherent ? "adherent" : "at-risk";
  j["simulate_covariates"] = set.spec.simulate_covariates;
  j["covariate_models"] = nlohmann::json::array();
  for (std::size_t k = 0; k < set.covariates.size(); ++k) {
    auto m = stats::to_json(set.covariates[k]);
    m["target"] = set.spec.covariates[k].target;
    if (!set.spec.covariates[k].gate.empty()) m["gate"] = set.spec.covariates[k].gate;
    m["reciprocal"] = set.spec.covariates[k].reciprocal;
    j["covariate_models"].push_back(std::move(m));
  }
  j["hazard_model"] = stats::to_json(set.hazard);
  if (set.bandwidth) j["bandwidth"] = *set.bandwidth;
  j["warnings"] = set.warnings;
  if (set.goodness_of_fit) {
    auto& g = j["goodness_of_fit"];
    g["error_rates"] = nlohmann::json::array();
    for (const auto& r : set.goodness_of_fit->error_rates) {
      g["error_rates"].push_back({{"model", r.model}, {"error_rate", r.error_rate}, {"rows", r.rows}});
    }
    if (set.goodness_of_fit->ks_distance) g["ks_distance"] = *set.goodness_of_fit->ks_distance;
  }
  return j;
}

// ---- baseline samplers ----

WeightedSampler::WeightedSampler(std::vector<VarRow> rows, std::vector<double> weights)
    : rows_(std::move(rows)) {
  if (rows_.empty()) throw std::invalid_argument("baseline sampler: no rows");
  if (!weights.empty() && weights.size() != rows_.size()) {
    throw std::invalid_argument("baseline sampler: weight count mismatch");
  }
  cumulative_.resize(rows_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0) || !std::isfinite(w)) {
      throw std::invalid_argument("baseline sampler: invalid weight");
    }
    total += w;
    cumulative_[i] = total;
  }
  if (!(total > 0)) throw std::invalid_argument("baseline sampler: all weights are zero");
}

std::size_t WeightedSampler::index(Rng& rng) const {
  const double target = uniform01(rng) * cumulative_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  return std::min(static_cast<std::size_t>(it - cumulative_.begin()), rows_.size() - 1);
}

const VarRow& WeightedSampler::draw(Rng& rng, std::size_t) const {
  return rows_[index(rng)];
}

const VarRow& SequentialSampler::draw(Rng&, std::size_t path) const {
  if (path >= rows_.size()) {
    throw SamplerExhausted("baseline sampler exhausted after " +
                           std::to_string(rows_.size()) + " rows");
  }
  return rows_[path];
}

// ---- Monte Carlo integration ----

namespace {

struct CompiledTerm {
  stats::Term term;
  int offset = 0;
};

/// A fitted model split into baseline, day and dynamic parts so that the
/// day loop only evaluates terms that change along a path.
class CompiledModel {
 public:
  CompiledModel(const FittedModel& m, const Regime& regime, int horizon)
      : model_(&m) {
    if (m.spec.family == Family::Multinomial) {
      throw std::invalid_argument("multinomial models are not supported in the day loop");
    }
    int offset = m.has_intercept() ? 1 : 0;
    intercept_ = m.has_intercept() ? m.beta[0] : 0.0;
    std::vector<CompiledTerm> day;
    for (const auto& t : m.terms) {
      CompiledTerm ct{t, offset};
      ct.term.bind(variable_names());
      offset += static_cast<int>(t.width());
      if (t.width() == 0) continue;
      bool baseline = true, day_only = true;
      for (const auto& v : t.spec().variables()) {
        const VarClass c = variable_class(variable_index(v));
        baseline = baseline && c == VarClass::Baseline;
        day_only = day_only && c == VarClass::Day;
      }
      if (baseline) {
        static_.push_back(std::move(ct));
      } else if (day_only) {
        day.push_back(std::move(ct));
      } else {
        dynamic_.push_back(std::move(ct));
      }
    }
    day_eta_.assign(static_cast<std::size_t>(horizon) + 1, 0.0);
    VarRow row{};
    for (int t = 1; t <= horizon; ++t) {
      row[kT] = t;
      row[kZ1] = static_cast<double>(regime.exposure());
      row[kZArm] = 1.0;
      row[kZ2] = regime_cost(regime, t);
      day_eta_[static_cast<std::size_t>(t)] = sum(day, row);
    }
  }

  double static_eta(const VarRow& row) const { return intercept_ + sum(static_, row); }

  double eta(const VarRow& row, int t, double s) const {
    return s + day_eta_[static_cast<std::size_t>(t)] + sum(dynamic_, row);
  }

  double sample(const VarRow& row, int t, double s, Rng& rng) const {
    const double e = eta(row, t, s);
    const FittedModel& m = *model_;
    switch (m.spec.family) {
      case Family::Binomial: return uniform01(rng) < stats::logistic(e) ? 1.0 : 0.0;
      case Family::Gamma: return stats::sample_gamma(m.dispersion, std::exp(e), rng);
      case Family::Gaussian: {
        stats::Prediction p;
        p.family = Family::Gaussian;
        p.mean = e;
        p.dispersion = m.dispersion;
        return stats::sample_outcome(p, m.levels, rng);
      }
      case Family::Ordinal: {
        const double u = uniform01(rng);
        for (std::size_t k = 0; k < m.cutpoints.size(); ++k) {
          if (u < stats::logistic(m.cutpoints[k] - e)) return m.levels[k];
        }
        return m.levels.back();
      }
      case Family::Multinomial: break;
    }
    return 0.0;
  }

 private:
  double sum(const std::vector<CompiledTerm>& terms, const VarRow& row) const {
    double buf[64];
    double total = 0.0;
    const std::span<const double> r(row.data(), row.size());
    for (const auto& ct : terms) {
      ct.term.expand_row(r, buf);
      const std::size_t w = ct.term.width();
      for (std::size_t k = 0; k < w; ++k) {
        total += buf[k] * model_->beta[ct.offset + static_cast<Eigen::Index>(k)];
      }
    }
    return total;
  }

  const FittedModel* model_;
  double intercept_ = 0.0;
  std::vector<CompiledTerm> static_;
  std::vector<CompiledTerm> dynamic_;
  std::vector<double> day_eta_;
};

struct CompiledCovariate {
  CompiledModel model;
  int target;
  int gate;  // -1 when ungated
  double gate_off_value;
  bool reciprocal;
};

void assign_covariate(VarRow& row, int target, double value) {
  row[static_cast<std::size_t>(target)] = value;
  switch (target) {
    case kRxb: row[kLstar] = value > 0 ? 1.0 : 0.0; break;
    case kLstar: row[kRxb] = value; break;
    case kOop: row[kOopRecip] = value > 0 ? 1.0 / value : 0.0; break;
    default: break;
  }
}

}  // namespace

SurvivalCurve gcomp_survival(const FittedModelSet& models, const Regime& regime,
                             const BaselineSampler& sampler, const GcompOptions& o) {
  if (o.paths < 1) throw std::invalid_argument("gcomp_survival: M must be >= 1");
  if (o.horizon < 1 || o.horizon > regime.horizon) {
    throw std::invalid_argument("gcomp_survival: horizon outside the regime horizon");
  }
  const int horizon = o.horizon;
  const CompiledModel hazard(models.hazard, regime, horizon);
  std::vector<CompiledCovariate> covs;
  if (models.spec.simulate_covariates) {
    for (std::size_t k = 0; k < models.covariates.size(); ++k) {
      const auto& cs = models.spec.covariates.at(k);
      covs.push_back({CompiledModel(models.covariates[k], regime, horizon),
                      variable_index(cs.target),
                      cs.gate.empty() ? -1 : variable_index(cs.gate),
                      cs.gate_off_value, cs.reciprocal});
    }
  }
  const double z1 = static_cast<double>(regime.exposure());
  const std::size_t m = static_cast<std::size_t>(o.paths);
  const std::size_t blocks = (m + kPathBlock - 1) / kPathBlock;
  std::vector<std::vector<int>> failures(blocks);

  parallel_for(blocks, o.jobs, [&](std::size_t b) {
    Rng rng(derive_seed(o.seed, kTagPaths, b));
    std::vector<int> fails(static_cast<std::size_t>(horizon) + 1, 0);
    std::vector<double> statics(covs.size());
    const std::size_t end = std::min(m, (b + 1) * kPathBlock);
    for (std::size_t path = b * kPathBlock; path < end; ++path) {
      VarRow row = sampler.draw(rng, path);
      if (o.force_u) {
        row[kU] = *o.force_u;
        row[kURel] = 0.0;
      }
      row[kZ1] = z1;
      row[kZArm] = 1.0;
      row[kZArmLag] = 1.0;
      const double s_hazard = hazard.static_eta(row);
      for (std::size_t k = 0; k < covs.size(); ++k) statics[k] = covs[k].model.static_eta(row);
      for (int t = 1; t <= horizon; ++t) {
        row[kT] = t;
        if (t > 1) {
          row[kRxbLag] = row[kRxb];
          row[kOopLag] = row[kOop];
          row[kZeroLag] = row[kZero];
          row[kLstarLag] = row[kLstar];
          row[kZArmLag] = row[kZArm];
          row[kZ2] = regime_cost(regime, t);
          for (std::size_t k = 0; k < covs.size(); ++k) {
            const auto& c = covs[k];
            if (c.gate >= 0 && row[static_cast<std::size_t>(c.gate)] != 1.0) {
              assign_covariate(row, c.target, c.gate_off_value);
              continue;
            }
            double v = c.model.sample(row, t, statics[k], rng);
            if (c.reciprocal) v = v > 0 ? 1.0 / v : 0.0;
            assign_covariate(row, c.target, v);
          }
        } else {
          row[kZ2] = regime_cost(regime, 1);
        }
        const double p = stats::logistic(hazard.eta(row, t, s_hazard));
        if (uniform01(rng) < p) {
          ++fails[static_cast<std::size_t>(t)];
          break;
        }
      }
    }
    failures[b] = std::move(fails);
  });

  SurvivalCurve curve;
  curve.values.assign(static_cast<std::size_t>(horizon) + 1, 1.0);
  long cumulative = 0;
  for (int t = 1; t <= horizon; ++t) {
    for (const auto& f : failures) cumulative += f[static_cast<std::size_t>(t)];
    curve.values[static_cast<std::size_t>(t)] =
        1.0 - static_cast<double>(cumulative) / static_cast<double>(m);
  }
  return curve;
}

double rmst(const SurvivalCurve& curve, int horizon) {
  if (horizon > curve.horizon()) {
    throw std::invalid_argument("rmst: curve ends before the horizon");
  }
  double total = 0.0;
  for (int t = 1; t <= horizon; ++t) total += curve.at(t);
  return total;
}

double rmst(const SurvivalCurve& curve) { return rmst(curve, curve.horizon()); }

double rmst_difference(const SurvivalCurve& brand, const SurvivalCurve& generic) {
  if (brand.horizon() != generic.horizon()) {
    throw std::invalid_argument("rmst_difference: curves have different horizons");
  }
  return rmst(brand) - rmst(generic);
}

}  // namespace rdg
