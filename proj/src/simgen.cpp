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

#include "rdgcomp/simgen.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "rdgcomp/random.hpp"
#include "rdgcomp/stats/glm.hpp"

namespace rdg {

double SimScenario::trend_value(double u) const {
  if (trend == SimTrend::Linear) return (u - u_star) / 365.0;
  return std::sin(u / u_bar);
}

double SimScenario::hazard(double u, int lstar, Exposure z1) const {
  return stats::logistic(hazard_intercept + hazard_lstar * lstar +
                         hazard_exposure[static_cast<std::size_t>(z1)] +
                         hazard_trend * trend_value(u));
}

namespace {

template <class T, std::size_t N>
std::array<T, N> array_from(const nlohmann::json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<T>>();
  if (v.size() != N) {
    throw std::invalid_argument(std::string("scenario: '") + key + "' needs " +
                                std::to_string(N) + " values");
  }
  std::array<T, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

Date date_from(const nlohmann::json& j) {
  if (j.is_string()) return parse_iso_date(j.get<std::string>());
  return j.get<Date>();
}

void validate(const SimScenario& s) {
  if (s.n < 1) throw std::invalid_argument("scenario: n must be >= 1");
  if (s.horizon < 1) throw std::invalid_argument("scenario: horizon must be >= 1");
  if (s.u_half_width < 1) throw std::invalid_argument("scenario: u_half_width must be >= 1");
  if (!(s.lstar_initial >= 0 && s.lstar_initial <= 1)) {
    throw std::invalid_argument("scenario: lstar initial probability outside [0, 1]");
  }
  if (s.supply_days.empty() || s.supply_days.size() != s.supply_probabilities.size()) {
    throw std::invalid_argument("scenario: supply days and probabilities differ in length");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < s.supply_days.size(); ++k) {
    const int d = s.supply_days[k];
    if (d != 1 && d != 30 && d != 60 && d != 90) {
      throw std::invalid_argument("scenario: days supply must be one of 1, 30, 60, 90");
    }
    if (!(s.supply_probabilities[k] >= 0)) {
      throw std::invalid_argument("scenario: negative supply probability");
    }
    total += s.supply_probabilities[k];
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("scenario: supply probabilities must sum to 1");
  }
  for (std::size_t k = 1; k < 4; ++k) {
    if (!(s.cost[k] > 0)) throw std::invalid_argument("scenario: fill costs must be positive");
  }
  if (!(s.cost_log_sd >= 0)) throw std::invalid_argument("scenario: cost sd must be >= 0");
  if (s.trend == SimTrend::Sine && !(s.u_bar > 0)) {
    throw std::invalid_argument("scenario: u_bar must be positive");
  }
}

}  // namespace

SimScenario scenario_from_json(const nlohmann::json& j) {
  SimScenario s;
  s.name = j.value("name", s.name);
  const std::string trend = j.value("trend", std::string("linear"));
  if (trend == "linear") {
    s.trend = SimTrend::Linear;
  } else if (trend == "sine") {
    s.trend = SimTrend::Sine;
  } else {
    throw std::invalid_argument("scenario: unknown trend '" + trend + "'");
  }
  s.n = j.value("n", s.n);
  s.horizon = j.value("horizon", s.horizon);
  if (j.contains("u_star")) s.u_star = date_from(j.at("u_star"));
  s.u_half_width = j.value("u_half_width", s.u_half_width);
  if (j.contains("lstar")) {
    const auto& l = j.at("lstar");
    s.lstar_initial = l.value("initial", s.lstar_initial);
    s.lstar_intercept = l.value("intercept", s.lstar_intercept);
    s.lstar_lag = l.value("lag", s.lstar_lag);
    if (l.contains("exposure")) s.lstar_exposure = array_from<double, 4>(l, "exposure");
  }
  if (j.contains("fill")) {
    const auto& f = j.at("fill");
    s.fill[0] = array_from<double, 3>(f, "switch");
    s.fill[1] = array_from<double, 3>(f, "other");
    s.fill[2] = array_from<double, 3>(f, "none");
  }
  if (j.contains("supply")) {
    s.supply_days = j.at("supply").at("days").get<std::vector<int>>();
    s.supply_probabilities = j.at("supply").at("probabilities").get<std::vector<double>>();
  }
  if (j.contains("cost")) {
    const auto& c = j.at("cost");
    s.cost[1] = c.value("brand", s.cost[1]);
    s.cost[2] = c.value("generic", s.cost[2]);
    s.cost[3] = c.value("other", s.cost[3]);
    s.cost_log_sd = c.value("log_sd", s.cost_log_sd);
  }
  if (j.contains("hazard")) {
    const auto& h = j.at("hazard");
    s.hazard_intercept = h.value("intercept", s.hazard_intercept);
    s.hazard_lstar = h.value("lstar", s.hazard_lstar);
    if (h.contains("exposure")) s.hazard_exposure = array_from<double, 4>(h, "exposure");
    s.hazard_trend = h.value("trend", s.hazard_trend);
    s.u_bar = h.value("u_bar", s.u_bar);
  }
  s.oop = j.value("oop", s.oop);
  if (j.contains("truth")) {
    const auto& t = j.at("truth");
    SimScenario::Truth truth;
    truth.brand_rmst = t.at("brand_rmst");
    truth.generic_rmst = t.at("generic_rmst");
    truth.difference = t.at("difference");
    truth.difference_mc_se = t.at("difference_mc_se");
    truth.paths = t.at("paths");
    truth.seed = t.at("seed");
    s.truth = truth;
  }
  validate(s);
  return s;
}

nlohmann::json to_json(const SimScenario& s) {
  auto vec = [](const auto& a) { return std::vector<double>(a.begin(), a.end()); };
  nlohmann::json j;
  j["name"] = s.name;
  j["trend"] = s.trend == SimTrend::Linear ? "linear" : "sine";
  j["n"] = s.n;
  j["horizon"] = s.horizon;
  j["u_star"] = format_iso_date(s.u_star);
  j["u_half_width"] = s.u_half_width;
  j["lstar"] = {{"initial", s.lstar_initial},
                {"intercept", s.lstar_intercept},
                {"lag", s.lstar_lag},
                {"exposure", vec(s.lstar_exposure)}};
  j["fill"] = {{"switch", vec(s.fill[0])}, {"other", vec(s.fill[1])}, {"none", vec(s.fill[2])}};
  j["supply"] = {{"days", s.supply_days}, {"probabilities", s.supply_probabilities}};
  j["cost"] = {{"brand", s.cost[1]}, {"generic", s.cost[2]}, {"other", s.cost[3]},
               {"log_sd", s.cost_log_sd}};
  j["hazard"] = {{"intercept", s.hazard_intercept},
                 {"lstar", s.hazard_lstar},
                 {"exposure", vec(s.hazard_exposure)},
                 {"trend", s.hazard_trend},
                 {"u_bar", s.u_bar}};
  j["oop"] = s.oop;
  if (s.truth) {
    j["truth"] = {{"brand_rmst", s.truth->brand_rmst},
                  {"generic_rmst", s.truth->generic_rmst},
                  {"difference", s.truth->difference},
                  {"difference_mc_se", s.truth->difference_mc_se},
                  {"paths", s.truth->paths},
                  {"seed", s.truth->seed}};
  }
  return j;
}

SimScenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path.string());
  try {
    return scenario_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::vector<std::string> bundled_scenario_names() { return {"linear", "sine", "null"}; }

SimScenario bundled_scenario(std::string_view name) {
  SimScenario s;
  s.fill = {{{-3.5, 0.5, 0.0}, {-4.0, 1.0, 0.0}, {-3.5, 1.8, 0.2}}};
  if (name == "linear") {
    s.name = "linear";
    s.trend = SimTrend::Linear;
    s.hazard_trend = 0.3;
  } else if (name == "sine") {
    s.name = "sine";
    s.trend = SimTrend::Sine;
    s.hazard_trend = 1.0;
  } else if (name == "null") {
    s.name = "null";
    s.trend = SimTrend::Linear;
    s.hazard_trend = 0.0;
    s.hazard_exposure = {0.5, 0.0, 0.0, 0.2};
    s.lstar_exposure = {0.0, -0.8, -0.8, -0.4};
  } else {
    throw std::invalid_argument("unknown bundled scenario '" + std::string(name) + "'");
  }
  // Frozen oracle values: counterfactual_truth with 10^6 paths per regime,
  // seed 20260101 (rdgc truth --scenario <name>).
  if (name == "null") {
    s.truth = SimScenario::Truth{187.518244, 187.518244, 0.0, 0.13531005465642168,
                                 1000000, 20260101};
  } else {
    s.truth = SimScenario::Truth{187.518244, 177.66694399999977, 9.851300000000236,
                                 0.1365445251164054, 1000000, 20260101};
  }
  return s;
}

namespace {

double normal_draw(Rng& rng) {
  double u = uniform01(rng);
  if (u <= 0.0) u = std::numeric_limits<double>::min();
  return boost::math::quantile(boost::math::normal(), u);
}

Formulation other_im(Arm arm) {
  return arm == Arm::Brand ? Formulation::ImGeneric : Formulation::ImBrand;
}

struct SimulatedPatient {
  PatientRow row;
  std::vector<FillRecord> fills;
  std::vector<EventRecord> events;
  std::vector<CovariateRecord> covariates;
};

SimulatedPatient simulate_patient(const SimScenario& s, std::size_t index, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kTagSimPatient, index));
  SimulatedPatient p;
  p.row.id = "P" + std::to_string(index + 1);
  const int width = 2 * s.u_half_width + 1;
  const Date u = s.u_star - s.u_half_width +
                 std::min(width - 1, static_cast<int>(uniform01(rng) * width));
  p.row.init_date = u;
  const Arm arm = u < s.u_star ? Arm::Brand : Arm::Generic;
  const double u_rel = (u - s.u_star) / 365.25;

  // inert baseline covariates
  auto& b = p.row.baseline;
  b.age = std::round((20.0 + 60.0 * uniform01(rng)) * 10.0) / 10.0;
  b.sex = uniform01(rng) < 0.6 ? Sex::Female : Sex::Male;
  b.race = std::min(2, static_cast<int>(uniform01(rng) * 3));
  b.ses = std::min(9, static_cast<int>(uniform01(rng) * 10));
  b.cci = uniform01(rng) < 0.3 ? 1 + std::min(3, static_cast<int>(uniform01(rng) * 4)) : 0;
  b.out = std::min(3, static_cast<int>(uniform01(rng) * 4));
  int lstar = uniform01(rng) < s.lstar_initial ? 1 : 0;
  b.rxb_1 = lstar;
  b.oop_1 = s.oop;

  Exposure z1 = Exposure::None;
  Exposure z1_prev = Exposure::None;
  int next_opportunity = 1;
  for (int t = 1; t <= s.horizon; ++t) {
    const Date date = u + t - 1;
    if (t > 1) {
      const double logit = s.lstar_intercept + s.lstar_lag * lstar +
                           s.lstar_exposure[static_cast<std::size_t>(z1_prev)];
      const int next = uniform01(rng) < stats::logistic(logit) ? 1 : 0;
      if (next != lstar) p.covariates.push_back({p.row.id, date, next, s.oop});
      lstar = next;
    }
    if (t == next_opportunity) {
      int choice = 0;  // 0 continue, 1 switch, 2 other, 3 none
      if (t > 1) {
        double eta[4] = {0.0, 0.0, 0.0, 0.0};
        double denom = 1.0;
        for (int k = 0; k < 3; ++k) {
          const auto& c = s.fill[static_cast<std::size_t>(k)];
          eta[k + 1] = std::exp(c[0] + c[1] * lstar + c[2] * u_rel);
          denom += eta[k + 1];
        }
        const double draw = uniform01(rng) * denom;
        double cum = 1.0;
        while (choice < 3 && draw >= cum) {
          ++choice;
          cum += eta[choice];
        }
      }
      if (choice == 3) {
        z1 = Exposure::None;
        next_opportunity = t + 1;
      } else {
        const Formulation form = choice == 0   ? static_cast<Formulation>(arm)
                                 : choice == 1 ? other_im(arm)
                                               : Formulation::Other;
        const double pick = uniform01(rng);
        double cum = 0.0;
        int days = s.supply_days.back();
        for (std::size_t k = 0; k < s.supply_days.size(); ++k) {
          cum += s.supply_probabilities[k];
          if (pick < cum) {
            days = s.supply_days[k];
            break;
          }
        }
        const double noise = normal_draw(rng);
        const double cost = std::round(
            std::exp(std::log(s.cost[static_cast<std::size_t>(form)]) + s.cost_log_sd * noise) * 100.0) / 100.0;
        p.fills.push_back({p.row.id, date, form, days, cost});
        z1 = static_cast<Exposure>(form);
        next_opportunity = t + days;
      }
    }
    if (uniform01(rng) < s.hazard(u, lstar, z1)) {
      p.events.push_back({p.row.id, date, EventKind::ClinicalProgression});
      break;
    }
    z1_prev = z1;
  }
  return p;
}

}  // namespace

RawDataset simulate_dataset(const SimScenario& scenario, int n, std::uint64_t seed, int jobs) {
  if (n < 1) throw std::invalid_argument("simulate_dataset: n must be >= 1");
  validate(scenario);
  std::vector<SimulatedPatient> patients(static_cast<std::size_t>(n));
  parallel_for(patients.size(), jobs, [&](std::size_t i) {
    patients[i] = simulate_patient(scenario, i, seed);
  });
  RawDataset raw;
  raw.race_labels = {"race-a", "race-b", "race-c"};
  for (auto& p : patients) {
    raw.patients.push_back(std::move(p.row));
    for (auto& f : p.fills) raw.fills.push_back(std::move(f));
    for (auto& e : p.events) raw.events.push_back(std::move(e));
    for (auto& c : p.covariates) raw.covariates.push_back(std::move(c));
  }
  // the ingestion reader assigns race indices in first-seen order
  std::vector<int> remap(3, -1);
  std::vector<std::string> labels;
  for (auto& p : raw.patients) {
    int& r = remap[static_cast<std::size_t>(p.baseline.race)];
    if (r < 0) {
      r = static_cast<int>(labels.size());
      labels.push_back(raw.race_labels[static_cast<std::size_t>(p.baseline.race)]);
    }
    p.baseline.race = r;
  }
  raw.race_labels = labels;
  return raw;
}

TruthResult counterfactual_truth(const SimScenario& s, Arm arm, long paths,
                                 std::uint64_t seed, int jobs) {
  if (paths < 1) throw std::invalid_argument("counterfactual_truth: N must be >= 1");
  validate(s);
  const auto m = static_cast<std::size_t>(paths);
  const std::size_t blocks = (m + kPathBlock - 1) / kPathBlock;
  const auto z = static_cast<Exposure>(arm);
  const double lstar_logit[2] = {
      s.lstar_intercept + s.lstar_exposure[static_cast<std::size_t>(z)],
      s.lstar_intercept + s.lstar_lag + s.lstar_exposure[static_cast<std::size_t>(z)]};
  const double lstar_p[2] = {stats::logistic(lstar_logit[0]), stats::logistic(lstar_logit[1])};
  const double hazard_p[2] = {s.hazard(s.u_star, 0, z), s.hazard(s.u_star, 1, z)};
  struct Block {
    std::vector<long> fails;
    double sum = 0.0, sum_sq = 0.0;
  };
  std::vector<Block> out(blocks);
  parallel_for(blocks, jobs, [&](std::size_t b) {
    Rng rng(derive_seed(seed, kTagTruth, b));
    Block blk;
    blk.fails.assign(static_cast<std::size_t>(s.horizon) + 1, 0);
    const std::size_t end = std::min(m, (b + 1) * kPathBlock);
    for (std::size_t path = b * kPathBlock; path < end; ++path) {
      int lstar = uniform01(rng) < s.lstar_initial ? 1 : 0;
      double restricted = s.horizon;
      for (int t = 1; t <= s.horizon; ++t) {
        if (t > 1) lstar = uniform01(rng) < lstar_p[lstar] ? 1 : 0;
        if (uniform01(rng) < hazard_p[lstar]) {
          ++blk.fails[static_cast<std::size_t>(t)];
          restricted = t - 1;
          break;
        }
      }
      blk.sum += restricted;
      blk.sum_sq += restricted * restricted;
    }
    out[b] = std::move(blk);
  });
  TruthResult r;
  r.curve.values.assign(static_cast<std::size_t>(s.horizon) + 1, 1.0);
  long cumulative = 0;
  for (int t = 1; t <= s.horizon; ++t) {
    for (const auto& blk : out) cumulative += blk.fails[static_cast<std::size_t>(t)];
    r.curve.values[static_cast<std::size_t>(t)] =
        1.0 - static_cast<double>(cumulative) / static_cast<double>(m);
  }
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& blk : out) {
    sum += blk.sum;
    sum_sq += blk.sum_sq;
  }
  const double n = static_cast<double>(m);
  r.rmst = rmst(r.curve);
  const double var = n > 1 ? (sum_sq - sum * sum / n) / (n - 1.0) : 0.0;
  r.rmst_mc_se = std::sqrt(std::max(var, 0.0) / n);
  return r;
}

std::string_view to_string(StudyArm arm) {
  switch (arm) {
    case StudyArm::Both: return "both";
    case StudyArm::TimeVarying: return "time-varying";
    case StudyArm::Temporal: return "temporal";
    case StudyArm::Neither: return "neither";
  }
  return "?";
}

std::vector<StudyArm> all_study_arms() {
  return {StudyArm::Both, StudyArm::TimeVarying, StudyArm::Temporal, StudyArm::Neither};
}

std::vector<StudyArmConfig> study_arms(const ModelSetOptions& base) {
  std::vector<StudyArmConfig> arms;
  for (StudyArm a : all_study_arms()) {
    StudyArmConfig c{a, base, true};
    const bool drop_u = a == StudyArm::TimeVarying || a == StudyArm::Neither;
    const bool drop_l = a == StudyArm::Temporal || a == StudyArm::Neither;
    if (drop_u) {
      c.models.trend = TrendKind::None;
      c.kernel_weighted = false;
    }
    if (drop_l) {
      c.models.hazard_covariates = false;
      c.models.simulate_covariates = false;
    }
    arms.push_back(std::move(c));
  }
  return arms;
}

ModelSetOptions scenario_model_options(const SimScenario& scenario) {
  ModelSetOptions o;
  o.kind = ModelSetKind::Indicator;
  o.trend = scenario.trend == SimTrend::Linear ? TrendKind::Linear : TrendKind::Spline;
  o.trend_df = 5;
  return o;
}

}  // namespace rdg
