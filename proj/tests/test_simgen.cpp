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
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rdgcomp/gcomp.hpp"
#include "rdgcomp/ingest.hpp"
#include "rdgcomp/simgen.hpp"
#include "rdgcomp/stats/glm.hpp"

using namespace rdg;
namespace fs = std::filesystem;

namespace {

/// Every patient continues on 30-day fills at the scenario's cost.
SimScenario always_adherent() {
  SimScenario s = bundled_scenario("linear");
  s.truth.reset();
  for (auto& row : s.fill) row = {-60.0, 0.0, 0.0};
  s.supply_days = {30};
  s.supply_probabilities = {1.0};
  s.cost_log_sd = 0.0;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::set<std::string> variables(const stats::ModelSpec& m) {
  std::set<std::string> out;
  for (const auto& t : m.terms) {
    for (const auto& v : t.variables()) out.insert(v);
  }
  return out;
}

bool uses_any(const std::set<std::string>& vars, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (vars.count(n)) return true;
  }
  return false;
}

/// Variables of each model of a specification, keyed by model name.
std::vector<std::pair<std::string, std::set<std::string>>> term_sets(const SequentialModelSpec& s) {
  std::vector<std::pair<std::string, std::set<std::string>>> out;
  for (const auto& c : s.covariates) out.emplace_back(c.target, variables(c.model));
  out.emplace_back("hazard", variables(s.hazard));
  return out;
}

const std::initializer_list<const char*> kTrendVars{"u", "u_rel"};
const std::initializer_list<const char*> kDynamicVars{"rxb", "oop", "zero", "lstar", "rxb_lag",
                                                      "oop_lag", "zero_lag", "lstar_lag"};

}  // namespace

TEST_CASE("sine hazard follows the logistic formula") {
  const SimScenario s = bundled_scenario("sine");
  for (int k = 0; k <= 200; ++k) {
    const double u = s.u_star - 1100 + 11.0 * k;
    for (int l : {0, 1}) {
      for (Exposure z : {Exposure::None, Exposure::ImBrand, Exposure::ImGeneric, Exposure::Other}) {
        const double eta = s.hazard_intercept + s.hazard_lstar * l +
                           s.hazard_exposure[static_cast<std::size_t>(z)] +
                           s.hazard_trend * std::sin(u / s.u_bar);
        CHECK(std::abs(s.hazard(u, l, z) - 1.0 / (1.0 + std::exp(-eta))) < 1e-12);
      }
    }
  }
  const SimScenario lin = bundled_scenario("linear");
  CHECK(lin.trend_value(lin.u_star + 365) == doctest::Approx(1.0));
}

TEST_CASE("degenerate always-continue scenario is fully adherent") {
  const SimScenario s = always_adherent();
  const auto data = build_dataset(simulate_dataset(s, 300, 17));
  REQUIRE(data.patients.size() == 300);
  for (const auto& p : data.patients) {
    const Arm arm = p.initiating_arm();
    const Regime r{arm, s.cost[static_cast<std::size_t>(arm)]};
    CHECK(adherence_prefix(p, r) == p.follow_up);
  }
}

TEST_CASE("simulated exposure respects supply windows and running cost") {
  const SimScenario s = bundled_scenario("linear");
  const auto raw = simulate_dataset(s, 200, 3);
  const auto data = build_dataset(raw);
  for (const auto& p : data.patients) {
    CHECK(p.baseline.rxb_1 == p.daily.front().rxb);
    double total = 0.0;
    std::size_t next = 0;
    for (Day t = 1; t <= p.follow_up; ++t) {
      while (next < p.fills.size() && p.fills[next].day == t) total += p.fills[next++].cost;
      CHECK(p.day(t).z2 == doctest::Approx(total).epsilon(1e-12));
    }
    for (const auto& f : p.fills) {
      CHECK((f.days_supply == 30 || f.days_supply == 60 || f.days_supply == 90));
      const Day end = std::min(p.follow_up, f.day + f.days_supply - 1);
      for (Day t = f.day; t <= end; ++t) CHECK(static_cast<int>(p.day(t).z1) == static_cast<int>(f.form));
    }
  }
}

TEST_CASE("failure probability matches the analytic hazard") {
  SimScenario s = always_adherent();
  s.hazard_trend = 0.0;
  s.hazard_lstar = 0.0;
  s.hazard_intercept = -5.0;
  s.hazard_exposure = {0.0, 0.0, 0.5, 0.0};
  const int n = 100000;
  const auto data = build_dataset(simulate_dataset(s, n, 29));
  for (Arm arm : {Arm::Brand, Arm::Generic}) {
    const double h = 1.0 / (1.0 + std::exp(-(s.hazard_intercept +
                                             s.hazard_exposure[static_cast<std::size_t>(arm)])));
    const double f = 1.0 - std::pow(1.0 - h, 270);
    int count = 0, failed = 0;
    for (const auto& p : data.patients) {
      if (p.initiating_arm() != arm) continue;
      ++count;
      failed += p.failure;
    }
    const double se = std::sqrt(f * (1 - f) / count);
    CHECK(std::abs(static_cast<double>(failed) / count - f) < 3 * se);
  }
}

TEST_CASE("refits recover the generating coefficients") {
  const SimScenario s = bundled_scenario("linear");
  const auto data = build_dataset(simulate_dataset(s, 1000, 41));

  // L*_t | L*_{t-1}, Z1_{t-1}
  std::vector<double> y, lag, z1, z2, z3;
  // fill decision at opportunities | L*_t, (U - u*) / 365.25
  std::vector<double> choice, ls, ur;
  for (const auto& p : data.patients) {
    const Exposure arm = static_cast<Exposure>(p.initiating_arm());
    const double u_rel = (p.initiation - s.u_star) / 365.25;
    std::size_t next = 1;
    for (Day t = 2; t <= p.follow_up; ++t) {
      const auto& prev = p.day(t - 1);
      const auto& cur = p.day(t);
      y.push_back(cur.rxb > 0);
      lag.push_back(prev.rxb > 0);
      z1.push_back(prev.z1 == Exposure::ImBrand);
      z2.push_back(prev.z1 == Exposure::ImGeneric);
      z3.push_back(prev.z1 == Exposure::Other);
      while (next < p.fills.size() && p.fills[next].day < t) ++next;
      const bool filled = next < p.fills.size() && p.fills[next].day == t;
      if (!filled && cur.z1 != Exposure::None) continue;
      double c = 3.0;
      if (filled) {
        const auto form = static_cast<Exposure>(p.fills[next].form);
        c = form == arm ? 0.0 : (form == Exposure::Other ? 2.0 : 1.0);
      }
      choice.push_back(c);
      ls.push_back(cur.rxb > 0);
      ur.push_back(u_rel);
    }
  }
  stats::Frame lf;
  lf.set("y", y);
  lf.set("lag", lag);
  lf.set("z1", z1);
  lf.set("z2", z2);
  lf.set("z3", z3);
  using stats::TermSpec;
  const auto lm = stats::fit_glm({"lstar", stats::Family::Binomial, "y",
                                  {TermSpec::linear("lag"), TermSpec::linear("z1"),
                                   TermSpec::linear("z2"), TermSpec::linear("z3")}},
                                 lf);
  const auto lse = stats::standard_errors(lm);
  const std::vector<double> ltruth{s.lstar_intercept, s.lstar_lag, s.lstar_exposure[1],
                                   s.lstar_exposure[2], s.lstar_exposure[3]};
  for (std::size_t k = 0; k < ltruth.size(); ++k) {
    CAPTURE(k);
    CHECK(std::abs(lm.beta[static_cast<Eigen::Index>(k)] - ltruth[k]) < 3 * lse[static_cast<Eigen::Index>(k)]);
  }

  stats::Frame ff;
  ff.set("c", choice);
  ff.set("lstar", ls);
  ff.set("u_rel", ur);
  const auto fm = stats::fit_glm({"fill", stats::Family::Multinomial, "c",
                                  {TermSpec::linear("lstar"), TermSpec::linear("u_rel")}},
                                 ff);
  const auto fse = stats::standard_errors(fm);
  REQUIRE(fm.beta_multi.rows() == 3);
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 3; ++j) {
      CAPTURE(k);
      CAPTURE(j);
      CHECK(std::abs(fm.beta_multi(k, j) - s.fill[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]) <
            3 * fse[3 * k + j]);
    }
  }
  // L* moves the next exposure.
  CHECK(std::abs(fm.beta_multi(2, 1)) > 2 * fse[7]);
}

TEST_CASE("simulation is seed-deterministic under any job count") {
  const SimScenario s = bundled_scenario("sine");
  const auto a = simulate_dataset(s, 150, 8, 1);
  const auto b = simulate_dataset(s, 150, 8, 3);
  const fs::path root = fs::temp_directory_path() / "rdgcomp_simgen_determinism";
  fs::remove_all(root);
  write_dataset_dir(a, root / "a");
  write_dataset_dir(b, root / "b");
  for (const char* f : {"patients.csv", "fills.csv", "events.csv", "covariates.csv"}) {
    CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));
  }
  const auto c = simulate_dataset(s, 150, 9, 1);
  write_dataset_dir(c, root / "c");
  CHECK(slurp(root / "a" / "events.csv") != slurp(root / "c" / "events.csv"));
  fs::remove_all(root);
}

TEST_CASE("exported datasets read back identically") {
  const auto raw = simulate_dataset(bundled_scenario("linear"), 80, 5);
  const fs::path dir = fs::temp_directory_path() / "rdgcomp_simgen_roundtrip";
  fs::remove_all(dir);
  write_dataset_dir(raw, dir);
  const auto back = read_dataset_dir(dir);
  const auto d1 = build_dataset(raw);
  const auto d2 = build_dataset(back);
  REQUIRE(d1.patients.size() == d2.patients.size());
  for (std::size_t i = 0; i < d1.patients.size(); ++i) {
    const auto& p = d1.patients[i];
    const auto& q = d2.patients[i];
    CHECK(p.id == q.id);
    CHECK(p.follow_up == q.follow_up);
    CHECK(p.failure == q.failure);
    CHECK(p.baseline.race == q.baseline.race);
    for (Day t = 1; t <= p.follow_up; ++t) {
      CHECK(p.day(t).z1 == q.day(t).z1);
      CHECK(p.day(t).z2 == q.day(t).z2);
      CHECK(p.day(t).rxb == q.day(t).rxb);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("regime-inert scenario has equal brand and generic truths") {
  const SimScenario s = bundled_scenario("null");
  const auto b = counterfactual_truth(s, Arm::Brand, 100000, 5);
  const auto g = counterfactual_truth(s, Arm::Generic, 100000, 5);
  const double se = std::hypot(b.rmst_mc_se, g.rmst_mc_se);
  CHECK(std::abs(b.rmst - g.rmst) <= 3 * se);
}

TEST_CASE("constant-hazard truth is the geometric series") {
  SimScenario s = bundled_scenario("linear");
  s.truth.reset();
  s.hazard_intercept = std::log(0.01 / 0.99);
  s.hazard_lstar = 0.0;
  s.hazard_trend = 0.0;
  s.hazard_exposure = {0.0, 0.0, 0.0, 0.0};
  const auto r = counterfactual_truth(s, Arm::Brand, 1000000, 12, 2);
  const double exact = 0.99 * (1.0 - std::pow(0.99, 270)) / 0.01;
  CHECK(std::abs(r.rmst - exact) <= 3 * r.rmst_mc_se);
  CHECK(r.rmst_mc_se > 0.0);
  for (int t : {10, 100, 270}) {
    const double g = std::pow(0.99, t);
    CHECK(std::abs(r.curve.at(t) - g) <= 3 * std::sqrt(g * (1 - g) / 1e6));
  }
}

TEST_CASE("frozen truths are reproduced by the oracle") {
  for (const auto& name : bundled_scenario_names()) {
    CAPTURE(name);
    const SimScenario s = bundled_scenario(name);
    REQUIRE(s.truth);
    CHECK(s.truth->paths == 1000000);
    const auto b = counterfactual_truth(s, Arm::Brand, s.truth->paths, s.truth->seed, 2);
    CHECK(b.rmst == doctest::Approx(s.truth->brand_rmst).epsilon(1e-12));
    if (name == "linear") {
      const auto g = counterfactual_truth(s, Arm::Generic, s.truth->paths, s.truth->seed, 2);
      CHECK(g.rmst == doctest::Approx(s.truth->generic_rmst).epsilon(1e-12));
      CHECK(b.rmst - g.rmst == doctest::Approx(s.truth->difference).epsilon(1e-9));
    }
  }
}

TEST_CASE("scenario JSON round trip and bundled files") {
  for (const auto& name : bundled_scenario_names()) {
    CAPTURE(name);
    const SimScenario s = bundled_scenario(name);
    const auto doc = to_json(s);
    CHECK(to_json(scenario_from_json(doc)) == doc);
    const fs::path file = fs::path(RDGCOMP_SOURCE_DIR) / "scenarios" / (name + ".json");
    REQUIRE(fs::exists(file));
    CHECK(to_json(load_scenario(file)) == doc);
  }
  nlohmann::json bad = to_json(bundled_scenario("linear"));
  bad["supply"]["probabilities"] = {0.5, 0.2, 0.1};
  CHECK_THROWS(scenario_from_json(bad));
  bad = to_json(bundled_scenario("linear"));
  bad["supply"]["days"] = {30, 45, 90};
  CHECK_THROWS(scenario_from_json(bad));
  CHECK_THROWS(bundled_scenario("nope"));
}

TEST_CASE("study arms differ in exactly the documented term sets") {
  const auto base = scenario_model_options(bundled_scenario("linear"));
  const auto arms = study_arms(base);
  REQUIRE(arms.size() == 4);
  const auto& both = arms[0];
  CHECK(both.arm == StudyArm::Both);
  CHECK(both.kernel_weighted);
  CHECK(make_model_spec(Arm::Brand, both.models).hazard.terms ==
        make_model_spec(Arm::Brand, base).hazard.terms);

  const auto sets = [](const StudyArmConfig& c) { return term_sets(make_model_spec(Arm::Brand, c.models)); };
  const auto s_both = sets(both);
  for (const auto& arm : arms) {
    CAPTURE(to_string(arm.arm));
    const bool drop_u = arm.arm == StudyArm::TimeVarying || arm.arm == StudyArm::Neither;
    const bool drop_l = arm.arm == StudyArm::Temporal || arm.arm == StudyArm::Neither;
    const auto spec = make_model_spec(Arm::Brand, arm.models);
    CHECK(arm.kernel_weighted == !drop_u);
    CHECK(spec.simulate_covariates == !drop_l);
    const auto s = sets(arm);
    CHECK(s.size() == (drop_l ? 1 : s_both.size()));
    for (std::size_t m = 0; m < s_both.size(); ++m) {
      CAPTURE(s_both[m].first);
      const bool hazard = s_both[m].first == "hazard";
      const auto found = std::find_if(s.begin(), s.end(),
                                      [&](const auto& x) { return x.first == s_both[m].first; });
      if (found == s.end()) {
        CHECK(drop_l);
        continue;
      }
      CHECK(uses_any(found->second, kTrendVars) == !drop_u);
      if (hazard) CHECK(uses_any(found->second, kDynamicVars) == !drop_l);
      // Remaining variables are untouched.
      std::set<std::string> expected = s_both[m].second;
      if (drop_u) {
        for (const char* v : kTrendVars) expected.erase(v);
      }
      if (drop_l && hazard) {
        for (const char* v : kDynamicVars) expected.erase(v);
      }
      CHECK(found->second == expected);
    }
  }
}
