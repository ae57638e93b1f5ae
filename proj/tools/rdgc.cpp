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

// rdgc: command-line driver for the rdgcomp library.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rdgcomp/csv.hpp"
#include "rdgcomp/ingest.hpp"
#include "rdgcomp/pipeline.hpp"
#include "rdgcomp/simgen.hpp"

namespace {

using namespace rdg;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

SimScenario resolve_scenario(const std::string& name_or_path) {
  for (const auto& n : bundled_scenario_names()) {
    if (n == name_or_path) return bundled_scenario(n);
  }
  return load_scenario(name_or_path);
}

Dataset load_dataset(const std::string& dir, int horizon, bool washout) {
  Dataset data = build_dataset(read_dataset_dir(dir), IngestOptions{horizon, washout});
  for (const auto& w : data.warnings) std::cerr << "rdgc: warning: " << w << '\n';
  return data;
}

// Flags given on the command line override the config file.
struct AnalyzeFlags {
  std::string input, out, config;
  std::string u_star, model_set, trend, rows;
  std::vector<double> h;
  int paths = 0, resamples = 0, partitions = 0, horizon = 0, trend_df = 0, jobs = 1;
  double p = 0.0, ci_multiplier = 0.0;
  std::uint64_t seed = 0;
  bool kernel = true, exclude_late_brand = true, allow_extrapolation = false;
  bool goodness_of_fit = true, oop_reciprocal = false, require_washout = false;
};

void add_analysis_flags(CLI::App* cmd, AnalyzeFlags& f) {
  cmd->add_option("--config", f.config, "JSON file with analysis settings");
  cmd->add_option("--u-star", f.u_star, "cutoff date u* (YYYY-MM-DD)");
  cmd->add_option("--h", f.h, "kernel bandwidths in days")->expected(1, -1);
  cmd->add_option("-M,--paths", f.paths, "Monte Carlo paths per curve");
  cmd->add_option("-R,--resamples", f.resamples, "bootstrap resamples");
  cmd->add_option("-P,--partitions", f.partitions, "random patient partitions");
  cmd->add_option("--horizon", f.horizon, "follow-up horizon in days");
  cmd->add_option("--p", f.p, "per-fill regime cost for both arms");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--ci-multiplier", f.ci_multiplier, "confidence interval multiplier");
  cmd->add_option("--model-set", f.model_set, "full or indicator");
  cmd->add_option("--trend", f.trend, "none, linear or spline");
  cmd->add_option("--trend-df", f.trend_df, "spline df for the trend in U");
  cmd->add_option("--rows", f.rows, "adherent or at-risk");
  cmd->add_option("--kernel", f.kernel, "localize baseline draws at u*");
  cmd->add_option("--exclude-late-brand", f.exclude_late_brand,
                  "drop brand initiators on or after u*");
  cmd->add_flag("--allow-extrapolation", f.allow_extrapolation,
                "continue past days without adherent patients");
  cmd->add_option("--goodness-of-fit", f.goodness_of_fit, "held-out model checks");
  cmd->add_flag("--oop-reciprocal", f.oop_reciprocal, "model 1 / oop in the gamma model");
  cmd->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
}

AnalysisConfig analysis_config(CLI::App* cmd, const AnalyzeFlags& f) {
  AnalysisConfig c;
  if (!f.config.empty()) apply_json(read_json_file(f.config), c);
  auto given = [&](const char* name) { return cmd->count(name) > 0; };
  nlohmann::json o;
  if (given("--u-star")) o["u-star"] = f.u_star;
  if (given("--h")) o["h"] = f.h;
  if (given("--paths")) o["paths"] = f.paths;
  if (given("--resamples")) o["resamples"] = f.resamples;
  if (given("--partitions")) o["partitions"] = f.partitions;
  if (given("--horizon")) o["horizon"] = f.horizon;
  if (given("--p")) o["p"] = f.p;
  if (given("--seed")) o["seed"] = f.seed;
  if (given("--ci-multiplier")) o["ci-multiplier"] = f.ci_multiplier;
  if (given("--model-set")) o["model-set"] = f.model_set;
  if (given("--trend")) o["trend"] = f.trend;
  if (given("--trend-df")) o["trend-df"] = f.trend_df;
  if (given("--rows")) o["rows"] = f.rows;
  if (given("--kernel")) o["kernel"] = f.kernel;
  if (given("--exclude-late-brand")) o["exclude-late-brand"] = f.exclude_late_brand;
  if (given("--allow-extrapolation")) o["allow-extrapolation"] = f.allow_extrapolation;
  if (given("--goodness-of-fit")) o["goodness-of-fit"] = f.goodness_of_fit;
  if (given("--oop-reciprocal")) o["oop-reciprocal"] = f.oop_reciprocal;
  if (given("--jobs")) o["jobs"] = f.jobs;
  if (!o.empty()) apply_json(o, c);
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Brand versus generic counterfactual survival by G-computation at a cutoff"};
  app.require_subcommand(1);

  AnalyzeFlags af;
  auto* analyze = app.add_subcommand("analyze", "estimate adjusted survival curves and RMST difference");
  analyze->set_help_flag("--help", "print this help");
  analyze->add_option("--input", af.input, "directory with patients.csv, fills.csv, events.csv")
      ->required();
  analyze->add_option("--out", af.out, "output directory")->required();
  analyze->add_flag("--require-washout", af.require_washout, "drop patients with washout = 0");
  add_analysis_flags(analyze, af);

  std::string diag_input, diag_out;
  int diag_horizon = kDefaultHorizon;
  auto* diagnose = app.add_subcommand("diagnose", "monthly incident use and 15th-percentile survival");
  diagnose->set_help_flag("--help", "print this help");
  diagnose->add_option("--input", diag_input, "input directory")->required();
  diagnose->add_option("--out", diag_out, "output directory")->required();
  diagnose->add_option("--horizon", diag_horizon, "follow-up horizon in days");

  std::string sim_scenario = "linear", sim_out;
  int sim_n = 0, sim_jobs = 1;
  std::uint64_t sim_seed = 1;
  auto* simulate = app.add_subcommand("simulate", "write a synthetic dataset in the ingestion schema");
  simulate->set_help_flag("--help", "print this help");
  simulate->add_option("--scenario", sim_scenario, "bundled name (linear, sine, null) or JSON file");
  simulate->add_option("--n", sim_n, "patients (default: the scenario's n)");
  simulate->add_option("--seed", sim_seed, "seed");
  simulate->add_option("--out", sim_out, "output directory")->required();
  simulate->add_option("--jobs", sim_jobs, "worker threads")->check(CLI::PositiveNumber);

  StudyConfig sc;
  std::vector<std::string> study_scenarios{"linear", "sine"};
  std::vector<std::string> study_arm_names;
  std::string study_out, study_config;
  auto* study = app.add_subcommand("simulate-study", "four-arm bias, RMSE and coverage study");
  study->set_help_flag("--help", "print this help");
  study->add_option("--config", study_config, "JSON file with study settings");
  study->add_option("--scenario", study_scenarios, "scenarios (bundled names or files)")
      ->expected(1, -1);
  study->add_option("--arms", study_arm_names, "subset of both, time-varying, temporal, neither")
      ->expected(1, -1);
  study->add_option("--replications", sc.replications, "replications per scenario");
  study->add_option("--n", sc.n, "patients per replication");
  study->add_option("-M,--paths", sc.paths, "Monte Carlo paths per curve");
  study->add_option("-R,--resamples", sc.resamples, "bootstrap resamples");
  study->add_option("--h", sc.bandwidth, "kernel bandwidth in days");
  study->add_option("--ci-multiplier", sc.ci_multiplier, "confidence interval multiplier");
  study->add_option("--seed", sc.seed, "master seed");
  study->add_option("--truth-paths", sc.truth_paths, "oracle paths for scenarios without a frozen truth");
  study->add_option("--jobs", sc.jobs, "worker threads")->check(CLI::PositiveNumber);
  study->add_option("--out", study_out, "output directory")->required();
  bool study_quiet = false;
  study->add_flag("--quiet", study_quiet, "no progress messages");

  std::string truth_scenario = "linear", truth_write;
  long truth_paths = 1000000;
  std::uint64_t truth_seed = 20260101;
  int truth_jobs = 1;
  auto* truth = app.add_subcommand("truth", "counterfactual RMST truths of a scenario at u*");
  truth->set_help_flag("--help", "print this help");
  truth->add_option("--scenario", truth_scenario, "bundled name or JSON file");
  truth->add_option("--paths", truth_paths, "oracle paths per regime");
  truth->add_option("--seed", truth_seed, "seed");
  truth->add_option("--jobs", truth_jobs, "worker threads")->check(CLI::PositiveNumber);
  truth->add_option("--write", truth_write, "write the scenario with the frozen truth to this file");

  std::string show_name;
  auto* show = app.add_subcommand("scenario", "print a bundled scenario as JSON");
  show->set_help_flag("--help", "print this help");
  show->add_option("name", show_name, "linear, sine or null")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) {
      const AnalysisConfig config = analysis_config(analyze, af);
      const Dataset data = load_dataset(af.input, config.horizon, af.require_washout);
      const AnalysisReport report = run_analysis(data, config, af.out);
      std::ifstream summary(std::filesystem::path(af.out) / "summary.txt");
      std::cout << summary.rdbuf();
      (void)report;
    } else if (*diagnose) {
      const Dataset data = load_dataset(diag_input, diag_horizon, false);
      const auto report = run_diagnostics(data, diag_horizon, diag_out);
      std::cout << report.months.size() << " months written to " << diag_out << '\n';
    } else if (*simulate) {
      const SimScenario s = resolve_scenario(sim_scenario);
      const RawDataset raw = simulate_dataset(s, sim_n > 0 ? sim_n : s.n, sim_seed, sim_jobs);
      write_dataset_dir(raw, sim_out);
      std::cout << raw.patients.size() << " patients written to " << sim_out << '\n';
    } else if (*study) {
      if (!study_config.empty()) {
        const auto j = read_json_file(study_config);
        auto set = [&](const char* key, auto& field) {
          if (j.contains(key) && study->count(std::string("--") + key) == 0) {
            field = j.at(key).get<std::decay_t<decltype(field)>>();
          }
        };
        set("replications", sc.replications);
        set("n", sc.n);
        set("paths", sc.paths);
        set("resamples", sc.resamples);
        set("ci-multiplier", sc.ci_multiplier);
        set("seed", sc.seed);
        set("truth-paths", sc.truth_paths);
        set("jobs", sc.jobs);
        if (j.contains("h") && study->count("--h") == 0) sc.bandwidth = j.at("h");
        if (j.contains("scenario") && study->count("--scenario") == 0) {
          study_scenarios = j.at("scenario").get<std::vector<std::string>>();
        }
        if (j.contains("arms") && study->count("--arms") == 0) {
          study_arm_names = j.at("arms").get<std::vector<std::string>>();
        }
      }
      for (const auto& s : study_scenarios) sc.scenarios.push_back(resolve_scenario(s));
      if (!study_arm_names.empty()) {
        sc.arms.clear();
        for (const auto& name : study_arm_names) {
          bool found = false;
          for (StudyArm a : all_study_arms()) {
            if (to_string(a) == name) {
              sc.arms.push_back(a);
              found = true;
            }
          }
          if (!found) throw std::invalid_argument("unknown study arm '" + name + "'");
        }
      }
      const auto report = run_simulation_study(sc, study_out, [&](const std::string& msg) {
        if (!study_quiet) std::cerr << msg << '\n';
      });
      std::ifstream summary(std::filesystem::path(study_out) / "summary.txt");
      std::cout << summary.rdbuf();
      (void)report;
    } else if (*truth) {
      SimScenario s = resolve_scenario(truth_scenario);
      const TruthResult b = counterfactual_truth(s, Arm::Brand, truth_paths, truth_seed, truth_jobs);
      const TruthResult g = counterfactual_truth(s, Arm::Generic, truth_paths, truth_seed, truth_jobs);
      SimScenario::Truth t;
      t.brand_rmst = b.rmst;
      t.generic_rmst = g.rmst;
      t.difference = b.rmst - g.rmst;
      t.difference_mc_se = std::sqrt(b.rmst_mc_se * b.rmst_mc_se + g.rmst_mc_se * g.rmst_mc_se);
      t.paths = truth_paths;
      t.seed = truth_seed;
      s.truth = t;
      std::cout << "brand " << format_double(b.rmst) << " (MC SE " << format_double(b.rmst_mc_se)
                << ")\ngeneric " << format_double(g.rmst) << " (MC SE "
                << format_double(g.rmst_mc_se) << ")\ndifference " << format_double(t.difference)
                << " (MC SE " << format_double(t.difference_mc_se) << ")\n";
      if (!truth_write.empty()) {
        std::ofstream out(truth_write);
        out << to_json(s).dump(2) << '\n';
      }
    } else if (*show) {
      std::cout << to_json(bundled_scenario(show_name)).dump(2) << '\n';
    }
  } catch (const PositivityError& e) {
    std::cerr << "rdgc: positivity: " << e.what() << '\n';
    return 3;
  } catch (const PipelineError& e) {
    std::cerr << "rdgc: " << e.what() << '\n';
    return 3;
  } catch (const IngestError& e) {
    std::cerr << "rdgc: input: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "rdgc: invalid: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "rdgc: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
