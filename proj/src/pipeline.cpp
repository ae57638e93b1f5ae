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

#include "rdgcomp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "rdgcomp/csv.hpp"
#include "rdgcomp/km.hpp"
#include "rdgcomp/random.hpp"

namespace rdg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view to_string(ModelSetKind k) { return k == ModelSetKind::Full ? "full" : "indicator"; }

std::string_view to_string(TrendKind k) {
  switch (k) {
    case TrendKind::None: return "none";
    case TrendKind::Linear: return "linear";
    case TrendKind::Spline: return "spline";
  }
  return "?";
}

std::string_view to_string(RowFilter f) { return f == RowFilter::Adherent ? "adherent" : "at-risk"; }

ModelSetKind parse_model_set(const std::string& s) {
  if (s == "full") return ModelSetKind::Full;
  if (s == "indicator") return ModelSetKind::Indicator;
  throw std::invalid_argument("model-set must be 'full' or 'indicator', got '" + s + "'");
}

TrendKind parse_trend(const std::string& s) {
  if (s == "none") return TrendKind::None;
  if (s == "linear") return TrendKind::Linear;
  if (s == "spline") return TrendKind::Spline;
  throw std::invalid_argument("trend must be none, linear or spline, got '" + s + "'");
}

RowFilter parse_rows(const std::string& s) {
  if (s == "adherent") return RowFilter::Adherent;
  if (s == "at-risk") return RowFilter::AtRisk;
  throw std::invalid_argument("rows must be 'adherent' or 'at-risk', got '" + s + "'");
}

std::string bandwidth_label(double h) {
  if (h == std::floor(h) && std::abs(h) < 1e9) return "h" + std::to_string(static_cast<long long>(h));
  return "h" + format_double(h);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

std::string fixed(double v, int decimals) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

// Mean curve over partitions; SEs of log S combine like the RMST SEs.
SurvivalCurve average_curves(const std::vector<SurvivalCurve>& curves,
                             const std::vector<std::vector<double>>& se_logs) {
  SurvivalCurve out;
  const std::size_t len = curves.front().values.size();
  out.values.assign(len, 0.0);
  std::vector<double> se(len, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> parts;
    bool defined = true;
    for (std::size_t p = 0; p < curves.size(); ++p) {
      out.values[t] += curves[p].values[t] / static_cast<double>(curves.size());
      const double s = se_logs[p][t];
      if (std::isnan(s)) defined = false;
      parts.push_back(s);
    }
    se[t] = defined ? combine_partition_ses(parts) : kNaN;
  }
  out.se_log = std::move(se);
  return out;
}

std::vector<TimeToEvent> times(std::span<const PatientHistory> era) {
  std::vector<TimeToEvent> out;
  out.reserve(era.size());
  for (const auto& h : era) out.push_back({h.follow_up, h.failure});
  return out;
}

}  // namespace

void AnalysisConfig::validate() const {
  if (bandwidths.empty()) throw std::invalid_argument("h: at least one bandwidth is required");
  for (double h : bandwidths) {
    if (!(h > 0) || !std::isfinite(h)) throw std::invalid_argument("h: bandwidths must be positive");
  }
  if (paths < 1) throw std::invalid_argument("paths (M) must be >= 1");
  if (resamples < 2) throw std::invalid_argument("resamples (R) must be >= 2");
  if (partitions < 1) throw std::invalid_argument("partitions (P) must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  if (per_fill_cost && !(*per_fill_cost > 0)) throw std::invalid_argument("p must be positive");
  if (!(ci_multiplier > 0)) throw std::invalid_argument("ci-multiplier must be positive");
}

nlohmann::json to_json(const AnalysisConfig& c) {
  nlohmann::json j;
  j["model-set"] = to_string(c.models.kind);
  j["trend"] = to_string(c.models.trend);
  j["trend-df"] = c.models.trend_df;
  j["hazard-covariates"] = c.models.hazard_covariates;
  j["simulate-covariates"] = c.models.simulate_covariates;
  j["oop-reciprocal"] = c.models.oop_reciprocal;
  j["rows"] = to_string(c.models.rows);
  j["kernel"] = c.kernel_weighted;
  j["u-star"] = format_iso_date(c.u_star);
  j["exclude-late-brand"] = c.exclude_late_brand;
  j["h"] = c.bandwidths;
  j["paths"] = c.paths;
  j["resamples"] = c.resamples;
  j["partitions"] = c.partitions;
  j["horizon"] = c.horizon;
  j["p"] = c.per_fill_cost ? nlohmann::json(*c.per_fill_cost) : nlohmann::json(nullptr);
  j["seed"] = c.seed;
  j["ci-multiplier"] = c.ci_multiplier;
  j["allow-extrapolation"] = c.allow_extrapolation;
  j["goodness-of-fit"] = c.goodness_of_fit;
  return j;
}

void apply_json(const nlohmann::json& j, AnalysisConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const std::vector<std::string> known = {
      "model-set", "trend", "trend-df", "hazard-covariates", "simulate-covariates",
      "oop-reciprocal", "rows", "kernel", "u-star", "exclude-late-brand", "h", "paths",
      "resamples", "partitions", "horizon", "p", "seed", "ci-multiplier",
      "allow-extrapolation", "goodness-of-fit", "jobs"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  try {
    if (j.contains("model-set")) c.models.kind = parse_model_set(j.at("model-set"));
    if (j.contains("trend")) c.models.trend = parse_trend(j.at("trend"));
    c.models.trend_df = j.value("trend-df", c.models.trend_df);
    c.models.hazard_covariates = j.value("hazard-covariates", c.models.hazard_covariates);
    c.models.simulate_covariates = j.value("simulate-covariates", c.models.simulate_covariates);
    c.models.oop_reciprocal = j.value("oop-reciprocal", c.models.oop_reciprocal);
    if (j.contains("rows")) c.models.rows = parse_rows(j.at("rows"));
    c.kernel_weighted = j.value("kernel", c.kernel_weighted);
    if (j.contains("u-star")) c.u_star = parse_iso_date(j.at("u-star").get<std::string>());
    c.exclude_late_brand = j.value("exclude-late-brand", c.exclude_late_brand);
    if (j.contains("h")) {
      const auto& h = j.at("h");
      c.bandwidths = h.is_array() ? h.get<std::vector<double>>() : std::vector<double>{h.get<double>()};
    }
    c.paths = j.value("paths", c.paths);
    c.resamples = j.value("resamples", c.resamples);
    c.partitions = j.value("partitions", c.partitions);
    c.horizon = j.value("horizon", c.horizon);
    if (j.contains("p")) {
      if (j.at("p").is_null()) {
        c.per_fill_cost.reset();
      } else {
        c.per_fill_cost = j.at("p").get<double>();
      }
    }
    c.seed = j.value("seed", c.seed);
    c.ci_multiplier = j.value("ci-multiplier", c.ci_multiplier);
    c.allow_extrapolation = j.value("allow-extrapolation", c.allow_extrapolation);
    c.goodness_of_fit = j.value("goodness-of-fit", c.goodness_of_fit);
    c.jobs = j.value("jobs", c.jobs);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

Analysis::Analysis(std::span<const PatientHistory> data, const AnalysisConfig& config)
    : config_(config) {
  config_.validate();
  CutoffDesign design{config_.u_star, config_.bandwidths.front(), config_.exclude_late_brand};
  eras_ = split_eras(data, design);
  const double p_brand = config_.per_fill_cost
                             ? *config_.per_fill_cost
                             : default_fill_cost(eras_.brand, Arm::Brand, design);
  const double p_generic = config_.per_fill_cost
                               ? *config_.per_fill_cost
                               : default_fill_cost(eras_.generic, Arm::Generic, design);
  brand_ = Regime{Arm::Brand, p_brand, config_.horizon};
  generic_ = Regime{Arm::Generic, p_generic, config_.horizon};
  brand_days_ = build_person_days(eras_.brand, brand_, config_.u_star, config_.models.rows,
                                  config_.horizon);
  generic_days_ = build_person_days(eras_.generic, generic_, config_.u_star,
                                    config_.models.rows, config_.horizon);
}

AnalysisEstimate Analysis::estimate(double h, std::span<const double> weights,
                                    std::uint64_t seed, int jobs, Fits* fits,
                                    const Fits* start) const {
  if (!weights.empty() && weights.size() != n_patients()) {
    throw std::invalid_argument("analysis: weight count does not match the era patients");
  }
  const CutoffDesign design{config_.u_star, h, config_.exclude_late_brand};
  auto run = [&](Arm arm, std::uint64_t tag, FittedModelSet* keep) {
    const auto& era = arm == Arm::Brand ? eras_.brand : eras_.generic;
    std::span<const double> w;
    if (!weights.empty()) {
      w = arm == Arm::Brand ? weights.subspan(0, eras_.brand.size())
                            : weights.subspan(eras_.brand.size());
    }
    FitSequentialOptions fo;
    fo.glm = config_.glm;
    fo.patient_weights = w;
    fo.allow_extrapolation = config_.allow_extrapolation;
    fo.horizon = config_.horizon;
    if (start) fo.warm_start = arm == Arm::Brand ? &start->brand : &start->generic;
    FittedModelSet models =
        fit_sequential(person_days(arm), make_model_spec(arm, config_.models), fo);
    if (config_.kernel_weighted) models.bandwidth = h;
    const WeightedSampler sampler = config_.kernel_weighted ? kernel_sampler(era, design, w)
                                                            : uniform_sampler(era, design, w);
    GcompOptions go;
    go.paths = config_.paths;
    go.horizon = config_.horizon;
    go.force_u = config_.u_star;
    go.seed = derive_seed(seed, tag);
    go.jobs = jobs;
    SurvivalCurve curve = gcomp_survival(models, regime(arm), sampler, go);
    if (keep) *keep = std::move(models);
    return curve;
  };
  AnalysisEstimate est;
  est.brand = run(Arm::Brand, kTagBrand, fits ? &fits->brand : nullptr);
  est.generic = run(Arm::Generic, kTagGeneric, fits ? &fits->generic : nullptr);
  est.rmst_difference = rmst_difference(est.brand, est.generic);
  return est;
}

AnalysisReport run_analysis(const Dataset& data, const AnalysisConfig& config,
                            const std::filesystem::path& out_dir) {
  const Analysis analysis(data.patients, config);
  const std::size_t n = analysis.n_patients();
  const int parts = config.partitions;
  if (static_cast<std::size_t>(parts) > n) {
    throw std::invalid_argument("partitions (P) exceeds the number of analysed patients");
  }
  AnalysisReport report;
  report.warnings = data.warnings;

  // Diagnostics that do not depend on h.
  const auto& eras = analysis.eras();
  std::vector<PositivityReport> positivity{
      positivity_diagnostics(eras.brand, analysis.regime(Arm::Brand), config.horizon),
      positivity_diagnostics(eras.generic, analysis.regime(Arm::Generic), config.horizon)};
  for (const auto& p : positivity) {
    if (p.first_empty_day > 0) {
      report.warnings.push_back(std::string(to_string(p.era)) +
                                " era: no adherent patients from day " +
                                std::to_string(p.first_empty_day));
    }
  }
  std::optional<GoodnessOfFit> gof_brand, gof_generic;
  if (config.goodness_of_fit) {
    const std::uint64_t s = derive_seed(config.seed, kTagGoodnessOfFit);
    try {
      gof_brand = goodness_of_fit(analysis.person_days(Arm::Brand),
                                  make_model_spec(Arm::Brand, config.models),
                                  derive_seed(s, kTagBrand), config.glm);
      gof_generic = goodness_of_fit(analysis.person_days(Arm::Generic),
                                    make_model_spec(Arm::Generic, config.models),
                                    derive_seed(s, kTagGeneric), config.glm);
    } catch (const std::exception& e) {
      report.warnings.push_back(std::string("goodness of fit skipped: ") + e.what());
      gof_brand.reset();
      gof_generic.reset();
    }
  }
  const SurvivalCurve km_brand = km_curve(times(eras.brand), config.horizon);
  const SurvivalCurve km_generic = km_curve(times(eras.generic), config.horizon);

  for (std::size_t hi = 0; hi < config.bandwidths.size(); ++hi) {
    const double h = config.bandwidths[hi];
    const std::uint64_t hseed = derive_seed(config.seed, kTagBandwidth, hi);
    std::vector<int> assignment(n, 0);
    if (parts > 1) assignment = partition_patients(n, parts, hseed);

    BandwidthResult res;
    res.h = h;
    std::vector<SurvivalCurve> brand_curves, generic_curves;
    std::vector<std::vector<double>> brand_se, generic_se;
    std::vector<double> rb, rb_se, rg, rg_se;
    nlohmann::json model_docs = nlohmann::json::array();
    for (int p = 0; p < parts; ++p) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (assignment[i] == p) members.push_back(i);
      }
      std::vector<double> base;
      if (parts > 1) {
        base.assign(n, 0.0);
        for (std::size_t i : members) base[i] = 1.0;
      }
      const std::uint64_t pseed = derive_seed(hseed, kTagPartition, static_cast<std::uint64_t>(p));
      Analysis::Fits fits;
      const AnalysisEstimate point = analysis.estimate(h, base, pseed, config.jobs, &fits);
      const WeightedAnalysis resample = [&](std::span<const double> w, std::uint64_t s) {
        std::vector<double> full(n, 0.0);
        for (std::size_t k = 0; k < members.size(); ++k) full[members[k]] = w[k];
        return analysis.estimate(h, full, s, 1, nullptr, &fits);
      };
      const BootstrapResult boot =
          bootstrap(members.size(), resample, config.resamples, pseed, config.jobs);
      for (const auto& w : boot.warnings) {
        res.warnings.push_back("partition " + std::to_string(p) + ": " + w);
      }
      for (const auto& w : fits.brand.warnings) res.warnings.push_back("brand era: " + w);
      for (const auto& w : fits.generic.warnings) res.warnings.push_back("generic era: " + w);
      brand_curves.push_back(point.brand);
      generic_curves.push_back(point.generic);
      brand_se.push_back(boot.se_log_brand);
      generic_se.push_back(boot.se_log_generic);
      rb.push_back(rmst(point.brand));
      rg.push_back(rmst(point.generic));
      rb_se.push_back(boot.rmst_brand_se);
      rg_se.push_back(boot.rmst_generic_se);
      res.partition_estimates.push_back(point.rmst_difference);
      res.partition_ses.push_back(boot.rmst_difference_se);
      if (p == 0) {
        fits.brand.goodness_of_fit = gof_brand;
        fits.generic.goodness_of_fit = gof_generic;
      }
      model_docs.push_back({{"partition", p},
                            {"patients", members.size()},
                            {"brand", to_json(fits.brand)},
                            {"generic", to_json(fits.generic)}});
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    res.brand = average_curves(brand_curves, brand_se);
    res.generic = average_curves(generic_curves, generic_se);
    res.rmst_brand = mean(rb);
    res.rmst_generic = mean(rg);
    res.rmst_difference = mean(res.partition_estimates);
    res.rmst_brand_se = combine_partition_ses(rb_se);
    res.rmst_generic_se = combine_partition_ses(rg_se);
    res.rmst_difference_se = combine_partition_ses(res.partition_ses);
    res.ci = confidence_interval(res.rmst_difference, res.rmst_difference_se, config.ci_multiplier);

    if (!out_dir.empty()) {
      const std::string dir = bandwidth_label(h);
      {
        auto out = open_out(out_dir / dir / "curves.csv");
        CsvWriter w(out);
        w.header({"t", "brand", "brand_se_log", "generic", "generic_se_log", "brand_km",
                  "generic_km"});
        for (int t = 0; t <= config.horizon; ++t) {
          const auto k = static_cast<std::size_t>(t);
          w.field(t).field(res.brand.values[k]).field((*res.brand.se_log)[k])
              .field(res.generic.values[k]).field((*res.generic.se_log)[k])
              .field(km_brand.values[k]).field(km_generic.values[k]);
          w.end_row();
        }
      }
      {
        auto row = [&](std::string q, double est, double se) {
          const auto ci = confidence_interval(est, se, config.ci_multiplier);
          return ResultRow{std::move(q), est, se, ci.first, ci.second, h, parts,
                           config.resamples, config.paths, config.seed};
        };
        const std::vector<ResultRow> rows{
            row("rmst_brand", res.rmst_brand, res.rmst_brand_se),
            row("rmst_generic", res.rmst_generic, res.rmst_generic_se),
            row("rmst_difference", res.rmst_difference, res.rmst_difference_se)};
        auto out = open_out(out_dir / dir / "results.csv");
        write_results_csv(out, rows);
      }
      {
        auto out = open_out(out_dir / dir / "positivity.csv");
        write_positivity_csv(out, positivity);
      }
      {
        auto out = open_out(out_dir / dir / "goodness_of_fit.csv");
        CsvWriter w(out);
        w.header({"era", "model", "metric", "value", "rows"});
        auto emit = [&](std::string_view era, const std::optional<GoodnessOfFit>& g) {
          if (!g) return;
          for (const auto& r : g->error_rates) {
            w.field(std::string(era)).field(r.model).field(std::string("error_rate"))
                .field(r.error_rate).field(r.rows);
            w.end_row();
          }
          if (g->ks_distance) {
            w.field(std::string(era)).field(std::string("oop"))
                .field(std::string("ks_distance")).field(*g->ks_distance).field(kNaN);
            w.end_row();
          }
        };
        emit("brand", gof_brand);
        emit("generic", gof_generic);
      }
      {
        auto out = open_out(out_dir / dir / "partitions.csv");
        CsvWriter w(out);
        w.header({"partition", "rmst_difference", "se"});
        for (int p = 0; p < parts; ++p) {
          w.field(p).field(res.partition_estimates[static_cast<std::size_t>(p)])
              .field(res.partition_ses[static_cast<std::size_t>(p)]);
          w.end_row();
        }
      }
      write_json(out_dir / dir / "models.json", model_docs);
      for (const char* f : {"curves.csv", "results.csv", "positivity.csv",
                            "goodness_of_fit.csv", "partitions.csv", "models.json"}) {
        report.files.push_back(dir + "/" + f);
      }
    }
    report.bandwidths.push_back(std::move(res));
  }

  if (!out_dir.empty()) {
    std::ostringstream summary;
    summary << "brand era patients: " << eras.brand.size()
            << ", generic era patients: " << eras.generic.size()
            << ", excluded: " << eras.excluded.size() << ", rejected: " << data.rejected << '\n';
    summary << "regime cost per fill: brand " << format_double(analysis.regime(Arm::Brand).per_fill_cost)
            << ", generic " << format_double(analysis.regime(Arm::Generic).per_fill_cost) << '\n';
    summary << "M = " << config.paths << ", R = " << config.resamples
            << ", P = " << config.partitions << ", seed = " << config.seed << "\n\n";
    summary << pad("h", 7) << pad("quantity", 17) << pad("estimate", 11) << pad("se", 9)
            << pad("ci_lo", 10) << pad("ci_hi", 10) << '\n';
    for (const auto& r : report.bandwidths) {
      auto line = [&](const char* q, double est, double se) {
        const auto ci = confidence_interval(est, se, config.ci_multiplier);
        summary << pad(format_double(r.h), 7) << pad(q, 17) << pad(fixed(est, 2), 11)
                << pad(fixed(se, 2), 9) << pad(fixed(ci.first, 2), 10)
                << pad(fixed(ci.second, 2), 10) << '\n';
      };
      line("rmst_brand", r.rmst_brand, r.rmst_brand_se);
      line("rmst_generic", r.rmst_generic, r.rmst_generic_se);
      line("rmst_difference", r.rmst_difference, r.rmst_difference_se);
    }
    std::vector<std::string> warnings = report.warnings;
    for (const auto& r : report.bandwidths) {
      for (const auto& w : r.warnings) warnings.push_back(bandwidth_label(r.h) + ": " + w);
    }
    if (!warnings.empty()) {
      summary << "\nwarnings:\n";
      for (const auto& w : warnings) summary << "  " << w << '\n';
    }
    {
      auto out = open_out(out_dir / "summary.txt");
      out << summary.str();
    }
    report.files.push_back("summary.txt");

    nlohmann::json files = nlohmann::json::array();
    auto columns = [](const std::string& f) -> nlohmann::json {
      if (f.ends_with("curves.csv")) {
        return {"t", "brand", "brand_se_log", "generic", "generic_se_log", "brand_km", "generic_km"};
      }
      if (f.ends_with("results.csv")) {
        return {"quantity", "estimate", "se", "ci_lo", "ci_hi", "h", "P", "R", "M", "seed"};
      }
      if (f.ends_with("positivity.csv")) {
        return {"era", "day", "at_risk", "adherent", "censored", "flag"};
      }
      if (f.ends_with("goodness_of_fit.csv")) return {"era", "model", "metric", "value", "rows"};
      if (f.ends_with("partitions.csv")) return {"partition", "rmst_difference", "se"};
      return nullptr;
    };
    for (const auto& f : report.files) {
      nlohmann::json e{{"path", f}};
      const auto c = columns(f);
      if (!c.is_null()) {
        e["format"] = "csv";
        e["columns"] = c;
      } else {
        e["format"] = f.ends_with(".json") ? "json" : "text";
      }
      files.push_back(e);
    }
    nlohmann::json manifest;
    manifest["kind"] = "analysis";
    manifest["config"] = to_json(config);
    manifest["data"] = {{"patients", data.patients.size()},
                        {"rejected", data.rejected},
                        {"brand_era", eras.brand.size()},
                        {"generic_era", eras.generic.size()},
                        {"excluded", eras.excluded.size()}};
    manifest["regimes"] = {{"brand", {{"p", analysis.regime(Arm::Brand).per_fill_cost}}},
                           {"generic", {{"p", analysis.regime(Arm::Generic).per_fill_cost}}}};
    manifest["random_streams"] = {
        {"rule", "child = mix64(mix64(parent ^ mix64(tag)) + index)"},
        {"bandwidth", "derive_seed(seed, 11, bandwidth index)"},
        {"partition", "derive_seed(bandwidth seed, 3, p); the assignment uses derive_seed(bandwidth seed, 3)"},
        {"point_estimate", "gcomp paths from derive_seed(partition seed, 8) for brand, 9 for generic"},
        {"bootstrap", "resample r weights from derive_seed(partition seed, 2, r), its analysis from derive_seed(partition seed, 4, r)"},
        {"goodness_of_fit", "derive_seed(seed, 10), then tag 8 (brand) or 9 (generic)"},
        {"paths", "block b of 256 paths draws from derive_seed(stage seed, 1, b)"}};
    manifest["files"] = files;
    manifest["warnings"] = warnings;
    write_json(out_dir / "manifest.json", manifest);
    report.files.push_back("manifest.json");
  }
  return report;
}

void StudyConfig::validate() const {
  if (replications < 1) throw std::invalid_argument("replications must be >= 1");
  if (scenarios.empty()) throw std::invalid_argument("simulation study: no scenario");
  if (arms.empty()) throw std::invalid_argument("simulation study: no arm");
  if (n < 2) throw std::invalid_argument("n must be >= 2");
  if (paths < 1) throw std::invalid_argument("paths (M) must be >= 1");
  if (resamples < 2) throw std::invalid_argument("resamples (R) must be >= 2");
  if (!(bandwidth > 0)) throw std::invalid_argument("h must be positive");
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  if (truth_paths < 1) throw std::invalid_argument("truth paths must be >= 1");
  if (!(max_failure_rate >= 0 && max_failure_rate < 1)) {
    throw std::invalid_argument("max failure rate must lie in [0, 1)");
  }
}

StudyReport run_simulation_study(const StudyConfig& config, const std::filesystem::path& out_dir,
                                 const std::function<void(const std::string&)>& log) {
  config.validate();
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    log(msg);
  };
  StudyReport report;
  struct Cell {
    double estimate = kNaN, se = kNaN;
    std::string error;
  };
  nlohmann::json scenario_docs = nlohmann::json::array();
  std::vector<std::vector<std::vector<Cell>>> all_cells;
  for (std::size_t si = 0; si < config.scenarios.size(); ++si) {
    const SimScenario& sc = config.scenarios[si];
    const std::uint64_t sseed = derive_seed(config.seed, kTagReplicate, si);
    double truth = 0.0;
    if (sc.truth) {
      truth = sc.truth->difference;
    } else {
      say("scenario " + sc.name + ": computing the oracle truth");
      const std::uint64_t tseed = derive_seed(config.seed, kTagTruth, si);
      truth = counterfactual_truth(sc, Arm::Brand, config.truth_paths, tseed, config.jobs).rmst -
              counterfactual_truth(sc, Arm::Generic, config.truth_paths, tseed, config.jobs).rmst;
    }
    const auto arms = study_arms(scenario_model_options(sc));
    std::vector<StudyArmConfig> chosen;
    for (StudyArm a : config.arms) {
      for (const auto& c : arms) {
        if (c.arm == a) chosen.push_back(c);
      }
    }
    const auto reps = static_cast<std::size_t>(config.replications);
    std::vector<std::vector<Cell>> cells(reps, std::vector<Cell>(chosen.size()));
    parallel_for(reps, config.jobs, [&](std::size_t r) {
      const std::uint64_t rseed = derive_seed(sseed, kTagReplicate, r);
      Dataset data;
      try {
        data = build_dataset(simulate_dataset(sc, config.n, rseed), IngestOptions{sc.horizon, false});
      } catch (const std::exception& e) {
        for (auto& c : cells[r]) c.error = std::string("simulation: ") + e.what();
        return;
      }
      for (std::size_t a = 0; a < chosen.size(); ++a) {
        AnalysisConfig ac;
        ac.models = chosen[a].models;
        ac.kernel_weighted = chosen[a].kernel_weighted;
        ac.u_star = sc.u_star;
        ac.bandwidths = {config.bandwidth};
        ac.paths = config.paths;
        ac.resamples = config.resamples;
        ac.horizon = sc.horizon;
        ac.seed = derive_seed(rseed, kTagAnalysis, a);
        ac.goodness_of_fit = false;
        try {
          const Analysis analysis(data.patients, ac);
          Analysis::Fits fits;
          const AnalysisEstimate point = analysis.estimate(config.bandwidth, {}, ac.seed, 1, &fits);
          const WeightedAnalysis resample = [&](std::span<const double> w, std::uint64_t s) {
            return analysis.estimate(config.bandwidth, w, s, 1, nullptr, &fits);
          };
          const BootstrapResult boot =
              bootstrap(analysis.n_patients(), resample, config.resamples, ac.seed, 1);
          cells[r][a].estimate = point.rmst_difference;
          cells[r][a].se = boot.rmst_difference_se;
        } catch (const std::exception& e) {
          cells[r][a].error = e.what();
        }
      }
      say("scenario " + sc.name + ": replication " + std::to_string(r + 1) + " of " +
          std::to_string(reps) + " done");
    });

    for (std::size_t a = 0; a < chosen.size(); ++a) {
      StudyArmResult row;
      row.scenario = sc.name;
      row.arm = chosen[a].arm;
      row.truth = truth;
      row.replications = config.replications;
      int covered = 0;
      double sum = 0.0, sq = 0.0, se_sum = 0.0;
      for (std::size_t r = 0; r < reps; ++r) {
        const Cell& c = cells[r][a];
        if (!c.error.empty()) {
          ++row.failed;
          row.errors.push_back("replication " + std::to_string(r) + ": " + c.error);
          continue;
        }
        row.estimates.push_back(c.estimate);
        row.ses.push_back(c.se);
        sum += c.estimate;
        sq += (c.estimate - truth) * (c.estimate - truth);
        se_sum += c.se;
        if (std::abs(c.estimate - truth) <= config.ci_multiplier * c.se) ++covered;
      }
      row.aborted = row.failed > config.max_failure_rate * config.replications ||
                    row.estimates.empty();
      if (!row.aborted) {
        const double k = static_cast<double>(row.estimates.size());
        row.mean_estimate = sum / k;
        row.bias = row.mean_estimate - truth;
        row.root_mse = std::sqrt(sq / k);
        row.coverage = covered / k;
        row.mean_se = se_sum / k;
      } else {
        row.mean_estimate = row.bias = row.root_mse = row.coverage = row.mean_se = kNaN;
      }
      report.rows.push_back(std::move(row));
    }
    scenario_docs.push_back(to_json(sc));
    scenario_docs.back()["study_truth"] = truth;
    all_cells.push_back(std::move(cells));
  }

  if (!out_dir.empty()) {
    {
      auto out = open_out(out_dir / "study.csv");
      CsvWriter w(out);
      w.header({"scenario", "arm", "truth", "replications", "failed", "aborted", "mean_estimate",
                "bias", "root_mse", "coverage", "mean_se"});
      for (const auto& r : report.rows) {
        w.field(r.scenario).field(std::string(to_string(r.arm))).field(r.truth)
            .field(r.replications).field(r.failed).field(r.aborted ? 1 : 0)
            .field(r.mean_estimate).field(r.bias).field(r.root_mse).field(r.coverage)
            .field(r.mean_se);
        w.end_row();
      }
    }
    {
      auto out = open_out(out_dir / "replications.csv");
      CsvWriter w(out);
      w.header({"scenario", "arm", "replication", "estimate", "se", "error"});
      std::size_t row = 0;
      for (std::size_t si = 0; si < config.scenarios.size(); ++si) {
        const auto& cells = all_cells[si];
        const std::size_t arms = cells.empty() ? 0 : cells.front().size();
        for (std::size_t a = 0; a < arms; ++a, ++row) {
          for (std::size_t r = 0; r < cells.size(); ++r) {
            const auto& c = cells[r][a];
            w.field(config.scenarios[si].name)
                .field(std::string(to_string(report.rows[row].arm)))
                .field(r).field(c.estimate).field(c.se).field(c.error);
            w.end_row();
          }
        }
      }
    }
    {
      std::ostringstream s;
      s << pad("scenario", 10) << pad("arm", 14) << pad("truth", 9) << pad("bias", 9)
        << pad("rmse", 9) << pad("coverage", 10) << pad("mean_se", 9) << pad("failed", 8) << '\n';
      for (const auto& r : report.rows) {
        s << pad(r.scenario, 10) << pad(std::string(to_string(r.arm)), 14)
          << pad(fixed(r.truth, 2), 9) << pad(fixed(r.bias, 2), 9) << pad(fixed(r.root_mse, 2), 9)
          << pad(r.aborted ? std::string("aborted") : fixed(100.0 * r.coverage, 1) + "%", 10)
          << pad(fixed(r.mean_se, 2), 9) << pad(std::to_string(r.failed), 8) << '\n';
      }
      auto out = open_out(out_dir / "summary.txt");
      out << s.str();
    }
    nlohmann::json manifest;
    manifest["kind"] = "simulation-study";
    nlohmann::json arms = nlohmann::json::array();
    for (StudyArm a : config.arms) arms.push_back(std::string(to_string(a)));
    manifest["config"] = {{"replications", config.replications}, {"n", config.n},
                          {"paths", config.paths}, {"resamples", config.resamples},
                          {"h", config.bandwidth}, {"ci-multiplier", config.ci_multiplier},
                          {"seed", config.seed}, {"truth-paths", config.truth_paths},
                          {"max-failure-rate", config.max_failure_rate}, {"arms", arms}};
    manifest["scenarios"] = scenario_docs;
    manifest["random_streams"] = {
        {"rule", "child = mix64(mix64(parent ^ mix64(tag)) + index)"},
        {"scenario", "derive_seed(seed, 7, scenario index)"},
        {"replication", "derive_seed(scenario seed, 7, r); patient i from derive_seed(replication seed, 5, i)"},
        {"arm", "derive_seed(replication seed, 4, arm index), then as in an analysis with P = 1"},
        {"truth", "derive_seed(seed, 6, scenario index) when a scenario has no frozen truth"}};
    manifest["files"] = {
        {{"path", "study.csv"}, {"format", "csv"},
         {"columns", {"scenario", "arm", "truth", "replications", "failed", "aborted",
                      "mean_estimate", "bias", "root_mse", "coverage", "mean_se"}}},
        {{"path", "replications.csv"}, {"format", "csv"},
         {"columns", {"scenario", "arm", "replication", "estimate", "se", "error"}}},
        {{"path", "summary.txt"}, {"format", "text"}}};
    write_json(out_dir / "manifest.json", manifest);
    report.files = {"study.csv", "replications.csv", "summary.txt", "manifest.json"};
  }
  return report;
}

std::vector<MonthRow> monthly_diagnostics(std::span<const PatientHistory> data, int horizon) {
  std::map<std::string, std::vector<const PatientHistory*>> by_month;
  for (const auto& h : data) by_month[format_iso_month(h.initiation)].push_back(&h);
  std::vector<MonthRow> rows;
  for (const auto& [month, patients] : by_month) {
    MonthRow row;
    row.month = month;
    std::vector<TimeToEvent> tte;
    for (const PatientHistory* h : patients) {
      (h->initiating_arm() == Arm::Brand ? row.brand : row.generic) += 1;
      tte.push_back({h->follow_up, h->failure});
    }
    row.initiators = static_cast<int>(patients.size());
    row.q15 = survival_quantile(km_curve(tte, horizon), 0.15);
    rows.push_back(std::move(row));
  }
  return rows;
}

double lag1_autocorrelation(std::span<const double> x) {
  if (x.size() < 3) throw std::invalid_argument("autocorrelation needs at least 3 values");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    den += (x[i] - mean) * (x[i] - mean);
    if (i > 0) num += (x[i] - mean) * (x[i - 1] - mean);
  }
  return den > 0 ? num / den : 0.0;
}

double autocorrelation_p_value(std::span<const double> series, int permutations,
                               std::uint64_t seed) {
  if (permutations < 1) throw std::invalid_argument("permutations must be >= 1");
  const double observed = lag1_autocorrelation(series);
  std::vector<double> x(series.begin(), series.end());
  Rng rng = make_rng(seed, kTagPartition);
  int extreme = 0;
  for (int k = 0; k < permutations; ++k) {
    for (std::size_t i = x.size(); i > 1; --i) {
      const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)));
      std::swap(x[i - 1], x[j]);
    }
    if (lag1_autocorrelation(x) >= observed) ++extreme;
  }
  return (extreme + 1.0) / (permutations + 1.0);
}

DiagnosticsReport run_diagnostics(const Dataset& data, int horizon,
                                  const std::filesystem::path& out_dir) {
  if (data.patients.empty()) throw std::invalid_argument("diagnostics: no patients");
  DiagnosticsReport report;
  report.months = monthly_diagnostics(data.patients, horizon);
  if (out_dir.empty()) return report;
  {
    auto out = open_out(out_dir / "incident_use.csv");
    CsvWriter w(out);
    w.header({"month", "brand", "generic", "total"});
    for (const auto& m : report.months) {
      w.field(m.month).field(m.brand).field(m.generic).field(m.initiators);
      w.end_row();
    }
  }
  {
    auto out = open_out(out_dir / "secular_trend.csv");
    CsvWriter w(out);
    w.header({"month", "initiators", "q15"});
    for (const auto& m : report.months) {
      w.field(m.month).field(m.initiators).field(m.q15);
      w.end_row();
    }
  }
  nlohmann::json manifest;
  manifest["kind"] = "diagnostics";
  manifest["horizon"] = horizon;
  manifest["patients"] = data.patients.size();
  manifest["files"] = {
      {{"path", "incident_use.csv"}, {"format", "csv"},
       {"columns", {"month", "brand", "generic", "total"}}},
      {{"path", "secular_trend.csv"}, {"format", "csv"},
       {"columns", {"month", "initiators", "q15"}}}};
  write_json(out_dir / "manifest.json", manifest);
  report.files = {"incident_use.csv", "secular_trend.csv", "manifest.json"};
  return report;
}

}  // namespace rdg
