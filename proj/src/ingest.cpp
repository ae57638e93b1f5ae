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

#include "rdgcomp/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <unordered_map>

#include "rdgcomp/csv.hpp"

namespace rdg {

namespace {

double parse_number(const CsvReader& reader, const std::string& text,
                    const char* column) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto result = std::from_chars(begin, end, value);
  if (text.empty() || result.ec != std::errc() || result.ptr != end) {
    reader.fail(std::string("column '") + column + "': not a number '" + text +
                "'");
  }
  return value;
}

int parse_count(const CsvReader& reader, const std::string& text,
                const char* column) {
  const double v = parse_number(reader, text, column);
  if (v < 0 || v != static_cast<int>(v)) {
    reader.fail(std::string("column '") + column +
                "': expected a non-negative integer, got '" + text + "'");
  }
  return static_cast<int>(v);
}

Date parse_date(const CsvReader& reader, const std::string& text,
                const char* column) {
  try {
    return parse_iso_date(text);
  } catch (const DomainError& e) {
    reader.fail(std::string("column '") + column + "': " + e.what());
  }
}

template <class Fn>
auto with_location(const CsvReader& reader, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DomainError& e) {
    reader.fail(e.what());
  }
}

}  // namespace

RawDataset read_tables(std::istream& patients, std::istream& fills,
                       std::istream& events, std::istream* covariates) {
  RawDataset raw;
  std::unordered_map<std::string, int> race_index;
  std::unordered_map<std::string, std::size_t> known;
  std::vector<std::string> f;

  {
    CsvReader r(patients, "patients.csv");
    const auto c_id = r.column("id"), c_init = r.column("init_date"),
               c_age = r.column("age"), c_sex = r.column("sex"),
               c_race = r.column("race"), c_ses = r.column("ses"),
               c_cci = r.column("cci"), c_out = r.column("out"),
               c_oop = r.column("oop_1"), c_rxb = r.column("rxb_1");
    const auto c_wash = r.find_column("washout");
    while (r.next(f)) {
      PatientRow row;
      row.id = f[c_id];
      if (row.id.empty()) r.fail("empty patient id");
      if (known.count(row.id)) r.fail("duplicate patient id '" + row.id + "'");
      row.init_date = parse_date(r, f[c_init], "init_date");
      auto& b = row.baseline;
      b.age = parse_number(r, f[c_age], "age");
      if (!(b.age > 0)) r.fail("column 'age': must be positive");
      b.sex = with_location(r, [&] { return parse_sex(f[c_sex]); });
      auto [it, inserted] = race_index.emplace(
          f[c_race], static_cast<int>(raw.race_labels.size()));
      if (inserted) raw.race_labels.push_back(f[c_race]);
      b.race = it->second;
      b.ses = parse_count(r, f[c_ses], "ses");
      if (b.ses > 9) r.fail("column 'ses': decile must be in 0..9");
      b.cci = parse_count(r, f[c_cci], "cci");
      b.out = parse_count(r, f[c_out], "out");
      b.oop_1 = parse_number(r, f[c_oop], "oop_1");
      if (!(b.oop_1 >= 0)) r.fail("column 'oop_1': must be non-negative");
      b.rxb_1 = parse_count(r, f[c_rxb], "rxb_1");
      if (c_wash != CsvReader::npos && !f[c_wash].empty()) {
        row.washout = parse_count(r, f[c_wash], "washout") != 0;
      }
      known.emplace(row.id, raw.patients.size());
      raw.patients.push_back(std::move(row));
    }
  }

  auto check_id = [&](const CsvReader& r, const std::string& id) {
    if (!known.count(id)) r.fail("unknown patient id '" + id + "'");
  };

  {
    CsvReader r(fills, "fills.csv");
    const auto c_id = r.column("id"), c_date = r.column("date"),
               c_form = r.column("form"), c_ds = r.column("days_supply"),
               c_cost = r.column("oop_cost");
    while (r.next(f)) {
      FillRecord fill;
      fill.id = f[c_id];
      check_id(r, fill.id);
      fill.date = parse_date(r, f[c_date], "date");
      fill.form = with_location(r, [&] { return parse_formulation(f[c_form]); });
      fill.days_supply = parse_count(r, f[c_ds], "days_supply");
      if (fill.days_supply < 1) r.fail("column 'days_supply': must be >= 1");
      fill.oop_cost = parse_number(r, f[c_cost], "oop_cost");
      if (!(fill.oop_cost >= 0)) r.fail("column 'oop_cost': must be non-negative");
      raw.fills.push_back(std::move(fill));
    }
  }

  {
    CsvReader r(events, "events.csv");
    const auto c_id = r.column("id"), c_date = r.column("date"),
               c_kind = r.column("kind");
    while (r.next(f)) {
      EventRecord e;
      e.id = f[c_id];
      check_id(r, e.id);
      e.date = parse_date(r, f[c_date], "date");
      e.kind = with_location(r, [&] { return parse_event_kind(f[c_kind]); });
      raw.events.push_back(std::move(e));
    }
  }

  if (covariates) {
    CsvReader r(*covariates, "covariates.csv");
    const auto c_id = r.column("id"), c_date = r.column("date"),
               c_rxb = r.column("rxb"), c_oop = r.column("oop");
    while (r.next(f)) {
      CovariateRecord c;
      c.id = f[c_id];
      check_id(r, c.id);
      c.date = parse_date(r, f[c_date], "date");
      c.rxb = parse_count(r, f[c_rxb], "rxb");
      c.oop = parse_number(r, f[c_oop], "oop");
      if (!(c.oop >= 0)) r.fail("column 'oop': must be non-negative");
      raw.covariates.push_back(std::move(c));
    }
  }
  return raw;
}

RawDataset read_dataset_dir(const std::filesystem::path& dir) {
  auto open = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) {
      throw IngestError((dir / name).string(), 0, "cannot open file");
    }
    return in;
  };
  std::ifstream patients = open("patients.csv");
  std::ifstream fills = open("fills.csv");
  std::ifstream events = open("events.csv");
  if (std::filesystem::exists(dir / "covariates.csv")) {
    std::ifstream covariates = open("covariates.csv");
    return read_tables(patients, fills, events, &covariates);
  }
  return read_tables(patients, fills, events, nullptr);
}

void write_dataset_dir(const RawDataset& raw, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    std::ofstream out = open("patients.csv");
    CsvWriter w(out);
    w.header({"id", "init_date", "age", "sex", "race", "ses", "cci", "out",
              "oop_1", "rxb_1"});
    for (const auto& p : raw.patients) {
      const auto& b = p.baseline;
      w.field(p.id).field(format_iso_date(p.init_date)).field(b.age)
          .field(std::string(to_string(b.sex)))
          .field(raw.race_labels.at(b.race)).field(b.ses).field(b.cci)
          .field(b.out).field(b.oop_1).field(b.rxb_1);
      w.end_row();
    }
  }
  {
    std::ofstream out = open("fills.csv");
    CsvWriter w(out);
    w.header({"id", "date", "form", "days_supply", "oop_cost"});
    for (const auto& f : raw.fills) {
      w.field(f.id).field(format_iso_date(f.date))
          .field(std::string(to_string(f.form))).field(f.days_supply)
          .field(f.oop_cost);
      w.end_row();
    }
  }
  {
    std::ofstream out = open("events.csv");
    CsvWriter w(out);
    w.header({"id", "date", "kind"});
    for (const auto& e : raw.events) {
      w.field(e.id).field(format_iso_date(e.date))
          .field(std::string(to_string(e.kind)));
      w.end_row();
    }
  }
  {
    std::ofstream out = open("covariates.csv");
    CsvWriter w(out);
    w.header({"id", "date", "rxb", "oop"});
    for (const auto& c : raw.covariates) {
      w.field(c.id).field(format_iso_date(c.date)).field(c.rxb).field(c.oop);
      w.end_row();
    }
  }
}

Dataset build_dataset(const RawDataset& raw, const IngestOptions& options) {
  Dataset data;
  data.race_labels = raw.race_labels;

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < raw.patients.size(); ++i) {
    index.emplace(raw.patients[i].id, i);
  }
  const std::size_t n = raw.patients.size();
  std::vector<std::vector<FillRecord>> fills(n);
  std::vector<std::vector<EventRecord>> events(n);
  std::vector<std::vector<CovariateRecord>> covariates(n);
  for (const auto& f : raw.fills) fills[index.at(f.id)].push_back(f);
  for (const auto& e : raw.events) events[index.at(e.id)].push_back(e);
  for (const auto& c : raw.covariates) covariates[index.at(c.id)].push_back(c);

  for (std::size_t i = 0; i < n; ++i) {
    const PatientRow& row = raw.patients[i];
    if (options.require_washout && row.washout && !*row.washout) {
      data.warnings.push_back(row.id + ": excluded by washout filter");
      continue;
    }
    auto& pf = fills[i];
    // file order breaks same-day ties
    std::stable_sort(pf.begin(), pf.end(),
                     [](const auto& a, const auto& b) { return a.date < b.date; });
    try {
      data.patients.push_back(build_history(row.id, row.init_date, row.baseline,
                                            pf, events[i], covariates[i],
                                            options.horizon, &data.warnings));
    } catch (const RejectedPatient& e) {
      ++data.rejected;
      data.warnings.push_back(row.id + ": rejected: " + e.what());
    } catch (const DomainError& e) {
      throw DomainError("patient " + row.id + ": " + e.what());
    }
  }
  return data;
}

}  // namespace rdg
