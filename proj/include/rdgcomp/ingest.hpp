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

#ifndef RDGCOMP_INGEST_HPP
#define RDGCOMP_INGEST_HPP

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "rdgcomp/domain.hpp"

namespace rdg {

struct PatientRow {
  std::string id;
  Date init_date = 0;
  BaselineCovariates baseline;
  std::optional<bool> washout;  // optional `washout` column
};

/// The ingestion tables as records, before derivation:
///   patients(id, init_date, age, sex, race, ses, cci, out, oop_1, rxb_1)
///   fills(id, date, form, days_supply, oop_cost)
///   events(id, date, kind)
///   covariates(id, date, rxb, oop)         -- optional change points
struct RawDataset {
  std::vector<PatientRow> patients;
  std::vector<FillRecord> fills;
  std::vector<EventRecord> events;
  std::vector<CovariateRecord> covariates;
  std::vector<std::string> race_labels;
};

struct Dataset {
  std::vector<PatientHistory> patients;
  std::vector<std::string> race_labels;
  std::vector<std::string> warnings;
  std::size_t rejected = 0;
};

struct IngestOptions {
  int horizon = kDefaultHorizon;
  /// Drop patients whose `washout` column is 0.
  bool require_washout = false;
};

RawDataset read_tables(std::istream& patients, std::istream& fills,
                       std::istream& events, std::istream* covariates = nullptr);

/// Reads patients.csv, fills.csv, events.csv and, when present,
/// covariates.csv from `dir`.
RawDataset read_dataset_dir(const std::filesystem::path& dir);

void write_dataset_dir(const RawDataset& raw, const std::filesystem::path& dir);

/// Derives one PatientHistory per patient row. Patients whose first fill is
/// not IM are counted in `rejected` and reported in `warnings`.
Dataset build_dataset(const RawDataset& raw, const IngestOptions& options = {});

}  // namespace rdg

#endif  // RDGCOMP_INGEST_HPP
