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

#include "rdgcomp/csv.hpp"

#include <charconv>
#include <cmath>

namespace rdg {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

namespace {

bool read_record(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace

CsvReader::CsvReader(std::istream& in, std::string source)
    : in_(in), source_(std::move(source)) {
  std::string line;
  if (!read_record(in_, line)) {
    throw IngestError(source_, 1, "missing header row");
  }
  line_ = 1;
  // UTF-8 byte order mark
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  header_ = split_csv_line(line);
}

std::size_t CsvReader::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  return npos;
}

std::size_t CsvReader::column(std::string_view name) const {
  const std::size_t i = find_column(name);
  if (i == npos) {
    throw IngestError(source_, 1,
                      "missing required column '" + std::string(name) + "'");
  }
  return i;
}

bool CsvReader::next(std::vector<std::string>& fields) {
  std::string line;
  while (read_record(in_, line)) {
    ++line_;
    if (line.empty()) continue;
    fields = split_csv_line(line);
    if (fields.size() != header_.size()) {
      fail("expected " + std::to_string(header_.size()) + " fields, found " +
           std::to_string(fields.size()));
    }
    return true;
  }
  return false;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "NA";
  if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
  if (value == 0.0) return "0";
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

CsvWriter& CsvWriter::header(const std::vector<std::string>& names) {
  for (const auto& n : names) field(n);
  end_row();
  return *this;
}

CsvWriter& CsvWriter::field(const std::string& value) {
  if (!first_) out_ << ',';
  first_ = false;
  if (value.find_first_of(",\"\n") == std::string::npos) {
    out_ << value;
  } else {
    out_ << '"';
    for (char c : value) {
      if (c == '"') out_ << '"';
      out_ << c;
    }
    out_ << '"';
  }
  return *this;
}

CsvWriter& CsvWriter::field(double value) { return field(format_double(value)); }

CsvWriter& CsvWriter::field(long long value) {
  return field(std::to_string(value));
}

void CsvWriter::end_row() {
  out_ << '\n';
  first_ = true;
}

}  // namespace rdg
