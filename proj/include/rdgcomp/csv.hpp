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

#ifndef RDGCOMP_CSV_HPP
#define RDGCOMP_CSV_HPP

#include <cstddef>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rdg {

/// Error tied to a source location, e.g. "fills.csv:12: bad date".
class IngestError : public std::runtime_error {
 public:
  IngestError(const std::string& source, std::size_t line,
              const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Minimal RFC-4180 reader: header row required, double-quoted fields
/// allowed, CRLF tolerated.
class CsvReader {
 public:
  CsvReader(std::istream& in, std::string source);

  const std::vector<std::string>& header() const { return header_; }
  /// Index of a required column; throws IngestError naming the header line.
  std::size_t column(std::string_view name) const;
  /// Index of an optional column, or npos.
  std::size_t find_column(std::string_view name) const;

  /// Reads the next record into `fields`; false at end of input.
  bool next(std::vector<std::string>& fields);
  std::size_t line() const { return line_; }
  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw IngestError(source_, line_, what);
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::istream& in_;
  std::string source_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

std::vector<std::string> split_csv_line(std::string_view line);

/// Shortest round-trip decimal representation; identical bytes for
/// identical doubles on every run.
std::string format_double(double value);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  CsvWriter& header(const std::vector<std::string>& names);
  CsvWriter& field(const std::string& value);
  CsvWriter& field(double value);
  CsvWriter& field(long long value);
  CsvWriter& field(int value) { return field(static_cast<long long>(value)); }
  CsvWriter& field(std::size_t value) {
    return field(static_cast<long long>(value));
  }
  void end_row();

 private:
  std::ostream& out_;
  bool first_ = true;
};

}  // namespace rdg

#endif  // RDGCOMP_CSV_HPP
