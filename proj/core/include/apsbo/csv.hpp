// Copyright 2026 The apsbo Authors
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

#ifndef APSBO_CSV_HPP_
#define APSBO_CSV_HPP_

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Minimal comma-separated reader/writer for the project's flat files. Fields
// are never quoted; numbers are written in shortest round-trip form.
namespace apsbo::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based, header is line 1

  // Column position, or nullopt if absent.
  std::optional<std::size_t> find(std::string_view name) const;
  // Column position; throws ValidationError if absent.
  std::size_t column(std::string_view name) const;
};

std::vector<std::string> split_line(std::string_view line);
Table read(std::istream& is);
Table read_string(std::string_view text);

// Whole-field parse; rejects trailing garbage and non-finite values.
std::optional<double> parse_double(std::string_view field);
std::optional<long long> parse_int(std::string_view field);

std::string format_double(double value);

}  // namespace apsbo::csv

#endif  // APSBO_CSV_HPP_
