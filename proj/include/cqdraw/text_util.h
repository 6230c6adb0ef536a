// Copyright 2026 The cqdraw Authors.
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

#ifndef CQDRAW_TEXT_UTIL_H_
#define CQDRAW_TEXT_UTIL_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cqdraw {

std::vector<std::string_view> split(std::string_view text, char delim);
// Splits into lines, dropping a trailing '\r' on each and the final empty
// line if the input ends with a newline.
std::vector<std::string_view> split_lines(std::string_view text);
std::string_view trim(std::string_view text);
std::string to_lower(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Strict numeric parsing; throws Error naming `what` on failure.
int64_t parse_int(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);

uint64_t fnv1a64(std::string_view data);
std::string hex64(uint64_t value);

// Shortest round-trip decimal form of a double.
std::string format_double(double value);
// Fixed-point with `digits` decimals.
std::string format_fixed(double value, int digits);

// Pipe-delimited markdown table with a header separator row.
std::string markdown_table(const std::vector<std::string>& header,
                           const std::vector<std::vector<std::string>>& rows);
// CSV from rows of already-formatted cells. Cells containing a comma, quote
// or newline are quoted.
std::string csv_table(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);

// Whole-file IO; throw Error naming the path on failure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace cqdraw

#endif  // CQDRAW_TEXT_UTIL_H_
