// Copyright 2026 The mechsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace mechsim::csv {

/// 17 significant digits, enough to round-trip any double.
inline std::string num(double x) {
  if (x == 0.0) x = 0.0;  // drop the sign of negative zero
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string join(const std::vector<std::string>& cells, char sep = ',') {
  std::string out;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) out += sep;
    out += cells[k];
  }
  return out;
}

/// Writes one LF-terminated row.
inline void row(std::ostream& os, const std::vector<std::string>& cells) { os << join(cells) << '\n'; }

}  // namespace mechsim::csv
