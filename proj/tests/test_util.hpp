// Copyright 2026 The DCP Authors.
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

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "dcp/matrix.hpp"
#include "dcp/rng.hpp"

namespace dcp::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double s = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data) v = s * rng.gaussian();
  return m;
}

inline Matrix unit_rows(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m = random_matrix(r, c, rng);
  for (std::size_t i = 0; i < r; ++i) normalize(m.row(i));
  return m;
}

// Central difference of f over every entry of x, compared against an
// analytic gradient; returns max |a - n| / max(1, max |n|).
inline double fd_rel_error(Matrix& x, const Matrix& analytic,
                           const std::function<double()>& f, double h = 1e-6) {
  double max_diff = 0.0, max_ref = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double saved = x.data[i];
    x.data[i] = saved + h;
    const double up = f();
    x.data[i] = saved - h;
    const double down = f();
    x.data[i] = saved;
    const double num = (up - down) / (2 * h);
    max_diff = std::max(max_diff, std::abs(num - analytic.data[i]));
    max_ref = std::max(max_ref, std::abs(num));
  }
  return max_diff / std::max(1.0, max_ref);
}

inline std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "dcp_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace dcp::testing
