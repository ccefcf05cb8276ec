/* Copyright 2026 The spmdsynth Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "spmdsynth/load_balancer.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "absl/strings/str_cat.h"

namespace spmdsynth {

LinearProgram BuildRatioLp(std::span<const StageCoefficients> stages,
                           int segments, int devices, RatioLpLayout* layout) {
  LinearProgram lp;
  RatioLpLayout l;
  l.segments = segments;
  l.devices = devices;
  l.used.assign(segments, false);
  l.ratio.assign(segments, std::vector<int>(devices, -1));
  l.max_ratio.assign(segments, -1);
  for (int k = 0; k < segments; ++k) {
    for (int j = 0; j < devices; ++j) {
      l.ratio[k][j] = lp.AddVariable(absl::StrCat("B_", k, "_", j));
    }
  }
  auto max_var = [&](int k) {
    if (l.max_ratio[k] < 0) {
      l.max_ratio[k] = lp.AddVariable(absl::StrCat("M_", k));
      for (int j = 0; j < devices; ++j) {
        lp.AddConstraint({{l.max_ratio[k], 1.0}, {l.ratio[k][j], -1.0}},
                         Relation::kGreaterEqual, 0.0);
      }
    }
    return l.max_ratio[k];
  };
  for (size_t i = 0; i < stages.size(); ++i) {
    const StageCoefficients& s = stages[i];
    lp.objective_constant += s.comm_intercept;
    if (s.comm_slope != 0.0 && !s.comm_segments.empty()) {
      for (int k : s.comm_segments) l.used[k] = true;
      if (s.comm_segments.size() == 1) {
        lp.objective[max_var(s.comm_segments[0])] += s.comm_slope;
      } else {
        int x = lp.AddVariable(absl::StrCat("X_", i), s.comm_slope);
        for (int k : s.comm_segments) {
          lp.AddConstraint({{x, 1.0}, {max_var(k), -1.0}},
                           Relation::kGreaterEqual, 0.0);
        }
      }
    }
    bool has_comp = false;
    for (int j = 0; j < devices; ++j) {
      if (s.comp_intercept[j] != 0.0) has_comp = true;
      for (int k = 0; k < segments; ++k) {
        if (s.comp_slope[k][j] != 0.0) {
          has_comp = true;
          l.used[k] = true;
        }
      }
    }
    if (!has_comp) {
      l.stage_time.push_back(-1);
      continue;
    }
    int t = lp.AddVariable(absl::StrCat("T_", i), 1.0);
    l.stage_time.push_back(t);
    for (int j = 0; j < devices; ++j) {
      std::vector<std::pair<int, double>> terms = {{t, 1.0}};
      for (int k = 0; k < segments; ++k) {
        if (s.comp_slope[k][j] != 0.0) {
          terms.emplace_back(l.ratio[k][j], -s.comp_slope[k][j]);
        }
      }
      lp.AddConstraint(terms, Relation::kGreaterEqual, s.comp_intercept[j]);
    }
  }
  for (int k = 0; k < segments; ++k) {
    std::vector<std::pair<int, double>> terms;
    for (int j = 0; j < devices; ++j) terms.emplace_back(l.ratio[k][j], 1.0);
    lp.AddConstraint(terms, Relation::kEqual, 1.0);
  }
  if (layout != nullptr) *layout = std::move(l);
  return lp;
}

ShardingRatios ExtractRatios(const LpSolution& solution,
                             const RatioLpLayout& layout) {
  ShardingRatios b =
      ShardingRatios::Uniform(layout.segments, layout.devices);
  for (int k = 0; k < layout.segments; ++k) {
    if (!layout.used[k]) continue;
    double sum = 0.0;
    for (int j = 0; j < layout.devices; ++j) {
      double v = std::max(0.0, solution.x[layout.ratio[k][j]]);
      b.rows[k][j] = v;
      sum += v;
    }
    for (double& v : b.rows[k]) v /= sum;
  }
  return b;
}

absl::StatusOr<BalanceResult> OptimizeRatios(const DistributedProgram& program,
                                             const CostModel& model) {
  const int g = model.assignment().count;
  const int m = model.num_devices();
  if (m == 1) return BalanceResult{ShardingRatios::Uniform(g, 1), 0.0};
  std::vector<StageCoefficients> stages = model.Coefficients(program);
  // Stage times can be far below the solver's absolute tolerances, so the
  // LP is solved in units of the largest coefficient.
  double scale = 0.0;
  for (const StageCoefficients& s : stages) {
    scale = std::max({scale, s.comm_intercept, s.comm_slope});
    for (double v : s.comp_intercept) scale = std::max(scale, v);
    for (const auto& row : s.comp_slope) {
      for (double v : row) scale = std::max(scale, v);
    }
  }
  if (scale == 0.0) scale = 1.0;
  for (StageCoefficients& s : stages) {
    s.comm_intercept /= scale;
    s.comm_slope /= scale;
    for (double& v : s.comp_intercept) v /= scale;
    for (auto& row : s.comp_slope) {
      for (double& v : row) v /= scale;
    }
  }
  RatioLpLayout layout;
  LinearProgram lp = BuildRatioLp(stages, g, m, &layout);
  LpSolution sol = SolveLp(lp);
  if (sol.status != LpStatus::kOptimal) {
    return absl::InternalError("ratio LP did not reach an optimum");
  }
  return BalanceResult{ExtractRatios(sol, layout), sol.objective * scale};
}

std::vector<int64_t> RoundShards(int64_t extent, std::span<const double> row) {
  const size_t m = row.size();
  std::vector<double> target(m);
  std::vector<int64_t> sizes(m);
  int64_t total = 0;
  for (size_t j = 0; j < m; ++j) {
    target[j] = static_cast<double>(extent) * row[j];
    sizes[j] = std::max<int64_t>(0, std::llround(target[j]));
    total += sizes[j];
  }
  auto growth = [&](size_t j, int64_t delta) {
    return std::abs(static_cast<double>(sizes[j] + delta) - target[j]) -
           std::abs(static_cast<double>(sizes[j]) - target[j]);
  };
  while (total != extent) {
    const int64_t delta = total < extent ? 1 : -1;
    size_t pick = m;
    double best = 0.0;
    for (size_t j = 0; j < m; ++j) {
      if (delta < 0 && sizes[j] == 0) continue;
      const double g = growth(j, delta);
      if (pick == m || g <= best) {
        pick = j;
        best = g;
      }
    }
    sizes[pick] += delta;
    total += delta;
  }
  return sizes;
}

}  // namespace spmdsynth
