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

#ifndef SPMDSYNTH_LOAD_BALANCER_H_
#define SPMDSYNTH_LOAD_BALANCER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "spmdsynth/cost_model.h"
#include "spmdsynth/program.h"
#include "spmdsynth/simplex.h"

namespace spmdsynth {

// Variable indices of the ratio LP.
struct RatioLpLayout {
  int segments = 0;
  int devices = 0;
  std::vector<std::vector<int>> ratio;  // [segment][device]
  std::vector<int> max_ratio;           // [segment]
  std::vector<int> stage_time;          // [stage]
  // Segments whose row appears anywhere in the objective.
  std::vector<bool> used;
};

// Minimizes sum over stages of comm(M) + T_i with T_i >= comp_j for every
// device, M_k >= B[k][j], rows summing to one. Stages may touch several
// segments, so all rows are solved in one program.
LinearProgram BuildRatioLp(std::span<const StageCoefficients> stages,
                           int segments, int devices, RatioLpLayout* layout);

// Reads B from an optimal solution. Unused rows become uniform; tiny
// negative values are clamped and rows renormalized.
ShardingRatios ExtractRatios(const LpSolution& solution,
                             const RatioLpLayout& layout);

struct BalanceResult {
  ShardingRatios ratios;
  double lp_objective = 0.0;
};

absl::StatusOr<BalanceResult> OptimizeRatios(const DistributedProgram& program,
                                             const CostModel& model);

// Integer shard sizes summing to `extent`: nearest integers first, then unit
// moves on the shard whose deviation grows least, ties toward the higher
// device index.
std::vector<int64_t> RoundShards(int64_t extent, std::span<const double> row);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_LOAD_BALANCER_H_
