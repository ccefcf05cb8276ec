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

#ifndef SPMDSYNTH_OPTIMIZER_LOOP_H_
#define SPMDSYNTH_OPTIMIZER_LOOP_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "absl/status/statusor.h"
#include "json.hpp"
#include "spmdsynth/cost_model.h"
#include "spmdsynth/program.h"
#include "spmdsynth/search.h"

namespace spmdsynth {

struct LoopOptions {
  int max_rounds = 8;
  // Ratios are quantized to this step when comparing rounds.
  double ratio_quantum = 1e-6;
};

// Program for fixed ratios.
using SynthesizeFn =
    std::function<absl::StatusOr<SearchResult>(const ShardingRatios&)>;
// Ratios for a fixed program, given the current ratios.
using BalanceFn = std::function<absl::StatusOr<ShardingRatios>(
    const DistributedProgram&, const ShardingRatios&)>;
using CostFn = std::function<double(const DistributedProgram&,
                                    const ShardingRatios&)>;

struct RoundTrace {
  int round = 0;
  double cost = 0.0;  // after balancing
  bool changed = false;
  uint64_t fingerprint = 0;
  // Cost after the program step and after the ratio step.
  double cost_after_program = 0.0;
  double cost_after_ratios = 0.0;
};

enum class StopReason { kFixedPoint, kOscillation, kMaxRounds };

struct LoopResult {
  DistributedProgram program;
  ShardingRatios ratios;
  double cost = 0.0;
  std::vector<RoundTrace> trace;
  // Best cost seen after each half step, in order.
  std::vector<double> best_after_half_step;
  StopReason stop = StopReason::kMaxRounds;
  bool budget_exhausted = false;
  int64_t expansions = 0;
};

struct LoopKey {
  uint64_t fingerprint = 0;
  std::vector<int64_t> quantized;
  friend bool operator==(const LoopKey&, const LoopKey&) = default;
};

LoopKey MakeLoopKey(const DistributedProgram& program,
                    const ShardingRatios& ratios, double quantum);

// True iff `current` occurred in `history`.
bool DetectOscillation(const std::vector<LoopKey>& history,
                       const LoopKey& current);

// Alternates program synthesis and ratio balancing from `initial`.
absl::StatusOr<LoopResult> Alternate(const SynthesizeFn& synthesize,
                                     const BalanceFn& balance,
                                     const CostFn& cost,
                                     const ShardingRatios& initial,
                                     const LoopOptions& options);

// The full pipeline: search plus LP balancing, starting from ratios
// proportional to device flops.
absl::StatusOr<LoopResult> OptimizePlan(const Graph& graph,
                                        const CostModel& model,
                                        const SearchOptions& search,
                                        const LoopOptions& options);

nlohmann::json TraceToJson(const std::vector<RoundTrace>& trace);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_OPTIMIZER_LOOP_H_
