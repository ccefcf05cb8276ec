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

#ifndef SPMDSYNTH_ENUMERATOR_H_
#define SPMDSYNTH_ENUMERATOR_H_

#include <cstdint>
#include <vector>

#include "absl/status/statusor.h"
#include "spmdsynth/cost_model.h"
#include "spmdsynth/search.h"
#include "spmdsynth/theory.h"

namespace spmdsynth {

// Breadth-first enumeration of every program the theory admits, without
// pruning or dominance. Used to certify the search on small graphs.
struct EnumerateOptions {
  // Longest program considered; negative means 2 * |V| + 4.
  int max_length = -1;
  // Skip prefixes whose cost already reaches the best complete program.
  bool branch_and_bound = true;
  // Keep every state plus the cheapest completion reachable from it.
  bool record_completions = false;
  int64_t max_states = 20'000'000;
};

struct EnumerateResult {
  bool found = false;
  DistributedProgram program;
  double cost = 0.0;
  int64_t states = 0;
  bool truncated = false;  // max_states reached

  // With record_completions: all distinct states, and for each the cheapest
  // complete program reachable from it (infinity if none).
  std::vector<SearchState> pool;
  std::vector<double> best_completion;
  std::vector<bool> complete;
};

EnumerateResult Enumerate(const Graph& graph, const Theory& theory,
                          const CostModel& model, const ShardingRatios& ratios,
                          const EnumerateOptions& options);

// Same, over the guarded theory without fusion.
EnumerateResult Enumerate(const Graph& graph, const CostModel& model,
                          const ShardingRatios& ratios,
                          const EnumerateOptions& options);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_ENUMERATOR_H_
