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

#ifndef SPMDSYNTH_PLAN_H_
#define SPMDSYNTH_PLAN_H_

#include <optional>
#include <string>

#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "json.hpp"
#include "spmdsynth/cost_model.h"
#include "spmdsynth/graph.h"
#include "spmdsynth/optimizer_loop.h"
#include "spmdsynth/program.h"
#include "spmdsynth/search.h"

namespace spmdsynth {

inline constexpr int kPlanSchemaVersion = 1;

// Rounds to 12 significant digits; plan documents store only such values.
double RoundSignificant(double v);
ShardingRatios RoundRatios(const ShardingRatios& b);

struct PlanOptions {
  int segments = 1;
  LoopOptions loop;
  SearchOptions search;
  // Skip balancing and synthesize once for these ratios.
  std::optional<ShardingRatios> fixed_ratios;
};

struct Plan {
  DistributedProgram program;
  ShardingRatios ratios;
  SegmentAssignment assignment;
  CostBreakdown estimate;
  std::vector<RoundTrace> rounds;
  int64_t expansions = 0;
  bool budget_exhausted = false;
  double wall_time_s = -1.0;  // omitted from the document when negative
};

absl::StatusOr<Plan> MakePlan(const Graph& graph, const ClusterSpec& spec,
                              const PlanOptions& options);

nlohmann::json PlanToJson(const Plan& plan, const Graph& graph,
                          const ClusterSpec& spec);
// Two-space indented JSON followed by a newline.
std::string SerializePlan(const Plan& plan, const Graph& graph,
                          const ClusterSpec& spec);

// Reads program, ratios and segments back; the estimate is recomputed by
// the caller if needed.
absl::StatusOr<Plan> ParsePlan(absl::string_view text, const Graph& graph);

nlohmann::json BreakdownToJson(const CostBreakdown& breakdown);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_PLAN_H_
