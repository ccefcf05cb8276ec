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

#include "spmdsynth/optimizer_loop.h"

#include <algorithm>
#include <cmath>

#include "spmdsynth/load_balancer.h"

namespace spmdsynth {
namespace {

bool SameRatios(const ShardingRatios& a, const ShardingRatios& b,
                double tol) {
  if (a.rows.size() != b.rows.size()) return false;
  for (size_t k = 0; k < a.rows.size(); ++k) {
    for (size_t j = 0; j < a.rows[k].size(); ++j) {
      if (std::abs(a.rows[k][j] - b.rows[k][j]) > tol) return false;
    }
  }
  return true;
}

// A new ratio matrix is adopted only when it is measurably faster, so ties
// keep the current (initially flops-proportional) ratios.
constexpr double kImprovement = 1e-12;

}  // namespace

LoopKey MakeLoopKey(const DistributedProgram& program,
                    const ShardingRatios& ratios, double quantum) {
  LoopKey key;
  key.fingerprint = program.Fingerprint();
  for (const auto& row : ratios.rows) {
    for (double v : row) key.quantized.push_back(std::llround(v / quantum));
  }
  return key;
}

bool DetectOscillation(const std::vector<LoopKey>& history,
                       const LoopKey& current) {
  return std::find(history.begin(), history.end(), current) != history.end();
}

absl::StatusOr<LoopResult> Alternate(const SynthesizeFn& synthesize,
                                     const BalanceFn& balance,
                                     const CostFn& cost,
                                     const ShardingRatios& initial,
                                     const LoopOptions& options) {
  LoopResult result;
  result.cost = std::numeric_limits<double>::infinity();
  result.ratios = initial;
  std::vector<LoopKey> history;
  ShardingRatios ratios = initial;
  uint64_t previous_fingerprint = 0;
  bool have_program = false;

  auto consider = [&](const DistributedProgram& q, const ShardingRatios& b,
                      double c) {
    if (c < result.cost) {
      result.cost = c;
      result.program = q;
      result.ratios = b;
    }
    result.best_after_half_step.push_back(result.cost);
  };

  for (int round = 1; round <= std::max(1, options.max_rounds); ++round) {
    absl::StatusOr<SearchResult> found = synthesize(ratios);
    if (!found.ok()) return found.status();
    result.expansions += found->stats.expansions;
    if (found->budget_exhausted) result.budget_exhausted = true;
    if (!found->found) {
      if (have_program) break;
      return absl::ResourceExhaustedError(
          "search budget exhausted before any complete program");
    }
    const DistributedProgram& q = found->program;
    RoundTrace trace;
    trace.round = round;
    trace.fingerprint = q.Fingerprint();
    trace.cost_after_program = cost(q, ratios);
    consider(q, ratios, trace.cost_after_program);

    absl::StatusOr<ShardingRatios> proposed = balance(q, ratios);
    if (!proposed.ok()) return proposed.status();
    ShardingRatios next = ratios;
    const double proposed_cost = cost(q, *proposed);
    if (proposed_cost < trace.cost_after_program * (1.0 - kImprovement)) {
      next = *std::move(proposed);
    }
    trace.cost_after_ratios = cost(q, next);
    trace.cost = trace.cost_after_ratios;
    consider(q, next, trace.cost_after_ratios);

    const bool ratios_same = SameRatios(next, ratios, options.ratio_quantum);
    trace.changed = !have_program ||
                    trace.fingerprint != previous_fingerprint || !ratios_same;
    result.trace.push_back(trace);

    LoopKey key = MakeLoopKey(q, next, options.ratio_quantum);
    // The search is deterministic, so unchanged ratios reproduce the same
    // program in the next round.
    if (ratios_same) {
      result.stop = StopReason::kFixedPoint;
      break;
    }
    if (DetectOscillation(history, key)) {
      result.stop = StopReason::kOscillation;
      break;
    }
    history.push_back(std::move(key));
    previous_fingerprint = trace.fingerprint;
    have_program = true;
    ratios = std::move(next);
    result.stop = StopReason::kMaxRounds;
  }
  return result;
}

absl::StatusOr<LoopResult> OptimizePlan(const Graph& graph,
                                        const CostModel& model,
                                        const SearchOptions& search,
                                        const LoopOptions& options) {
  SynthesizeFn synthesize = [&](const ShardingRatios& b) {
    return Synthesize(graph, model, b, search);
  };
  BalanceFn balance =
      [&](const DistributedProgram& q,
          const ShardingRatios&) -> absl::StatusOr<ShardingRatios> {
    absl::StatusOr<BalanceResult> r = OptimizeRatios(q, model);
    if (!r.ok()) return r.status();
    return r->ratios;
  };
  CostFn cost = [&](const DistributedProgram& q, const ShardingRatios& b) {
    return model.IterationTime(q, b).total_s;
  };
  ShardingRatios initial = ShardingRatios::ProportionalTo(
      model.assignment().count, model.spec().flops);
  return Alternate(synthesize, balance, cost, initial, options);
}

nlohmann::json TraceToJson(const std::vector<RoundTrace>& trace) {
  nlohmann::json j = nlohmann::json::array();
  for (const RoundTrace& t : trace) {
    j.push_back({{"round", t.round}, {"cost", t.cost}, {"changed", t.changed}});
  }
  return j;
}

}  // namespace spmdsynth
