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

#include "spmdsynth/plan.h"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "absl/strings/str_cat.h"
#include "spmdsynth/load_balancer.h"

namespace spmdsynth {
namespace {

using json = nlohmann::json;

}  // namespace

double RoundSignificant(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::strtod(buf, nullptr);
}

ShardingRatios RoundRatios(const ShardingRatios& b) {
  ShardingRatios out = b;
  for (auto& row : out.rows) {
    for (double& v : row) v = RoundSignificant(v);
  }
  return out;
}

absl::StatusOr<Plan> MakePlan(const Graph& graph, const ClusterSpec& spec,
                              const PlanOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  absl::StatusOr<SegmentAssignment> assignment =
      AssignSegments(graph, options.segments);
  if (!assignment.ok()) return assignment.status();
  CostModel model(graph, spec, *assignment);

  Plan plan;
  plan.assignment = *assignment;
  if (options.fixed_ratios) {
    const ShardingRatios& b = *options.fixed_ratios;
    if (absl::Status s = b.Validate(assignment->count, spec.num_devices());
        !s.ok()) {
      return s;
    }
    absl::StatusOr<SearchResult> found =
        Synthesize(graph, model, b, options.search);
    if (!found.ok()) return found.status();
    plan.expansions = found->stats.expansions;
    plan.budget_exhausted = found->budget_exhausted;
    if (!found->found) {
      return absl::ResourceExhaustedError(
          "search budget exhausted before any complete program");
    }
    plan.program = found->program;
    plan.ratios = b;
    plan.rounds.push_back({1, found->cost, true, plan.program.Fingerprint(),
                           found->cost, found->cost});
  } else {
    absl::StatusOr<LoopResult> loop =
        OptimizePlan(graph, model, options.search, options.loop);
    if (!loop.ok()) return loop.status();
    plan.program = loop->program;
    plan.ratios = loop->ratios;
    plan.rounds = loop->trace;
    plan.expansions = loop->expansions;
    plan.budget_exhausted = loop->budget_exhausted;
  }
  // The document stores 12-digit ratios; the estimate is computed from
  // exactly those so that it can be reproduced from the file.
  plan.ratios = RoundRatios(plan.ratios);
  plan.estimate = model.IterationTime(plan.program, plan.ratios);
  plan.wall_time_s = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  return plan;
}

json BreakdownToJson(const CostBreakdown& breakdown) {
  json stages = json::array();
  for (const StageCost& s : breakdown.stages) {
    json comp = json::array();
    for (double c : s.comp_s) comp.push_back(RoundSignificant(c));
    stages.push_back(
        {{"comm_s", RoundSignificant(s.comm_s)}, {"comp_s", std::move(comp)}});
  }
  return {{"stages", std::move(stages)},
          {"total_s", RoundSignificant(breakdown.total_s)}};
}

json PlanToJson(const Plan& plan, const Graph& graph,
                const ClusterSpec& spec) {
  json doc = json::object();
  doc["schema_version"] = kPlanSchemaVersion;
  doc["devices"] = spec.num_devices();
  doc["program"] = ProgramToJson(plan.program, graph);
  json ratios = json::array();
  for (const auto& row : plan.ratios.rows) {
    json r = json::array();
    for (double v : row) r.push_back(RoundSignificant(v));
    ratios.push_back(std::move(r));
  }
  doc["ratios"] = std::move(ratios);
  json segments = json::array();
  for (int k = 0; k < plan.assignment.count; ++k) {
    json ids = json::array();
    for (int e = 0; e < graph.size(); ++e) {
      if (plan.assignment.segment_of[e] == k) ids.push_back(graph.node(e).id);
    }
    segments.push_back(std::move(ids));
  }
  doc["segments"] = std::move(segments);

  CostModel model(graph, spec, plan.assignment);
  std::set<DistTensorRef> sharded;
  for (const Instruction& instr : plan.program.instrs) {
    for (const DistTensorRef& op : instr.operands) {
      if (op.form.is_all_gather()) sharded.insert(op);
    }
    if (instr.output.form.is_all_gather()) sharded.insert(instr.output);
  }
  json table = json::array();
  for (const DistTensorRef& ref : sharded) {
    const int64_t extent = graph.node(ref.tensor).shape[ref.form.dim];
    json sizes = json::array();
    for (int64_t s :
         RoundShards(extent, plan.ratios.row(model.SegmentOf(ref)))) {
      sizes.push_back(s);
    }
    table.push_back({{"tensor", ref.Name(graph)},
                     {"dim", ref.form.dim},
                     {"sizes", std::move(sizes)}});
  }
  doc["shard_table"] = std::move(table);
  doc["estimate"] = BreakdownToJson(plan.estimate);
  json trace = {{"rounds", TraceToJson(plan.rounds)},
                {"expansions", plan.expansions},
                {"budget_exhausted", plan.budget_exhausted}};
  for (auto& r : trace["rounds"]) {
    r["cost"] = RoundSignificant(r["cost"].get<double>());
  }
  if (plan.wall_time_s >= 0) trace["wall_time_s"] = plan.wall_time_s;
  doc["trace"] = std::move(trace);
  return doc;
}

std::string SerializePlan(const Plan& plan, const Graph& graph,
                          const ClusterSpec& spec) {
  return PlanToJson(plan, graph, spec).dump(2) + "\n";
}

absl::StatusOr<Plan> ParsePlan(absl::string_view text, const Graph& graph) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    return absl::InvalidArgumentError("plan: not a JSON object");
  }
  if (!doc.contains("schema_version") ||
      doc["schema_version"] != kPlanSchemaVersion) {
    return absl::InvalidArgumentError("plan: unsupported schema_version");
  }
  Plan plan;
  if (!doc.contains("program")) {
    return absl::InvalidArgumentError("plan: missing 'program'");
  }
  absl::StatusOr<DistributedProgram> program =
      ProgramFromJson(doc["program"], graph);
  if (!program.ok()) return program.status();
  plan.program = *std::move(program);

  if (!doc.contains("ratios") || !doc["ratios"].is_array()) {
    return absl::InvalidArgumentError("plan: missing 'ratios'");
  }
  for (const json& row : doc["ratios"]) {
    if (!row.is_array()) {
      return absl::InvalidArgumentError("plan: ratio rows must be arrays");
    }
    std::vector<double> r;
    for (const json& v : row) {
      if (!v.is_number()) {
        return absl::InvalidArgumentError("plan: ratios must be numbers");
      }
      r.push_back(v.get<double>());
    }
    plan.ratios.rows.push_back(std::move(r));
  }
  if (plan.ratios.rows.empty()) {
    return absl::InvalidArgumentError("plan: 'ratios' is empty");
  }

  plan.assignment.count = static_cast<int>(plan.ratios.rows.size());
  plan.assignment.segment_of.assign(graph.size(), -1);
  if (doc.contains("segments")) {
    const json& segs = doc["segments"];
    if (!segs.is_array() ||
        static_cast<int>(segs.size()) != plan.assignment.count) {
      return absl::InvalidArgumentError(
          "plan: 'segments' must list one group per ratio row");
    }
    for (int k = 0; k < plan.assignment.count; ++k) {
      for (const json& id : segs[k]) {
        std::optional<int> e =
            id.is_string() ? graph.Find(id.get<std::string>()) : std::nullopt;
        if (!e) {
          return absl::InvalidArgumentError("plan: unknown tensor in segments");
        }
        plan.assignment.segment_of[*e] = k;
      }
    }
  } else if (plan.assignment.count == 1) {
    plan.assignment.segment_of.assign(graph.size(), 0);
  }
  for (int s : plan.assignment.segment_of) {
    if (s < 0) {
      return absl::InvalidArgumentError(
          "plan: every tensor needs a segment");
    }
  }
  if (absl::Status s = plan.ratios.Validate(
          plan.assignment.count,
          static_cast<int>(plan.ratios.rows[0].size()));
      !s.ok()) {
    return s;
  }
  return plan;
}

}  // namespace spmdsynth
