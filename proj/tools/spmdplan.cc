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

// spmdplan: plan, verify and certify SPMD programs for a computation graph.
//
//   spmdplan plan GRAPH CLUSTER [-o PLAN] [--segments G] [--max-rounds N]
//       [--budget E] [--fixed-ratios | --ratios R] [--timing]
//   spmdplan verify PLAN GRAPH [--trials N] [--seed S]
//   spmdplan enumerate GRAPH CLUSTER [--max-len L] [--ratios R | --plan P]
//       [-o OUT] [--force]
//   spmdplan fit SAMPLES
//   spmdplan theory GRAPH [--devices M] [--no-fuse] [--no-guards]
//
// Exit codes: 0 success, 1 verification failure or no complete program,
// 2 unreadable or malformed input, 3 search budget exhausted, 4 refused.
// SPMDPLAN_VERBOSE=1 prints search statistics on stderr.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "absl/status/statusor.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "absl/strings/string_view.h"
#include "spmdsynth/cost_model.h"
#include "spmdsynth/enumerator.h"
#include "spmdsynth/graph.h"
#include "spmdsynth/interpreter.h"
#include "spmdsynth/plan.h"
#include "spmdsynth/theory.h"

namespace spmdsynth {
namespace {

constexpr int kExitFailure = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitBudget = 3;
constexpr int kExitRefused = 4;

bool Verbose() {
  const char* v = std::getenv("SPMDPLAN_VERBOSE");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

absl::StatusOr<std::string> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int Fail(int code, const absl::Status& status) {
  std::cerr << "spmdplan: " << status.message() << "\n";
  return code;
}

absl::StatusOr<Graph> LoadGraph(const std::string& path) {
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  return ParseGraph(*text);
}

absl::StatusOr<ClusterSpec> LoadCluster(const std::string& path) {
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  return ParseClusterSpec(*text);
}

// "0.5,0.5;0.7,0.3" -> one row per segment.
absl::StatusOr<ShardingRatios> ParseRatioFlag(const std::string& text) {
  ShardingRatios b;
  for (absl::string_view row : absl::StrSplit(text, ';')) {
    std::vector<double> r;
    for (absl::string_view v : absl::StrSplit(row, ',')) {
      double x;
      if (!absl::SimpleAtod(v, &x)) {
        return absl::InvalidArgumentError("bad --ratios value");
      }
      r.push_back(x);
    }
    b.rows.push_back(std::move(r));
  }
  return b;
}

struct PlanArgs {
  std::string graph, cluster, output;
  int segments = 1;
  int max_rounds = 8;
  int64_t budget = SearchOptions().max_expansions;
  bool fixed = false;
  std::string ratios;
  bool timing = false;
};

int RunPlan(const PlanArgs& args) {
  absl::StatusOr<Graph> graph = LoadGraph(args.graph);
  if (!graph.ok()) return Fail(kExitBadInput, graph.status());
  absl::StatusOr<ClusterSpec> spec = LoadCluster(args.cluster);
  if (!spec.ok()) return Fail(kExitBadInput, spec.status());
  PlanOptions options;
  options.segments = args.segments;
  options.loop.max_rounds = args.max_rounds;
  options.search.max_expansions = args.budget;
  if (args.fixed || !args.ratios.empty()) {
    if (args.ratios.empty()) {
      options.fixed_ratios =
          ShardingRatios::ProportionalTo(args.segments, spec->flops);
    } else {
      absl::StatusOr<ShardingRatios> b = ParseRatioFlag(args.ratios);
      if (!b.ok()) return Fail(kExitBadInput, b.status());
      options.fixed_ratios = *b;
    }
  }
  absl::StatusOr<Plan> plan = MakePlan(*graph, *spec, options);
  if (!plan.ok()) {
    const absl::Status& s = plan.status();
    if (absl::IsResourceExhausted(s)) return Fail(kExitBudget, s);
    if (absl::IsNotFound(s)) return Fail(kExitFailure, s);
    return Fail(kExitBadInput, s);
  }
  if (!args.timing) plan->wall_time_s = -1.0;
  const std::string doc = SerializePlan(*plan, *graph, *spec);
  if (args.output.empty() || args.output == "-") {
    std::cout << doc;
  } else {
    std::ofstream out(args.output, std::ios::binary);
    out << doc;
    if (!out) {
      return Fail(kExitBadInput,
                  absl::UnavailableError("cannot write '" + args.output + "'"));
    }
    std::cout << absl::StrFormat(
        "planned %d instructions, %d rounds, estimated %.12g s\n",
        plan->program.instrs.size(), plan->rounds.size(),
        plan->estimate.total_s);
  }
  if (Verbose()) {
    std::cerr << absl::StrFormat("expansions: %d\n", plan->expansions);
  }
  if (plan->budget_exhausted) {
    std::cerr << "spmdplan: search budget exhausted; plan is the best found\n";
    return kExitBudget;
  }
  return 0;
}

struct VerifyArgs {
  std::string plan, graph;
  int trials = 20;
  uint64_t seed = 1;
};

int RunVerify(const VerifyArgs& args) {
  absl::StatusOr<Graph> graph = LoadGraph(args.graph);
  if (!graph.ok()) return Fail(kExitBadInput, graph.status());
  absl::StatusOr<std::string> text = ReadFile(args.plan);
  if (!text.ok()) return Fail(kExitBadInput, text.status());
  absl::StatusOr<Plan> plan = ParsePlan(*text, *graph);
  if (!plan.ok()) return Fail(kExitBadInput, plan.status());
  EquivalenceReport report =
      CheckEquivalence(*graph, plan->program, plan->ratios, plan->assignment,
                       args.trials, args.seed);
  std::cout << absl::StrFormat("trials %d, max relative error %.3g: %s\n",
                               report.trials, report.max_relative_error,
                               report.passed ? "PASS" : "FAIL");
  if (!report.failure.empty()) std::cout << report.failure << "\n";
  return report.passed ? 0 : kExitFailure;
}

struct EnumerateArgs {
  std::string graph, cluster, ratios, plan, output;
  int max_len = -1;
  bool force = false;
};

int RunEnumerate(const EnumerateArgs& args) {
  absl::StatusOr<Graph> graph = LoadGraph(args.graph);
  if (!graph.ok()) return Fail(kExitBadInput, graph.status());
  absl::StatusOr<ClusterSpec> spec = LoadCluster(args.cluster);
  if (!spec.ok()) return Fail(kExitBadInput, spec.status());
  if (graph->size() > 6 && !args.force) {
    std::cerr << "spmdplan: refusing to enumerate a graph with "
              << graph->size() << " nodes (limit 6); pass --force\n";
    return kExitRefused;
  }
  SegmentAssignment assignment = SegmentAssignment::Single(*graph);
  ShardingRatios b = ShardingRatios::ProportionalTo(1, spec->flops);
  if (!args.plan.empty()) {
    absl::StatusOr<std::string> text = ReadFile(args.plan);
    if (!text.ok()) return Fail(kExitBadInput, text.status());
    absl::StatusOr<Plan> plan = ParsePlan(*text, *graph);
    if (!plan.ok()) return Fail(kExitBadInput, plan.status());
    b = plan->ratios;
    assignment = plan->assignment;
  } else if (!args.ratios.empty()) {
    absl::StatusOr<ShardingRatios> r = ParseRatioFlag(args.ratios);
    if (!r.ok()) return Fail(kExitBadInput, r.status());
    b = *r;
    if (b.num_segments() != 1) {
      absl::StatusOr<SegmentAssignment> a =
          AssignSegments(*graph, b.num_segments());
      if (!a.ok()) return Fail(kExitBadInput, a.status());
      assignment = *a;
    }
  }
  if (absl::Status s = b.Validate(assignment.count, spec->num_devices());
      !s.ok()) {
    return Fail(kExitBadInput, s);
  }
  CostModel model(*graph, *spec, assignment);
  EnumerateOptions options;
  options.max_length = args.max_len;
  EnumerateResult result = Enumerate(*graph, model, b, options);
  if (Verbose()) {
    std::cerr << absl::StrFormat("states: %d\n", result.states);
  }
  if (!result.found) {
    std::cout << "no complete program\n";
    return kExitFailure;
  }
  std::cout << absl::StrFormat("cost %.17g\n", result.cost);
  std::cout << result.program.ToString(*graph);
  if (!args.output.empty()) {
    nlohmann::json doc = {{"cost", result.cost},
                          {"states", result.states},
                          {"program", ProgramToJson(result.program, *graph)}};
    std::ofstream out(args.output, std::ios::binary);
    out << doc.dump(2) << "\n";
  }
  return 0;
}

int RunFit(const std::string& path) {
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return Fail(kExitBadInput, text.status());
  auto samples = ParseProfileSamples(*text);
  if (!samples.ok()) return Fail(kExitBadInput, samples.status());
  absl::StatusOr<LinearFit> fit = FitLinear(*samples);
  if (!fit.ok()) return Fail(kExitBadInput, fit.status());
  nlohmann::json j = {{"latency_s", fit->link.latency_s},
                      {"bw_Bps", fit->link.bw_Bps},
                      {"rms_residual_s", fit->rms_residual_s}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct TheoryArgs {
  std::string graph;
  int devices = 2;
  bool no_fuse = false;
  bool no_guards = false;
};

int RunTheory(const TheoryArgs& args) {
  absl::StatusOr<Graph> graph = LoadGraph(args.graph);
  if (!graph.ok()) return Fail(kExitBadInput, graph.status());
  SearchOptions options;
  options.fuse = !args.no_fuse;
  options.guards = !args.no_guards;
  Theory theory = BuildSearchTheory(*graph, args.devices, options);
  std::cout << TheoryToJson(theory, *graph).dump(2) << "\n";
  return 0;
}

}  // namespace
}  // namespace spmdsynth

int main(int argc, char** argv) {
  using namespace spmdsynth;
  CLI::App app{"Synthesize and check SPMD programs for computation graphs"};
  app.require_subcommand(1);

  PlanArgs plan;
  CLI::App* plan_cmd = app.add_subcommand("plan", "Plan program and ratios");
  plan_cmd->add_option("graph", plan.graph, "Graph JSON")->required();
  plan_cmd->add_option("cluster", plan.cluster, "Cluster JSON")->required();
  plan_cmd->add_option("-o,--output", plan.output, "Plan output path");
  plan_cmd->add_option("--segments", plan.segments, "Ratio segments")
      ->check(CLI::PositiveNumber);
  plan_cmd->add_option("--max-rounds", plan.max_rounds, "Alternation rounds")
      ->check(CLI::PositiveNumber);
  plan_cmd->add_option("--budget", plan.budget, "Search expansion budget")
      ->check(CLI::PositiveNumber);
  plan_cmd->add_flag("--fixed-ratios", plan.fixed,
                     "Synthesize once without balancing");
  plan_cmd->add_option("--ratios", plan.ratios,
                       "Fixed ratios, rows separated by ';'");
  plan_cmd->add_flag("--timing", plan.timing, "Record wall time in the plan");

  VerifyArgs verify;
  CLI::App* verify_cmd =
      app.add_subcommand("verify", "Check a plan against the graph");
  verify_cmd->add_option("plan", verify.plan, "Plan JSON")->required();
  verify_cmd->add_option("graph", verify.graph, "Graph JSON")->required();
  verify_cmd->add_option("--trials", verify.trials, "Random trials")
      ->check(CLI::NonNegativeNumber);
  verify_cmd->add_option("--seed", verify.seed, "First trial seed");

  EnumerateArgs enumerate;
  CLI::App* enum_cmd = app.add_subcommand(
      "enumerate", "Exhaustive minimum-cost program (small graphs)");
  enum_cmd->add_option("graph", enumerate.graph, "Graph JSON")->required();
  enum_cmd->add_option("cluster", enumerate.cluster, "Cluster JSON")
      ->required();
  enum_cmd->add_option("--max-len", enumerate.max_len, "Program length cap");
  enum_cmd->add_option("--ratios", enumerate.ratios, "Ratios to cost with");
  enum_cmd->add_option("--plan", enumerate.plan, "Take ratios from a plan");
  enum_cmd->add_option("-o,--output", enumerate.output, "Result JSON path");
  enum_cmd->add_flag("--force", enumerate.force, "Allow graphs over 6 nodes");

  std::string samples;
  CLI::App* fit_cmd =
      app.add_subcommand("fit", "Fit latency and bandwidth to samples");
  fit_cmd->add_option("samples", samples, "JSON [[bytes, seconds], ...]")
      ->required();

  TheoryArgs theory;
  CLI::App* theory_cmd =
      app.add_subcommand("theory", "Dump the derived Hoare triples");
  theory_cmd->add_option("graph", theory.graph, "Graph JSON")->required();
  theory_cmd->add_option("--devices", theory.devices, "Device count");
  theory_cmd->add_flag("--no-fuse", theory.no_fuse, "Skip fusion");
  theory_cmd->add_flag("--no-guards", theory.no_guards,
                       "Skip communication guards");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (*plan_cmd) return RunPlan(plan);
  if (*verify_cmd) return RunVerify(verify);
  if (*enum_cmd) return RunEnumerate(enumerate);
  if (*fit_cmd) return RunFit(samples);
  if (*theory_cmd) return RunTheory(theory);
  return 2;
}
