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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "json.hpp"
#include "spmdsynth/enumerator.h"
#include "spmdsynth/interpreter.h"
#include "spmdsynth/load_balancer.h"
#include "spmdsynth/optimizer_loop.h"
#include "spmdsynth/plan.h"
#include "spmdsynth/search.h"
#include "spmdsynth/simplex.h"
#include "test_util.h"

namespace spmdsynth {
namespace {

using ::spmdsynth::testing::CorpusPaths;
using ::spmdsynth::testing::LoadGraph;
using ::spmdsynth::testing::LoadSpec;
using ::spmdsynth::testing::ReadFileOrDie;
using ::spmdsynth::testing::Stem;
using ::spmdsynth::testing::TestDataPath;
using Clock = std::chrono::steady_clock;

double Since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
  // Records the first few failures.
  void Fail(const std::string& what) {
    if (pass || detail.size() < 400) {
      absl::StrAppend(&detail, detail.empty() ? "" : "; ", what);
    }
    pass = false;
  }
};

const char* kTwoDeviceClusters[] = {"homogeneous2", "hetero2",
                                    "slow_compute2"};

ClusterSpec Cluster(const std::string& name) {
  return LoadSpec(TestDataPath("clusters/" + name + ".json"));
}

// 1. Planned cost equals the exhaustive minimum under the plan's ratios.
Outcome OptimalityVsOracle(std::vector<double>* costs) {
  Outcome out;
  const auto start = Clock::now();
  int cases = 0;
  for (const std::string& path : CorpusPaths()) {
    Graph g = LoadGraph(path);
    if (g.size() > 5) out.Fail(Stem(path) + " has more than 5 nodes");
    for (const char* name : kTwoDeviceClusters) {
      ClusterSpec spec = Cluster(name);
      absl::StatusOr<Plan> plan = MakePlan(g, spec, {});
      if (!plan.ok()) {
        out.Fail(Stem(path) + ": " + std::string(plan.status().message()));
        continue;
      }
      CostModel model(g, spec, plan->assignment);
      // Unguarded, unfused theory: every program the rules admit.
      EnumerateResult oracle =
          Enumerate(g, DeriveTheory(g, spec.num_devices()), model,
                    plan->ratios, {});
      ++cases;
      costs->push_back(oracle.cost);
      if (!oracle.found || oracle.truncated) {
        out.Fail(Stem(path) + "/" + name + ": oracle incomplete");
      } else if (plan->estimate.total_s != oracle.cost) {
        out.Fail(absl::StrFormat("%s/%s: plan %.17g vs oracle %.17g",
                                 Stem(path), name, plan->estimate.total_s,
                                 oracle.cost));
      }
    }
  }
  const double elapsed = Since(start);
  if (CorpusPaths().size() < 10) out.Fail("corpus has fewer than 10 graphs");
  if (elapsed >= 60.0) out.Fail(absl::StrFormat("took %.1f s", elapsed));
  if (out.pass) {
    out.detail = absl::StrFormat("%d graph/cluster pairs, %.2f s", cases,
                                 elapsed);
  }
  return out;
}

int RunCli(const std::string& args, const std::string& log) {
  const std::string cmd =
      absl::StrCat(SPMDPLAN_BINARY, " ", args, " > ", log, " 2>&1");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 2. Every plan passes `spmdplan verify` with 20 trials.
Outcome SemanticEquivalence() {
  Outcome out;
  const auto start = Clock::now();
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() /
      absl::StrCat("spmdsynth_acceptance_", ::getpid());
  std::filesystem::create_directories(dir);
  const std::string log = (dir / "log.txt").string();
  struct Config {
    std::string cluster, flags;
  };
  const std::vector<Config> configs = {
      {"homogeneous2", ""},          {"hetero2", ""},
      {"slow_compute2", ""},         {"hetero3", ""},
      {"hetero2", "--ratios 0.7,0.3"}, {"hetero2", "--ratios 1,0"},
      {"hetero3", "--ratios 0.6,0.4,0"}};
  int plans = 0, zero_shards = 0;
  for (const std::string& path : CorpusPaths()) {
    for (const Config& c : configs) {
      const std::string plan = (dir / "plan.json").string();
      const std::string cluster =
          TestDataPath("clusters/" + c.cluster + ".json");
      if (RunCli(absl::StrCat("plan ", path, " ", cluster, " ", c.flags,
                              " -o ", plan),
                 log) != 0) {
        out.Fail(Stem(path) + " " + c.cluster + " " + c.flags +
                 ": plan failed");
        continue;
      }
      ++plans;
      nlohmann::json doc = nlohmann::json::parse(ReadFileOrDie(plan));
      bool has_zero = false;
      for (const auto& entry : doc["shard_table"]) {
        for (const auto& s : entry["sizes"]) has_zero |= s.get<int>() == 0;
      }
      zero_shards += has_zero;
      if (RunCli(absl::StrCat("verify ", plan, " ", path, " --trials 20"),
                 log) != 0) {
        out.Fail(Stem(path) + " " + c.cluster + " " + c.flags + ": " +
                 ReadFileOrDie(log));
      }
    }
  }
  std::filesystem::remove_all(dir);
  const double elapsed = Since(start);
  if (zero_shards == 0) out.Fail("no plan exercised a zero-size shard");
  if (elapsed >= 30.0) out.Fail(absl::StrFormat("took %.1f s", elapsed));
  if (out.pass) {
    out.detail = absl::StrFormat(
        "%d plans verified, %d with zero-size shards, %.2f s", plans,
        zero_shards, elapsed);
  }
  return out;
}

// 3. Every derived triple, raw and as searched, holds on the interpreter.
Outcome TripleSoundness() {
  Outcome out;
  const std::vector<ShardingRatios> rows = {
      ShardingRatios{{{0.5, 0.5}}}, ShardingRatios{{{0.7, 0.3}}},
      ShardingRatios{{{1.0, 0.0}}}, ShardingRatios{{{0.5, 0.25, 0.25}}}};
  int64_t checked = 0;
  for (const std::string& path : CorpusPaths()) {
    Graph g = LoadGraph(path);
    const SegmentAssignment a = SegmentAssignment::Single(g);
    for (const ShardingRatios& b : rows) {
      const int m = static_cast<int>(b.rows[0].size());
      const Theory raw = DeriveTheory(g, m);
      const Theory searched = BuildSearchTheory(g, m, {});
      for (const Theory* theory : {&raw, &searched}) {
        uint64_t seed = 1;
        for (const HoareTriple& t : theory->triples()) {
          ++checked;
          absl::Status s = CheckTripleSoundness(g, t, b, a, seed++);
          if (!s.ok()) {
            out.Fail(Stem(path) + ": " + std::string(s.message()));
          }
        }
      }
    }
  }
  if (out.pass) out.detail = absl::StrCat(checked, " triple instances");
  return out;
}

// 4. ecost never exceeds the cheapest completion's remaining cost.
Outcome Admissibility() {
  Outcome out;
  int64_t partial = 0;
  double max_ulps = 0;
  auto ulp = [](double x) {
    return std::nextafter(x, std::numeric_limits<double>::infinity()) - x;
  };
  const std::vector<ShardingRatios> rows = {ShardingRatios{{{0.5, 0.5}}},
                                            ShardingRatios{{{0.7, 0.3}}}};
  for (const std::string& path : CorpusPaths()) {
    Graph g = LoadGraph(path);
    for (const char* name : kTwoDeviceClusters) {
      ClusterSpec spec = Cluster(name);
      CostModel model(g, spec, SegmentAssignment::Single(g));
      for (const ShardingRatios& b : rows) {
        EnumerateOptions o;
        o.record_completions = true;
        o.branch_and_bound = false;
        const Theory theory = DeriveTheory(g, 2);
        EnumerateResult r = Enumerate(g, theory, model, b, o);
        if (r.truncated) out.Fail(Stem(path) + ": enumeration truncated");
        SearchSpace space(g, theory, model, b);
        for (size_t i = 0; i < r.pool.size(); ++i) {
          if (r.complete[i] || std::isinf(r.best_completion[i])) continue;
          ++partial;
          const SearchState& s = r.pool[i];
          const double ecost = space.Ecost(s);
          // Both sides are float sums of the same terms in different orders,
          // so allow their rounding bound and nothing more.
          const double rest = r.best_completion[i] - s.acc.closed;
          const double rounding = (g.size() + 2) *
                                  std::numeric_limits<double>::epsilon() *
                                  r.best_completion[i];
          if (ecost > rest) {
            max_ulps = std::max(max_ulps,
                                (ecost - rest) / ulp(r.best_completion[i]));
          }
          if (ecost > rest + rounding) {
            out.Fail(absl::StrFormat(
                "%s/%s: ecost %.17g > %.17g - %.17g", Stem(path), name, ecost,
                r.best_completion[i], s.acc.closed));
          }
        }
      }
    }
  }
  if (out.pass) {
    out.detail = absl::StrFormat(
        "%d partial programs, zero violations, worst rounding excess %.2f ulp "
        "of the completion cost",
        partial, max_ulps);
  }
  return out;
}

StageCoefficients CompStage(std::vector<double> slope) {
  StageCoefficients s;
  s.comp_intercept.assign(slope.size(), 0.0);
  s.comp_slope = {std::move(slope)};
  return s;
}

double Evaluate(const std::vector<StageCoefficients>& stages,
                const std::vector<double>& row) {
  double total = 0;
  for (const StageCoefficients& s : stages) {
    const double max_ratio = s.comm_segments.empty()
                                 ? 0.0
                                 : *std::max_element(row.begin(), row.end());
    double comp = 0;
    for (size_t j = 0; j < row.size(); ++j) {
      comp = std::max(comp, s.comp_intercept[j] + s.comp_slope[0][j] * row[j]);
    }
    total += s.comm_intercept + s.comm_slope * max_ratio + comp;
  }
  return total;
}

double GridMinimum(const std::vector<StageCoefficients>& stages, int m,
                   int steps) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> parts(m);
  std::function<void(int, int)> rec = [&](int j, int left) {
    if (j == m - 1) {
      parts[j] = left;
      std::vector<double> row(m);
      for (int i = 0; i < m; ++i) row[i] = parts[i] / double(steps);
      best = std::min(best, Evaluate(stages, row));
      return;
    }
    for (int p = 0; p <= left; ++p) {
      parts[j] = p;
      rec(j + 1, left - p);
    }
  };
  rec(0, steps);
  return best;
}

struct LpOut {
  std::vector<double> row;
  double objective = 0;
  bool optimal = false;
};

LpOut SolveStages(const std::vector<StageCoefficients>& stages, int m) {
  RatioLpLayout layout;
  LpSolution s = SolveLp(BuildRatioLp(stages, 1, m, &layout));
  LpOut out;
  out.optimal = s.status == LpStatus::kOptimal;
  if (out.optimal) {
    out.row = ExtractRatios(s, layout).rows[0];
    out.objective = s.objective;
  }
  return out;
}

// 5. The ratio LP against analytic optima and a 1e-2 grid.
Outcome LpCorrectness() {
  Outcome out;
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-6; };
  {
    LpOut r = SolveStages({CompStage({1.0, 2.0})}, 2);
    if (!r.optimal || !near(r.row[0], 2.0 / 3.0) ||
        !near(r.row[1], 1.0 / 3.0) || !near(r.objective, 2.0 / 3.0)) {
      out.Fail("slopes (1,2): expected [2/3,1/3], objective 2/3");
    }
  }
  {
    StageCoefficients st = CompStage({1.0, 2.0, 3.0});
    st.comm_slope = 1e6;
    st.comm_segments = {0};
    LpOut r = SolveStages({st}, 3);
    for (double v : r.row) {
      if (!near(v, 1.0 / 3.0)) out.Fail("communication-dominated not uniform");
    }
  }
  {
    StageCoefficients st = CompStage({1.0, 2.0});
    st.comm_slope = 3.0;
    st.comm_segments = {0};
    LpOut r = SolveStages({st}, 2);
    if (!r.optimal || !near(r.row[0], 0.5) || !near(r.row[1], 0.5) ||
        !near(r.objective, 2.5)) {
      out.Fail("slopes (1,2) + 3 max: expected [0.5,0.5], objective 2.5");
    }
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 2 + trial % 2;
    std::vector<StageCoefficients> stages;
    for (int i = 0, n = 1 + trial % 4; i < n; ++i) {
      std::vector<double> slope(m);
      for (double& v : slope) v = u(rng) < 0.2 ? 0.0 : u(rng);
      StageCoefficients st = CompStage(slope);
      for (double& v : st.comp_intercept) v = u(rng) < 0.5 ? 0.0 : 0.3 * u(rng);
      st.comm_intercept = 0.1 * u(rng);
      if (u(rng) < 0.7) {
        st.comm_slope = u(rng);
        st.comm_segments = {0};
      }
      stages.push_back(st);
    }
    LpOut r = SolveStages(stages, m);
    const double grid = GridMinimum(stages, m, 100);
    if (!r.optimal) {
      out.Fail(absl::StrCat("instance ", trial, " not optimal"));
      continue;
    }
    worst = std::max(worst, r.objective - grid);
    if (r.objective > grid + 1e-6) {
      out.Fail(absl::StrFormat("instance %d: LP %.9g > grid %.9g", trial,
                               r.objective, grid));
    }
  }
  if (out.pass) {
    out.detail = absl::StrFormat(
        "3 analytic cases; 20 instances, max LP - grid = %.3g", worst);
  }
  return out;
}

// 6. Rounding has minimal total L1 deviation.
Outcome RoundingOptimality() {
  Outcome out;
  auto l1 = [](int64_t extent, const std::vector<int64_t>& sizes,
               const std::vector<double>& row) {
    double d = 0;
    for (size_t j = 0; j < row.size(); ++j) {
      d += std::abs(static_cast<double>(sizes[j]) - extent * row[j]);
    }
    return d;
  };
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int cases = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + trial % 4;
    std::vector<double> row(m);
    for (double& v : row) v = u(rng) < 0.15 ? 0.0 : u(rng);
    double sum = std::accumulate(row.begin(), row.end(), 0.0);
    if (sum == 0) row[0] = sum = 1;
    for (double& v : row) v /= sum;
    for (int64_t extent = 1; extent <= 12; ++extent) {
      ++cases;
      double best = std::numeric_limits<double>::infinity();
      std::vector<int64_t> sizes(m);
      std::function<void(int, int64_t)> rec = [&](int j, int64_t left) {
        if (j == m - 1) {
          sizes[j] = left;
          best = std::min(best, l1(extent, sizes, row));
          return;
        }
        for (int64_t s = 0; s <= left; ++s) {
          sizes[j] = s;
          rec(j + 1, left - s);
        }
      };
      rec(0, extent);
      const std::vector<int64_t> got = RoundShards(extent, row);
      if (std::accumulate(got.begin(), got.end(), int64_t{0}) != extent ||
          std::abs(l1(extent, got, row) - best) > 1e-9) {
        out.Fail(absl::StrCat("row ", trial, " extent ", extent));
      }
    }
  }
  if (out.pass) out.detail = absl::StrCat(cases, " (row, extent) pairs");
  return out;
}

// 7. Each search optimization alone keeps the optimum and saves work.
Outcome SearchOptimizations() {
  Outcome out;
  SearchOptions none;
  none.fuse = none.guards = none.prune_properties = none.dominance = false;
  const char* names[] = {"fusion", "guards", "pruning", "dominance"};
  int64_t base_total = 0, all_total = 0;
  for (const std::string& path : CorpusPaths()) {
    Graph g = LoadGraph(path);
    for (const char* cluster : kTwoDeviceClusters) {
      ClusterSpec spec = Cluster(cluster);
      absl::StatusOr<Plan> plan = MakePlan(g, spec, {});
      if (!plan.ok()) {
        out.Fail(Stem(path) + ": no plan");
        continue;
      }
      CostModel model(g, spec, plan->assignment);
      const ShardingRatios& b = plan->ratios;
      const double optimum =
          Enumerate(g, DeriveTheory(g, 2), model, b, {}).cost;
      absl::StatusOr<SearchResult> base = Synthesize(g, model, b, none);
      if (!base.ok() || base->cost != optimum) {
        out.Fail(Stem(path) + ": unoptimized search missed the optimum");
        continue;
      }
      base_total += base->stats.expansions;
      for (int k = 0; k < 5; ++k) {
        SearchOptions o = none;
        if (k == 0) o.fuse = true;
        if (k == 1) o.guards = true;
        if (k == 2) o.prune_properties = true;
        if (k == 3) o.dominance = true;
        if (k == 4) o = SearchOptions{};
        const std::string label = k < 4 ? names[k] : "all";
        absl::StatusOr<SearchResult> r = Synthesize(g, model, b, o);
        if (!r.ok() || r->cost != optimum) {
          out.Fail(Stem(path) + "/" + cluster + " " + label + ": cost");
        } else if (r->stats.expansions > base->stats.expansions) {
          out.Fail(absl::StrFormat("%s/%s %s: %d > %d expansions",
                                   Stem(path), cluster, label,
                                   r->stats.expansions,
                                   base->stats.expansions));
        }
        if (k == 4 && r.ok()) all_total += r->stats.expansions;
      }
    }
  }
  if (out.pass) {
    out.detail = absl::StrFormat("expansions %d unoptimized, %d with all",
                                 base_total, all_total);
  }
  return out;
}

// 8. The alternating loop.
Outcome AlternatingLoop() {
  Outcome out;
  int runs = 0;
  for (const char* cluster :
       {"homogeneous2", "hetero2", "slow_compute2", "hetero3"}) {
    ClusterSpec spec = Cluster(cluster);
    const bool homogeneous = std::string(cluster) == "homogeneous2";
    for (const std::string& path : CorpusPaths()) {
      Graph g = LoadGraph(path);
      CostModel model(g, spec, SegmentAssignment::Single(g));
      absl::StatusOr<LoopResult> r = OptimizePlan(g, model, {}, {});
      if (!r.ok()) {
        out.Fail(Stem(path) + ": " + std::string(r.status().message()));
        continue;
      }
      ++runs;
      const std::vector<double>& best = r->best_after_half_step;
      for (size_t i = 1; i < best.size(); ++i) {
        if (best[i] > best[i - 1]) {
          out.Fail(Stem(path) + "/" + cluster + ": best increased");
        }
      }
      if (r->trace.size() > 8) out.Fail(Stem(path) + ": more than 8 rounds");
      if (homogeneous) {
        for (double v : r->ratios.rows[0]) {
          if (std::abs(v - 0.5) > 1e-9) {
            out.Fail(Stem(path) + ": homogeneous ratios not uniform");
          }
        }
      }
    }
  }
  if (out.pass) out.detail = absl::StrCat(runs, " loops");
  return out;
}

// `blocks` repetitions of h = Add(tanh(MatMul(h, w)), h).
Graph ChainGraph(int blocks) {
  GraphBuilder b;
  b.Placeholder("h0", {64, 32});
  std::string h = "h0";
  for (int i = 0; i < blocks; ++i) {
    const std::string s = std::to_string(i);
    const std::string next = "h" + std::to_string(i + 1);
    b.Parameter("w" + s, {32, 32}).MatMul("m" + s, h, "w" + s);
    b.Unary("u" + s, UnaryFn::kTanh, "m" + s);
    b.Binary(next, BinaryFn::kAdd, "u" + s, h);
    h = next;
  }
  b.ReduceAll("loss", h);
  return *std::move(b).Build("loss");
}

// 9. Synthesis time on chains of 4, 8, 16 and 24 blocks.
Outcome SynthesisScaling() {
  Outcome out;
  const ClusterSpec spec = Cluster("hetero2");
  const std::vector<int> blocks = {4, 8, 16, 24};
  std::vector<double> xs, ys;
  std::string times;
  for (int n : blocks) {
    Graph g = ChainGraph(n);
    double best = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 3; ++rep) {
      const auto start = Clock::now();
      absl::StatusOr<Plan> plan = MakePlan(g, spec, {});
      best = std::min(best, Since(start));
      if (!plan.ok() || plan->budget_exhausted) {
        out.Fail(absl::StrCat(n, " blocks: no plan"));
        break;
      }
    }
    xs.push_back(std::log(n));
    ys.push_back(std::log(best));
    absl::StrAppendFormat(&times, "%s%d:%.4fs", times.empty() ? "" : " ", n,
                          best);
    if (n == 24 && best >= 30.0) out.Fail("24 blocks took over 30 s");
  }
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx;
  if (!(slope < 3.0)) out.Fail(absl::StrFormat("log-log slope %.2f", slope));
  if (!(slope > 1.0)) {
    out.Fail(absl::StrFormat("log-log slope %.2f is not superlinear", slope));
  }
  absl::StrAppendFormat(&out.detail, "%s%s, slope %.2f",
                        out.detail.empty() ? "" : "; ", times, slope);
  return out;
}

// 10. Padded AllGather below the crossover, GroupedBroadcast above it.
Outcome CommunicationCrossover() {
  Outcome out;
  // h must be gathered: it is both operands of the second MatMul, and
  // recomputing it is far more expensive than moving it.
  GraphBuilder gb;
  gb.Placeholder("x", {1000, 100000}).Parameter("w", {100000, 1000});
  gb.MatMul("h", "x", "w").MatMul("z", "h", "h");
  gb.Unary("t", UnaryFn::kTanh, "z").ReduceAll("loss", "t");
  Graph g = *std::move(gb).Build("loss");
  const int h = *g.Find("h");

  const int m = 2;
  const double lat_ag = 0.0, bw_ag = 1e9, lat_gb = 1e-4, bw_gb = 2e9;
  ClusterSpec spec;
  spec.flops = {1e12, 1e12};
  // Other collectives are made useless so the gather of h is the only
  // communication worth choosing.
  for (LinkModel& l : spec.collectives) l = {1.0, 1e6};
  spec.collectives[static_cast<int>(CollectiveKind::kAllGather)] = {lat_ag,
                                                                   bw_ag};
  spec.collectives[static_cast<int>(CollectiveKind::kGroupedBroadcast)] = {
      lat_gb, bw_gb};
  spec.bytes_per_element = 4;
  const double bytes = 1000.0 * 1000.0 * 4;
  // lat_ag + S x / bw_ag = m lat_gb + S / bw_gb.
  const double crossover = (m * lat_gb + bytes / bw_gb - lat_ag) * bw_ag / bytes;

  CostModel model(g, spec, SegmentAssignment::Single(g));
  int checked = 0;
  for (int pct = 50; pct <= 90; ++pct) {
    const double x = pct / 100.0;
    if (std::abs(x - crossover) < 1e-9) continue;  // a tie
    absl::StatusOr<SearchResult> r =
        Synthesize(g, model, ShardingRatios{{{x, 1.0 - x}}}, {});
    if (!r.ok() || !r->found) {
      out.Fail(absl::StrFormat("x=%.2f: no program", x));
      continue;
    }
    bool ag = false, grouped = false;
    for (const Instruction& i : r->program.instrs) {
      if (i.tensor != h) continue;
      ag |= i.kind == InstrKind::kAllGather;
      grouped |= i.kind == InstrKind::kGroupedBroadcast;
    }
    const bool want_grouped = x >= crossover;
    ++checked;
    if (want_grouped ? !(grouped && !ag) : !(ag && !grouped)) {
      out.Fail(absl::StrFormat("x=%.2f: expected %s", x,
                               want_grouped ? "GroupedBroadcast" : "AllGather"));
    }
  }
  absl::StrAppendFormat(&out.detail, "%scrossover x* = %.4f, %d ratios",
                        out.detail.empty() ? "" : "; ", crossover, checked);
  return out;
}

}  // namespace
}  // namespace spmdsynth

int main() {
  using namespace spmdsynth;
  std::vector<double> costs;
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "optimality vs oracle", [&] { return OptimalityVsOracle(&costs); }},
      {2, "semantic equivalence", SemanticEquivalence},
      {3, "triple soundness", TripleSoundness},
      {4, "admissibility", Admissibility},
      {5, "LP correctness", LpCorrectness},
      {6, "rounding optimality", RoundingOptimality},
      {7, "search-time optimizations", SearchOptimizations},
      {8, "alternating loop", AlternatingLoop},
      {9, "synthesis-time scaling", SynthesisScaling},
      {10, "communication crossover", CommunicationCrossover},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const Clock::time_point start = Clock::now();
    const Outcome o = c.run();
    std::printf("criterion %2d %s: %s (%s) [%.1f s]\n", c.id,
                o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                Since(start));
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n",
              static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
