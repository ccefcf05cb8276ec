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

#include "spmdsynth/cost_model.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "Eigen/Dense"
#include "gtest/gtest.h"
#include "spmdsynth/enumerator.h"
#include "spmdsynth/search.h"
#include "test_util.h"

namespace spmdsynth {
namespace {

using ::spmdsynth::testing::CorpusPaths;
using ::spmdsynth::testing::LoadGraph;
using ::spmdsynth::testing::MatMulLossGraph;
using ::spmdsynth::testing::Stem;
using ::spmdsynth::testing::UniformLinkSpec;

constexpr int e1 = 0, e2 = 1, e3 = 2, kLoss = 3;
const Form kId = Form::Identity();
const Form kAr = Form::AllReduce();
const Form kAg0 = Form::AllGather(0);

DistTensorRef R(int tensor, Form form) { return {tensor, form, -1}; }

Instruction Make(InstrKind kind, int tensor, std::vector<DistTensorRef> ops,
                 Form out, int dim = -1) {
  Instruction i;
  i.kind = kind;
  i.tensor = tensor;
  i.dim = dim;
  i.operands = std::move(ops);
  i.output = R(tensor, out);
  return i;
}

// Row-sharded MatMul, gathered before a replicated sum.
DistributedProgram GatherThenReduce() {
  return {{Make(InstrKind::kPlaceholderShard, e1, {}, kAg0, 0),
           Make(InstrKind::kParameter, e2, {}, kId),
           Make(InstrKind::kMatMul, e3, {R(e1, kAg0), R(e2, kId)}, kAg0),
           Make(InstrKind::kAllGather, e3, {R(e3, kAg0)}, kId, 0),
           Make(InstrKind::kReduce, kLoss, {R(e3, kId)}, kId),
           Make(InstrKind::kSplitReplica, kLoss, {R(kLoss, kId)}, kAr)}};
}

TEST(DecomposeStages, TwoStagesOfTwo) {
  DistributedProgram p = {
      {Make(InstrKind::kPlaceholderShard, e1, {}, kAg0, 0),
       Make(InstrKind::kParameter, e2, {}, kId),
       Make(InstrKind::kAllGather, e1, {R(e1, kAg0)}, kId, 0),
       Make(InstrKind::kMatMul, e3, {R(e1, kId), R(e2, kId)}, kId)}};
  std::vector<Stage> stages = DecomposeStages(p);
  ASSERT_EQ(stages.size(), 2u);
  EXPECT_EQ(stages[0].begin, 0u);
  EXPECT_EQ(stages[0].end, 2u);
  EXPECT_FALSE(stages[0].opens_with_communication);
  EXPECT_EQ(stages[1].begin, 2u);
  EXPECT_EQ(stages[1].end, 4u);
  EXPECT_TRUE(stages[1].opens_with_communication);
}

TEST(DecomposeStages, NoCommunicationIsOneStage) {
  DistributedProgram p = {
      {Make(InstrKind::kPlaceholderShard, e1, {}, kAg0, 0),
       Make(InstrKind::kParameter, e2, {}, kId),
       Make(InstrKind::kMatMul, e3, {R(e1, kAg0), R(e2, kId)}, kAg0)}};
  EXPECT_EQ(DecomposeStages(p).size(), 1u);
  EXPECT_EQ(DecomposeStages(DistributedProgram{}).size(), 1u);
}

TEST(DecomposeStages, EveryPlacementOfThree) {
  const Instruction comp = Make(InstrKind::kParameter, e2, {}, kId);
  const Instruction comm =
      Make(InstrKind::kAllReduce, e3, {R(e3, kAr)}, kId);
  for (int mask = 0; mask < 8; ++mask) {
    DistributedProgram p;
    int k = 0;
    for (int i = 0; i < 3; ++i) {
      const bool is_comm = (mask >> i) & 1;
      p.instrs.push_back(is_comm ? comm : comp);
      k += is_comm;
    }
    const bool first_is_comm = mask & 1;
    const size_t expected = first_is_comm ? k : k + 1;
    std::vector<Stage> stages = DecomposeStages(p);
    EXPECT_EQ(stages.size(), expected) << "mask " << mask;
    // Stages tile the program in order.
    size_t at = 0;
    for (const Stage& s : stages) {
      EXPECT_EQ(s.begin, at);
      EXPECT_GT(s.end, s.begin);
      for (size_t i = s.begin + 1; i < s.end; ++i) {
        EXPECT_FALSE(p.instrs[i].is_communication());
      }
      at = s.end;
    }
    EXPECT_EQ(at, 3u);
  }
}

TEST(CompTime, ShardedMatMulScalesWithRatio) {
  Graph g = MatMulLossGraph();
  ClusterSpec spec = UniformLinkSpec({128, 128}, 0, 1e9);
  CostModel model(g, spec, SegmentAssignment::Single(g));
  const ShardingRatios b = ShardingRatios::Uniform(1, 2);
  Instruction mm =
      Make(InstrKind::kMatMul, e3, {R(e1, kAg0), R(e2, kId)}, kAg0);
  EXPECT_DOUBLE_EQ(model.InstructionCompTime(mm, 0, b), 0.5);
  EXPECT_DOUBLE_EQ(model.InstructionCompTime(mm, 1, b), 0.5);
}

TEST(CompTime, ReplicatedMatMulIgnoresRatio) {
  Graph g = MatMulLossGraph();
  ClusterSpec spec = UniformLinkSpec({128, 128}, 0, 1e9);
  CostModel model(g, spec, SegmentAssignment::Single(g));
  Instruction mm = Make(InstrKind::kMatMul, e3, {R(e1, kId), R(e2, kId)}, kId);
  for (double r : {0.5, 0.9, 0.0}) {
    const ShardingRatios b{{{r, 1 - r}}};
    EXPECT_DOUBLE_EQ(model.InstructionCompTime(mm, 0, b), 1.0);
    EXPECT_DOUBLE_EQ(model.InstructionCompTime(mm, 1, b), 1.0);
  }
}

TEST(CompTime, EmptyStageIsFree) {
  Graph g = MatMulLossGraph();
  ClusterSpec spec = UniformLinkSpec({128, 128}, 0, 1e9);
  CostModel model(g, spec, SegmentAssignment::Single(g));
  DistributedProgram p = GatherThenReduce();
  EXPECT_EQ(model.StageCompTime(p, Stage{2, 2, false}, 0,
                                ShardingRatios::Uniform(1, 2)),
            0.0);
}

TEST(CommTime, PaddedAllGatherChargesLargestShard) {
  GraphBuilder b;
  b.Placeholder("x", {1000, 1000}).ReduceAll("l", "x");
  Graph g = *std::move(b).Build("l");
  ClusterSpec spec = UniformLinkSpec({1, 1, 1, 1}, 0, 1e9);
  CostModel model(g, spec, SegmentAssignment::Single(g));
  ASSERT_EQ(model.TensorBytes(0), 4'000'000);
  Instruction ag = Make(InstrKind::kAllGather, 0, {R(0, kAg0)}, kId, 0);
  EXPECT_NEAR(model.CommTime(ag, ShardingRatios::Uniform(1, 4)), 0.001,
              1e-15);
  EXPECT_NEAR(model.CommTime(ag, ShardingRatios{{{0.7, 0.1, 0.1, 0.1}}}),
              0.0028, 1e-15);
}

TEST(CommTime, CollectiveFormulas) {
  GraphBuilder b;
  b.Placeholder("x", {1000, 1000}).ReduceAll("l", "x");
  Graph g = *std::move(b).Build("l");
  ClusterSpec spec = UniformLinkSpec({1, 1, 1}, 0, 1e9);
  spec.link(CollectiveKind::kAllReduce) = {1e-4, 2e9};
  spec.link(CollectiveKind::kGroupedBroadcast) = {1e-3, 4e9};
  spec.link(CollectiveKind::kAllToAll) = {2e-4, 1e9};
  CostModel model(g, spec, SegmentAssignment::Single(g));
  const ShardingRatios skew{{{0.5, 0.3, 0.2}}};
  Instruction ar = Make(InstrKind::kAllReduce, 0, {R(0, kAr)}, kId);
  EXPECT_NEAR(model.CommTime(ar, skew), 1e-4 + 4e6 / 2e9, 1e-15);
  Instruction gb = Make(InstrKind::kGroupedBroadcast, 0, {R(0, kAg0)}, kId, 0);
  EXPECT_NEAR(model.CommTime(gb, skew), 3 * 1e-3 + 4e6 / 4e9, 1e-15);
  Instruction a2a =
      Make(InstrKind::kAllToAll, 0, {R(0, kAg0)}, Form::AllGather(1), 0);
  a2a.dim2 = 1;
  EXPECT_NEAR(model.CommTime(a2a, skew), 2e-4 + 0.5 * 4e6 / 1e9, 1e-15);

  ClusterSpec one = UniformLinkSpec({1}, 1.0, 1.0);
  CostModel single(g, one, SegmentAssignment::Single(g));
  EXPECT_EQ(single.CommTime(ar, ShardingRatios::Uniform(1, 1)), 0.0);
}

TEST(IterationTime, ShardedComputeOnlyStage) {
  GraphBuilder b;
  b.Placeholder("x", {100}).Unary("y", UnaryFn::kTanh, "x");
  b.ReduceAll("l", "y");
  Graph g = *std::move(b).Build("l");
  ClusterSpec spec = UniformLinkSpec({100, 100}, 0, 1e9);
  CostModel model(g, spec, SegmentAssignment::Single(g));
  DistributedProgram p = {
      {Make(InstrKind::kPlaceholderShard, 0, {}, kAg0, 0),
       Make(InstrKind::kUnary, 1, {R(0, kAg0)}, kAg0)}};
  CostBreakdown c = model.IterationTime(p, ShardingRatios::Uniform(1, 2));
  ASSERT_EQ(c.stages.size(), 1u);
  EXPECT_DOUBLE_EQ(c.total_s, 0.5);
}

TEST(IterationTime, SingleDeviceIsSerialFlops) {
  Graph g = MatMulLossGraph();
  ClusterSpec spec = UniformLinkSpec({1e3}, 5.0, 1.0);
  CostModel model(g, spec, SegmentAssignment::Single(g));
  CostBreakdown c =
      model.IterationTime(GatherThenReduce(), ShardingRatios::Uniform(1, 1));
  EXPECT_DOUBLE_EQ(c.total_s, (128.0 + 16.0) / 1e3);
}

TEST(IterationTime, HandComputedStageSum) {
  Graph g = MatMulLossGraph();
  ClusterSpec spec = UniformLinkSpec({2e9, 1e9}, 1e-5, 1e9);
  CostModel model(g, spec, SegmentAssignment::Single(g));
  const ShardingRatios b{{{0.6, 0.4}}};
  CostBreakdown c = model.IterationTime(GatherThenReduce(), b);
  ASSERT_EQ(c.stages.size(), 2u);
  // Stage 1: sharded MatMul, 128 flops. Device 1 is the slow one.
  const double stage1 = std::max(128 * 0.6 / 2e9, 128 * 0.4 / 1e9);
  // Stage 2: gather of e3 (16 floats) padded to 0.6 of 64 bytes, then the
  // replicated 16-flop sum.
  const double comm = 1e-5 + 64 * 0.6 / 1e9;
  const double stage2 = comm + std::max(16 / 2e9, 16 / 1e9);
  EXPECT_NEAR(c.stages[0].comm_s, 0.0, 0.0);
  EXPECT_NEAR(c.stages[1].comm_s, comm, 1e-20);
  EXPECT_NEAR(c.total_s, stage1 + stage2, 1e-18);
  EXPECT_NEAR(c.total_s, 1.01056e-5, 1e-18);
}

// Complete programs of every corpus graph found by the enumerator.
std::vector<std::pair<Graph, DistributedProgram>> CorpusPrograms() {
  std::vector<std::pair<Graph, DistributedProgram>> out;
  for (const std::string& path : CorpusPaths()) {
    Graph g = LoadGraph(path);
    ClusterSpec spec = UniformLinkSpec({2e9, 1e9}, 1e-6, 1e9);
    CostModel model(g, spec, SegmentAssignment::Single(g));
    for (const ShardingRatios& b :
         {ShardingRatios{{{0.5, 0.5}}}, ShardingRatios{{{0.9, 0.1}}}}) {
      EnumerateResult r = Enumerate(g, model, b, {});
      if (r.found) out.push_back({g, r.program});
    }
  }
  return out;
}

TEST(IterationTime, AccumulatorAgreesWithBreakdown) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& [g, p] : CorpusPrograms()) {
    ClusterSpec spec = UniformLinkSpec({3e9, 1e9}, 2e-6, 5e8);
    CostModel model(g, spec, SegmentAssignment::Single(g));
    for (int t = 0; t < 5; ++t) {
      const double r = u(rng);
      const ShardingRatios b{{{r, 1 - r}}};
      CostAccumulator acc = model.EmptyAccumulator();
      for (const Instruction& i : p.instrs) model.Append(i, b, &acc);
      EXPECT_DOUBLE_EQ(acc.Full(), model.IterationTime(p, b).total_s);
    }
  }
}

// Stage time rebuilt from the linear coefficients.
double FromCoefficients(const std::vector<StageCoefficients>& coeffs,
                        const ShardingRatios& b) {
  double total = 0;
  for (const StageCoefficients& s : coeffs) {
    double max_ratio = 0;
    for (int k : s.comm_segments) max_ratio = std::max(max_ratio, MaxOf(b.row(k)));
    double comp = 0;
    for (size_t j = 0; j < s.comp_intercept.size(); ++j) {
      double t = s.comp_intercept[j];
      for (size_t k = 0; k < s.comp_slope.size(); ++k) {
        t += s.comp_slope[k][j] * b.row(k)[j];
      }
      comp = std::max(comp, t);
    }
    total += s.comm_intercept + s.comm_slope * max_ratio + comp;
  }
  return total;
}

TEST(Coefficients, ReproduceIterationTime) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& [g, p] : CorpusPrograms()) {
    ClusterSpec spec = UniformLinkSpec({3e9, 1e9, 2e9}, 2e-6, 5e8);
    spec.link(CollectiveKind::kGroupedBroadcast) = {7e-6, 3e9};
    CostModel model(g, spec, SegmentAssignment::Single(g));
    const auto coeffs = model.Coefficients(p);
    for (int t = 0; t < 10; ++t) {
      std::vector<double> row = {u(rng), u(rng), u(rng)};
      const double sum = row[0] + row[1] + row[2];
      for (double& v : row) v /= sum;
      const ShardingRatios b{{row}};
      EXPECT_NEAR(FromCoefficients(coeffs, b),
                  model.IterationTime(p, b).total_s, 1e-15);
    }
  }
}

TEST(IterationTime, ConvexAlongSegmentsOfRatioSpace) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& [g, p] : CorpusPrograms()) {
    ClusterSpec spec = UniformLinkSpec({3e9, 1e9}, 2e-6, 5e8);
    CostModel model(g, spec, SegmentAssignment::Single(g));
    for (int t = 0; t < 20; ++t) {
      const double a = u(rng), c = u(rng), lam = u(rng);
      const double mid = lam * a + (1 - lam) * c;
      const double fa = model.IterationTime(p, {{{a, 1 - a}}}).total_s;
      const double fc = model.IterationTime(p, {{{c, 1 - c}}}).total_s;
      const double fm = model.IterationTime(p, {{{mid, 1 - mid}}}).total_s;
      EXPECT_LE(fm, lam * fa + (1 - lam) * fc + 1e-15);
    }
  }
}

TEST(IterationTime, FlopsScalingScalesComputeExactly) {
  for (auto& [g, p] : CorpusPrograms()) {
    ClusterSpec spec = UniformLinkSpec({3e9, 1e9}, 2e-6, 5e8);
    ClusterSpec scaled = spec;
    for (double& f : scaled.flops) f *= 4.0;
    CostModel m1(g, spec, SegmentAssignment::Single(g));
    CostModel m4(g, scaled, SegmentAssignment::Single(g));
    const ShardingRatios b{{{0.625, 0.375}}};
    CostBreakdown c1 = m1.IterationTime(p, b), c4 = m4.IterationTime(p, b);
    ASSERT_EQ(c1.stages.size(), c4.stages.size());
    for (size_t s = 0; s < c1.stages.size(); ++s) {
      EXPECT_EQ(c1.stages[s].comm_s, c4.stages[s].comm_s);
      for (size_t j = 0; j < 2; ++j) {
        EXPECT_EQ(c1.stages[s].comp_s[j], 4.0 * c4.stages[s].comp_s[j]);
      }
    }
  }
}

TEST(FitLinear, TwoPointsSolveExactly) {
  const std::vector<std::pair<double, double>> s = {{1e6, 1e-3},
                                                    {2e6, 1.5e-3}};
  absl::StatusOr<LinearFit> fit = FitLinear(s);
  ASSERT_TRUE(fit.ok());
  EXPECT_NEAR(fit->link.latency_s, 5e-4, 1e-15);
  EXPECT_NEAR(fit->link.bw_Bps, 2e9, 1e-3);
}

TEST(FitLinear, CollinearPointsHaveZeroResidual) {
  std::vector<std::pair<double, double>> s;
  for (int i = 1; i <= 10; ++i) s.push_back({i * 1024.0, 1e-5 + i * 1024.0 / 4e9});
  absl::StatusOr<LinearFit> fit = FitLinear(s);
  ASSERT_TRUE(fit.ok());
  EXPECT_NEAR(fit->rms_residual_s, 0.0, 1e-18);
  EXPECT_NEAR(fit->link.latency_s, 1e-5, 1e-15);
  EXPECT_NEAR(fit->link.bw_Bps / 4e9, 1.0, 1e-9);
}

TEST(FitLinear, NoisyPointsMatchNormalEquations) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, 2e-6);
  std::uniform_real_distribution<double> size(1e3, 1e7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<double, double>> s;
    const int n = 5 + trial;
    Eigen::MatrixXd a(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      const double x = size(rng);
      const double t = 3e-5 + x / 1.2e9 + noise(rng);
      s.push_back({x, t});
      a(i, 0) = 1.0;
      a(i, 1) = x;
      y(i) = t;
    }
    const Eigen::Vector2d beta =
        (a.transpose() * a).ldlt().solve(a.transpose() * y);
    absl::StatusOr<LinearFit> fit = FitLinear(s);
    ASSERT_TRUE(fit.ok());
    EXPECT_NEAR(fit->link.latency_s, beta(0), 1e-9);
    EXPECT_NEAR(1.0 / fit->link.bw_Bps, beta(1), 1e-9);
  }
}

TEST(FitLinear, Errors) {
  const std::vector<std::pair<double, double>> one = {{1, 1}};
  EXPECT_FALSE(FitLinear(one).ok());
  const std::vector<std::pair<double, double>> same = {{1, 1}, {1, 2}};
  EXPECT_FALSE(FitLinear(same).ok());
  const std::vector<std::pair<double, double>> falling = {{1, 2}, {2, 1}};
  EXPECT_FALSE(FitLinear(falling).ok());
  EXPECT_FALSE(ParseProfileSamples("[[1, 2, 3]]").ok());
  EXPECT_EQ(ParseProfileSamples("[[1, 2], [3, 4]]")->size(), 2u);
}

TEST(Ecost, EmptyProgramChargesAllFlopsAtAggregateRate) {
  Graph g = MatMulLossGraph();
  ClusterSpec spec = UniformLinkSpec({128, 128}, 1e-3, 1e9);
  CostModel model(g, spec, SegmentAssignment::Single(g));
  const ShardingRatios b = ShardingRatios::Uniform(1, 2);
  SearchSpace space(g, DeriveTheory(g, 2), model, b);
  EXPECT_DOUBLE_EQ(space.Ecost(space.Initial()), 144.0 / 256.0);
  EXPECT_DOUBLE_EQ(space.Ecost(space.Initial()), 0.5625);
}

TEST(Ecost, CompleteProgramIsZero) {
  Graph g = MatMulLossGraph();
  ClusterSpec spec = UniformLinkSpec({128, 128}, 1e-3, 1e9);
  CostModel model(g, spec, SegmentAssignment::Single(g));
  const ShardingRatios b = ShardingRatios::Uniform(1, 2);
  EnumerateOptions opts;
  opts.record_completions = true;
  opts.max_length = 6;
  EnumerateResult r = Enumerate(g, model, b, opts);
  int complete = 0;
  SearchSpace space(g, BuildSearchTheory(g, 2, {.fuse = false}), model, b);
  for (size_t i = 0; i < r.pool.size(); ++i) {
    if (!r.complete[i]) continue;
    ++complete;
    EXPECT_EQ(space.Ecost(r.pool[i]), 0.0);
  }
  EXPECT_GT(complete, 0);
}

TEST(ClusterSpec, ParseAndErrors) {
  const char* good = R"({"devices": [{"flops": 2e9}, {"flops": 1e9}],
    "collectives": {
      "all_reduce": {"latency_s": 1e-5, "bw_Bps": 1e9},
      "all_gather": {"latency_s": 0, "bw_Bps": 1e9},
      "reduce_scatter": {"latency_s": 1e-5, "bw_Bps": 1e9},
      "all_to_all": {"latency_s": 1e-5, "bw_Bps": 1e9},
      "grouped_broadcast": {"latency_s": 1e-4, "bw_Bps": 2e9}},
    "bytes_per_element": 2})";
  absl::StatusOr<ClusterSpec> spec = ParseClusterSpec(good);
  ASSERT_TRUE(spec.ok()) << spec.status();
  EXPECT_EQ(spec->num_devices(), 2);
  EXPECT_EQ(spec->bytes_per_element, 2);
  EXPECT_EQ(spec->link(CollectiveKind::kGroupedBroadcast).bw_Bps, 2e9);
  // Round trip.
  absl::StatusOr<ClusterSpec> again =
      ParseClusterSpec(ClusterSpecToJson(*spec).dump());
  ASSERT_TRUE(again.ok());
  EXPECT_EQ(again->flops, spec->flops);

  EXPECT_FALSE(ParseClusterSpec("[]").ok());
  EXPECT_FALSE(ParseClusterSpec(R"({"devices": []})").ok());
  EXPECT_FALSE(
      ParseClusterSpec(R"({"devices": [{"flops": 0}], "collectives": {}})")
          .ok());
  std::string unknown = good;
  unknown.insert(1, "\"gpus\": 3, ");
  absl::StatusOr<ClusterSpec> bad = ParseClusterSpec(unknown);
  ASSERT_FALSE(bad.ok());
  EXPECT_NE(bad.status().message().find("gpus"), absl::string_view::npos);
}

TEST(ShardingRatios, Validate) {
  EXPECT_TRUE(ShardingRatios::Uniform(2, 3).Validate(2, 3).ok());
  EXPECT_FALSE(ShardingRatios::Uniform(2, 3).Validate(1, 3).ok());
  EXPECT_FALSE((ShardingRatios{{{0.5, 0.6}}}).Validate(1, 2).ok());
  EXPECT_FALSE((ShardingRatios{{{1.5, -0.5}}}).Validate(1, 2).ok());
  const std::vector<double> flops = {3, 1};
  EXPECT_EQ(ShardingRatios::ProportionalTo(1, flops).rows[0],
            (std::vector<double>{0.75, 0.25}));
}

}  // namespace
}  // namespace spmdsynth
