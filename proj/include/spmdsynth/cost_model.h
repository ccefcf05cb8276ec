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

#ifndef SPMDSYNTH_COST_MODEL_H_
#define SPMDSYNTH_COST_MODEL_H_

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "json.hpp"
#include "spmdsynth/graph.h"
#include "spmdsynth/program.h"

namespace spmdsynth {

enum class CollectiveKind {
  kAllReduce,
  kAllGather,
  kReduceScatter,
  kAllToAll,
  kGroupedBroadcast,
};
inline constexpr int kNumCollectiveKinds = 5;

absl::string_view CollectiveKey(CollectiveKind kind);

// Affine transfer model: seconds = latency_s + bytes / bw_Bps.
struct LinkModel {
  double latency_s = 0.0;
  double bw_Bps = 1.0;
};

struct ClusterSpec {
  std::vector<double> flops;  // per device, flops per second
  std::array<LinkModel, kNumCollectiveKinds> collectives;
  int64_t bytes_per_element = 4;

  int num_devices() const { return static_cast<int>(flops.size()); }
  const LinkModel& link(CollectiveKind kind) const {
    return collectives[static_cast<int>(kind)];
  }
  LinkModel& link(CollectiveKind kind) {
    return collectives[static_cast<int>(kind)];
  }
};

absl::StatusOr<ClusterSpec> ParseClusterSpec(absl::string_view text);
nlohmann::json ClusterSpecToJson(const ClusterSpec& spec);

// g x m row-stochastic matrix; row k holds the ratios of segment k.
struct ShardingRatios {
  std::vector<std::vector<double>> rows;

  int num_segments() const { return static_cast<int>(rows.size()); }
  const std::vector<double>& row(int k) const { return rows[k]; }

  static ShardingRatios Uniform(int segments, int devices);
  // Every row proportional to the device flops.
  static ShardingRatios ProportionalTo(int segments,
                                       std::span<const double> flops);
  absl::Status Validate(int segments, int devices) const;

  friend bool operator==(const ShardingRatios&,
                         const ShardingRatios&) = default;
};

// Instructions [begin, end) of a program. All but possibly the first stage
// start with a communication instruction.
struct Stage {
  size_t begin = 0;
  size_t end = 0;
  bool opens_with_communication = false;
};

std::vector<Stage> DecomposeStages(const DistributedProgram& program);

struct StageCost {
  double comm_s = 0.0;
  std::vector<double> comp_s;  // per device
};

struct CostBreakdown {
  std::vector<StageCost> stages;
  double total_s = 0.0;
};

// Per-stage cost as a function of the ratios:
//   comm = comm_intercept + comm_slope * max_{k in comm_segments, j} B[k][j]
//   comp_j = comp_intercept[j] + sum_k comp_slope[k][j] * B[k][j]
struct StageCoefficients {
  double comm_intercept = 0.0;
  double comm_slope = 0.0;
  std::vector<int> comm_segments;
  std::vector<std::vector<double>> comp_slope;  // [segment][device]
  std::vector<double> comp_intercept;           // [device]
};

// Running cost of a program prefix: closed stages, plus the communication
// and per-device computation of the stage still open.
struct CostAccumulator {
  double closed = 0.0;
  double open_comm = 0.0;
  std::vector<double> open_comp;

  double OpenCompMax() const;
  // Cost of the prefix as a complete program.
  double Full() const { return closed + (open_comm + OpenCompMax()); }

  friend bool operator==(const CostAccumulator&,
                         const CostAccumulator&) = default;
};

class CostModel {
 public:
  CostModel(const Graph& graph, const ClusterSpec& spec,
            SegmentAssignment assignment);

  const Graph& graph() const { return *graph_; }
  const ClusterSpec& spec() const { return *spec_; }
  const SegmentAssignment& assignment() const { return assignment_; }
  int num_devices() const { return spec_->num_devices(); }

  // Segment whose ratios shard `ref`.
  int SegmentOf(const DistTensorRef& ref) const;
  int64_t TensorBytes(int tensor) const;

  double CommTime(const Instruction& instr, const ShardingRatios& b) const;
  // Seconds device `device` spends on a computation instruction; zero for
  // communication.
  double InstructionCompTime(const Instruction& instr, int device,
                             const ShardingRatios& b) const;
  double StageCompTime(const DistributedProgram& program, const Stage& stage,
                       int device, const ShardingRatios& b) const;

  CostBreakdown IterationTime(const DistributedProgram& program,
                              const ShardingRatios& b) const;

  CostAccumulator EmptyAccumulator() const;
  void Append(const Instruction& instr, const ShardingRatios& b,
              CostAccumulator* acc) const;

  std::vector<StageCoefficients> Coefficients(
      const DistributedProgram& program) const;

 private:
  bool IsSharded(const Instruction& instr) const;

  const Graph* graph_;
  const ClusterSpec* spec_;
  SegmentAssignment assignment_;
  std::vector<int64_t> flops_;
};

double MaxOf(std::span<const double> row);

// Least-squares fit of seconds = latency + bytes / bw.
struct LinearFit {
  LinkModel link;
  double rms_residual_s = 0.0;
};
absl::StatusOr<LinearFit> FitLinear(
    std::span<const std::pair<double, double>> samples);
absl::StatusOr<std::vector<std::pair<double, double>>> ParseProfileSamples(
    absl::string_view text);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_COST_MODEL_H_
