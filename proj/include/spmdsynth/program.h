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

#ifndef SPMDSYNTH_PROGRAM_H_
#define SPMDSYNTH_PROGRAM_H_

#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "json.hpp"
#include "spmdsynth/graph.h"

namespace spmdsynth {

// How a distributed tensor relates to its reference tensor e:
//   Identity      every device holds e;
//   AllGather(d)  concatenating the device instances along d gives e;
//   AllReduce     the elementwise sum of the device instances is e.
struct Form {
  enum class Kind : uint8_t { kIdentity, kAllReduce, kAllGather };
  Kind kind = Kind::kIdentity;
  int dim = -1;

  static constexpr Form Identity() { return {Kind::kIdentity, -1}; }
  static constexpr Form AllReduce() { return {Kind::kAllReduce, -1}; }
  static constexpr Form AllGather(int d) { return {Kind::kAllGather, d}; }

  bool is_identity() const { return kind == Kind::kIdentity; }
  bool is_all_reduce() const { return kind == Kind::kAllReduce; }
  bool is_all_gather() const { return kind == Kind::kAllGather; }

  // Dense code: Identity 0, AllReduce 1, AllGather(d) 2+d.
  int code() const {
    return kind == Kind::kAllGather ? 2 + dim : static_cast<int>(kind);
  }
  static Form FromCode(int code) {
    if (code == 0) return Identity();
    if (code == 1) return AllReduce();
    return AllGather(code - 2);
  }

  std::string ToString() const;
  static absl::StatusOr<Form> Parse(absl::string_view text);

  friend bool operator==(const Form&, const Form&) = default;
  friend auto operator<=>(const Form& a, const Form& b) {
    return a.code() <=> b.code();
  }
};

// A distributed tensor is named by the property it was created to satisfy.
// `segment` is set only for tensors re-sharded into another segment's ratios.
struct DistTensorRef {
  int tensor = -1;
  Form form;
  int segment = -1;

  std::string Name(const Graph& graph) const;
  friend bool operator==(const DistTensorRef&, const DistTensorRef&) = default;
  friend auto operator<=>(const DistTensorRef&,
                          const DistTensorRef&) = default;
};

enum class InstrKind : uint8_t {
  // Computation.
  kPlaceholder,
  kPlaceholderShard,
  kParameter,
  kParameterShard,
  kMatMul,
  kUnary,
  kBinary,
  kReduce,
  kIdentity,
  // Device 0 keeps its replica, the others produce zeros: turns a replicated
  // tensor into partial sums.
  kSplitReplica,
  // Communication.
  kAllReduce,
  kAllGather,
  kReduceScatter,
  kAllToAll,
  kGroupedBroadcast,
  // Moves an AllGather(d) tensor onto another segment's sharding ratios.
  kRebalance,
};

absl::string_view InstrKindName(InstrKind kind);
bool IsCommunication(InstrKind kind);

struct Instruction {
  InstrKind kind = InstrKind::kIdentity;
  // Reference tensor produced (computation) or communicated.
  int tensor = -1;
  int dim = -1;
  int dim2 = -1;
  std::vector<DistTensorRef> operands;
  DistTensorRef output;

  bool is_communication() const { return IsCommunication(kind); }
  std::string ToString(const Graph& graph) const;

  friend bool operator==(const Instruction&, const Instruction&) = default;
  friend auto operator<=>(const Instruction&, const Instruction&) = default;
};

struct DistributedProgram {
  std::vector<Instruction> instrs;

  std::string ToString(const Graph& graph) const;
  // Stable across runs and platforms.
  uint64_t Fingerprint() const;

  friend bool operator==(const DistributedProgram&,
                         const DistributedProgram&) = default;
};

// Drops computation instructions whose output no later instruction reads and
// that do not produce `result`. Communication is always kept, so stage
// boundaries and the iteration time are unchanged when the dropped
// instructions cost nothing.
DistributedProgram RemoveDeadComputation(const DistributedProgram& program,
                                         const DistTensorRef& result);

nlohmann::json InstructionToJson(const Instruction& instr, const Graph& graph);
absl::StatusOr<Instruction> InstructionFromJson(const nlohmann::json& j,
                                                const Graph& graph);
nlohmann::json ProgramToJson(const DistributedProgram& program,
                             const Graph& graph);
absl::StatusOr<DistributedProgram> ProgramFromJson(const nlohmann::json& j,
                                                   const Graph& graph);

// Checks operand/output arity and axis ranges against the graph.
absl::Status ValidateInstruction(const Instruction& instr, const Graph& graph);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_PROGRAM_H_
