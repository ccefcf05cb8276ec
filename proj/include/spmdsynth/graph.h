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

#ifndef SPMDSYNTH_GRAPH_H_
#define SPMDSYNTH_GRAPH_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"

namespace spmdsynth {

using Shape = std::vector<int64_t>;

int64_t NumElements(std::span<const int64_t> shape);
std::string ShapeToString(std::span<const int64_t> shape);

enum class TensorRole { kInput, kParameter, kActivation, kLoss };

enum class OpCode {
  kPlaceholder,
  kParameter,
  kMatMul,
  kUnary,
  kBinary,
  kReduce,
  kIdentity,
};

enum class UnaryFn { kRelu, kSigmoid, kTanh, kExp, kNeg, kSquare };
enum class BinaryFn { kAdd, kMul };

absl::string_view OpCodeName(OpCode op);
absl::string_view UnaryFnName(UnaryFn fn);
absl::string_view BinaryFnName(BinaryFn fn);
std::optional<UnaryFn> UnaryFnFromName(absl::string_view name);
std::optional<BinaryFn> BinaryFnFromName(absl::string_view name);

// One node of the single-device graph. Every node produces exactly one
// reference tensor, so node indices double as tensor indices.
struct Node {
  std::string id;
  OpCode op = OpCode::kIdentity;
  std::vector<int> inputs;
  Shape shape;
  TensorRole role = TensorRole::kActivation;

  UnaryFn unary_fn = UnaryFn::kRelu;
  BinaryFn binary_fn = BinaryFn::kAdd;
  // Sorted, unique axes summed away by kReduce.
  std::vector<int> reduce_dims;

  int rank() const { return static_cast<int>(shape.size()); }
};

// Validated, topologically ordered computation graph with a scalar loss.
// Immutable once built.
class Graph {
 public:
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int index) const { return nodes_[index]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int loss() const { return loss_; }
  std::optional<int> Find(absl::string_view id) const;
  // Largest tensor rank in the graph.
  int max_rank() const { return max_rank_; }

  // Consumers of each node, in topological order.
  const std::vector<int>& consumers(int index) const {
    return consumers_[index];
  }

 private:
  friend class GraphBuilder;
  std::vector<Node> nodes_;
  std::vector<std::vector<int>> consumers_;
  int loss_ = -1;
  int max_rank_ = 0;
};

// Incremental construction with shape inference. Errors are collected and
// reported by Build().
class GraphBuilder {
 public:
  GraphBuilder& Placeholder(std::string id, Shape shape);
  GraphBuilder& Parameter(std::string id, Shape shape);
  GraphBuilder& MatMul(std::string id, absl::string_view lhs,
                       absl::string_view rhs);
  GraphBuilder& Unary(std::string id, UnaryFn fn, absl::string_view input);
  GraphBuilder& Binary(std::string id, BinaryFn fn, absl::string_view lhs,
                       absl::string_view rhs);
  // Sums over `dims`; an empty list is not "all", use ReduceAll for that.
  GraphBuilder& Reduce(std::string id, absl::string_view input,
                       std::vector<int> dims);
  GraphBuilder& ReduceAll(std::string id, absl::string_view input);
  GraphBuilder& Identity(std::string id, absl::string_view input);

  // Adds a node whose shape is inferred from its inputs; `declared` (if set)
  // must agree with the inferred shape.
  GraphBuilder& Add(Node node, const std::optional<Shape>& declared);

  absl::StatusOr<Graph> Build(absl::string_view loss_id) &&;

  std::optional<int> IndexOf(absl::string_view id) const;
  // First construction error, empty if none.
  const std::string& error() const { return error_; }

 private:
  int Lookup(absl::string_view id, absl::string_view user);
  void Fail(std::string message);

  std::vector<Node> nodes_;
  std::string error_;
};

// Output shape for `node` given its input shapes.
absl::StatusOr<Shape> InferShape(const Node& node,
                                 std::span<const Shape> input_shapes);

// MatMul [b,h]x[h,f] -> 2bhf; elementwise and Reduce -> input element count;
// sources and Identity -> 0.
int64_t FlopsOf(OpCode op, std::span<const Shape> input_shapes);
int64_t FlopsOf(const Graph& graph, int node);

// Graph documents: {"nodes":[{"id","op","inputs","shape","attrs"}],"loss"}.
absl::StatusOr<Graph> ParseGraph(absl::string_view text);
std::string SerializeGraph(const Graph& graph);

// Partition of the tensors into `count` contiguous runs of the topological
// order. Segment indices are 0-based.
struct SegmentAssignment {
  int count = 1;
  std::vector<int> segment_of;

  static SegmentAssignment Single(const Graph& graph);
};

// Contiguous partition minimizing the largest per-segment flop total.
absl::StatusOr<SegmentAssignment> AssignSegments(const Graph& graph,
                                                 int count);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_GRAPH_H_
