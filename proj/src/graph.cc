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

#include "spmdsynth/graph.h"

#include <algorithm>
#include <numeric>
#include <set>
#include <utility>

#include "absl/container/flat_hash_map.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "json.hpp"

namespace spmdsynth {
namespace {

using json = nlohmann::json;

constexpr std::pair<OpCode, absl::string_view> kOpNames[] = {
    {OpCode::kPlaceholder, "Placeholder"},
    {OpCode::kParameter, "Parameter"},
    {OpCode::kMatMul, "MatMul"},
    {OpCode::kUnary, "ElemwiseUnary"},
    {OpCode::kBinary, "ElemwiseBinary"},
    {OpCode::kReduce, "Reduce"},
    {OpCode::kIdentity, "Identity"},
};

constexpr std::pair<UnaryFn, absl::string_view> kUnaryNames[] = {
    {UnaryFn::kRelu, "relu"}, {UnaryFn::kSigmoid, "sigmoid"},
    {UnaryFn::kTanh, "tanh"}, {UnaryFn::kExp, "exp"},
    {UnaryFn::kNeg, "neg"},   {UnaryFn::kSquare, "square"},
};

// Reduce-dims sentinel for "every axis of the input".
constexpr int kAllAxes = -1;

int ExpectedArity(OpCode op) {
  switch (op) {
    case OpCode::kPlaceholder:
    case OpCode::kParameter:
      return 0;
    case OpCode::kMatMul:
    case OpCode::kBinary:
      return 2;
    case OpCode::kUnary:
    case OpCode::kReduce:
    case OpCode::kIdentity:
      return 1;
  }
  return 0;
}

absl::Status CheckExtents(const Shape& shape, absl::string_view id) {
  for (int64_t extent : shape) {
    if (extent < 0) {
      return absl::InvalidArgumentError(absl::StrCat(
          "node '", id, "': dynamic shapes are not supported"));
    }
    if (extent == 0) {
      return absl::InvalidArgumentError(
          absl::StrCat("node '", id, "': extents must be positive"));
    }
  }
  return absl::OkStatus();
}

}  // namespace

int64_t NumElements(std::span<const int64_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), int64_t{1},
                         std::multiplies<>());
}

std::string ShapeToString(std::span<const int64_t> shape) {
  return absl::StrCat("[", absl::StrJoin(shape, ","), "]");
}

absl::string_view OpCodeName(OpCode op) {
  for (const auto& [code, name] : kOpNames) {
    if (code == op) return name;
  }
  return "?";
}

absl::string_view UnaryFnName(UnaryFn fn) {
  for (const auto& [code, name] : kUnaryNames) {
    if (code == fn) return name;
  }
  return "?";
}

absl::string_view BinaryFnName(BinaryFn fn) {
  return fn == BinaryFn::kAdd ? "Add" : "Mul";
}

std::optional<UnaryFn> UnaryFnFromName(absl::string_view name) {
  for (const auto& [code, n] : kUnaryNames) {
    if (n == name) return code;
  }
  return std::nullopt;
}

std::optional<BinaryFn> BinaryFnFromName(absl::string_view name) {
  if (name == "Add") return BinaryFn::kAdd;
  if (name == "Mul") return BinaryFn::kMul;
  return std::nullopt;
}

std::optional<int> Graph::Find(absl::string_view id) const {
  for (int i = 0; i < size(); ++i) {
    if (nodes_[i].id == id) return i;
  }
  return std::nullopt;
}

absl::StatusOr<Shape> InferShape(const Node& node,
                                 std::span<const Shape> input_shapes) {
  auto error = [&](auto&&... parts) {
    return absl::InvalidArgumentError(
        absl::StrCat("node '", node.id, "': ", parts...));
  };
  if (static_cast<int>(input_shapes.size()) != ExpectedArity(node.op)) {
    return error(OpCodeName(node.op), " expects ", ExpectedArity(node.op),
                 " inputs, got ", input_shapes.size());
  }
  switch (node.op) {
    case OpCode::kPlaceholder:
    case OpCode::kParameter:
      return node.shape;
    case OpCode::kMatMul: {
      const Shape& lhs = input_shapes[0];
      const Shape& rhs = input_shapes[1];
      if (lhs.size() != 2 || rhs.size() != 2) {
        return error("MatMul operands must be rank 2, got ",
                     ShapeToString(lhs), " x ", ShapeToString(rhs));
      }
      if (lhs[1] != rhs[0]) {
        return error("shape mismatch: MatMul ", ShapeToString(lhs), " x ",
                     ShapeToString(rhs));
      }
      return Shape{lhs[0], rhs[1]};
    }
    case OpCode::kBinary:
      if (input_shapes[0] != input_shapes[1]) {
        return error("shape mismatch: ", BinaryFnName(node.binary_fn), " ",
                     ShapeToString(input_shapes[0]), " vs ",
                     ShapeToString(input_shapes[1]));
      }
      return input_shapes[0];
    case OpCode::kUnary:
    case OpCode::kIdentity:
      return input_shapes[0];
    case OpCode::kReduce: {
      const Shape& in = input_shapes[0];
      std::set<int> dims;
      for (int d : node.reduce_dims) {
        if (d < 0 || d >= static_cast<int>(in.size())) {
          return error("Reduce axis ", d, " out of range for ",
                       ShapeToString(in));
        }
        if (!dims.insert(d).second) return error("duplicate Reduce axis ", d);
      }
      Shape out;
      for (int d = 0; d < static_cast<int>(in.size()); ++d) {
        if (!dims.contains(d)) out.push_back(in[d]);
      }
      return out;
    }
  }
  return error("unknown op");
}

int64_t FlopsOf(OpCode op, std::span<const Shape> input_shapes) {
  switch (op) {
    case OpCode::kPlaceholder:
    case OpCode::kParameter:
    case OpCode::kIdentity:
      return 0;
    case OpCode::kMatMul:
      return 2 * input_shapes[0][0] * input_shapes[0][1] * input_shapes[1][1];
    case OpCode::kUnary:
    case OpCode::kBinary:
    case OpCode::kReduce:
      return NumElements(input_shapes[0]);
  }
  return 0;
}

int64_t FlopsOf(const Graph& graph, int node) {
  const Node& n = graph.node(node);
  std::vector<Shape> shapes;
  shapes.reserve(n.inputs.size());
  for (int in : n.inputs) shapes.push_back(graph.node(in).shape);
  return FlopsOf(n.op, shapes);
}

// ---------------------------------------------------------------------------
// GraphBuilder

void GraphBuilder::Fail(std::string message) {
  if (error_.empty()) error_ = std::move(message);
}

std::optional<int> GraphBuilder::IndexOf(absl::string_view id) const {
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    if (nodes_[i].id == id) return i;
  }
  return std::nullopt;
}

int GraphBuilder::Lookup(absl::string_view id, absl::string_view user) {
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    if (nodes_[i].id == id) return i;
  }
  Fail(absl::StrCat("node '", user, "': input '", id,
                    "' is not defined by an earlier node"));
  return -1;
}

GraphBuilder& GraphBuilder::Add(Node node, const std::optional<Shape>& declared) {
  if (!error_.empty()) return *this;
  if (node.id.empty()) {
    Fail("node id must be non-empty");
    return *this;
  }
  for (const Node& existing : nodes_) {
    if (existing.id == node.id) {
      Fail(absl::StrCat("duplicate id '", node.id, "'"));
      return *this;
    }
  }
  std::vector<Shape> input_shapes;
  for (int in : node.inputs) {
    if (in < 0 || in >= static_cast<int>(nodes_.size())) {
      Fail(absl::StrCat("node '", node.id, "': bad input index"));
      return *this;
    }
    input_shapes.push_back(nodes_[in].shape);
  }
  if (node.op == OpCode::kReduce && node.reduce_dims == std::vector<int>{kAllAxes} &&
      input_shapes.size() == 1) {
    node.reduce_dims.resize(input_shapes[0].size());
    std::iota(node.reduce_dims.begin(), node.reduce_dims.end(), 0);
  }
  if (node.op == OpCode::kPlaceholder || node.op == OpCode::kParameter) {
    if (!declared.has_value()) {
      Fail(absl::StrCat("node '", node.id, "': ", OpCodeName(node.op),
                        " requires a shape"));
      return *this;
    }
    node.shape = *declared;
  }
  if (absl::Status s = CheckExtents(node.shape, node.id); !s.ok()) {
    Fail(std::string(s.message()));
    return *this;
  }
  absl::StatusOr<Shape> shape = InferShape(node, input_shapes);
  if (!shape.ok()) {
    Fail(std::string(shape.status().message()));
    return *this;
  }
  if (declared.has_value() && *declared != *shape) {
    if (absl::Status s = CheckExtents(*declared, node.id); !s.ok()) {
      Fail(std::string(s.message()));
      return *this;
    }
    Fail(absl::StrCat("node '", node.id, "': shape mismatch, declared ",
                      ShapeToString(*declared), " but inferred ",
                      ShapeToString(*shape)));
    return *this;
  }
  node.shape = *std::move(shape);
  node.role = node.op == OpCode::kPlaceholder ? TensorRole::kInput
              : node.op == OpCode::kParameter ? TensorRole::kParameter
                                              : TensorRole::kActivation;
  nodes_.push_back(std::move(node));
  return *this;
}

GraphBuilder& GraphBuilder::Placeholder(std::string id, Shape shape) {
  Node n;
  n.id = std::move(id);
  n.op = OpCode::kPlaceholder;
  return Add(std::move(n), std::move(shape));
}

GraphBuilder& GraphBuilder::Parameter(std::string id, Shape shape) {
  Node n;
  n.id = std::move(id);
  n.op = OpCode::kParameter;
  return Add(std::move(n), std::move(shape));
}

GraphBuilder& GraphBuilder::MatMul(std::string id, absl::string_view lhs,
                                   absl::string_view rhs) {
  Node n;
  n.id = std::move(id);
  n.op = OpCode::kMatMul;
  n.inputs = {Lookup(lhs, n.id), Lookup(rhs, n.id)};
  return Add(std::move(n), std::nullopt);
}

GraphBuilder& GraphBuilder::Unary(std::string id, UnaryFn fn,
                                  absl::string_view input) {
  Node n;
  n.id = std::move(id);
  n.op = OpCode::kUnary;
  n.unary_fn = fn;
  n.inputs = {Lookup(input, n.id)};
  return Add(std::move(n), std::nullopt);
}

GraphBuilder& GraphBuilder::Binary(std::string id, BinaryFn fn,
                                   absl::string_view lhs, absl::string_view rhs) {
  Node n;
  n.id = std::move(id);
  n.op = OpCode::kBinary;
  n.binary_fn = fn;
  n.inputs = {Lookup(lhs, n.id), Lookup(rhs, n.id)};
  return Add(std::move(n), std::nullopt);
}

GraphBuilder& GraphBuilder::Reduce(std::string id, absl::string_view input,
                                   std::vector<int> dims) {
  Node n;
  n.id = std::move(id);
  n.op = OpCode::kReduce;
  n.inputs = {Lookup(input, n.id)};
  std::sort(dims.begin(), dims.end());
  n.reduce_dims = std::move(dims);
  return Add(std::move(n), std::nullopt);
}

GraphBuilder& GraphBuilder::ReduceAll(std::string id, absl::string_view input) {
  return Reduce(std::move(id), input, {kAllAxes});
}

GraphBuilder& GraphBuilder::Identity(std::string id, absl::string_view input) {
  Node n;
  n.id = std::move(id);
  n.op = OpCode::kIdentity;
  n.inputs = {Lookup(input, n.id)};
  return Add(std::move(n), std::nullopt);
}

absl::StatusOr<Graph> GraphBuilder::Build(absl::string_view loss_id) && {
  if (!error_.empty()) return absl::InvalidArgumentError(error_);
  Graph g;
  g.nodes_ = std::move(nodes_);
  auto loss = g.Find(loss_id);
  if (!loss.has_value()) {
    return absl::InvalidArgumentError(
        absl::StrCat("missing loss output '", loss_id, "'"));
  }
  if (!g.nodes_[*loss].shape.empty()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "loss must be scalar, '", loss_id, "' has shape ",
        ShapeToString(g.nodes_[*loss].shape)));
  }
  g.loss_ = *loss;
  g.nodes_[*loss].role = TensorRole::kLoss;
  g.consumers_.assign(g.nodes_.size(), {});
  for (int i = 0; i < g.size(); ++i) {
    g.max_rank_ = std::max(g.max_rank_, g.nodes_[i].rank());
    for (int in : g.nodes_[i].inputs) {
      auto& c = g.consumers_[in];
      if (c.empty() || c.back() != i) c.push_back(i);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// JSON format

namespace {

absl::Status RejectUnknown(const json& object, std::set<std::string> allowed,
                           absl::string_view where) {
  for (const auto& [key, value] : object.items()) {
    if (!allowed.contains(key)) {
      return absl::InvalidArgumentError(
          absl::StrCat(where, ": unknown field '", key, "'"));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<Shape> ReadShape(const json& value, absl::string_view id) {
  if (!value.is_array()) {
    return absl::InvalidArgumentError(
        absl::StrCat("node '", id, "': shape must be an array"));
  }
  Shape shape;
  for (const json& e : value) {
    if (!e.is_number_integer()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "node '", id, "': dynamic shapes are not supported (extent ",
          e.dump(), ")"));
    }
    shape.push_back(e.get<int64_t>());
  }
  if (absl::Status s = CheckExtents(shape, id); !s.ok()) return s;
  return shape;
}

absl::StatusOr<Graph> ParseGraphJson(const json& doc) {
  if (!doc.is_object()) {
    return absl::InvalidArgumentError("graph document must be an object");
  }
  if (absl::Status s = RejectUnknown(doc, {"nodes", "loss"}, "graph"); !s.ok())
    return s;
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) {
    return absl::InvalidArgumentError("graph: 'nodes' array is required");
  }
  if (!doc.contains("loss") || !doc["loss"].is_string()) {
    return absl::InvalidArgumentError("missing loss output");
  }
  GraphBuilder builder;
  int position = 0;
  for (const json& jn : doc["nodes"]) {
    std::string where = absl::StrCat("nodes[", position++, "]");
    if (!jn.is_object()) {
      return absl::InvalidArgumentError(absl::StrCat(where, ": not an object"));
    }
    if (absl::Status s = RejectUnknown(
            jn, {"id", "op", "inputs", "shape", "attrs"}, where);
        !s.ok())
      return s;
    if (!jn.contains("id") || !jn["id"].is_string() || !jn.contains("op") ||
        !jn["op"].is_string()) {
      return absl::InvalidArgumentError(
          absl::StrCat(where, ": 'id' and 'op' strings are required"));
    }
    Node node;
    node.id = jn["id"].get<std::string>();
    std::string op = jn["op"].get<std::string>();
    bool known = false;
    for (const auto& [code, name] : kOpNames) {
      if (name == op) {
        node.op = code;
        known = true;
      }
    }
    if (!known) {
      return absl::InvalidArgumentError(
          absl::StrCat(where, ": unknown op '", op, "'"));
    }
    std::vector<std::string> input_ids;
    if (jn.contains("inputs")) {
      if (!jn["inputs"].is_array()) {
        return absl::InvalidArgumentError(
            absl::StrCat(where, ": 'inputs' must be an array"));
      }
      for (const json& in : jn["inputs"]) {
        if (!in.is_string()) {
          return absl::InvalidArgumentError(
              absl::StrCat(where, ": input ids must be strings"));
        }
        input_ids.push_back(in.get<std::string>());
      }
    }
    std::optional<Shape> declared;
    if (jn.contains("shape")) {
      absl::StatusOr<Shape> shape = ReadShape(jn["shape"], node.id);
      if (!shape.ok()) return shape.status();
      declared = *std::move(shape);
    }
    json attrs = jn.value("attrs", json::object());
    if (!attrs.is_object()) {
      return absl::InvalidArgumentError(
          absl::StrCat(where, ": 'attrs' must be an object"));
    }
    switch (node.op) {
      case OpCode::kUnary: {
        if (absl::Status s = RejectUnknown(attrs, {"fn"}, where); !s.ok())
          return s;
        auto fn = attrs.contains("fn") && attrs["fn"].is_string()
                      ? UnaryFnFromName(attrs["fn"].get<std::string>())
                      : std::nullopt;
        if (!fn) {
          return absl::InvalidArgumentError(
              absl::StrCat(where, ": ElemwiseUnary needs attrs.fn"));
        }
        node.unary_fn = *fn;
        break;
      }
      case OpCode::kBinary: {
        if (absl::Status s = RejectUnknown(attrs, {"fn"}, where); !s.ok())
          return s;
        auto fn = attrs.contains("fn") && attrs["fn"].is_string()
                      ? BinaryFnFromName(attrs["fn"].get<std::string>())
                      : std::nullopt;
        if (!fn) {
          return absl::InvalidArgumentError(absl::StrCat(
              where, ": ElemwiseBinary needs attrs.fn in {Add, Mul}"));
        }
        node.binary_fn = *fn;
        break;
      }
      case OpCode::kReduce: {
        if (absl::Status s = RejectUnknown(attrs, {"dims"}, where); !s.ok())
          return s;
        const json dims = attrs.value("dims", json("all"));
        if (dims.is_string() && dims.get<std::string>() == "all") {
          node.reduce_dims = {kAllAxes};
        } else if (dims.is_array()) {
          for (const json& d : dims) {
            if (!d.is_number_integer()) {
              return absl::InvalidArgumentError(
                  absl::StrCat(where, ": Reduce dims must be integers"));
            }
            node.reduce_dims.push_back(d.get<int>());
          }
        } else {
          return absl::InvalidArgumentError(
              absl::StrCat(where, ": Reduce dims must be a list or \"all\""));
        }
        break;
      }
      default:
        if (!attrs.empty()) {
          return absl::InvalidArgumentError(absl::StrCat(
              where, ": ", op, " takes no attrs"));
        }
    }
    for (const std::string& in : input_ids) {
      std::optional<int> idx = builder.IndexOf(in);
      if (!idx) {
        return absl::InvalidArgumentError(absl::StrCat(
            where, ": input '", in, "' is not defined by an earlier node"));
      }
      node.inputs.push_back(*idx);
    }
    builder.Add(std::move(node), declared);
    if (!builder.error().empty()) {
      return absl::InvalidArgumentError(builder.error());
    }
  }
  return std::move(builder).Build(doc["loss"].get<std::string>());
}

}  // namespace

absl::StatusOr<Graph> ParseGraph(absl::string_view text) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) {
    try {
      json unused = json::parse(text);
      (void)unused;
    } catch (const json::parse_error& e) {
      return absl::InvalidArgumentError(
          absl::StrCat("syntax error at byte ", e.byte, ": ", e.what()));
    }
    return absl::InvalidArgumentError("syntax error");
  }
  return ParseGraphJson(doc);
}

std::string SerializeGraph(const Graph& graph) {
  json nodes = json::array();
  for (const Node& n : graph.nodes()) {
    json jn;
    jn["id"] = n.id;
    jn["op"] = std::string(OpCodeName(n.op));
    json inputs = json::array();
    for (int in : n.inputs) inputs.push_back(graph.node(in).id);
    jn["inputs"] = inputs;
    jn["shape"] = n.shape;
    json attrs = json::object();
    if (n.op == OpCode::kUnary) attrs["fn"] = std::string(UnaryFnName(n.unary_fn));
    if (n.op == OpCode::kBinary) {
      attrs["fn"] = std::string(BinaryFnName(n.binary_fn));
    }
    if (n.op == OpCode::kReduce) attrs["dims"] = n.reduce_dims;
    jn["attrs"] = attrs;
    nodes.push_back(std::move(jn));
  }
  json doc;
  doc["nodes"] = std::move(nodes);
  doc["loss"] = graph.node(graph.loss()).id;
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Segments

SegmentAssignment SegmentAssignment::Single(const Graph& graph) {
  return SegmentAssignment{1, std::vector<int>(graph.size(), 0)};
}

namespace {

// Greedy left-to-right cut with per-segment cap `cap`, forcing singleton
// segments at the tail so exactly `count` segments come out. Returns nullopt
// if the cap cannot be met with `count` segments.
std::optional<std::vector<int>> GreedyCut(std::span<const int64_t> flops,
                                          int count, int64_t cap) {
  const int n = static_cast<int>(flops.size());
  std::vector<int> segment_of(n);
  int segment = 0;
  int64_t load = 0;
  for (int i = 0; i < n; ++i) {
    if (i > 0) {
      // Once the remaining tensors exactly fill the remaining segments, each
      // gets its own segment.
      bool forced = n - i == count - 1 - segment;
      if (forced || load + flops[i] > cap) {
        ++segment;
        load = 0;
      }
    }
    if (segment >= count || flops[i] > cap) return std::nullopt;
    load += flops[i];
    segment_of[i] = segment;
  }
  if (segment != count - 1) return std::nullopt;
  return segment_of;
}

}  // namespace

absl::StatusOr<SegmentAssignment> AssignSegments(const Graph& graph,
                                                 int count) {
  if (count <= 0) {
    return absl::InvalidArgumentError("segment count must be positive");
  }
  if (count > graph.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "segment count ", count, " exceeds tensor count ", graph.size()));
  }
  std::vector<int64_t> flops(graph.size());
  for (int i = 0; i < graph.size(); ++i) flops[i] = FlopsOf(graph, i);
  int64_t lo = *std::max_element(flops.begin(), flops.end());
  int64_t hi = std::accumulate(flops.begin(), flops.end(), int64_t{0});
  // Smallest feasible cap; feasibility is monotone in the cap.
  while (lo < hi) {
    int64_t mid = lo + (hi - lo) / 2;
    if (GreedyCut(flops, count, mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  std::optional<std::vector<int>> cut = GreedyCut(flops, count, lo);
  if (!cut) return absl::InternalError("segment partition failed");
  return SegmentAssignment{count, *std::move(cut)};
}

}  // namespace spmdsynth
