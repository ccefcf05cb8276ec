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

#include "spmdsynth/interpreter.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "absl/strings/str_cat.h"
#include "spmdsynth/load_balancer.h"

namespace spmdsynth {
namespace {

using json = nlohmann::json;

int64_t Prod(const Shape& shape, int begin, int end) {
  int64_t n = 1;
  for (int i = begin; i < end; ++i) n *= shape[i];
  return n;
}

absl::Status ShapeError(absl::string_view what, const Shape& a,
                        const Shape& b) {
  return absl::InvalidArgumentError(absl::StrCat(
      what, ": shape mismatch ", ShapeToString(a), " vs ", ShapeToString(b)));
}

absl::StatusOr<Tensor> ConcatChecked(const std::vector<Tensor>& parts,
                                     int axis) {
  const Shape& first = parts[0].shape;
  if (axis < 0 || axis >= static_cast<int>(first.size())) {
    return absl::InvalidArgumentError("concat axis out of range");
  }
  for (const Tensor& p : parts) {
    if (p.shape.size() != first.size()) return ShapeError("concat", p.shape, first);
    for (size_t i = 0; i < first.size(); ++i) {
      if (static_cast<int>(i) != axis && p.shape[i] != first[i]) {
        return ShapeError("concat", p.shape, first);
      }
    }
  }
  return Concat(parts, axis);
}

absl::StatusOr<Tensor> Sum(const DistTensor& parts) {
  Tensor out = parts[0];
  for (size_t j = 1; j < parts.size(); ++j) {
    absl::StatusOr<Tensor> s = Elementwise(BinaryFn::kAdd, out, parts[j]);
    if (!s.ok()) return s.status();
    out = *std::move(s);
  }
  return out;
}

bool Close(double a, double b, double tol) {
  if (tol == 0.0) return a == b;
  return std::abs(a - b) <= tol * std::max(std::abs(b), 1.0);
}

absl::Status Compare(const Tensor& got, const Tensor& want, double tol,
                     absl::string_view what) {
  if (got.shape != want.shape) return ShapeError(what, got.shape, want.shape);
  for (size_t i = 0; i < got.data.size(); ++i) {
    if (!Close(got.data[i], want.data[i], tol)) {
      return absl::InternalError(absl::StrCat(what, ": element ", i, " is ",
                                              got.data[i], ", expected ",
                                              want.data[i]));
    }
  }
  return absl::OkStatus();
}

bool IntegerValued(const Tensor& t) {
  return std::all_of(t.data.begin(), t.data.end(),
                     [](double v) { return v == std::round(v); });
}

}  // namespace

Tensor Tensor::Zeros(Shape shape) {
  Tensor t;
  t.data.assign(NumElements(shape), 0.0);
  t.shape = std::move(shape);
  return t;
}

Tensor Slice(const Tensor& t, int axis, int64_t begin, int64_t end) {
  const int rank = static_cast<int>(t.shape.size());
  const int64_t outer = Prod(t.shape, 0, axis);
  const int64_t inner = Prod(t.shape, axis + 1, rank);
  const int64_t extent = t.shape[axis];
  Shape shape = t.shape;
  shape[axis] = end - begin;
  Tensor out = Tensor::Zeros(shape);
  int64_t k = 0;
  for (int64_t o = 0; o < outer; ++o) {
    const double* src = t.data.data() + (o * extent + begin) * inner;
    for (int64_t i = 0; i < (end - begin) * inner; ++i) out.data[k++] = src[i];
  }
  return out;
}

Tensor Concat(const std::vector<Tensor>& parts, int axis) {
  Shape shape = parts[0].shape;
  const int rank = static_cast<int>(shape.size());
  shape[axis] = 0;
  for (const Tensor& p : parts) shape[axis] += p.shape[axis];
  const int64_t outer = Prod(shape, 0, axis);
  const int64_t inner = Prod(shape, axis + 1, rank);
  Tensor out = Tensor::Zeros(shape);
  int64_t k = 0;
  for (int64_t o = 0; o < outer; ++o) {
    for (const Tensor& p : parts) {
      const int64_t block = p.shape[axis] * inner;
      const double* src = p.data.data() + o * block;
      for (int64_t i = 0; i < block; ++i) out.data[k++] = src[i];
    }
  }
  return out;
}

absl::StatusOr<Tensor> MatMul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
    return ShapeError("MatMul", a.shape, b.shape);
  }
  const int64_t n = a.shape[0], k = a.shape[1], f = b.shape[1];
  Tensor out = Tensor::Zeros({n, f});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t x = 0; x < k; ++x) {
      const double av = a.data[i * k + x];
      for (int64_t y = 0; y < f; ++y) out.data[i * f + y] += av * b.data[x * f + y];
    }
  }
  return out;
}

absl::StatusOr<Tensor> Elementwise(BinaryFn fn, const Tensor& a,
                                   const Tensor& b) {
  if (a.shape != b.shape) return ShapeError(BinaryFnName(fn), a.shape, b.shape);
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = fn == BinaryFn::kAdd ? a.data[i] + b.data[i]
                                       : a.data[i] * b.data[i];
  }
  return out;
}

Tensor Apply(UnaryFn fn, const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data) {
    switch (fn) {
      case UnaryFn::kRelu:
        v = v > 0 ? v : 0.0;
        break;
      case UnaryFn::kSigmoid:
        v = 1.0 / (1.0 + std::exp(-v));
        break;
      case UnaryFn::kTanh:
        v = std::tanh(v);
        break;
      case UnaryFn::kExp:
        v = std::exp(v);
        break;
      case UnaryFn::kNeg:
        v = -v;
        break;
      case UnaryFn::kSquare:
        v = v * v;
        break;
    }
  }
  return out;
}

Tensor ReduceSum(const Tensor& t, const std::vector<int>& dims) {
  const int rank = static_cast<int>(t.shape.size());
  std::vector<bool> reduced(rank, false);
  for (int d : dims) reduced[d] = true;
  Shape out_shape;
  for (int i = 0; i < rank; ++i) {
    if (!reduced[i]) out_shape.push_back(t.shape[i]);
  }
  Tensor out = Tensor::Zeros(out_shape);
  std::vector<int64_t> index(rank, 0);
  for (int64_t flat = 0; flat < t.size(); ++flat) {
    int64_t o = 0;
    for (int i = 0; i < rank; ++i) {
      if (!reduced[i]) o = o * t.shape[i] + index[i];
    }
    out.data[o] += t.data[flat];
    for (int i = rank - 1; i >= 0; --i) {
      if (++index[i] < t.shape[i]) break;
      index[i] = 0;
    }
  }
  return out;
}

Inputs RandomInputs(const Graph& graph, uint64_t seed, bool integer_valued) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> real(-1.0, 1.0);
  std::uniform_int_distribution<int> integer(-3, 3);
  Inputs inputs;
  for (int i = 0; i < graph.size(); ++i) {
    const Node& n = graph.node(i);
    if (n.op != OpCode::kPlaceholder && n.op != OpCode::kParameter) continue;
    Tensor t = Tensor::Zeros(n.shape);
    for (double& v : t.data) v = integer_valued ? integer(rng) : real(rng);
    inputs[i] = std::move(t);
  }
  return inputs;
}

absl::StatusOr<Inputs> ParseInputs(const Graph& graph, const json& j) {
  if (!j.is_object()) {
    return absl::InvalidArgumentError("inputs: expected an object");
  }
  Inputs inputs;
  for (const auto& [id, value] : j.items()) {
    std::optional<int> node = graph.Find(id);
    if (!node) {
      return absl::InvalidArgumentError(absl::StrCat("inputs: unknown '", id, "'"));
    }
    Tensor t;
    t.shape = graph.node(*node).shape;
    // Depth-first flattening preserves row-major order.
    std::function<absl::Status(const json&)> flatten =
        [&](const json& v) -> absl::Status {
      if (v.is_number()) {
        t.data.push_back(v.get<double>());
        return absl::OkStatus();
      }
      if (!v.is_array()) {
        return absl::InvalidArgumentError("inputs: values must be numbers");
      }
      for (const json& e : v) {
        if (absl::Status s = flatten(e); !s.ok()) return s;
      }
      return absl::OkStatus();
    };
    if (absl::Status s = flatten(value); !s.ok()) return s;
    if (t.size() != NumElements(t.shape)) {
      return absl::InvalidArgumentError(
          absl::StrCat("inputs: '", id, "' has ", t.size(), " elements"));
    }
    inputs[*node] = std::move(t);
  }
  return inputs;
}

absl::StatusOr<std::vector<Tensor>> RunSingleAll(const Graph& graph,
                                                 const Inputs& inputs) {
  std::vector<Tensor> values(graph.size());
  for (int i = 0; i < graph.size(); ++i) {
    const Node& n = graph.node(i);
    auto in = [&](int k) -> const Tensor& { return values[n.inputs[k]]; };
    switch (n.op) {
      case OpCode::kPlaceholder:
      case OpCode::kParameter: {
        auto it = inputs.find(i);
        if (it == inputs.end() || it->second.shape != n.shape) {
          return absl::InvalidArgumentError(
              absl::StrCat("missing or misshaped input '", n.id, "'"));
        }
        values[i] = it->second;
        break;
      }
      case OpCode::kMatMul: {
        absl::StatusOr<Tensor> v = MatMul(in(0), in(1));
        if (!v.ok()) return v.status();
        values[i] = *std::move(v);
        break;
      }
      case OpCode::kUnary:
        values[i] = Apply(n.unary_fn, in(0));
        break;
      case OpCode::kBinary: {
        absl::StatusOr<Tensor> v = Elementwise(n.binary_fn, in(0), in(1));
        if (!v.ok()) return v.status();
        values[i] = *std::move(v);
        break;
      }
      case OpCode::kReduce:
        values[i] = ReduceSum(in(0), n.reduce_dims);
        break;
      case OpCode::kIdentity:
        values[i] = in(0);
        break;
    }
  }
  return values;
}

absl::StatusOr<Tensor> RunSingle(const Graph& graph, const Inputs& inputs) {
  absl::StatusOr<std::vector<Tensor>> all = RunSingleAll(graph, inputs);
  if (!all.ok()) return all.status();
  return std::move((*all)[graph.loss()]);
}

Interpreter::Interpreter(const Graph& graph, const ShardingRatios& ratios,
                         const SegmentAssignment& assignment,
                         const Inputs& inputs)
    : graph_(graph),
      ratios_(ratios),
      assignment_(assignment),
      inputs_(inputs),
      devices_(static_cast<int>(ratios.rows[0].size())) {}

std::vector<int64_t> Interpreter::ShardSizes(const DistTensorRef& ref) const {
  const int seg =
      ref.segment >= 0 ? ref.segment : assignment_.segment_of[ref.tensor];
  return RoundShards(graph_.node(ref.tensor).shape[ref.form.dim],
                     ratios_.row(seg));
}

void Interpreter::Bind(const DistTensorRef& ref, DistTensor value) {
  env_[ref] = std::move(value);
}

const DistTensor* Interpreter::Find(const DistTensorRef& ref) const {
  auto it = env_.find(ref);
  return it == env_.end() ? nullptr : &it->second;
}

DistTensor Interpreter::Distribute(const Tensor& reference,
                                   const DistTensorRef& ref,
                                   uint64_t seed) const {
  DistTensor out;
  switch (ref.form.kind) {
    case Form::Kind::kIdentity:
      out.assign(devices_, reference);
      break;
    case Form::Kind::kAllGather: {
      int64_t offset = 0;
      for (int64_t size : ShardSizes(ref)) {
        out.push_back(Slice(reference, ref.form.dim, offset, offset + size));
        offset += size;
      }
      break;
    }
    case Form::Kind::kAllReduce: {
      std::mt19937_64 rng(seed);
      std::uniform_int_distribution<int> integer(-3, 3);
      Tensor rest = reference;
      for (int j = 0; j + 1 < devices_; ++j) {
        Tensor part = Tensor::Zeros(reference.shape);
        for (size_t i = 0; i < part.data.size(); ++i) {
          part.data[i] = integer(rng);
          rest.data[i] -= part.data[i];
        }
        out.push_back(std::move(part));
      }
      out.push_back(std::move(rest));
      break;
    }
  }
  return out;
}

absl::Status Interpreter::CheckForm(const Tensor& reference,
                                    const DistTensorRef& ref,
                                    const DistTensor& value,
                                    double tol) const {
  const std::string what = ref.Name(graph_);
  if (static_cast<int>(value.size()) != devices_) {
    return absl::InternalError(absl::StrCat(what, ": wrong device count"));
  }
  switch (ref.form.kind) {
    case Form::Kind::kIdentity:
      for (const Tensor& t : value) {
        if (absl::Status s = Compare(t, reference, tol, what); !s.ok()) {
          return s;
        }
      }
      return absl::OkStatus();
    case Form::Kind::kAllGather: {
      std::vector<int64_t> sizes = ShardSizes(ref);
      for (int j = 0; j < devices_; ++j) {
        if (value[j].shape.size() != reference.shape.size() ||
            value[j].shape[ref.form.dim] != sizes[j]) {
          return absl::InternalError(
              absl::StrCat(what, ": shard ", j, " has the wrong extent"));
        }
      }
      absl::StatusOr<Tensor> whole = ConcatChecked(value, ref.form.dim);
      if (!whole.ok()) return whole.status();
      return Compare(*whole, reference, tol, what);
    }
    case Form::Kind::kAllReduce: {
      absl::StatusOr<Tensor> sum = Sum(value);
      if (!sum.ok()) return sum.status();
      return Compare(*sum, reference, tol, what);
    }
  }
  return absl::OkStatus();
}

absl::Status Interpreter::Execute(const Instruction& instr) {
  const Node& node = graph_.node(instr.tensor);
  std::vector<const DistTensor*> args;
  for (const DistTensorRef& op : instr.operands) {
    const DistTensor* v = Find(op);
    if (v == nullptr) {
      return absl::FailedPreconditionError(
          absl::StrCat(instr.ToString(graph_), ": '", op.Name(graph_),
                       "' is not defined"));
    }
    args.push_back(v);
  }
  auto fail = [&](const absl::Status& s) {
    return absl::Status(s.code(),
                        absl::StrCat(instr.ToString(graph_), ": ", s.message()));
  };
  auto slice_by = [&](const Tensor& whole, const DistTensorRef& ref, int axis) {
    DistTensor out;
    std::vector<int64_t> sizes = ShardSizes(ref);
    int64_t offset = 0;
    for (int64_t size : sizes) {
      out.push_back(Slice(whole, axis, offset, offset + size));
      offset += size;
    }
    return out;
  };
  DistTensor result;
  switch (instr.kind) {
    case InstrKind::kPlaceholder:
    case InstrKind::kParameter:
    case InstrKind::kPlaceholderShard:
    case InstrKind::kParameterShard: {
      auto it = inputs_.find(instr.tensor);
      if (it == inputs_.end()) {
        return fail(absl::FailedPreconditionError("input not bound"));
      }
      if (instr.kind == InstrKind::kPlaceholder ||
          instr.kind == InstrKind::kParameter) {
        result.assign(devices_, it->second);
      } else {
        if (instr.dim < 0 || instr.dim >= node.rank()) {
          return fail(absl::InvalidArgumentError("axis out of range"));
        }
        result = slice_by(it->second, instr.output, instr.dim);
      }
      break;
    }
    case InstrKind::kMatMul:
    case InstrKind::kBinary:
      for (int j = 0; j < devices_; ++j) {
        absl::StatusOr<Tensor> v =
            instr.kind == InstrKind::kMatMul
                ? MatMul((*args[0])[j], (*args[1])[j])
                : Elementwise(node.binary_fn, (*args[0])[j], (*args[1])[j]);
        if (!v.ok()) return fail(v.status());
        result.push_back(*std::move(v));
      }
      break;
    case InstrKind::kUnary:
      for (int j = 0; j < devices_; ++j) {
        result.push_back(Apply(node.unary_fn, (*args[0])[j]));
      }
      break;
    case InstrKind::kReduce:
      for (int j = 0; j < devices_; ++j) {
        const Tensor& in = (*args[0])[j];
        for (int d : node.reduce_dims) {
          if (d >= static_cast<int>(in.shape.size())) {
            return fail(absl::InvalidArgumentError("reduce axis out of range"));
          }
        }
        result.push_back(ReduceSum(in, node.reduce_dims));
      }
      break;
    case InstrKind::kIdentity:
      result = *args[0];
      break;
    case InstrKind::kSplitReplica:
      result = *args[0];
      for (int j = 1; j < devices_; ++j) {
        std::fill(result[j].data.begin(), result[j].data.end(), 0.0);
      }
      break;
    case InstrKind::kAllReduce: {
      absl::StatusOr<Tensor> sum = Sum(*args[0]);
      if (!sum.ok()) return fail(sum.status());
      result.assign(devices_, *sum);
      break;
    }
    case InstrKind::kAllGather:
    case InstrKind::kGroupedBroadcast: {
      absl::StatusOr<Tensor> whole = ConcatChecked(*args[0], instr.dim);
      if (!whole.ok()) return fail(whole.status());
      result.assign(devices_, *whole);
      break;
    }
    case InstrKind::kReduceScatter: {
      absl::StatusOr<Tensor> sum = Sum(*args[0]);
      if (!sum.ok()) return fail(sum.status());
      if (instr.dim < 0 || instr.dim >= static_cast<int>(sum->shape.size())) {
        return fail(absl::InvalidArgumentError("axis out of range"));
      }
      result = slice_by(*sum, instr.output, instr.dim);
      break;
    }
    case InstrKind::kAllToAll:
    case InstrKind::kRebalance: {
      absl::StatusOr<Tensor> whole = ConcatChecked(*args[0], instr.dim);
      if (!whole.ok()) return fail(whole.status());
      const int to = instr.kind == InstrKind::kAllToAll ? instr.dim2 : instr.dim;
      if (to < 0 || to >= static_cast<int>(whole->shape.size())) {
        return fail(absl::InvalidArgumentError("axis out of range"));
      }
      result = slice_by(*whole, instr.output, to);
      break;
    }
  }
  Bind(instr.output, std::move(result));
  return absl::OkStatus();
}

absl::Status Interpreter::Run(const DistributedProgram& program) {
  for (const Instruction& instr : program.instrs) {
    if (absl::Status s = Execute(instr); !s.ok()) return s;
  }
  return absl::OkStatus();
}

absl::StatusOr<std::vector<Tensor>> RunDistributed(
    const Graph& graph, const DistributedProgram& program,
    const ShardingRatios& ratios, const SegmentAssignment& assignment,
    const Inputs& inputs) {
  Interpreter interp(graph, ratios, assignment, inputs);
  if (absl::Status s = interp.Run(program); !s.ok()) return s;
  const DistTensor* loss =
      interp.Find(DistTensorRef{graph.loss(), Form::AllReduce(), -1});
  if (loss == nullptr) {
    return absl::FailedPreconditionError(
        "program never produces the loss in AllReduce form");
  }
  absl::StatusOr<Tensor> total = Sum(*loss);
  if (!total.ok()) return total.status();
  return std::vector<Tensor>(interp.num_devices(), *total);
}

EquivalenceReport CheckEquivalence(const Graph& graph,
                                   const DistributedProgram& program,
                                   const ShardingRatios& ratios,
                                   const SegmentAssignment& assignment,
                                   int trials, uint64_t seed) {
  EquivalenceReport report;
  for (int t = 0; t < trials; ++t) {
    ++report.trials;
    Inputs inputs = RandomInputs(graph, seed + static_cast<uint64_t>(t));
    absl::StatusOr<Tensor> want = RunSingle(graph, inputs);
    absl::StatusOr<std::vector<Tensor>> got =
        want.ok() ? RunDistributed(graph, program, ratios, assignment, inputs)
                  : absl::StatusOr<std::vector<Tensor>>(want.status());
    if (!got.ok()) {
      report.passed = false;
      report.failure = std::string(got.status().message());
      return report;
    }
    for (const Tensor& device : *got) {
      for (size_t i = 0; i < device.data.size(); ++i) {
        const double b = want->data[i];
        const double err =
            std::abs(device.data[i] - b) / std::max(std::abs(b), 1.0);
        report.max_relative_error = std::max(report.max_relative_error, err);
      }
    }
  }
  report.passed = report.max_relative_error <= kEquivalenceTolerance;
  return report;
}

absl::Status CheckTripleSoundness(const Graph& graph, const HoareTriple& triple,
                                  const ShardingRatios& ratios,
                                  const SegmentAssignment& assignment,
                                  uint64_t seed) {
  Inputs inputs = RandomInputs(graph, seed, /*integer_valued=*/true);
  absl::StatusOr<std::vector<Tensor>> values = RunSingleAll(graph, inputs);
  if (!values.ok()) return values.status();
  bool exact = true;
  for (const Tensor& v : *values) exact = exact && IntegerValued(v);
  const double tol = exact ? 0.0 : kEquivalenceTolerance;

  Interpreter interp(graph, ratios, assignment, inputs);
  uint64_t part_seed = seed * 7919 + 1;
  for (const Property& p : triple.pre) {
    if (p.is_guard()) continue;
    DistTensorRef ref{p.tensor, p.form, -1};
    interp.Bind(ref, interp.Distribute((*values)[p.tensor], ref, part_seed++));
  }
  for (const Instruction& instr : triple.instrs) {
    if (absl::Status s = interp.Execute(instr); !s.ok()) return s;
  }
  for (const Property& p : triple.post) {
    if (p.is_guard()) continue;
    DistTensorRef ref{p.tensor, p.form, -1};
    const DistTensor* v = interp.Find(ref);
    if (v == nullptr) {
      return absl::InternalError(absl::StrCat(
          "postcondition ", p.ToString(graph), " has no binding"));
    }
    if (absl::Status s = interp.CheckForm((*values)[p.tensor], ref, *v, tol);
        !s.ok()) {
      return s;
    }
  }
  return absl::OkStatus();
}

}  // namespace spmdsynth
