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

#include "spmdsynth/program.h"

#include <charconv>
#include <set>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/match.h"
#include "absl/strings/str_join.h"

namespace spmdsynth {
namespace {

using json = nlohmann::json;

constexpr std::pair<InstrKind, absl::string_view> kInstrNames[] = {
    {InstrKind::kPlaceholder, "Placeholder"},
    {InstrKind::kPlaceholderShard, "PlaceholderShard"},
    {InstrKind::kParameter, "Parameter"},
    {InstrKind::kParameterShard, "ParameterShard"},
    {InstrKind::kMatMul, "MatMul"},
    {InstrKind::kUnary, "ElemwiseUnary"},
    {InstrKind::kBinary, "ElemwiseBinary"},
    {InstrKind::kReduce, "Reduce"},
    {InstrKind::kIdentity, "Identity"},
    {InstrKind::kSplitReplica, "SplitReplica"},
    {InstrKind::kAllReduce, "AllReduce"},
    {InstrKind::kAllGather, "AllGather"},
    {InstrKind::kReduceScatter, "ReduceScatter"},
    {InstrKind::kAllToAll, "AllToAll"},
    {InstrKind::kGroupedBroadcast, "GroupedBroadcast"},
    {InstrKind::kRebalance, "Rebalance"},
};

std::optional<int> ParseInt(absl::string_view s) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

absl::StatusOr<DistTensorRef> ParseDistTensor(absl::string_view name,
                                              const Graph& graph) {
  DistTensorRef ref;
  size_t bar = name.rfind('|');
  if (bar == absl::string_view::npos) {
    return absl::InvalidArgumentError(
        absl::StrCat("bad distributed tensor name '", name, "'"));
  }
  std::optional<int> tensor = graph.Find(name.substr(0, bar));
  if (!tensor) {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown tensor in '", name, "'"));
  }
  ref.tensor = *tensor;
  absl::string_view rest = name.substr(bar + 1);
  if (size_t at = rest.find("@seg"); at != absl::string_view::npos) {
    std::optional<int> seg = ParseInt(rest.substr(at + 4));
    if (!seg || *seg < 0) {
      return absl::InvalidArgumentError(
          absl::StrCat("bad segment suffix in '", name, "'"));
    }
    ref.segment = *seg;
    rest = rest.substr(0, at);
  }
  absl::StatusOr<Form> form = Form::Parse(rest);
  if (!form.ok()) return form.status();
  ref.form = *form;
  return ref;
}

void Mix(uint64_t& h, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::string Form::ToString() const {
  switch (kind) {
    case Kind::kIdentity:
      return "Identity";
    case Kind::kAllReduce:
      return "AllReduce";
    case Kind::kAllGather:
      return absl::StrCat("AllGather(", dim, ")");
  }
  return "?";
}

absl::StatusOr<Form> Form::Parse(absl::string_view text) {
  if (text == "Identity") return Identity();
  if (text == "AllReduce") return AllReduce();
  if (absl::StartsWith(text, "AllGather(") && absl::EndsWith(text, ")")) {
    std::optional<int> d = ParseInt(text.substr(10, text.size() - 11));
    if (d && *d >= 0) return AllGather(*d);
  }
  return absl::InvalidArgumentError(absl::StrCat("bad form '", text, "'"));
}

std::string DistTensorRef::Name(const Graph& graph) const {
  std::string name = absl::StrCat(graph.node(tensor).id, "|", form.ToString());
  if (segment >= 0) absl::StrAppend(&name, "@seg", segment);
  return name;
}

absl::string_view InstrKindName(InstrKind kind) {
  for (const auto& [k, name] : kInstrNames) {
    if (k == kind) return name;
  }
  return "?";
}

bool IsCommunication(InstrKind kind) {
  return kind >= InstrKind::kAllReduce;
}

std::string Instruction::ToString(const Graph& graph) const {
  std::vector<std::string> args;
  for (const DistTensorRef& op : operands) args.push_back(op.Name(graph));
  std::string params;
  if (dim >= 0) params = absl::StrCat(dim);
  if (dim2 >= 0) absl::StrAppend(&params, ",", dim2);
  return absl::StrCat(output.Name(graph), " <- ", InstrKindName(kind),
                      params.empty() ? "" : absl::StrCat("[", params, "]"),
                      "(", absl::StrJoin(args, ", "), ")");
}

std::string DistributedProgram::ToString(const Graph& graph) const {
  std::string out;
  for (const Instruction& instr : instrs) {
    absl::StrAppend(&out, instr.ToString(graph), "\n");
  }
  return out;
}

uint64_t DistributedProgram::Fingerprint() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_ref = [&](const DistTensorRef& r) {
    Mix(h, static_cast<uint64_t>(r.tensor));
    Mix(h, static_cast<uint64_t>(r.form.code()));
    Mix(h, static_cast<uint64_t>(r.segment + 1));
  };
  for (const Instruction& instr : instrs) {
    Mix(h, static_cast<uint64_t>(instr.kind));
    Mix(h, static_cast<uint64_t>(instr.tensor));
    Mix(h, static_cast<uint64_t>(instr.dim + 1));
    Mix(h, static_cast<uint64_t>(instr.dim2 + 1));
    Mix(h, instr.operands.size());
    for (const DistTensorRef& op : instr.operands) mix_ref(op);
    mix_ref(instr.output);
  }
  return h;
}

json InstructionToJson(const Instruction& instr, const Graph& graph) {
  json j;
  j["op"] = std::string(InstrKindName(instr.kind));
  j["tensor"] = graph.node(instr.tensor).id;
  if (instr.dim >= 0) j["dim"] = instr.dim;
  if (instr.dim2 >= 0) j["dim2"] = instr.dim2;
  json inputs = json::array();
  for (const DistTensorRef& op : instr.operands) {
    inputs.push_back(op.Name(graph));
  }
  j["inputs"] = std::move(inputs);
  j["output"] = instr.output.Name(graph);
  return j;
}

absl::StatusOr<Instruction> InstructionFromJson(const json& j,
                                                const Graph& graph) {
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string() ||
      !j.contains("tensor") || !j["tensor"].is_string() ||
      !j.contains("output") || !j["output"].is_string()) {
    return absl::InvalidArgumentError(
        "instruction needs string fields 'op', 'tensor' and 'output'");
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "op" && key != "tensor" && key != "dim" && key != "dim2" &&
        key != "inputs" && key != "output") {
      return absl::InvalidArgumentError(
          absl::StrCat("instruction: unknown field '", key, "'"));
    }
  }
  Instruction instr;
  std::string op = j["op"].get<std::string>();
  bool known = false;
  for (const auto& [k, name] : kInstrNames) {
    if (name == op) {
      instr.kind = k;
      known = true;
    }
  }
  if (!known) {
    return absl::InvalidArgumentError(absl::StrCat("unknown op '", op, "'"));
  }
  std::optional<int> tensor = graph.Find(j["tensor"].get<std::string>());
  if (!tensor) {
    return absl::InvalidArgumentError(absl::StrCat(
        "unknown tensor '", j["tensor"].get<std::string>(), "'"));
  }
  instr.tensor = *tensor;
  if (j.contains("dim")) instr.dim = j["dim"].get<int>();
  if (j.contains("dim2")) instr.dim2 = j["dim2"].get<int>();
  if (j.contains("inputs")) {
    for (const json& in : j["inputs"]) {
      if (!in.is_string()) {
        return absl::InvalidArgumentError("instruction inputs must be strings");
      }
      absl::StatusOr<DistTensorRef> ref =
          ParseDistTensor(in.get<std::string>(), graph);
      if (!ref.ok()) return ref.status();
      instr.operands.push_back(*ref);
    }
  }
  absl::StatusOr<DistTensorRef> out =
      ParseDistTensor(j["output"].get<std::string>(), graph);
  if (!out.ok()) return out.status();
  instr.output = *out;
  if (absl::Status s = ValidateInstruction(instr, graph); !s.ok()) return s;
  return instr;
}

json ProgramToJson(const DistributedProgram& program, const Graph& graph) {
  json list = json::array();
  for (const Instruction& instr : program.instrs) {
    list.push_back(InstructionToJson(instr, graph));
  }
  return list;
}

absl::StatusOr<DistributedProgram> ProgramFromJson(const json& j,
                                                   const Graph& graph) {
  if (!j.is_array()) {
    return absl::InvalidArgumentError("program must be a JSON array");
  }
  DistributedProgram program;
  for (const json& ji : j) {
    absl::StatusOr<Instruction> instr = InstructionFromJson(ji, graph);
    if (!instr.ok()) return instr.status();
    program.instrs.push_back(*std::move(instr));
  }
  return program;
}

absl::Status ValidateInstruction(const Instruction& instr, const Graph& graph) {
  auto error = [&](auto&&... parts) {
    return absl::InvalidArgumentError(
        absl::StrCat(InstrKindName(instr.kind), ": ", parts...));
  };
  if (instr.tensor < 0 || instr.tensor >= graph.size()) {
    return error("tensor out of range");
  }
  const Node& node = graph.node(instr.tensor);
  auto valid_form = [&](const DistTensorRef& r) {
    if (r.tensor < 0 || r.tensor >= graph.size()) return false;
    return !r.form.is_all_gather() ||
           (r.form.dim >= 0 && r.form.dim < graph.node(r.tensor).rank());
  };
  for (const DistTensorRef& op : instr.operands) {
    if (!valid_form(op)) return error("operand form out of range");
  }
  if (!valid_form(instr.output) || instr.output.tensor != instr.tensor) {
    return error("output must be a valid form of the instruction's tensor");
  }
  size_t expected_operands = 0;
  switch (instr.kind) {
    case InstrKind::kPlaceholder:
    case InstrKind::kParameter:
    case InstrKind::kPlaceholderShard:
    case InstrKind::kParameterShard:
      expected_operands = 0;
      break;
    case InstrKind::kMatMul:
    case InstrKind::kBinary:
      expected_operands = 2;
      break;
    default:
      expected_operands = 1;
  }
  if (instr.operands.size() != expected_operands) {
    return error("expected ", expected_operands, " operands, got ",
                 instr.operands.size());
  }
  if (instr.is_communication()) {
    if (instr.operands[0].tensor != instr.tensor) {
      return error("communication must read its own tensor");
    }
    if (instr.kind == InstrKind::kAllToAll &&
        (instr.dim == instr.dim2 || instr.dim < 0 || instr.dim2 < 0)) {
      return error("AllToAll needs two distinct axes");
    }
    if (instr.kind != InstrKind::kAllReduce && instr.kind != InstrKind::kAllToAll &&
        (instr.dim < 0 || instr.dim >= node.rank())) {
      return error("axis out of range");
    }
  } else if (instr.kind != InstrKind::kSplitReplica) {
    const auto& inputs = node.inputs;
    for (size_t i = 0; i < instr.operands.size(); ++i) {
      if (instr.operands[i].tensor != inputs[i]) {
        return error("operand ", i, " does not match the graph");
      }
    }
  }
  return absl::OkStatus();
}

DistributedProgram RemoveDeadComputation(const DistributedProgram& program,
                                         const DistTensorRef& result) {
  std::set<DistTensorRef> live = {result};
  std::vector<bool> keep(program.instrs.size(), false);
  for (size_t i = program.instrs.size(); i-- > 0;) {
    const Instruction& instr = program.instrs[i];
    if (!instr.is_communication() && !live.contains(instr.output)) continue;
    keep[i] = true;
    live.erase(instr.output);
    live.insert(instr.operands.begin(), instr.operands.end());
  }
  DistributedProgram out;
  for (size_t i = 0; i < program.instrs.size(); ++i) {
    if (keep[i]) out.instrs.push_back(program.instrs[i]);
  }
  return out;
}

}  // namespace spmdsynth
