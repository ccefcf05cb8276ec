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

#include "spmdsynth/theory.h"

#include <algorithm>
#include <cassert>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"

namespace spmdsynth {
namespace {

using json = nlohmann::json;

DistTensorRef Ref(int tensor, Form form) { return {tensor, form, -1}; }

void SortUnique(std::vector<Property>& props) {
  std::sort(props.begin(), props.end());
  props.erase(std::unique(props.begin(), props.end()), props.end());
}

HoareTriple MakeTriple(std::vector<Property> pre, Instruction instr,
                       std::vector<Property> post) {
  SortUnique(pre);
  SortUnique(post);
  return HoareTriple{std::move(pre), {std::move(instr)}, std::move(post)};
}

InstrKind ComputeKind(OpCode op) {
  switch (op) {
    case OpCode::kPlaceholder:
      return InstrKind::kPlaceholder;
    case OpCode::kParameter:
      return InstrKind::kParameter;
    case OpCode::kMatMul:
      return InstrKind::kMatMul;
    case OpCode::kUnary:
      return InstrKind::kUnary;
    case OpCode::kBinary:
      return InstrKind::kBinary;
    case OpCode::kReduce:
      return InstrKind::kReduce;
    case OpCode::kIdentity:
      return InstrKind::kIdentity;
  }
  return InstrKind::kIdentity;
}

// out <- op(inputs) with each input in the given form.
HoareTriple ComputeRule(const Graph& graph, int node,
                        std::vector<Form> input_forms, Form out_form) {
  const Node& n = graph.node(node);
  Instruction instr;
  instr.kind = ComputeKind(n.op);
  instr.tensor = node;
  std::vector<Property> pre;
  for (size_t i = 0; i < n.inputs.size(); ++i) {
    instr.operands.push_back(Ref(n.inputs[i], input_forms[i]));
    pre.push_back(Property::Of(n.inputs[i], input_forms[i]));
  }
  instr.output = Ref(node, out_form);
  return MakeTriple(std::move(pre), std::move(instr),
                    {Property::Of(node, out_form)});
}

HoareTriple CommRule(int tensor, InstrKind kind, Form from, Form to,
                     int dim = -1, int dim2 = -1) {
  Instruction instr;
  instr.kind = kind;
  instr.tensor = tensor;
  instr.dim = dim;
  instr.dim2 = dim2;
  instr.operands = {Ref(tensor, from)};
  instr.output = Ref(tensor, to);
  return MakeTriple({Property::Of(tensor, from)}, std::move(instr),
                    {Property::Of(tensor, to)});
}

void CollectiveRules(const Graph& graph, int e, std::vector<HoareTriple>* out) {
  const int rank = graph.node(e).rank();
  out->push_back(CommRule(e, InstrKind::kAllReduce, Form::AllReduce(),
                          Form::Identity()));
  for (int d = 0; d < rank; ++d) {
    out->push_back(CommRule(e, InstrKind::kReduceScatter, Form::AllReduce(),
                            Form::AllGather(d), d));
  }
  for (int d1 = 0; d1 < rank; ++d1) {
    for (int d2 = 0; d2 < rank; ++d2) {
      if (d1 == d2) continue;
      out->push_back(CommRule(e, InstrKind::kAllToAll, Form::AllGather(d1),
                              Form::AllGather(d2), d1, d2));
    }
  }
  for (int d = 0; d < rank; ++d) {
    out->push_back(CommRule(e, InstrKind::kAllGather, Form::AllGather(d),
                            Form::Identity(), d));
  }
  for (int d = 0; d < rank; ++d) {
    out->push_back(CommRule(e, InstrKind::kGroupedBroadcast,
                            Form::AllGather(d), Form::Identity(), d));
  }
}

void SourceRules(const Graph& graph, int e, std::vector<HoareTriple>* out) {
  const Node& n = graph.node(e);
  const bool placeholder = n.op == OpCode::kPlaceholder;
  Instruction whole;
  whole.kind = placeholder ? InstrKind::kPlaceholder : InstrKind::kParameter;
  whole.tensor = e;
  whole.output = Ref(e, Form::Identity());
  out->push_back(MakeTriple({}, whole, {Property::Of(e, Form::Identity())}));
  for (int d = 0; d < n.rank(); ++d) {
    Instruction shard;
    shard.kind = placeholder ? InstrKind::kPlaceholderShard
                             : InstrKind::kParameterShard;
    shard.tensor = e;
    shard.dim = d;
    shard.output = Ref(e, Form::AllGather(d));
    out->push_back(
        MakeTriple({}, shard, {Property::Of(e, Form::AllGather(d))}));
  }
}

void MatMulRules(const Graph& graph, int e, std::vector<HoareTriple>* out) {
  const Form ag0 = Form::AllGather(0), ag1 = Form::AllGather(1);
  const Form id = Form::Identity();
  out->push_back(ComputeRule(graph, e, {ag0, id}, ag0));
  out->push_back(ComputeRule(graph, e, {id, ag1}, ag1));
  out->push_back(ComputeRule(graph, e, {ag1, ag0}, Form::AllReduce()));
  // Replicated compute on identical inputs.
  out->push_back(ComputeRule(graph, e, {id, id}, id));
}

void ElementwiseUnaryRules(const Graph& graph, int e,
                           std::vector<HoareTriple>* out) {
  const int rank = graph.node(e).rank();
  for (int d = 0; d < rank; ++d) {
    out->push_back(
        ComputeRule(graph, e, {Form::AllGather(d)}, Form::AllGather(d)));
  }
  out->push_back(ComputeRule(graph, e, {Form::Identity()}, Form::Identity()));
}

void IdentityRules(const Graph& graph, int e, std::vector<HoareTriple>* out) {
  ElementwiseUnaryRules(graph, e, out);
  out->push_back(
      ComputeRule(graph, e, {Form::AllReduce()}, Form::AllReduce()));
}

void BinaryRules(const Graph& graph, int e, std::vector<HoareTriple>* out) {
  const Node& n = graph.node(e);
  for (int d = 0; d < n.rank(); ++d) {
    const Form ag = Form::AllGather(d);
    out->push_back(ComputeRule(graph, e, {ag, ag}, ag));
  }
  const Form id = Form::Identity();
  out->push_back(ComputeRule(graph, e, {id, id}, id));
  if (n.binary_fn == BinaryFn::kAdd) {
    const Form ar = Form::AllReduce();
    out->push_back(ComputeRule(graph, e, {ar, ar}, ar));
  }
}

void ReduceRules(const Graph& graph, int e, std::vector<HoareTriple>* out) {
  const Node& n = graph.node(e);
  const Node& in = graph.node(n.inputs[0]);
  for (int d = 0; d < in.rank(); ++d) {
    const bool reduced = std::binary_search(n.reduce_dims.begin(),
                                            n.reduce_dims.end(), d);
    if (reduced) {
      out->push_back(
          ComputeRule(graph, e, {Form::AllGather(d)}, Form::AllReduce()));
    } else {
      int shifted = d - static_cast<int>(std::count_if(
                            n.reduce_dims.begin(), n.reduce_dims.end(),
                            [d](int r) { return r < d; }));
      out->push_back(ComputeRule(graph, e, {Form::AllGather(d)},
                                 Form::AllGather(shifted)));
    }
  }
  out->push_back(ComputeRule(graph, e, {Form::Identity()}, Form::Identity()));
  out->push_back(
      ComputeRule(graph, e, {Form::AllReduce()}, Form::AllReduce()));
}

bool IsSubset(const std::vector<Property>& a, const std::vector<Property>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

std::string Property::ToString(const Graph& graph) const {
  const std::string& id = graph.node(tensor).id;
  switch (kind) {
    case Kind::kForm:
      return absl::StrCat(id, "|", form.ToString());
    case Kind::kNotCommunicated:
      return absl::StrCat(id, "|NotCommunicated");
    case Kind::kCommunicated:
      return absl::StrCat(id, "|Communicated");
  }
  return "?";
}

std::string HoareTriple::ToString(const Graph& graph) const {
  auto props = [&](const std::vector<Property>& ps) {
    std::vector<std::string> s;
    for (const Property& p : ps) s.push_back(p.ToString(graph));
    return absl::StrCat("{", absl::StrJoin(s, ", "), "}");
  };
  std::vector<std::string> is;
  for (const Instruction& i : instrs) is.push_back(i.ToString(graph));
  return absl::StrCat(props(pre), " [", absl::StrJoin(is, "; "), "] ",
                      props(post));
}

void RuleRegistry::Register(OpCode op, RuleTemplate rule) {
  by_op_[op].push_back(std::move(rule));
}

void RuleRegistry::RegisterForAllTensors(RuleTemplate rule) {
  all_tensors_.push_back(std::move(rule));
}

std::vector<HoareTriple> RuleRegistry::Apply(const Graph& graph) const {
  std::vector<HoareTriple> triples;
  for (int e = 0; e < graph.size(); ++e) {
    if (auto it = by_op_.find(graph.node(e).op); it != by_op_.end()) {
      for (const RuleTemplate& rule : it->second) rule(graph, e, &triples);
    }
    for (const RuleTemplate& rule : all_tensors_) rule(graph, e, &triples);
  }
  return triples;
}

const RuleRegistry& RuleRegistry::Default() {
  static const RuleRegistry* registry = [] {
    auto* r = new RuleRegistry;
    r->Register(OpCode::kPlaceholder, SourceRules);
    r->Register(OpCode::kParameter, SourceRules);
    r->Register(OpCode::kMatMul, MatMulRules);
    r->Register(OpCode::kUnary, ElementwiseUnaryRules);
    r->Register(OpCode::kIdentity, IdentityRules);
    r->Register(OpCode::kBinary, BinaryRules);
    r->Register(OpCode::kReduce, ReduceRules);
    r->RegisterForAllTensors(CollectiveRules);
    return r;
  }();
  return *registry;
}

Theory DeriveTheory(const Graph& graph, int num_devices) {
  assert(num_devices >= 1);
  (void)num_devices;
  std::vector<HoareTriple> triples = RuleRegistry::Default().Apply(graph);
  // A replicated loss closes the program through partial sums.
  const int loss = graph.loss();
  Instruction split;
  split.kind = InstrKind::kSplitReplica;
  split.tensor = loss;
  split.operands = {Ref(loss, Form::Identity())};
  split.output = Ref(loss, Form::AllReduce());
  triples.push_back(MakeTriple({Property::Of(loss, Form::Identity())}, split,
                               {Property::Of(loss, Form::AllReduce())}));
  return Theory(std::move(triples), loss);
}

Theory FuseEmptyPreconditions(const Theory& theory) {
  std::vector<HoareTriple> triples = theory.triples();
  auto consumers_of = [&](size_t i) {
    std::vector<size_t> found;
    for (size_t j = 0; j < triples.size(); ++j) {
      if (j != i && !triples[j].pre.empty() &&
          IsSubset(triples[i].post, triples[j].pre)) {
        found.push_back(j);
      }
    }
    return found;
  };
  while (true) {
    size_t victim = triples.size();
    std::vector<size_t> consumers;
    for (size_t i = 0; i < triples.size(); ++i) {
      if (!triples[i].pre.empty()) continue;
      consumers = consumers_of(i);
      if (!consumers.empty()) {
        victim = i;
        break;
      }
    }
    if (victim == triples.size()) break;
    const HoareTriple first = triples[victim];
    std::vector<HoareTriple> fused;
    for (size_t j : consumers) {
      const HoareTriple& second = triples[j];
      HoareTriple t;
      std::set_difference(second.pre.begin(), second.pre.end(),
                          first.post.begin(), first.post.end(),
                          std::back_inserter(t.pre));
      t.instrs = first.instrs;
      t.instrs.insert(t.instrs.end(), second.instrs.begin(),
                      second.instrs.end());
      std::set_union(first.post.begin(), first.post.end(), second.post.begin(),
                     second.post.end(), std::back_inserter(t.post));
      fused.push_back(std::move(t));
    }
    triples.erase(triples.begin() + static_cast<std::ptrdiff_t>(victim));
    for (HoareTriple& t : fused) {
      if (std::find(triples.begin(), triples.end(), t) == triples.end()) {
        triples.push_back(std::move(t));
      }
    }
  }
  Theory out(std::move(triples), theory.loss());
  out.set_guarded(theory.guarded());
  return out;
}

Theory AddCommunicationGuards(const Theory& theory, const Graph& graph) {
  std::vector<HoareTriple> triples;
  for (const HoareTriple& t : theory.triples()) {
    HoareTriple guarded = t;
    bool drop = false;
    for (const Instruction& instr : t.instrs) {
      if (!instr.is_communication()) continue;
      const OpCode op = graph.node(instr.tensor).op;
      if (op == OpCode::kPlaceholder || op == OpCode::kParameter) {
        drop = true;
        break;
      }
      guarded.pre.push_back(Property::NotCommunicated(instr.tensor));
      guarded.post.push_back(Property::Communicated(instr.tensor));
    }
    if (drop) continue;
    SortUnique(guarded.pre);
    SortUnique(guarded.post);
    triples.push_back(std::move(guarded));
  }
  Theory out(std::move(triples), theory.loss());
  out.set_guarded(true);
  return out;
}

json TheoryToJson(const Theory& theory, const Graph& graph) {
  json list = json::array();
  for (const HoareTriple& t : theory.triples()) {
    json jt;
    json pre = json::array(), post = json::array(), instrs = json::array();
    for (const Property& p : t.pre) pre.push_back(p.ToString(graph));
    for (const Property& p : t.post) post.push_back(p.ToString(graph));
    for (const Instruction& i : t.instrs) {
      instrs.push_back(InstructionToJson(i, graph));
    }
    jt["pre"] = std::move(pre);
    jt["instrs"] = std::move(instrs);
    jt["post"] = std::move(post);
    list.push_back(std::move(jt));
  }
  return list;
}

}  // namespace spmdsynth
