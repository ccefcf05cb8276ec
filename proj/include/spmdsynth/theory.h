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

#ifndef SPMDSYNTH_THEORY_H_
#define SPMDSYNTH_THEORY_H_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "spmdsynth/graph.h"
#include "spmdsynth/program.h"

namespace spmdsynth {

// A fact about a program: some distributed tensor relates to reference
// tensor `tensor` by `form`, or one of the communication guards on `tensor`.
struct Property {
  enum class Kind : uint8_t { kForm, kNotCommunicated, kCommunicated };
  Kind kind = Kind::kForm;
  int tensor = -1;
  Form form;

  static Property Of(int tensor, Form form) {
    return {Kind::kForm, tensor, form};
  }
  static Property NotCommunicated(int tensor) {
    return {Kind::kNotCommunicated, tensor, Form()};
  }
  static Property Communicated(int tensor) {
    return {Kind::kCommunicated, tensor, Form()};
  }
  bool is_guard() const { return kind != Kind::kForm; }

  std::string ToString(const Graph& graph) const;
  friend bool operator==(const Property&, const Property&) = default;
  friend auto operator<=>(const Property&, const Property&) = default;
};

// {pre} instrs {post}. `instrs` holds more than one instruction only after
// fusion.
struct HoareTriple {
  std::vector<Property> pre;
  std::vector<Instruction> instrs;
  std::vector<Property> post;

  std::string ToString(const Graph& graph) const;
  friend bool operator==(const HoareTriple&, const HoareTriple&) = default;
};

class Theory {
 public:
  Theory() = default;
  Theory(std::vector<HoareTriple> triples, int loss)
      : triples_(std::move(triples)), loss_(loss) {}

  const std::vector<HoareTriple>& triples() const { return triples_; }
  int loss() const { return loss_; }
  // True once communication guards were added; programs then start with
  // NotCommunicated for every tensor.
  bool guarded() const { return guarded_; }
  void set_guarded(bool g) { guarded_ = g; }

 private:
  std::vector<HoareTriple> triples_;
  int loss_ = -1;
  bool guarded_ = false;
};

// Rule templates, keyed by the op of the node they match. Each template
// appends the triples for one node.
using RuleTemplate =
    std::function<void(const Graph&, int node, std::vector<HoareTriple>*)>;

class RuleRegistry {
 public:
  // Templates for Fig.-6-style collective rules, MatMul sharding (including
  // replicated compute), sources, elementwise and Reduce ops.
  static const RuleRegistry& Default();

  void Register(OpCode op, RuleTemplate rule);
  // Rules applied to every tensor regardless of op (collectives).
  void RegisterForAllTensors(RuleTemplate rule);

  std::vector<HoareTriple> Apply(const Graph& graph) const;

 private:
  std::map<OpCode, std::vector<RuleTemplate>> by_op_;
  std::vector<RuleTemplate> all_tensors_;
};

// Background theory for `graph` under the default registry. `num_devices`
// only participates in validation.
Theory DeriveTheory(const Graph& graph, int num_devices);

// Replaces every empty-precondition triple T1 by fused triples
// {Pre2 \ Post1} [T1; T2] {Post1 u Post2} for each consumer T2 with
// Post1 <= Pre2, iterating until no empty-pre triple has a consumer.
Theory FuseEmptyPreconditions(const Theory& theory);

// Adds NotCommunicated/Communicated guards to communication triples and drops
// communication of Placeholder and Parameter tensors.
Theory AddCommunicationGuards(const Theory& theory, const Graph& graph);

nlohmann::json TheoryToJson(const Theory& theory, const Graph& graph);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_THEORY_H_
