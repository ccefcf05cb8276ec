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

#ifndef SPMDSYNTH_SEARCH_H_
#define SPMDSYNTH_SEARCH_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "absl/status/statusor.h"
#include "spmdsynth/cost_model.h"
#include "spmdsynth/graph.h"
#include "spmdsynth/program.h"
#include "spmdsynth/theory.h"

namespace spmdsynth {

// Fixed-width bitset over the property universe of one graph.
class PropertySet {
 public:
  PropertySet() = default;
  explicit PropertySet(size_t bits) : words_((bits + 63) / 64, 0) {}

  bool Test(size_t i) const { return (words_[i / 64] >> (i % 64)) & 1; }
  void Set(size_t i) { words_[i / 64] |= uint64_t{1} << (i % 64); }
  void Reset(size_t i) { words_[i / 64] &= ~(uint64_t{1} << (i % 64)); }

  bool Contains(const PropertySet& other) const;
  // True if `other & mask` is a subset of this set.
  bool ContainsMasked(const PropertySet& other, const PropertySet& mask) const;
  bool Intersects(const PropertySet& other) const;
  void UnionWith(const PropertySet& other);
  void IntersectWith(const PropertySet& other);
  void Subtract(const PropertySet& other);
  size_t Count() const;

  const std::vector<uint64_t>& words() const { return words_; }

  template <typename H>
  friend H AbslHashValue(H h, const PropertySet& s) {
    return H::combine(std::move(h), s.words_);
  }
  friend bool operator==(const PropertySet&, const PropertySet&) = default;

 private:
  std::vector<uint64_t> words_;
};

// Bit positions of properties. Form properties come first ("real"
// properties), then NotCommunicated and Communicated guards, then markers
// for tensors re-sharded into another segment's ratios.
class PropertyLayout {
 public:
  PropertyLayout(const Graph& graph, int num_segments);

  size_t size() const { return size_; }
  size_t FormBit(int tensor, Form form) const;
  size_t NotCommunicatedBit(int tensor) const;
  size_t CommunicatedBit(int tensor) const;
  size_t RebalancedBit(int tensor, int dim, int segment) const;
  size_t Bit(const Property& p) const;

  // Bits of the form properties.
  const PropertySet& real_mask() const { return real_mask_; }

 private:
  int tensors_;
  int forms_;
  int segments_;
  int max_rank_;
  size_t size_;
  PropertySet real_mask_;
};

struct SearchOptions {
  int64_t max_expansions = 2'000'000;
  bool fuse = true;
  bool guards = true;
  bool prune_properties = true;
  bool dominance = true;
  // Dominance checks scan at most this many archived states beyond the
  // exact-match bucket. Skipping a check never affects optimality.
  int64_t superset_scan_limit = 4096;
};

struct SearchStats {
  int64_t expansions = 0;
  int64_t generated = 0;
  int64_t dominated = 0;
  int64_t purged = 0;
  // Pops whose score fell below an earlier pop; always zero for a
  // consistent lower bound.
  int64_t non_monotone_pops = 0;
};

// A partial program with its cost bookkeeping. Instructions are stored as a
// suffix over the parent state; see ProgramOf.
struct SearchState {
  PropertySet props;
  // Every form property held at some point, including pruned ones. A triple
  // whose post is already here is finished.
  PropertySet derived;
  // Tensors computed by some instruction so far, whether or not the
  // property set still mentions them.
  std::vector<bool> realized;
  CostAccumulator acc;
  double ecost = 0.0;
  int parent = -1;
  int triple = -1;
  int length = 0;  // instructions in the whole program
  std::vector<Instruction> appended;

  // Closed stages only. A complete program costs acc.Full().
  double cost() const { return acc.closed; }
  double score() const { return acc.closed + ecost; }
};

// Program of `state`, whose ancestors live in `pool`.
DistributedProgram ProgramOf(const std::vector<SearchState>& pool,
                             const SearchState& state);

// The transition system shared by the A* search and the exhaustive
// enumerator: theory triples as bitsets plus cost evaluation.
class SearchSpace {
 public:
  SearchSpace(const Graph& graph, Theory theory, const CostModel& model,
              const ShardingRatios& ratios);

  const Graph& graph() const { return *graph_; }
  const Theory& theory() const { return theory_; }
  const PropertyLayout& layout() const { return layout_; }
  const CostModel& model() const { return *model_; }
  const ShardingRatios& ratios() const { return *ratios_; }
  int num_triples() const { return static_cast<int>(pre_.size()); }

  SearchState Initial() const;
  bool IsComplete(const SearchState& s) const;
  // pre is contained in P and the post adds a form property never derived
  // before.
  bool Applicable(const SearchState& s, int triple) const;
  // Successor of `s` (stored at `parent` in the caller's pool); ecost is
  // left at zero.
  SearchState Apply(const SearchState& s, int parent, int triple) const;
  // Lower bound on the cost still to be paid beyond the closed stages.
  double Ecost(const SearchState& s) const;
  // Drops form properties that no unfinished triple with satisfiable guards
  // reads. Finished triples stay finished and guards only get stricter, so
  // a dropped property is never needed again.
  void PruneRedundant(SearchState* s) const;

 private:
  void AppendInstruction(Instruction instr, SearchState* s) const;

  const Graph* graph_;
  Theory theory_;
  const CostModel* model_;
  const ShardingRatios* ratios_;
  PropertyLayout layout_;
  std::vector<PropertySet> pre_;
  std::vector<PropertySet> post_;
  std::vector<PropertySet> post_real_;
  // Triples whose precondition holds a given real property bit.
  std::vector<std::vector<int>> consumers_;
  // The same sets as bit lists; triples touch only a few properties.
  std::vector<std::vector<uint32_t>> pre_bits_;
  std::vector<std::vector<uint32_t>> post_real_bits_;
  std::vector<std::vector<uint32_t>> guard_bits_;
  std::vector<std::vector<int>> communicated_;  // tensors whose guard flips
  std::vector<bool> loss_ancestor_;
  // flops[e] * B[seg(e)][j] / rate[j]
  std::vector<std::vector<double>> min_comp_;
  size_t loss_bit_;
};

// Dominance between partial programs: `a` holds every property of `b` and
// is no slower on every device at the current synchronization point.
bool Dominates(const SearchState& a, const SearchState& b);

// Theory used by the search under the given toggles.
Theory BuildSearchTheory(const Graph& graph, int num_devices,
                         const SearchOptions& options);

struct SearchResult {
  DistributedProgram program;
  double cost = 0.0;  // complete-program cost, iteration time
  bool found = false;
  bool budget_exhausted = false;
  SearchStats stats;
};

// Minimum-cost complete program for fixed ratios. Returns NotFound when the
// theory cannot produce the loss.
absl::StatusOr<SearchResult> Synthesize(const Graph& graph,
                                        const CostModel& model,
                                        const ShardingRatios& ratios,
                                        const SearchOptions& options);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_SEARCH_H_
