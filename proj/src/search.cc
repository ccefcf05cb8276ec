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

#include "spmdsynth/search.h"

#include <algorithm>
#include <bit>
#include <cassert>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

#include "absl/container/flat_hash_map.h"
#include "absl/strings/str_cat.h"

namespace spmdsynth {

bool PropertySet::Contains(const PropertySet& other) const {
  for (size_t i = 0; i < words_.size(); ++i) {
    if (other.words_[i] & ~words_[i]) return false;
  }
  return true;
}

bool PropertySet::ContainsMasked(const PropertySet& other,
                                 const PropertySet& mask) const {
  for (size_t i = 0; i < words_.size(); ++i) {
    if (other.words_[i] & mask.words_[i] & ~words_[i]) return false;
  }
  return true;
}

bool PropertySet::Intersects(const PropertySet& other) const {
  for (size_t i = 0; i < words_.size(); ++i) {
    if (other.words_[i] & words_[i]) return true;
  }
  return false;
}

void PropertySet::UnionWith(const PropertySet& other) {
  for (size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
}

void PropertySet::IntersectWith(const PropertySet& other) {
  for (size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
}

void PropertySet::Subtract(const PropertySet& other) {
  for (size_t i = 0; i < words_.size(); ++i) words_[i] &= ~other.words_[i];
}

size_t PropertySet::Count() const {
  size_t n = 0;
  for (uint64_t w : words_) n += std::popcount(w);
  return n;
}

PropertyLayout::PropertyLayout(const Graph& graph, int num_segments)
    : tensors_(graph.size()),
      forms_(2 + graph.max_rank()),
      segments_(num_segments),
      max_rank_(std::max(graph.max_rank(), 1)) {
  const size_t real = static_cast<size_t>(tensors_) * forms_;
  size_ = real + 2 * static_cast<size_t>(tensors_);
  if (segments_ > 1) {
    size_ += static_cast<size_t>(tensors_) * max_rank_ * segments_;
  }
  real_mask_ = PropertySet(size_);
  for (size_t i = 0; i < real; ++i) real_mask_.Set(i);
}

size_t PropertyLayout::FormBit(int tensor, Form form) const {
  return static_cast<size_t>(tensor) * forms_ + form.code();
}

size_t PropertyLayout::NotCommunicatedBit(int tensor) const {
  return static_cast<size_t>(tensors_) * forms_ + tensor;
}

size_t PropertyLayout::CommunicatedBit(int tensor) const {
  return static_cast<size_t>(tensors_) * (forms_ + 1) + tensor;
}

size_t PropertyLayout::RebalancedBit(int tensor, int dim, int segment) const {
  assert(segments_ > 1);
  return static_cast<size_t>(tensors_) * (forms_ + 2) +
         (static_cast<size_t>(tensor) * max_rank_ + dim) * segments_ + segment;
}

size_t PropertyLayout::Bit(const Property& p) const {
  switch (p.kind) {
    case Property::Kind::kForm:
      return FormBit(p.tensor, p.form);
    case Property::Kind::kNotCommunicated:
      return NotCommunicatedBit(p.tensor);
    case Property::Kind::kCommunicated:
      return CommunicatedBit(p.tensor);
  }
  return 0;
}

DistributedProgram ProgramOf(const std::vector<SearchState>& pool,
                             const SearchState& state) {
  std::vector<const SearchState*> chain;
  for (const SearchState* s = &state; s != nullptr;
       s = s->parent >= 0 ? &pool[s->parent] : nullptr) {
    chain.push_back(s);
  }
  DistributedProgram program;
  program.instrs.reserve(state.length);
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    program.instrs.insert(program.instrs.end(), (*it)->appended.begin(),
                          (*it)->appended.end());
  }
  return program;
}

SearchSpace::SearchSpace(const Graph& graph, Theory theory,
                         const CostModel& model, const ShardingRatios& ratios)
    : graph_(&graph),
      theory_(std::move(theory)),
      model_(&model),
      ratios_(&ratios),
      layout_(graph, model.assignment().count) {
  const PropertySet& real = layout_.real_mask();
  for (const HoareTriple& t : theory_.triples()) {
    PropertySet pre(layout_.size()), post(layout_.size());
    for (const Property& p : t.pre) pre.Set(layout_.Bit(p));
    std::vector<int> flips;
    for (const Property& p : t.post) {
      post.Set(layout_.Bit(p));
      if (p.kind == Property::Kind::kCommunicated) flips.push_back(p.tensor);
    }
    PropertySet post_real = post;
    post_real.IntersectWith(real);
    PropertySet guards = pre;
    guards.Subtract(real);
    const int index = static_cast<int>(pre_.size());
    consumers_.resize(layout_.size());
    for (const Property& p : t.pre) {
      const size_t bit = layout_.Bit(p);
      if (real.Test(bit)) consumers_[bit].push_back(index);
    }
    auto bits_of = [&](const PropertySet& set) {
      std::vector<uint32_t> bits;
      for (size_t i = 0; i < layout_.size(); ++i) {
        if (set.Test(i)) bits.push_back(static_cast<uint32_t>(i));
      }
      return bits;
    };
    pre_bits_.push_back(bits_of(pre));
    post_real_bits_.push_back(bits_of(post_real));
    guard_bits_.push_back(bits_of(guards));
    pre_.push_back(std::move(pre));
    post_.push_back(std::move(post));
    post_real_.push_back(std::move(post_real));
    communicated_.push_back(std::move(flips));
  }
  loss_bit_ = layout_.FormBit(graph.loss(), Form::AllReduce());

  loss_ancestor_.assign(graph.size(), false);
  loss_ancestor_[graph.loss()] = true;
  for (int e = graph.size() - 1; e >= 0; --e) {
    if (!loss_ancestor_[e]) continue;
    for (int in : graph.node(e).inputs) loss_ancestor_[in] = true;
  }
  const int m = model.num_devices();
  for (int e = 0; e < graph.size(); ++e) {
    std::vector<double> row(m, 0.0);
    const double flops = static_cast<double>(FlopsOf(graph, e));
    if (loss_ancestor_[e] && flops > 0) {
      const std::vector<double>& b =
          ratios.row(model.assignment().segment_of[e]);
      for (int j = 0; j < m; ++j) {
        row[j] = flops * b[j] / model.spec().flops[j];
      }
    }
    min_comp_.push_back(std::move(row));
  }
}

SearchState SearchSpace::Initial() const {
  SearchState s;
  s.props = PropertySet(layout_.size());
  s.derived = PropertySet(layout_.size());
  if (theory_.guarded()) {
    for (int e = 0; e < graph_->size(); ++e) {
      s.props.Set(layout_.NotCommunicatedBit(e));
    }
  }
  s.realized.assign(graph_->size(), false);
  s.acc = model_->EmptyAccumulator();
  s.ecost = Ecost(s);
  return s;
}

bool SearchSpace::IsComplete(const SearchState& s) const {
  return s.props.Test(loss_bit_);
}

namespace {

bool AllSet(const PropertySet& set, const std::vector<uint32_t>& bits) {
  for (uint32_t b : bits) {
    if (!set.Test(b)) return false;
  }
  return true;
}

}  // namespace

bool SearchSpace::Applicable(const SearchState& s, int triple) const {
  return AllSet(s.props, pre_bits_[triple]) &&
         !AllSet(s.derived, post_real_bits_[triple]);
}

void SearchSpace::AppendInstruction(Instruction instr, SearchState* s) const {
  const SegmentAssignment& assignment = model_->assignment();
  if (!instr.is_communication() && assignment.count > 1) {
    const int seg = assignment.segment_of[instr.tensor];
    for (DistTensorRef& op : instr.operands) {
      if (!op.form.is_all_gather() || model_->SegmentOf(op) == seg) continue;
      const size_t bit = layout_.RebalancedBit(op.tensor, op.form.dim, seg);
      DistTensorRef moved = op;
      moved.segment = seg;
      if (!s->props.Test(bit)) {
        Instruction reb;
        reb.kind = InstrKind::kRebalance;
        reb.tensor = op.tensor;
        reb.dim = op.form.dim;
        reb.operands = {op};
        reb.output = moved;
        model_->Append(reb, *ratios_, &s->acc);
        s->appended.push_back(std::move(reb));
        s->props.Set(bit);
        ++s->length;
      }
      op = moved;
    }
  }
  if (!instr.is_communication()) s->realized[instr.tensor] = true;
  model_->Append(instr, *ratios_, &s->acc);
  s->appended.push_back(std::move(instr));
  ++s->length;
}

SearchState SearchSpace::Apply(const SearchState& s, int parent,
                               int triple) const {
  SearchState next;
  next.props = s.props;
  next.props.UnionWith(post_[triple]);
  next.derived = s.derived;
  next.derived.UnionWith(post_real_[triple]);
  for (int e : communicated_[triple]) {
    next.props.Reset(layout_.NotCommunicatedBit(e));
  }
  next.realized = s.realized;
  next.acc = s.acc;
  next.parent = parent;
  next.triple = triple;
  next.length = s.length;
  for (const Instruction& instr : theory_.triples()[triple].instrs) {
    AppendInstruction(instr, &next);
  }
  return next;
}

double SearchSpace::Ecost(const SearchState& s) const {
  // A complete program is charged in full, open stage included.
  if (IsComplete(s)) return 0.0;
  const int m = model_->num_devices();
  double worst = 0.0;
  for (int j = 0; j < m; ++j) {
    double t = s.acc.open_comp[j];
    for (int e = 0; e < graph_->size(); ++e) {
      if (!s.realized[e]) t += min_comp_[e][j];
    }
    worst = std::max(worst, t);
  }
  return s.acc.open_comm + worst;
}

void SearchSpace::PruneRedundant(SearchState* s) const {
  // A real property survives if some still-enabled triple reads it.
  auto useful = [&](size_t bit) {
    for (int t : consumers_[bit]) {
      if (AllSet(s->props, guard_bits_[t]) &&
          !AllSet(s->derived, post_real_bits_[t])) {
        return true;
      }
    }
    return false;
  };
  const PropertySet& real = layout_.real_mask();
  const std::vector<uint64_t>& words = s->props.words();
  std::vector<size_t> drop;
  for (size_t w = 0; w < words.size(); ++w) {
    uint64_t bits = words[w] & real.words()[w];
    while (bits != 0) {
      const size_t bit = w * 64 + std::countr_zero(bits);
      bits &= bits - 1;
      if (bit != loss_bit_ && !useful(bit)) drop.push_back(bit);
    }
  }
  for (size_t bit : drop) s->props.Reset(bit);
}

namespace {

// Per-device time of `a` is at most that of `b`.
bool NoSlower(const SearchState& a, const SearchState& b) {
  const double base_a = a.acc.closed + a.acc.open_comm;
  const double base_b = b.acc.closed + b.acc.open_comm;
  for (size_t j = 0; j < a.acc.open_comp.size(); ++j) {
    if (base_a + a.acc.open_comp[j] > base_b + b.acc.open_comp[j]) {
      return false;
    }
  }
  return true;
}

}  // namespace

bool Dominates(const SearchState& a, const SearchState& b) {
  return a.props.Contains(b.props) && NoSlower(a, b);
}

Theory BuildSearchTheory(const Graph& graph, int num_devices,
                         const SearchOptions& options) {
  Theory theory = DeriveTheory(graph, num_devices);
  if (options.guards) theory = AddCommunicationGuards(theory, graph);
  if (options.fuse) theory = FuseEmptyPreconditions(theory);
  return theory;
}

namespace {

struct QueueEntry {
  double score;
  int length;
  int id;
};

// Lowest score first; deeper programs first on ties; then generation order.
struct QueueOrder {
  bool operator()(const QueueEntry& a, const QueueEntry& b) const {
    if (a.score != b.score) return a.score > b.score;
    if (a.length != b.length) return a.length < b.length;
    return a.id > b.id;
  }
};

}  // namespace

absl::StatusOr<SearchResult> Synthesize(const Graph& graph,
                                        const CostModel& model,
                                        const ShardingRatios& ratios,
                                        const SearchOptions& options) {
  if (absl::Status s =
          ratios.Validate(model.assignment().count, model.num_devices());
      !s.ok()) {
    return s;
  }
  SearchSpace space(graph,
                    BuildSearchTheory(graph, model.num_devices(), options),
                    model, ratios);
  SearchResult result;
  std::vector<SearchState> pool;
  std::vector<bool> dead;
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, QueueOrder> queue;
  // States usable as dominators: exact property sets, plus a flat list for
  // superset checks.
  absl::flat_hash_map<PropertySet, std::vector<int>> by_props;
  std::vector<int> archive;
  // OR of all words: a superset's fold covers the subset's fold.
  std::vector<uint64_t> fold;
  auto fold_of = [](const PropertySet& p) {
    uint64_t f = 0;
    for (uint64_t w : p.words()) f |= w;
    return f;
  };

  auto retire = [&](int id) {
    dead[id] = true;
    auto& bucket = by_props[pool[id].props];
    bucket.erase(std::remove(bucket.begin(), bucket.end(), id), bucket.end());
  };
  auto insert = [&](SearchState state) {
    const int id = static_cast<int>(pool.size());
    queue.push({state.score(), state.length, id});
    by_props[state.props].push_back(id);
    archive.push_back(id);
    fold.push_back(fold_of(state.props));
    pool.push_back(std::move(state));
    dead.push_back(false);
  };
  // True if `state` is dominated; otherwise retires the states it dominates.
  auto dominated = [&](const SearchState& state) {
    if (auto it = by_props.find(state.props); it != by_props.end()) {
      for (int id : it->second) {
        if (Dominates(pool[id], state)) return true;
      }
    }
    std::vector<int> victims;
    if (auto it = by_props.find(state.props); it != by_props.end()) {
      for (int id : it->second) {
        if (Dominates(state, pool[id])) victims.push_back(id);
      }
    }
    // Strict supersets and subsets, both directions in one pass.
    if (static_cast<int64_t>(archive.size()) <= options.superset_scan_limit) {
      const std::vector<uint64_t>& mine = state.props.words();
      const uint64_t my_fold = fold_of(state.props);
      for (int id : archive) {
        bool they_contain = (my_fold & ~fold[id]) == 0;
        bool i_contain = (fold[id] & ~my_fold) == 0;
        if (!(they_contain || i_contain) || dead[id]) continue;
        const std::vector<uint64_t>& theirs = pool[id].props.words();
        for (size_t w = 0; w < mine.size() && (they_contain || i_contain);
             ++w) {
          they_contain = they_contain && !(mine[w] & ~theirs[w]);
          i_contain = i_contain && !(theirs[w] & ~mine[w]);
        }
        if (they_contain == i_contain) continue;  // equal or incomparable
        if (they_contain && NoSlower(pool[id], state)) return true;
        if (i_contain && NoSlower(state, pool[id])) victims.push_back(id);
      }
    }
    for (int id : victims) {
      if (!dead[id]) {
        retire(id);
        ++result.stats.purged;
      }
    }
    if (!victims.empty()) {
      archive.erase(std::remove_if(archive.begin(), archive.end(),
                                   [&](int id) { return dead[id]; }),
                    archive.end());
    }
    return false;
  };

  double best_cost = std::numeric_limits<double>::infinity();
  std::optional<SearchState> best;
  insert(space.Initial());
  double last_score = -std::numeric_limits<double>::infinity();

  while (!queue.empty()) {
    const QueueEntry top = queue.top();
    if (dead[top.id]) {
      queue.pop();
      continue;
    }
    if (!(top.score < best_cost)) break;
    if (result.stats.expansions >= options.max_expansions) {
      result.budget_exhausted = true;
      break;
    }
    queue.pop();
    if (top.score < last_score - 1e-12 * std::max(1.0, std::abs(last_score))) {
      ++result.stats.non_monotone_pops;
    }
    last_score = std::max(last_score, top.score);
    ++result.stats.expansions;

    for (int t = 0; t < space.num_triples(); ++t) {
      const SearchState& current = pool[top.id];
      if (!space.Applicable(current, t)) continue;
      SearchState next = space.Apply(current, top.id, t);
      ++result.stats.generated;
      if (space.IsComplete(next)) {
        const double cost = next.acc.Full();
        if (cost < best_cost) {
          best_cost = cost;
          best = std::move(next);
        }
        continue;
      }
      if (options.prune_properties) space.PruneRedundant(&next);
      next.ecost = space.Ecost(next);
      if (!(next.score() < best_cost)) continue;
      if (options.dominance && dominated(next)) {
        ++result.stats.dominated;
        continue;
      }
      insert(std::move(next));
    }
  }

  if (!best) {
    if (result.budget_exhausted) return result;
    return absl::NotFoundError(
        "no complete program: the theory cannot produce the loss in "
        "AllReduce form");
  }
  result.found = true;
  // Zero-cost instructions that feed nothing can ride along on an optimal
  // path; dropping them leaves every per-device sum bitwise unchanged.
  result.program = RemoveDeadComputation(
      ProgramOf(pool, *best),
      DistTensorRef{graph.loss(), Form::AllReduce()});
  result.cost = best_cost;
  assert(model.IterationTime(result.program, ratios).total_s == best_cost);
  return result;
}

}  // namespace spmdsynth
