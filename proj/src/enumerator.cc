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

#include "spmdsynth/enumerator.h"

#include <algorithm>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>

#include "absl/container/flat_hash_map.h"

namespace spmdsynth {
namespace {

// Everything the future of a state depends on (plus the realized set when
// lower bounds are checked against it).
std::string StateKey(const SearchState& s, bool with_realized) {
  std::string key;
  auto put = [&](const void* p, size_t n) {
    key.append(static_cast<const char*>(p), n);
  };
  for (uint64_t w : s.props.words()) put(&w, sizeof(w));
  put(&s.acc.closed, sizeof(double));
  put(&s.acc.open_comm, sizeof(double));
  for (double v : s.acc.open_comp) put(&v, sizeof(double));
  if (with_realized) {
    for (bool r : s.realized) key.push_back(r ? '1' : '0');
  }
  return key;
}

}  // namespace

EnumerateResult Enumerate(const Graph& graph, const Theory& theory,
                          const CostModel& model, const ShardingRatios& ratios,
                          const EnumerateOptions& options) {
  SearchSpace space(graph, theory, model, ratios);
  const int max_length =
      options.max_length >= 0 ? options.max_length : 2 * graph.size() + 4;
  const bool record = options.record_completions;

  EnumerateResult result;
  std::vector<SearchState>& pool = result.pool;
  std::vector<std::vector<int>> edges;
  absl::flat_hash_map<std::string, int> seen;
  double best = std::numeric_limits<double>::infinity();
  int best_id = -1;

  auto add = [&](SearchState state) {
    const int id = static_cast<int>(pool.size());
    pool.push_back(std::move(state));
    edges.emplace_back();
    result.complete.push_back(space.IsComplete(pool.back()));
    return id;
  };

  std::vector<int> level = {add(space.Initial())};
  seen[StateKey(pool[0], record)] = 0;
  while (!level.empty()) {
    std::vector<int> next_level;
    for (int id : level) {
      for (int t = 0; t < space.num_triples(); ++t) {
        if (!space.Applicable(pool[id], t)) continue;
        SearchState next = space.Apply(pool[id], id, t);
        if (next.length > max_length) continue;
        const bool complete = space.IsComplete(next);
        const double full = next.acc.Full();
        // Completion costs below a state are needed in full when recording.
        if (options.branch_and_bound && !record && !(full < best)) continue;
        if (complete) {
          const int cid = add(std::move(next));
          edges[id].push_back(cid);
          if (full < best) {
            best = full;
            best_id = cid;
          }
          continue;
        }
        next.ecost = space.Ecost(next);
        std::string key = StateKey(next, record);
        auto it = seen.find(key);
        if (it != seen.end()) {
          edges[id].push_back(it->second);
          continue;
        }
        if (static_cast<int64_t>(pool.size()) >= options.max_states) {
          result.truncated = true;
          continue;
        }
        const int nid = add(std::move(next));
        seen.emplace(std::move(key), nid);
        edges[id].push_back(nid);
        next_level.push_back(nid);
      }
    }
    level = std::move(next_level);
  }
  result.states = static_cast<int64_t>(pool.size());

  if (best_id >= 0) {
    result.found = true;
    result.cost = best;
    result.program = ProgramOf(pool, pool[best_id]);
  }

  if (record) {
    // Each step adds a form property and nothing is removed, so processing
    // states by decreasing property count visits children first.
    std::vector<int> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<size_t> count(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) count[i] = pool[i].props.Count();
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return count[a] > count[b]; });
    result.best_completion.assign(pool.size(),
                                  std::numeric_limits<double>::infinity());
    for (int id : order) {
      if (result.complete[id]) {
        result.best_completion[id] = pool[id].acc.Full();
        continue;
      }
      for (int child : edges[id]) {
        result.best_completion[id] =
            std::min(result.best_completion[id], result.best_completion[child]);
      }
    }
  } else {
    result.pool.clear();
    result.complete.clear();
  }
  return result;
}

EnumerateResult Enumerate(const Graph& graph, const CostModel& model,
                          const ShardingRatios& ratios,
                          const EnumerateOptions& options) {
  SearchOptions search;
  search.fuse = false;
  search.guards = true;
  return Enumerate(graph,
                   BuildSearchTheory(graph, model.num_devices(), search),
                   model, ratios, options);
}

}  // namespace spmdsynth
