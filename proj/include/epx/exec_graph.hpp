#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>
#include <vector>

#include "epx/replica.hpp"
#include "epx/types.hpp"

namespace epx {

// Committed instances and their dependency edges (instance -> each dep).
// Edge targets missing from `nodes` are pending (not committed yet).
struct CommitGraph {
  std::map<InstanceId, DepSet> nodes;

  static CommitGraph from_replica(const ReplicaState& r) {
    CommitGraph g;
    for (const auto& [inst, rec] : r.log)
      if (rec.status == Status::committed) g.nodes.emplace(inst, rec.deps);
    return g;
  }

  bool contains(InstanceId i) const { return nodes.contains(i); }
};

// True when every instance reachable through dependency edges is committed.
inline bool executable(const CommitGraph& g, InstanceId inst) {
  if (!g.contains(inst)) throw std::invalid_argument("executable() needs a committed instance");
  std::set<InstanceId> seen{inst};
  std::vector<InstanceId> todo{inst};
  while (!todo.empty()) {
    auto cur = todo.back();
    todo.pop_back();
    auto it = g.nodes.find(cur);
    if (it == g.nodes.end()) return false;
    for (auto d : it->second)
      if (seen.insert(d).second) todo.push_back(d);
  }
  return true;
}

namespace detail {

// Tarjan over the committed graph; node i has edges to its deps.
inline std::vector<std::vector<int>> strongly_connected(const std::vector<std::vector<int>>& adj) {
  const int n = static_cast<int>(adj.size());
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<int> stack;
  std::vector<std::vector<int>> comps;
  int counter = 0;

  std::function<void(int)> visit = [&](int v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (int w : adj[v]) {
      if (index[w] == -1) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<int> comp;
      int w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      comps.push_back(std::move(comp));
    }
  };
  for (int v = 0; v < n; ++v)
    if (index[v] == -1) visit(v);
  return comps;
}

}  // namespace detail

// Execution order: dependencies in other components first; inside a cycle
// (owner, slot) ascending. Independent components go smallest member first,
// so the result depends only on the graph.
inline std::vector<InstanceId> linearize(const CommitGraph& g) {
  std::vector<InstanceId> ids;
  std::map<InstanceId, int> pos;
  for (const auto& [inst, deps] : g.nodes) {
    pos.emplace(inst, static_cast<int>(ids.size()));
    ids.push_back(inst);
  }
  std::vector<std::vector<int>> adj(ids.size());
  for (const auto& [inst, deps] : g.nodes) {
    for (auto d : deps) {
      auto it = pos.find(d);
      if (it == pos.end())
        throw std::invalid_argument("linearize() needs every dependency committed");
      adj[pos[inst]].push_back(it->second);
    }
  }

  auto comps = detail::strongly_connected(adj);
  std::vector<int> comp_of(ids.size());
  for (std::size_t c = 0; c < comps.size(); ++c) {
    std::sort(comps[c].begin(), comps[c].end());  // ids are already in (owner, slot) order
    for (int v : comps[c]) comp_of[v] = static_cast<int>(c);
  }

  // Component c waits on every component it depends on.
  std::vector<std::set<int>> waits(comps.size());
  std::vector<std::vector<int>> unblocks(comps.size());
  for (std::size_t v = 0; v < ids.size(); ++v)
    for (int d : adj[v])
      if (comp_of[v] != comp_of[d] && waits[comp_of[v]].insert(comp_of[d]).second)
        unblocks[comp_of[d]].push_back(comp_of[v]);

  auto first_member = [&](int c) { return comps[c].front(); };
  auto later = [&](int a, int b) { return first_member(a) > first_member(b); };
  std::priority_queue<int, std::vector<int>, decltype(later)> ready(later);
  std::vector<std::size_t> pending(comps.size());
  for (std::size_t c = 0; c < comps.size(); ++c) {
    pending[c] = waits[c].size();
    if (pending[c] == 0) ready.push(static_cast<int>(c));
  }

  std::vector<InstanceId> order;
  order.reserve(ids.size());
  while (!ready.empty()) {
    int c = ready.top();
    ready.pop();
    for (int v : comps[c]) order.push_back(ids[v]);
    for (int next : unblocks[c])
      if (--pending[next] == 0) ready.push(next);
  }
  return order;
}

}  // namespace epx
