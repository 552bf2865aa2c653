#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "epx/sim.hpp"
#include "epx/topology.hpp"

namespace epx {

enum class ViolationKind : std::uint8_t { E1, E2, A1, A2, A3 };

inline std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::E1: return "E1";
    case ViolationKind::E2: return "E2";
    case ViolationKind::A1: return "A1";
    case ViolationKind::A2: return "A2";
    case ViolationKind::A3: return "A3";
  }
  return "?";
}

struct Violation {
  ViolationKind kind = ViolationKind::E1;
  std::optional<InstanceId> instance;
  std::vector<ReplicaId> replicas;
  std::string detail;
  Schedule witness;
};

// Agreement: no two replicas commit different deps for one instance, and no
// replica ever received a disagreeing Commit.
inline std::optional<Violation> check_E1(const WorldState& w) {
  for (const auto& r : w.replicas)
    if (!r.commit_conflicts.empty()) {
      const auto& c = r.commit_conflicts.front();
      return Violation{ViolationKind::E1, c.instance, {r.self}, "disagreeing Commit received", {}};
    }
  std::map<InstanceId, std::pair<ReplicaId, const DepSet*>> first;
  for (const auto& r : w.replicas) {
    for (const auto& [inst, rec] : r.log) {
      if (rec.status != Status::committed) continue;
      auto [it, fresh] = first.try_emplace(inst, r.self, &rec.deps);
      if (!fresh && *it->second.second != rec.deps)
        return Violation{ViolationKind::E1, inst, {it->second.first, r.self},
                         "replicas committed different deps", {}};
    }
  }
  return std::nullopt;
}

// Every committed conflicting pair is ordered one way or the other, at each
// replica.
inline std::optional<Violation> check_E2(const WorldState& w) {
  const auto& rel = w.topology->conflicts;
  for (const auto& r : w.replicas) {
    for (auto a = r.log.begin(); a != r.log.end(); ++a) {
      if (a->second.status != Status::committed || !a->second.command) continue;
      for (auto b = std::next(a); b != r.log.end(); ++b) {
        if (b->second.status != Status::committed || !b->second.command) continue;
        if (*a->second.command == *b->second.command) continue;
        if (!rel.conflicts(*a->second.command, *b->second.command)) continue;
        if (!a->second.deps.contains(b->first) && !b->second.deps.contains(a->first))
          return Violation{ViolationKind::E2, a->first, {r.self},
                           "conflicting commits with no dependency either way", {}};
      }
    }
  }
  return std::nullopt;
}

namespace detail {

// LogAt: int replica -> const std::map<InstanceId, InstanceRecord>&.
template <typename PrevLog, typename NextLog>
void check_step(PrevLog prev, NextLog next, int replicas, const std::vector<Vote>& votes,
                Mode mode, std::vector<Violation>& out) {
  for (int r = 0; r < replicas; ++r) {
    const auto& before = prev(r);
    const auto& after = next(r);
    for (const auto& [inst, rec] : before) {
      auto it = after.find(inst);
      if (it == after.end() || it->second.bal < rec.bal)
        out.push_back(Violation{ViolationKind::A1, inst, {ReplicaId{r}},
                                "joined ballot decreased", {}});
    }
  }
  for (const auto& v : votes) {
    const auto& after = next(v.replica.value);
    auto it = after.find(v.instance);
    if (it == after.end() || it->second.bal != v.ballot ||
        (mode == Mode::fixed && it->second.vbal != v.ballot)) {
      out.push_back(Violation{ViolationKind::A2, v.instance, {v.replica},
                              "vote cast outside the last joined ballot", {}});
      continue;
    }
    if (mode == Mode::fixed && v.phase == VotePhase::accept) {
      const auto& before = prev(v.replica.value);
      auto old = before.find(v.instance);
      if (old != before.end() && old->second.status == Status::accepted &&
          old->second.vbal == v.ballot && old->second.deps != v.deps)
        out.push_back(Violation{ViolationKind::A3, v.instance, {v.replica},
                                "second value accepted at the same ballot", {}});
    }
  }
}

}  // namespace detail

// Local ballot discipline over a recorded trace: joins never go back (A1),
// votes land on the joined ballot (A2) and, in FIXED mode, no ballot gets two
// different accepted values from one replica (A3).
inline std::vector<Violation> check_ballot_invariants(const Trace& trace) {
  std::vector<Violation> out;
  const LogSnapshot* prev = &trace.initial;
  Schedule prefix;
  for (const auto& step : trace.steps) {
    prefix.push_back(step.entry);
    const int n = static_cast<int>(std::min(prev->size(), step.logs.size()));
    const std::size_t before = out.size();
    detail::check_step([&](int r) -> const auto& { return (*prev)[r]; },
                       [&](int r) -> const auto& { return step.logs[r]; }, n, step.votes,
                       trace.mode, out);
    for (std::size_t i = before; i < out.size(); ++i) out[i].witness = prefix;
    prev = &step.logs;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bounded exhaustive exploration.

struct ExploreConfig {
  std::shared_ptr<const Topology> topology;
  Mode mode = Mode::fixed;
  int depth = 0;               // total actions, prefix included
  Schedule prefix;
  std::size_t max_states = 20'000'000;
  int workers = 1;
};

struct ExploreStats {
  std::size_t states = 0;
  std::size_t transitions = 0;
  int max_depth = 0;
  bool operator==(const ExploreStats&) const = default;
};

struct ExploreResult {
  enum class Status { ok, violation, budget_exceeded, prefix_blocked };
  Status status = Status::ok;
  ExploreStats stats;
  std::optional<Violation> violation;
  std::string message;
};

namespace detail {

inline void put(std::string& s, std::uint32_t v) {
  do {
    s.push_back(static_cast<char>((v & 0x7f) | (v > 0x7f ? 0x80 : 0)));
    v >>= 7;
  } while (v);
}
inline void put(std::string& s, InstanceId i) {
  put(s, static_cast<std::uint32_t>(i.owner.value));
  put(s, static_cast<std::uint32_t>(i.slot));
}
inline void put(std::string& s, const DepSet& d) {
  put(s, static_cast<std::uint32_t>(d.size()));
  for (auto i : d) put(s, i);
}
inline void put(std::string& s, std::optional<CommandId> c) {
  put(s, c ? static_cast<std::uint32_t>(c->value) + 1 : 0u);
}
inline void put(std::string& s, std::optional<Ballot> b) { put(s, b ? b->value + 1 : 0u); }

inline std::string encode(const Envelope& e) {
  std::string s;
  put(s, static_cast<std::uint32_t>(e.from.value));
  put(s, static_cast<std::uint32_t>(e.to.value));
  put(s, static_cast<std::uint32_t>(e.body.index()));
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        put(s, m.instance);
        if constexpr (requires { m.ballot; }) put(s, m.ballot.value);
        if constexpr (std::is_same_v<M, PrepareReply>) {
          put(s, m.reported_bal);
          put(s, static_cast<std::uint32_t>(m.status));
          put(s, m.command);
          put(s, m.deps);
        } else {
          if constexpr (requires { m.command; }) put(s, std::optional<CommandId>(m.command));
          if constexpr (requires { m.deps; }) put(s, m.deps);
        }
      },
      e.body);
  return s;
}

}  // namespace detail

// Byte string identifying a world up to step numbering: maps and sets are
// already ordered, in-flight messages are sorted and dead ones dropped.
inline std::string canonical_key(const WorldState& w) {
  using detail::put;
  std::string s;
  put(s, w.next_ballot);
  put(s, static_cast<std::uint32_t>(w.proposed.size()));
  for (auto c : w.proposed) put(s, static_cast<std::uint32_t>(c.value));
  for (const auto& r : w.replicas) {
    put(s, static_cast<std::uint32_t>(r.next_slot));
    put(s, static_cast<std::uint32_t>(r.log.size()));
    for (const auto& [inst, rec] : r.log) {
      put(s, inst);
      put(s, rec.command);
      put(s, static_cast<std::uint32_t>(rec.status));
      put(s, rec.bal.value);
      put(s, rec.vbal);
      put(s, rec.deps);
    }
    put(s, static_cast<std::uint32_t>(r.leader_of.size()));
    for (auto i : r.leader_of) put(s, i);
    put(s, static_cast<std::uint32_t>(r.preparing.size()));
    for (auto i : r.preparing) put(s, i);
    put(s, static_cast<std::uint32_t>(r.commit_conflicts.size()));
    for (const auto& c : r.commit_conflicts) {
      put(s, c.instance);
      put(s, c.kept);
      put(s, c.offered);
    }
  }
  std::vector<std::string> msgs;
  msgs.reserve(w.in_flight.size());
  for (const auto& e : w.in_flight)
    if (!dead_message(w, e)) msgs.push_back(detail::encode(e));
  std::sort(msgs.begin(), msgs.end());
  put(s, static_cast<std::uint32_t>(msgs.size()));
  for (const auto& m : msgs) {
    put(s, static_cast<std::uint32_t>(m.size()));
    s += m;
  }
  return s;
}

namespace detail {

// All monitors for one transition; first violation wins.
inline std::optional<Violation> check_transition(const WorldState& before,
                                                 const WorldState& after,
                                                 const std::vector<Vote>& votes) {
  std::vector<Violation> local;
  check_step([&](int r) -> const auto& { return before.replicas[r].log; },
             [&](int r) -> const auto& { return after.replicas[r].log; },
             static_cast<int>(after.replicas.size()), votes, after.mode, local);
  if (!local.empty()) return local.front();
  if (auto v = check_E1(after)) return v;
  if (auto v = check_E2(after)) return v;
  return std::nullopt;
}

class Search {
 public:
  Search(std::size_t max_states, std::atomic<std::size_t>& shared_states,
         const std::atomic<std::size_t>* cancel_below, std::size_t my_index)
      : max_states_(max_states),
        shared_states_(shared_states),
        cancel_below_(cancel_below),
        my_index_(my_index) {}

  // Returns true when a violation was found (stored in found_).
  bool dfs(const WorldState& w, int depth_left, int depth_so_far, Schedule& path) {
    if (cancelled()) return false;
    auto key = canonical_key(w);
    auto [it, fresh] = visited_.try_emplace(std::move(key), depth_left);
    if (!fresh) {
      if (it->second >= depth_left) return false;
      it->second = depth_left;
    } else {
      ++stats.states;
      if (shared_states_.fetch_add(1) + 1 > max_states_) {
        budget_exceeded = true;
        return false;
      }
    }
    stats.max_depth = std::max(stats.max_depth, depth_so_far);
    if (depth_left == 0) return false;
    for (auto& succ : successors(w, true)) {
      ++stats.transitions;
      path.push_back(succ.entry);
      if (auto v = check_transition(w, succ.result.world, succ.result.effects.votes)) {
        v->witness = path;
        found = std::move(v);
        stats.max_depth = std::max(stats.max_depth, depth_so_far + 1);
        return true;
      }
      if (dfs(succ.result.world, depth_left - 1, depth_so_far + 1, path)) return true;
      if (budget_exceeded || cancelled()) return false;
      path.pop_back();
    }
    return false;
  }

  ExploreStats stats;
  std::optional<Violation> found;
  bool budget_exceeded = false;

 private:
  bool cancelled() const {
    return budget_exceeded || (cancel_below_ && cancel_below_->load() < my_index_);
  }

  std::unordered_map<std::string, int> visited_;
  std::size_t max_states_;
  std::atomic<std::size_t>& shared_states_;
  const std::atomic<std::size_t>* cancel_below_;
  std::size_t my_index_;
};

}  // namespace detail

// Depth-first enumeration of every schedule up to `depth` actions from the
// initial world (after the scripted prefix), checking all monitors after each
// transition. Deterministic for a given config, whatever the worker count.
inline ExploreResult explore(const ExploreConfig& cfg) {
  if (!cfg.topology) throw std::invalid_argument("explore() needs a topology");
  if (cfg.depth < 0) throw std::invalid_argument("depth must be non-negative");
  if (static_cast<std::size_t>(cfg.depth) < cfg.prefix.size())
    throw std::invalid_argument("depth bound is shorter than the scripted prefix");

  ExploreResult result;
  WorldState w = WorldState::initial(cfg.topology, cfg.mode);
  Schedule path;
  for (const auto& e : cfg.prefix) {
    auto r = apply(w, e);
    if (!r.applied()) {
      result.status = ExploreResult::Status::prefix_blocked;
      result.message = "prefix entry " + std::to_string(path.size() + 1) + " not applicable: " +
                       r.reason;
      return result;
    }
    path.push_back(e);
    ++result.stats.transitions;
    if (auto v = detail::check_transition(w, r.world, r.effects.votes)) {
      v->witness = path;
      result.status = ExploreResult::Status::violation;
      result.violation = std::move(v);
      return result;
    }
    w = std::move(r.world);
  }
  const int base_depth = static_cast<int>(path.size());
  const int remaining = cfg.depth - base_depth;

  std::atomic<std::size_t> states{0};
  auto finish = [&](detail::Search& s, ExploreStats& total) {
    total.states += s.stats.states;
    total.transitions += s.stats.transitions;
    total.max_depth = std::max(total.max_depth, s.stats.max_depth);
  };

  if (cfg.workers <= 1 || remaining == 0) {
    detail::Search s(cfg.max_states, states, nullptr, 0);
    s.dfs(w, remaining, base_depth, path);
    finish(s, result.stats);
    if (s.found) {
      result.status = ExploreResult::Status::violation;
      result.violation = std::move(s.found);
    } else if (s.budget_exceeded) {
      result.status = ExploreResult::Status::budget_exceeded;
    }
  } else {
    // One independent search per root branch; results merge in branch order.
    ++result.stats.states;  // the root
    result.stats.max_depth = base_depth;
    auto roots = successors(w, true);
    const std::size_t none = std::numeric_limits<std::size_t>::max();
    std::atomic<std::size_t> best{none};
    std::atomic<std::size_t> next{0};
    std::vector<std::optional<detail::Search>> searches(roots.size());
    std::mutex mu;
    auto work = [&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= roots.size()) return;
        if (best.load() < i) continue;
        detail::Search s(cfg.max_states, states, &best, i);
        Schedule local = path;
        local.push_back(roots[i].entry);
        ++s.stats.transitions;
        if (auto v = detail::check_transition(w, roots[i].result.world,
                                              roots[i].result.effects.votes)) {
          v->witness = local;
          s.found = std::move(v);
        } else {
          s.dfs(roots[i].result.world, remaining - 1, base_depth + 1, local);
        }
        if (s.found) {
          std::size_t cur = best.load();
          while (i < cur && !best.compare_exchange_weak(cur, i)) {
          }
        }
        std::lock_guard lock(mu);
        searches[i].emplace(std::move(s));
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < cfg.workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();

    const std::size_t stop = best.load();
    for (std::size_t i = 0; i < roots.size() && i <= stop; ++i) {
      if (!searches[i]) continue;
      finish(*searches[i], result.stats);
      if (searches[i]->budget_exceeded) result.status = ExploreResult::Status::budget_exceeded;
    }
    if (stop != none) {
      result.status = ExploreResult::Status::violation;
      result.violation = std::move(searches[stop]->found);
    }
  }

  if (result.violation) {
    // Confirm on the concrete replay; the visited set only prunes.
    auto trace = run(WorldState::initial(cfg.topology, cfg.mode), result.violation->witness);
    bool confirmed = false;
    if (trace.status == Trace::Status::completed) {
      for (const auto& v : check_ballot_invariants(trace))
        confirmed |= v.kind == result.violation->kind;
      if (auto v = check_E1(trace.final_world)) confirmed |= v->kind == result.violation->kind;
      if (auto v = check_E2(trace.final_world)) confirmed |= v->kind == result.violation->kind;
    }
    if (!confirmed) throw std::logic_error("explorer reported a violation its witness does not reproduce");
  }
  return result;
}

}  // namespace epx
