#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "epx/replica.hpp"
#include "epx/topology.hpp"
#include "epx/types.hpp"

namespace epx {

// Schedule vocabulary. The first eight mirror the actions of the TLA+
// counterexample; Phase1Fast and Commit complete the protocol for the
// explorer.
enum class Action : std::uint8_t {
  Propose,
  Phase1Reply,
  Phase1Fast,
  Phase1Slow,
  Phase2Reply,
  Phase2Finalize,
  SendPrepare,
  ReplyPrepare,
  PrepareFinalize,
  Commit,
};

inline constexpr std::array<std::pair<Action, std::string_view>, 10> kActionNames{{
    {Action::Propose, "Propose"},
    {Action::Phase1Reply, "Phase1Reply"},
    {Action::Phase1Fast, "Phase1Fast"},
    {Action::Phase1Slow, "Phase1Slow"},
    {Action::Phase2Reply, "Phase2Reply"},
    {Action::Phase2Finalize, "Phase2Finalize"},
    {Action::SendPrepare, "SendPrepare"},
    {Action::ReplyPrepare, "ReplyPrepare"},
    {Action::PrepareFinalize, "PrepareFinalize"},
    {Action::Commit, "Commit"},
}};

inline std::string_view to_string(Action a) {
  for (auto [act, name] : kActionNames)
    if (act == a) return name;
  return "?";
}

inline std::optional<Action> parse_action(std::string_view s) {
  for (auto [act, name] : kActionNames)
    if (name == s) return act;
  return std::nullopt;
}

// Narrows which in-flight message a delivery action consumes.
struct MessageKey {
  std::optional<ReplicaId> from;
  std::optional<Ballot> ballot;
  std::optional<InstanceId> instance;

  bool empty() const { return !from && !ballot && !instance; }
  bool matches(const Envelope& e) const {
    return (!from || e.from == *from) && (!ballot || ballot_of(e.body) == *ballot) &&
           (!instance || instance_of(e.body) == *instance);
  }
  auto operator<=>(const MessageKey&) const = default;
};

struct ScheduleEntry {
  Action action = Action::Propose;
  ReplicaId actor;
  std::optional<InstanceId> instance;
  std::optional<Quorum> quorum;
  std::optional<CommandId> command;
  MessageKey key;
  // PrepareFinalize only: tie-break among equally ranked accepted replies.
  std::optional<ReplicaId> prefer;

  bool operator==(const ScheduleEntry&) const = default;
};

using Schedule = std::vector<ScheduleEntry>;

struct WorldState {
  std::shared_ptr<const Topology> topology;
  Mode mode = Mode::buggy;
  std::vector<ReplicaState> replicas;
  std::vector<Envelope> in_flight;
  std::uint32_t next_ballot = 1;  // recovery ballots come from one counter per run
  std::uint64_t step_index = 0;
  std::set<CommandId> proposed;

  static WorldState initial(std::shared_ptr<const Topology> topo, Mode mode) {
    topo->validate();
    WorldState w;
    w.mode = mode;
    for (int r = 0; r < topo->replica_count(); ++r) w.replicas.push_back(ReplicaState{ReplicaId{r}});
    w.topology = std::move(topo);
    return w;
  }

  const ReplicaState& replica(ReplicaId r) const { return replicas.at(r.value); }
  ReplicaState& replica(ReplicaId r) { return replicas.at(r.value); }

  std::vector<ReplicaId> everyone() const {
    std::vector<ReplicaId> out;
    for (const auto& r : replicas) out.push_back(r.self);
    return out;
  }
};

struct ApplyResult {
  enum class Kind { applied, blocked, ambiguous };
  Kind kind = Kind::blocked;
  std::string reason;                 // blocked/ambiguous diagnostics
  std::optional<Envelope> delivered;  // delivery actions only
  Effects effects;
  std::vector<Envelope> candidates;   // ambiguous only
  WorldState world;                   // valid when applied

  bool applied() const { return kind == Kind::applied; }
};

namespace detail {

inline ApplyResult blocked(std::string why) {
  ApplyResult r;
  r.kind = ApplyResult::Kind::blocked;
  r.reason = std::move(why);
  return r;
}

template <typename Msg>
std::vector<std::size_t> inbox(const WorldState& w, ReplicaId to, const MessageKey& key,
                               std::optional<InstanceId> instance) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < w.in_flight.size(); ++i) {
    const auto& e = w.in_flight[i];
    if (e.to != to || !std::holds_alternative<Msg>(e.body) || !key.matches(e)) continue;
    if (instance && instance_of(e.body) != *instance) continue;
    out.push_back(i);
  }
  return out;
}

// One reply per quorum member (excluding `self` when asked), matching the
// instance and ballot. Returns indices into in_flight.
template <typename Msg>
std::vector<std::size_t> collect_replies(const WorldState& w, ReplicaId to, InstanceId inst,
                                         Ballot ballot, const Quorum& q, bool include_self) {
  std::vector<std::size_t> out;
  std::set<ReplicaId> taken;
  for (std::size_t i = 0; i < w.in_flight.size(); ++i) {
    const auto& e = w.in_flight[i];
    const auto* m = std::get_if<Msg>(&e.body);
    if (!m || e.to != to || m->instance != inst || m->ballot != ballot) continue;
    if (!q.contains(e.from) || (!include_self && e.from == to) || taken.contains(e.from)) continue;
    taken.insert(e.from);
    out.push_back(i);
  }
  return out;
}

inline void erase_indices(std::vector<Envelope>& v, std::vector<std::size_t> idx) {
  std::sort(idx.rbegin(), idx.rend());
  for (auto i : idx) v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
}

inline bool is_quorum_of(const Topology& t, ReplicaId r, const Quorum& q) {
  return t.is_slow_quorum(r, q) || t.is_fast_quorum(r, q);
}

}  // namespace detail

// Applies one schedule entry. Never throws for protocol-level reasons:
// unmet preconditions come back as blocked, leaving `world` untouched.
inline ApplyResult apply(const WorldState& world, const ScheduleEntry& entry) {
  using detail::blocked;
  const Topology& topo = *world.topology;
  if (entry.actor.value < 0 || entry.actor.value >= topo.replica_count())
    return blocked("unknown actor");

  ApplyResult out;
  out.world = world;
  WorldState& w = out.world;
  ReplicaState& me = w.replica(entry.actor);
  const auto everyone = w.everyone();

  // nullopt on success; otherwise the blocked/ambiguous result to return.
  auto deliver = [&]<typename Msg>(auto&& handler) -> std::optional<ApplyResult> {
    auto found = detail::inbox<Msg>(w, entry.actor, entry.key, entry.instance);
    if (found.empty()) return blocked("no matching message in flight");
    for (auto i : found) {
      if (!(w.in_flight[i] == w.in_flight[found.front()])) {
        ApplyResult amb;
        amb.kind = ApplyResult::Kind::ambiguous;
        amb.reason = "several in-flight messages match; add a message key";
        for (auto j : found) amb.candidates.push_back(w.in_flight[j]);
        return amb;
      }
    }
    Envelope msg = w.in_flight[found.front()];
    w.in_flight.erase(w.in_flight.begin() + static_cast<std::ptrdiff_t>(found.front()));
    out.effects = handler(std::get<Msg>(msg.body), msg.from);
    out.delivered = std::move(msg);
    return std::nullopt;
  };

  auto require_instance = [&]() -> std::optional<ApplyResult> {
    if (!entry.instance) return blocked("action needs an instance");
    if (!entry.quorum) return blocked("action needs a quorum");
    return std::nullopt;
  };

  switch (entry.action) {
    case Action::Propose: {
      if (!entry.command) return blocked("Propose needs a command");
      if (entry.command->value < 0 || entry.command->value >= topo.command_count())
        return blocked("unknown command");
      if (w.proposed.contains(*entry.command)) return blocked("command already proposed");
      Quorum q;
      if (entry.quorum) {
        if (!topo.is_fast_quorum(entry.actor, *entry.quorum))
          return blocked("not a fast quorum of the proposer");
        q = *entry.quorum;
      } else {
        const auto& fq = topo.quorums.fast.at(entry.actor.value);
        if (fq.size() != 1) return blocked("proposer has several fast quorums; name one");
        q = fq.front();
      }
      out.effects = propose(me, w.mode, topo.conflicts, *entry.command, q);
      w.proposed.insert(*entry.command);
      break;
    }
    case Action::Phase1Reply: {
      auto r = deliver.operator()<PreAccept>([&](const PreAccept& m, ReplicaId from) {
        return handle_pre_accept(me, w.mode, topo.conflicts, from, m);
      });
      if (r) return std::move(*r);
      break;
    }
    case Action::Phase2Reply: {
      auto r = deliver.operator()<Accept>(
          [&](const Accept& m, ReplicaId from) { return handle_accept(me, w.mode, from, m); });
      if (r) return std::move(*r);
      break;
    }
    case Action::ReplyPrepare: {
      auto r = deliver.operator()<Prepare>(
          [&](const Prepare& m, ReplicaId from) { return handle_prepare(me, w.mode, from, m); });
      if (r) return std::move(*r);
      break;
    }
    case Action::Commit: {
      auto r = deliver.operator()<epx::Commit>(
          [&](const epx::Commit& m, ReplicaId) { return handle_commit(me, w.mode, m); });
      if (r) return std::move(*r);
      break;
    }
    case Action::Phase1Fast:
    case Action::Phase1Slow: {
      if (auto bad = require_instance()) return *bad;
      const auto inst = *entry.instance;
      const auto& q = *entry.quorum;
      if (!detail::is_quorum_of(topo, entry.actor, q)) return blocked("not a quorum of the leader");
      const auto* rec = me.find(inst);
      if (!rec || rec->status != Status::pre_accepted || !me.leader_of.contains(inst))
        return blocked("actor is not leading a pre-accepted instance");
      if (entry.action == Action::Phase1Fast &&
          (rec->bal != kFastBallot || !topo.is_fast_quorum(entry.actor, q)))
        return blocked("fast path needs the fast ballot and a fast quorum");
      auto idx = detail::collect_replies<PreAcceptReply>(w, entry.actor, inst, rec->bal, q, false);
      Replies replies;
      for (auto i : idx)
        replies.emplace_back(w.in_flight[i].from, std::get<PreAcceptReply>(w.in_flight[i].body));
      auto outcome = phase1_resolve(entry.actor, *rec, replies, q);
      if (!outcome) return blocked("pre-accept replies missing");
      const CommandId cmd = *rec->command;
      const Ballot ballot = rec->bal;
      if (entry.action == Action::Phase1Fast) {
        if (outcome->kind != Phase1Outcome::Kind::fast_commit)
          return blocked("pre-accept replies disagree");
        out.effects = commit_locally(me, w.mode, inst, cmd, outcome->deps, everyone);
      } else {
        DepSet deps = rec->deps;
        for (const auto& [from, reply] : replies) deps.insert(reply.deps.begin(), reply.deps.end());
        detail::cast_vote(me, out.effects, w.mode, inst, cmd, Status::accepted, ballot, deps);
        detail::send_to_others(me, out.effects, q, Accept{inst, ballot, cmd, deps});
      }
      detail::erase_indices(w.in_flight, idx);
      break;
    }
    case Action::Phase2Finalize: {
      if (auto bad = require_instance()) return *bad;
      const auto inst = *entry.instance;
      const auto& q = *entry.quorum;
      if (!detail::is_quorum_of(topo, entry.actor, q)) return blocked("not a quorum of the leader");
      const auto* rec = me.find(inst);
      if (!rec || rec->status != Status::accepted || !me.leader_of.contains(inst))
        return blocked("actor is not leading an accepted instance");
      auto idx = detail::collect_replies<AcceptReply>(w, entry.actor, inst, rec->bal, q, false);
      AcceptReplies replies;
      for (auto i : idx)
        replies.emplace_back(w.in_flight[i].from, std::get<AcceptReply>(w.in_flight[i].body));
      auto fx = phase2_finalize(me, inst, q, replies, everyone);
      if (!fx) return blocked("accept replies missing");
      out.effects = std::move(*fx);
      detail::erase_indices(w.in_flight, idx);
      break;
    }
    case Action::SendPrepare: {
      if (auto bad = require_instance()) return *bad;
      const auto inst = *entry.instance;
      if (!topo.is_slow_quorum(entry.actor, *entry.quorum))
        return blocked("not a slow quorum of the recoverer");
      if (inst.owner.value < 0 || inst.owner.value >= topo.replica_count() ||
          w.replica(inst.owner).next_slot <= inst.slot)
        return blocked("instance was never opened");
      if (w.next_ballot > topo.max_ballot) return blocked("ballot budget exhausted");
      if (const auto* rec = me.find(inst); rec && rec->status == Status::committed)
        return blocked("instance already committed at the recoverer");
      out.effects = send_prepare(me, inst, *entry.quorum, Ballot{w.next_ballot});
      ++w.next_ballot;
      break;
    }
    case Action::PrepareFinalize: {
      if (auto bad = require_instance()) return *bad;
      const auto inst = *entry.instance;
      const auto& q = *entry.quorum;
      if (!topo.is_slow_quorum(entry.actor, q)) return blocked("not a slow quorum of the recoverer");
      const auto* rec = me.find(inst);
      if (!me.preparing.contains(inst) || !rec || rec->status == Status::committed)
        return blocked("actor is not recovering this instance");
      auto idx = detail::collect_replies<PrepareReply>(w, entry.actor, inst, rec->bal, q, true);
      PrepareReplies replies;
      for (auto i : idx)
        replies.emplace_back(w.in_flight[i].from, std::get<PrepareReply>(w.in_flight[i].body));
      auto decision = decide_recovery(inst, q, replies, entry.prefer);
      if (!decision) return blocked("prepare replies missing");
      out.effects = prepare_finalize(me, w.mode, topo.conflicts, inst, q, *decision, everyone);
      detail::erase_indices(w.in_flight, idx);
      break;
    }
  }

  w.in_flight.insert(w.in_flight.end(), out.effects.sends.begin(), out.effects.sends.end());
  ++w.step_index;
  out.kind = ApplyResult::Kind::applied;
  return out;
}

// Post-step view of one replica's log; snapshots are whole logs because the
// runs are tiny.
using LogSnapshot = std::vector<std::map<InstanceId, InstanceRecord>>;

inline LogSnapshot snapshot(const WorldState& w) {
  LogSnapshot s;
  for (const auto& r : w.replicas) s.push_back(r.log);
  return s;
}

struct TraceStep {
  std::uint64_t index = 0;
  ScheduleEntry entry;
  std::optional<Envelope> delivered;
  std::optional<std::string> suppressed;
  std::vector<Vote> votes;
  LogSnapshot logs;
};

struct Trace {
  enum class Status { completed, blocked, ambiguous };
  Status status = Status::completed;
  std::optional<std::size_t> halted_at;  // 1-based schedule position
  std::string reason;
  std::vector<Envelope> candidates;
  std::vector<TraceStep> steps;
  Mode mode = Mode::buggy;
  LogSnapshot initial;
  WorldState final_world;
};

// Runs entries in order, stopping at the first one that cannot be applied.
inline Trace run(const WorldState& init, const Schedule& schedule) {
  Trace t;
  t.mode = init.mode;
  t.initial = snapshot(init);
  WorldState w = init;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    auto r = apply(w, schedule[i]);
    if (!r.applied()) {
      t.status = r.kind == ApplyResult::Kind::ambiguous ? Trace::Status::ambiguous
                                                        : Trace::Status::blocked;
      t.halted_at = i + 1;
      t.reason = r.reason;
      t.candidates = std::move(r.candidates);
      break;
    }
    w = std::move(r.world);
    t.steps.push_back(TraceStep{w.step_index, schedule[i], std::move(r.delivered),
                                std::move(r.effects.suppressed), std::move(r.effects.votes),
                                snapshot(w)});
  }
  t.final_world = std::move(w);
  return t;
}

namespace detail {

inline auto entry_order_key(const ScheduleEntry& e) {
  return std::make_tuple(to_string(e.action), e.actor, e.instance, e.key.from, e.key.ballot,
                         e.key.instance, e.quorum, e.command, e.prefer);
}

template <typename Msg>
constexpr std::optional<Action> delivery_action() {
  if constexpr (std::is_same_v<Msg, PreAccept>) return Action::Phase1Reply;
  else if constexpr (std::is_same_v<Msg, Accept>) return Action::Phase2Reply;
  else if constexpr (std::is_same_v<Msg, Prepare>) return Action::ReplyPrepare;
  else if constexpr (std::is_same_v<Msg, epx::Commit>) return Action::Commit;
  else return std::nullopt;
}

}  // namespace detail

// A message whose delivery can only ever be a no-op: ballots never go down
// and committed records never change, so once dead it stays dead.
inline bool dead_message(const WorldState& w, const Envelope& env) {
  const auto& to = w.replicas.at(env.to.value);
  const auto* rec = to.find(instance_of(env.body));
  if (!rec) return false;
  return std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Commit>) {
          return rec->status == Status::committed && rec->deps == m.deps;
        } else if constexpr (std::is_same_v<M, Prepare>) {
          return m.ballot <= rec->bal;
        } else {
          if (rec->status == Status::committed) return true;
          if constexpr (std::is_same_v<M, PreAccept>)
            return m.ballot < rec->bal || (m.ballot == rec->bal && rec->status == Status::accepted);
          else
            return m.ballot < rec->bal;
        }
      },
      env.body);
}

struct Successor {
  ScheduleEntry entry;
  ApplyResult result;
};

// Every entry applicable in `world` together with its outcome, in a fixed
// order (action name, actor, instance, then message identity).
// With skip_dead, deliveries of dead messages are left out.
inline std::vector<Successor> successors(const WorldState& world, bool skip_dead = false) {
  const Topology& topo = *world.topology;
  std::vector<ScheduleEntry> cands;

  for (const auto& r : world.replicas) {
    for (int c = 0; c < topo.command_count(); ++c) {
      if (world.proposed.contains(CommandId{c})) continue;
      const auto& fq = topo.quorums.fast.at(r.self.value);
      for (const auto& q : fq) {
        ScheduleEntry e{Action::Propose, r.self};
        e.command = CommandId{c};
        if (fq.size() > 1) e.quorum = q;
        cands.push_back(e);
      }
    }
  }

  for (const auto& env : world.in_flight) {
    auto act = std::visit(
        [](const auto& m) { return detail::delivery_action<std::decay_t<decltype(m)>>(); },
        env.body);
    if (!act || (skip_dead && dead_message(world, env))) continue;
    ScheduleEntry e{*act, env.to};
    e.key = MessageKey{env.from, ballot_of(env.body), instance_of(env.body)};
    cands.push_back(e);
  }

  for (const auto& r : world.replicas) {
    std::vector<Quorum> all_q = topo.quorums.slow.at(r.self.value);
    for (const auto& q : topo.quorums.fast.at(r.self.value))
      if (std::find(all_q.begin(), all_q.end(), q) == all_q.end()) all_q.push_back(q);
    for (auto inst : r.leader_of) {
      for (const auto& q : all_q)
        for (auto act : {Action::Phase1Fast, Action::Phase1Slow, Action::Phase2Finalize})
          cands.push_back(ScheduleEntry{act, r.self, inst, q});
    }
    for (auto inst : r.preparing) {
      for (const auto& q : topo.quorums.slow.at(r.self.value)) {
        cands.push_back(ScheduleEntry{Action::PrepareFinalize, r.self, inst, q});
        for (const auto& member : q) {
          ScheduleEntry e{Action::PrepareFinalize, r.self, inst, q};
          e.prefer = member;
          cands.push_back(e);
        }
      }
    }
    if (world.next_ballot <= topo.max_ballot) {
      for (const auto& owner : world.replicas) {
        for (int slot = 1; slot < owner.next_slot; ++slot) {
          const InstanceId inst{owner.self, slot};
          if (const auto* rec = r.find(inst); rec && rec->status == Status::committed) continue;
          for (const auto& q : topo.quorums.slow.at(r.self.value))
            cands.push_back(ScheduleEntry{Action::SendPrepare, r.self, inst, q});
        }
      }
    }
  }

  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    return detail::entry_order_key(a) < detail::entry_order_key(b);
  });
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());

  std::vector<Successor> out;
  for (auto& e : cands) {
    auto r = apply(world, e);
    if (!r.applied()) continue;
    if (e.action == Action::PrepareFinalize) {
      // Keep a preference only when it changes the outcome.
      bool duplicate = false;
      for (const auto& prev : out)
        if (prev.entry.action == Action::PrepareFinalize && prev.entry.actor == e.actor &&
            prev.entry.instance == e.instance && prev.entry.quorum == e.quorum &&
            prev.result.world.replicas == r.world.replicas &&
            prev.result.world.in_flight == r.world.in_flight)
          duplicate = true;
      if (duplicate) continue;
    }
    out.push_back(Successor{std::move(e), std::move(r)});
  }
  return out;
}

inline std::vector<ScheduleEntry> enabled_actions(const WorldState& world) {
  std::vector<ScheduleEntry> out;
  for (auto& s : successors(world)) out.push_back(std::move(s.entry));
  return out;
}

}  // namespace epx
