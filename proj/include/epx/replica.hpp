#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "epx/conflict.hpp"
#include "epx/types.hpp"

namespace epx {

// A second Commit for an already committed instance carrying different deps.
// Kept instead of overwriting so the agreement monitor can see it.
struct CommitConflict {
  InstanceId instance;
  DepSet kept;
  DepSet offered;
  bool operator==(const CommitConflict&) const = default;
};

struct ReplicaState {
  ReplicaId self;
  std::map<InstanceId, InstanceRecord> log;
  int next_slot = 1;
  std::set<InstanceId> leader_of;
  std::set<InstanceId> preparing;
  std::vector<CommitConflict> commit_conflicts;

  const InstanceRecord* find(InstanceId i) const {
    auto it = log.find(i);
    return it == log.end() ? nullptr : &it->second;
  }

  bool operator==(const ReplicaState&) const = default;
};

enum class VotePhase : std::uint8_t { pre_accept, accept };

struct Vote {
  ReplicaId replica;
  InstanceId instance;
  Ballot ballot;
  VotePhase phase;
  DepSet deps;
  bool operator==(const Vote&) const = default;
};

// Outputs of one transition. A suppressed input leaves the replica unchanged.
struct Effects {
  std::vector<Envelope> sends;
  std::vector<Vote> votes;
  std::optional<std::string> suppressed;

  void append(Effects&& other) {
    sends.insert(sends.end(), std::make_move_iterator(other.sends.begin()),
                 std::make_move_iterator(other.sends.end()));
    votes.insert(votes.end(), std::make_move_iterator(other.votes.begin()),
                 std::make_move_iterator(other.votes.end()));
    if (other.suppressed) suppressed = std::move(other.suppressed);
  }
};

namespace detail {

inline void cast_vote(ReplicaState& state, Effects& fx, Mode mode, InstanceId inst,
                      CommandId cmd, Status status, Ballot ballot, DepSet deps) {
  auto& rec = state.log[inst];
  rec.command = cmd;
  rec.status = status;
  rec.bal = ballot;
  if (mode == Mode::fixed) rec.vbal = ballot;
  rec.deps = deps;
  fx.votes.push_back(Vote{state.self, inst,
                          ballot,
                          status == Status::accepted ? VotePhase::accept : VotePhase::pre_accept,
                          std::move(deps)});
}

inline void send_to_others(const ReplicaState& state, Effects& fx, const Quorum& q,
                           const Payload& body) {
  for (auto member : q)
    if (member != state.self) fx.sends.push_back(Envelope{state.self, member, body});
}

}  // namespace detail

// Instances known at `state` whose command conflicts with `cmd`, never
// including `exclude` (the instance being computed).
inline DepSet local_conflicts(const ReplicaState& state, CommandId cmd, InstanceId exclude,
                              const ConflictRelation& rel) {
  DepSet out;
  for (const auto& [inst, rec] : state.log) {
    if (inst == exclude || !rec.command || *rec.command == cmd) continue;
    if (rel.conflicts(cmd, *rec.command)) out.insert(inst);
  }
  return out;
}

inline bool has_proposed(const ReplicaState& state, CommandId cmd) {
  for (const auto& [inst, rec] : state.log)
    if (inst.owner == state.self && rec.command == cmd) return true;
  return false;
}

// Opens instance <self, next_slot> at the fast ballot with the proposer's own
// view of the conflicting instances, and pre-accepts at the fast quorum.
inline Effects propose(ReplicaState& state, Mode mode, const ConflictRelation& rel, CommandId cmd,
                       const Quorum& fast_quorum) {
  if (has_proposed(state, cmd))
    throw std::invalid_argument("command already proposed by this replica");
  if (!fast_quorum.contains(state.self))
    throw std::invalid_argument("fast quorum must contain the proposer");
  const InstanceId inst{state.self, state.next_slot++};
  Effects fx;
  DepSet deps = local_conflicts(state, cmd, inst, rel);
  detail::cast_vote(state, fx, mode, inst, cmd, Status::pre_accepted, kFastBallot, deps);
  state.leader_of.insert(inst);
  detail::send_to_others(state, fx, fast_quorum, PreAccept{inst, kFastBallot, cmd, deps});
  return fx;
}

inline Effects handle_pre_accept(ReplicaState& state, Mode mode, const ConflictRelation& rel,
                                 ReplicaId from, const PreAccept& msg) {
  Effects fx;
  if (const auto* rec = state.find(msg.instance)) {
    if (rec->status == Status::committed) {
      fx.suppressed = "pre-accept for a committed instance";
      return fx;
    }
    if (msg.ballot < rec->bal ||
        (msg.ballot == rec->bal && rec->status == Status::accepted)) {
      fx.suppressed = "stale pre-accept at ballot " + std::to_string(msg.ballot.value) +
                      " (joined " + std::to_string(rec->bal.value) + ")";
      return fx;
    }
  }
  DepSet deps = msg.deps;
  deps.merge(local_conflicts(state, msg.command, msg.instance, rel));
  detail::cast_vote(state, fx, mode, msg.instance, msg.command, Status::pre_accepted, msg.ballot,
                    deps);
  state.leader_of.erase(msg.instance);
  fx.sends.push_back(
      Envelope{state.self, from, PreAcceptReply{msg.instance, msg.ballot, std::move(deps)}});
  return fx;
}

struct Phase1Outcome {
  enum class Kind { fast_commit, slow_accept };
  Kind kind;
  DepSet deps;
  bool operator==(const Phase1Outcome&) const = default;
};

using Replies = std::vector<std::pair<ReplicaId, PreAcceptReply>>;

// Decides the end of a phase-1 round led by `leader` over `quorum`. The
// leader's own deps count as its reply. Returns nullopt until every other
// quorum member has replied. Spontaneous agreement commits only at the fast
// ballot; otherwise the union of everything reported goes to the accept phase.
inline std::optional<Phase1Outcome> phase1_resolve(ReplicaId leader,
                                                   const InstanceRecord& leader_rec,
                                                   const Replies& replies,
                                                   const Quorum& quorum) {
  std::set<ReplicaId> seen;
  for (const auto& [from, reply] : replies) {
    if (!quorum.contains(from) || from == leader)
      throw std::invalid_argument("pre-accept reply from outside the quorum");
    seen.insert(from);
  }
  for (auto member : quorum)
    if (member != leader && !seen.contains(member)) return std::nullopt;

  bool unanimous = true;
  DepSet all = leader_rec.deps;
  for (const auto& [from, reply] : replies) {
    if (reply.deps != leader_rec.deps) unanimous = false;
    all.insert(reply.deps.begin(), reply.deps.end());
  }
  if (unanimous && leader_rec.bal == kFastBallot)
    return Phase1Outcome{Phase1Outcome::Kind::fast_commit, leader_rec.deps};
  return Phase1Outcome{Phase1Outcome::Kind::slow_accept, std::move(all)};
}

// Starts recovery of `inst` at ballot `ballot`; the recoverer is sent its own
// Prepare like every other quorum member.
inline Effects send_prepare(ReplicaState& state, InstanceId inst, const Quorum& quorum,
                            Ballot ballot) {
  if (const auto* rec = state.find(inst); rec && rec->status == Status::committed)
    throw std::invalid_argument("instance already committed at the recoverer");
  state.preparing.insert(inst);
  Effects fx;
  for (auto member : quorum) fx.sends.push_back(Envelope{state.self, member, Prepare{inst, ballot}});
  return fx;
}

// Joins msg.ballot and reports the local vote. BUGGY reports the last joined
// ballot; FIXED reports the last voted one.
inline Effects handle_prepare(ReplicaState& state, Mode mode, ReplicaId from, const Prepare& msg) {
  Effects fx;
  auto [it, fresh] = state.log.try_emplace(msg.instance);
  auto& rec = it->second;
  if (!fresh && msg.ballot <= rec.bal) {
    fx.suppressed = "stale prepare at ballot " + std::to_string(msg.ballot.value) + " (joined " +
                    std::to_string(rec.bal.value) + ")";
    return fx;
  }
  PrepareReply reply{msg.instance, msg.ballot, {}, rec.status, rec.command, rec.deps};
  reply.reported_bal = mode == Mode::buggy ? std::optional<Ballot>(rec.bal) : rec.vbal;
  rec.bal = msg.ballot;
  state.leader_of.erase(msg.instance);
  fx.sends.push_back(Envelope{state.self, from, std::move(reply)});
  return fx;
}

struct RecoverCommit {
  CommandId command;
  DepSet deps;
  bool operator==(const RecoverCommit&) const = default;
};
struct RecoverAccept {
  CommandId command;
  DepSet deps;
  ReplicaId source;
  bool operator==(const RecoverAccept&) const = default;
};
struct RestartPhase1 {
  CommandId command;
  bool operator==(const RestartPhase1&) const = default;
};
struct NothingToRecover {
  bool operator==(const NothingToRecover&) const = default;
};

using RecoveryDecision = std::variant<RecoverCommit, RecoverAccept, RestartPhase1, NothingToRecover>;

using PrepareReplies = std::vector<std::pair<ReplicaId, PrepareReply>>;

namespace detail {

// Absent (no vote) orders below every ballot.
inline bool reported_less(const std::optional<Ballot>& a, const std::optional<Ballot>& b) {
  if (!a) return b.has_value();
  return b && *a < *b;
}

}  // namespace detail

// Accepted replies whose reported ballot is maximal among accepted replies,
// in quorum order. More than one entry with differing deps is a tie the
// caller must break.
inline PrepareReplies max_accepted(const PrepareReplies& replies) {
  std::optional<Ballot> best;
  bool any = false;
  for (const auto& [from, r] : replies) {
    if (r.status != Status::accepted) continue;
    if (!any || detail::reported_less(best, r.reported_bal)) best = r.reported_bal;
    any = true;
  }
  PrepareReplies out;
  for (const auto& entry : replies)
    if (entry.second.status == Status::accepted && entry.second.reported_bal == best)
      out.push_back(entry);
  return out;
}

// Picks what the recoverer must do once the whole quorum answered its
// prepare. Returns nullopt while replies are missing.
//  - any committed reply wins outright;
//  - else the accepted reply with the highest reported ballot (ties go to
//    `prefer` when it is among them, else to the lowest replica id);
//  - else pre-accepted replies: identical, none from the owner and from at
//    least |Q|-1 members means they may have been chosen on the fast path,
//    so they are accepted as-is; otherwise phase 1 restarts;
//  - else nobody knows the command.
inline std::optional<RecoveryDecision> decide_recovery(InstanceId inst, const Quorum& quorum,
                                                       PrepareReplies replies,
                                                       std::optional<ReplicaId> prefer = {}) {
  std::set<ReplicaId> seen;
  for (const auto& [from, r] : replies) {
    if (!quorum.contains(from)) throw std::invalid_argument("prepare reply from outside the quorum");
    if (r.instance != inst) throw std::invalid_argument("prepare reply for another instance");
    seen.insert(from);
  }
  for (auto member : quorum)
    if (!seen.contains(member)) return std::nullopt;
  std::sort(replies.begin(), replies.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  for (const auto& [from, r] : replies)
    if (r.status == Status::committed && r.command) return RecoverCommit{*r.command, r.deps};

  if (auto best = max_accepted(replies); !best.empty()) {
    const auto* pick = &best.front();
    if (prefer)
      for (const auto& entry : best)
        if (entry.first == *prefer) pick = &entry;
    const auto& r = pick->second;
    if (!r.command) throw std::invalid_argument("accepted reply without a command");
    return RecoverAccept{*r.command, r.deps, pick->first};
  }

  PrepareReplies pre;
  for (const auto& entry : replies)
    if (entry.second.status == Status::pre_accepted && entry.second.command) pre.push_back(entry);
  if (pre.empty()) return NothingToRecover{};

  const auto& first = pre.front().second;
  const bool identical = std::all_of(pre.begin(), pre.end(), [&](const auto& e) {
    return e.second.command == first.command && e.second.deps == first.deps;
  });
  const bool owner_replied = std::any_of(pre.begin(), pre.end(),
                                         [&](const auto& e) { return e.first == inst.owner; });
  if (identical && !owner_replied && pre.size() + 1 >= quorum.size())
    return RecoverAccept{*first.command, first.deps, pre.front().first};
  return RestartPhase1{*first.command};
}

inline Effects commit_locally(ReplicaState& state, Mode mode, InstanceId inst, CommandId cmd,
                              const DepSet& deps, const std::vector<ReplicaId>& everyone) {
  auto& rec = state.log[inst];
  rec.command = cmd;
  rec.status = Status::committed;
  rec.deps = deps;
  if (mode == Mode::fixed && !rec.vbal) rec.vbal = rec.bal;
  state.leader_of.erase(inst);
  Effects fx;
  for (auto r : everyone)
    if (r != state.self) fx.sends.push_back(Envelope{state.self, r, Commit{inst, cmd, deps}});
  return fx;
}

// Applies a recovery decision at the recoverer. Its record must already be
// at the prepare ballot (it answered its own prepare).
inline Effects prepare_finalize(ReplicaState& state, Mode mode, const ConflictRelation& rel,
                                InstanceId inst, const Quorum& quorum,
                                const RecoveryDecision& decision,
                                const std::vector<ReplicaId>& everyone) {
  auto it = state.log.find(inst);
  if (it == state.log.end()) throw std::invalid_argument("recoverer has no record for instance");
  const Ballot ballot = it->second.bal;
  Effects fx;
  state.preparing.erase(inst);
  std::visit(
      [&](const auto& d) {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, RecoverCommit>) {
          fx.append(commit_locally(state, mode, inst, d.command, d.deps, everyone));
        } else if constexpr (std::is_same_v<D, RecoverAccept>) {
          detail::cast_vote(state, fx, mode, inst, d.command, Status::accepted, ballot, d.deps);
          state.leader_of.insert(inst);
          detail::send_to_others(state, fx, quorum, Accept{inst, ballot, d.command, d.deps});
        } else if constexpr (std::is_same_v<D, RestartPhase1>) {
          DepSet deps = local_conflicts(state, d.command, inst, rel);
          detail::cast_vote(state, fx, mode, inst, d.command, Status::pre_accepted, ballot, deps);
          state.leader_of.insert(inst);
          detail::send_to_others(state, fx, quorum, PreAccept{inst, ballot, d.command, deps});
        }
      },
      decision);
  return fx;
}

inline Effects handle_accept(ReplicaState& state, Mode mode, ReplicaId from, const Accept& msg) {
  Effects fx;
  if (const auto* rec = state.find(msg.instance)) {
    if (rec->status == Status::committed) {
      fx.suppressed = "accept for a committed instance";
      return fx;
    }
    if (msg.ballot < rec->bal) {
      fx.suppressed = "stale accept at ballot " + std::to_string(msg.ballot.value) + " (joined " +
                      std::to_string(rec->bal.value) + ")";
      return fx;
    }
  }
  detail::cast_vote(state, fx, mode, msg.instance, msg.command, Status::accepted, msg.ballot,
                    msg.deps);
  fx.sends.push_back(Envelope{state.self, from, AcceptReply{msg.instance, msg.ballot}});
  return fx;
}

using AcceptReplies = std::vector<std::pair<ReplicaId, AcceptReply>>;

// Commits the leader's accepted value once every other quorum member voted
// for it at the leader's ballot. Returns nullopt while replies are missing.
inline std::optional<Effects> phase2_finalize(ReplicaState& state, InstanceId inst,
                                              const Quorum& quorum, const AcceptReplies& replies,
                                              const std::vector<ReplicaId>& everyone) {
  auto it = state.log.find(inst);
  if (it == state.log.end() || it->second.status != Status::accepted)
    throw std::invalid_argument("leader has not accepted a value for this instance");
  auto& rec = it->second;
  std::set<ReplicaId> seen;
  for (const auto& [from, reply] : replies) {
    if (!quorum.contains(from) || from == state.self)
      throw std::invalid_argument("accept reply from outside the quorum");
    if (reply.ballot != rec.bal)
      throw std::invalid_argument("accept replies span different ballots");
    seen.insert(from);
  }
  for (auto member : quorum)
    if (member != state.self && !seen.contains(member)) return std::nullopt;

  rec.status = Status::committed;
  state.leader_of.erase(inst);
  Effects fx;
  for (auto r : everyone)
    if (r != state.self)
      fx.sends.push_back(Envelope{state.self, r, Commit{inst, *rec.command, rec.deps}});
  return fx;
}

// Committed is terminal: a disagreeing second Commit is recorded, not applied.
inline Effects handle_commit(ReplicaState& state, Mode mode, const Commit& msg) {
  Effects fx;
  auto& rec = state.log[msg.instance];
  if (rec.status == Status::committed) {
    if (rec.deps != msg.deps) {
      state.commit_conflicts.push_back(CommitConflict{msg.instance, rec.deps, msg.deps});
      fx.suppressed = "commit disagrees with the locally committed deps";
    }
    return fx;
  }
  rec.command = msg.command;
  rec.status = Status::committed;
  rec.deps = msg.deps;
  if (mode == Mode::fixed && !rec.vbal) rec.vbal = rec.bal;
  state.leader_of.erase(msg.instance);
  return fx;
}

}  // namespace epx
