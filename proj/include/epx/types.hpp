#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace epx {

// Replicas and commands are dense indices into a Topology; names live there.
struct ReplicaId {
  int value = 0;
  auto operator<=>(const ReplicaId&) const = default;
};

struct CommandId {
  int value = 0;
  auto operator<=>(const CommandId&) const = default;
};

struct Ballot {
  std::uint32_t value = 0;
  auto operator<=>(const Ballot&) const = default;
};

inline constexpr Ballot kFastBallot{0};

// Consensus instance <owner, slot>; slots start at 1 per owner.
struct InstanceId {
  ReplicaId owner;
  int slot = 1;
  auto operator<=>(const InstanceId&) const = default;
};

using DepSet = std::set<InstanceId>;

enum class Status : std::uint8_t { none, pre_accepted, accepted, committed };

// BUGGY keeps a single ballot variable per instance; FIXED tracks the
// joined ballot (bal) and the voted ballot (vbal) separately.
enum class Mode : std::uint8_t { buggy, fixed };

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::none: return "none";
    case Status::pre_accepted: return "pre-accepted";
    case Status::accepted: return "accepted";
    case Status::committed: return "committed";
  }
  return "?";
}

inline std::optional<Status> parse_status(std::string_view s) {
  if (s == "none") return Status::none;
  if (s == "pre-accepted") return Status::pre_accepted;
  if (s == "accepted") return Status::accepted;
  if (s == "committed") return Status::committed;
  return std::nullopt;
}

inline std::string_view to_string(Mode m) { return m == Mode::buggy ? "buggy" : "fixed"; }

inline std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "buggy") return Mode::buggy;
  if (s == "fixed") return Mode::fixed;
  return std::nullopt;
}

struct InstanceRecord {
  std::optional<CommandId> command;
  Status status = Status::none;
  Ballot bal;                 // last joined
  std::optional<Ballot> vbal; // last voted; FIXED mode only
  DepSet deps;                // value voted at vbal

  bool operator==(const InstanceRecord&) const = default;
};

// --- wire messages -------------------------------------------------------

struct PreAccept {
  InstanceId instance;
  Ballot ballot;
  CommandId command;
  DepSet deps;
  bool operator==(const PreAccept&) const = default;
};

struct PreAcceptReply {
  InstanceId instance;
  Ballot ballot;
  DepSet deps;
  bool operator==(const PreAcceptReply&) const = default;
};

struct Prepare {
  InstanceId instance;
  Ballot ballot;
  bool operator==(const Prepare&) const = default;
};

struct PrepareReply {
  InstanceId instance;
  Ballot ballot;                       // the prepare ballot being answered
  std::optional<Ballot> reported_bal;  // absent: the replica never voted
  Status status = Status::none;
  std::optional<CommandId> command;
  DepSet deps;
  bool operator==(const PrepareReply&) const = default;
};

struct Accept {
  InstanceId instance;
  Ballot ballot;
  CommandId command;
  DepSet deps;
  bool operator==(const Accept&) const = default;
};

struct AcceptReply {
  InstanceId instance;
  Ballot ballot;
  bool operator==(const AcceptReply&) const = default;
};

struct Commit {
  InstanceId instance;
  CommandId command;
  DepSet deps;
  bool operator==(const Commit&) const = default;
};

using Payload =
    std::variant<PreAccept, PreAcceptReply, Prepare, PrepareReply, Accept, AcceptReply, Commit>;

struct Envelope {
  ReplicaId from;
  ReplicaId to;
  Payload body;
  bool operator==(const Envelope&) const = default;
};

inline std::string_view message_type(const Payload& p) {
  static constexpr std::string_view names[] = {"pre-accept", "pre-accept-reply", "prepare",
                                               "prepare-reply", "accept", "accept-reply",
                                               "commit"};
  return names[p.index()];
}

inline InstanceId instance_of(const Payload& p) {
  return std::visit([](const auto& m) { return m.instance; }, p);
}

// Commit has no ballot; it reports kFastBallot.
inline Ballot ballot_of(const Payload& p) {
  return std::visit(
      [](const auto& m) -> Ballot {
        if constexpr (requires { m.ballot; }) {
          return m.ballot;
        } else {
          return kFastBallot;
        }
      },
      p);
}

using Quorum = std::set<ReplicaId>;

}  // namespace epx
