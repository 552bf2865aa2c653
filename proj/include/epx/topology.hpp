#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "epx/conflict.hpp"
#include "epx/types.hpp"

namespace epx {

struct QuorumConfig {
  std::vector<std::vector<Quorum>> fast;  // indexed by replica
  std::vector<std::vector<Quorum>> slow;
};

// Everything about a run that is fixed up front: who exists, which commands
// conflict, who talks to whom, and the ballot budget.
struct Topology {
  std::vector<std::string> replicas;
  std::vector<std::string> commands;
  ConflictRelation conflicts;
  QuorumConfig quorums;
  std::uint32_t max_ballot = 5;

  int replica_count() const { return static_cast<int>(replicas.size()); }
  int command_count() const { return static_cast<int>(commands.size()); }

  // Tolerated crash failures for n = 2f + 1.
  int max_failures() const { return (replica_count() - 1) / 2; }
  int majority() const { return replica_count() / 2 + 1; }
  int fast_quorum_size() const {
    const int f = max_failures();
    return f + (f + 1) / 2;
  }

  std::optional<ReplicaId> find_replica(std::string_view name) const {
    for (int i = 0; i < replica_count(); ++i)
      if (replicas[i] == name) return ReplicaId{i};
    return std::nullopt;
  }
  std::optional<CommandId> find_command(std::string_view name) const {
    for (int i = 0; i < command_count(); ++i)
      if (commands[i] == name) return CommandId{i};
    return std::nullopt;
  }

  ReplicaId replica(std::string_view name) const {
    if (auto r = find_replica(name)) return *r;
    throw std::invalid_argument("unknown replica '" + std::string(name) + "'");
  }
  CommandId command(std::string_view name) const {
    if (auto c = find_command(name)) return *c;
    throw std::invalid_argument("unknown command '" + std::string(name) + "'");
  }

  const std::string& name(ReplicaId r) const { return replicas.at(r.value); }
  const std::string& name(CommandId c) const { return commands.at(c.value); }

  std::string name(InstanceId i) const { return name(i.owner) + "." + std::to_string(i.slot); }

  // Accepts "p1.1" style instance names.
  InstanceId instance(std::string_view text) const {
    auto dot = text.rfind('.');
    if (dot == std::string_view::npos || dot + 1 == text.size())
      throw std::invalid_argument("instance must look like <replica>.<slot>: '" +
                                  std::string(text) + "'");
    int slot = 0;
    for (char ch : text.substr(dot + 1)) {
      if (ch < '0' || ch > '9')
        throw std::invalid_argument("bad instance slot in '" + std::string(text) + "'");
      slot = slot * 10 + (ch - '0');
    }
    if (slot < 1) throw std::invalid_argument("instance slots start at 1");
    return InstanceId{replica(text.substr(0, dot)), slot};
  }

  bool is_fast_quorum(ReplicaId r, const Quorum& q) const {
    for (const auto& f : quorums.fast.at(r.value))
      if (f == q) return true;
    return false;
  }
  bool is_slow_quorum(ReplicaId r, const Quorum& q) const {
    for (const auto& s : quorums.slow.at(r.value))
      if (s == q) return true;
    return false;
  }

  // Throws std::invalid_argument describing the first problem found.
  void validate() const {
    const int n = replica_count();
    if (n == 0) throw std::invalid_argument("topology has no replicas");
    if (static_cast<int>(quorums.fast.size()) != n || static_cast<int>(quorums.slow.size()) != n)
      throw std::invalid_argument("quorum lists must cover every replica");
    for (const auto& [a, b] : conflicts.pairs())
      if (a.value >= command_count() || b.value >= command_count())
        throw std::invalid_argument("conflict pair names an unknown command");
    auto check = [&](const std::vector<std::vector<Quorum>>& lists, std::size_t min_size,
                     const char* kind) {
      for (int r = 0; r < n; ++r) {
        if (lists[r].empty())
          throw std::invalid_argument(std::string("replica ") + replicas[r] + " has no " + kind +
                                      " quorum");
        for (const auto& q : lists[r]) {
          if (q.size() < min_size)
            throw std::invalid_argument(std::string(kind) + " quorum of " + replicas[r] +
                                        " is too small");
          if (!q.contains(ReplicaId{r}))
            throw std::invalid_argument(std::string(kind) + " quorum of " + replicas[r] +
                                        " must include it");
          for (auto m : q)
            if (m.value < 0 || m.value >= n)
              throw std::invalid_argument("quorum names an unknown replica");
        }
      }
    };
    const auto maj = static_cast<std::size_t>(majority());
    check(quorums.slow, maj, "slow");
    check(quorums.fast, std::max(maj, static_cast<std::size_t>(fast_quorum_size())), "fast");
  }
};

// Three replicas, two conflicting commands, one quorum per replica used for
// both the fast and the slow path, at most five ballots.
inline Topology appendix_topology() {
  Topology t;
  t.replicas = {"p1", "p2", "p3"};
  t.commands = {"c1", "c2"};
  t.conflicts.add(CommandId{0}, CommandId{1});
  const ReplicaId p1{0}, p2{1}, p3{2};
  t.quorums.fast = {{Quorum{p1, p3}}, {Quorum{p1, p2}}, {Quorum{p2, p3}}};
  t.quorums.slow = t.quorums.fast;
  t.max_ballot = 5;
  return t;
}

}  // namespace epx
