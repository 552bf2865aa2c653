#pragma once

#include <optional>
#include <string>
#include <vector>

#include "epx/sim.hpp"
#include "epx/topology.hpp"

namespace epx {

// The 24-step execution in which p1 and p2 commit different dependencies for
// c2 in instance <p1,1> when replicas keep a single ballot variable. Needs a
// topology with replicas p1..p3 and commands c1, c2 (appendix_topology()).
inline Schedule counterexample_schedule(const Topology& t) {
  const auto p1 = t.replica("p1"), p2 = t.replica("p2"), p3 = t.replica("p3");
  const auto c1 = t.command("c1"), c2 = t.command("c2");
  const InstanceId inst{p1, 1};
  const Quorum q23{p2, p3}, q12{p1, p2}, q13{p1, p3};

  auto propose = [](CommandId c, ReplicaId r) {
    ScheduleEntry e{Action::Propose, r};
    e.command = c;
    return e;
  };
  auto on = [&](Action a, ReplicaId r, const Quorum& q) {
    return ScheduleEntry{a, r, inst, q};
  };
  auto deliver = [](Action a, ReplicaId r) { return ScheduleEntry{a, r}; };

  Schedule s{
      propose(c1, p3),                                 // 1
      propose(c2, p1),                                 // 2
      deliver(Action::Phase1Reply, p3),                // 3
      on(Action::SendPrepare, p3, q23),                // 4  ballot 1
      deliver(Action::ReplyPrepare, p2),               // 5
      deliver(Action::ReplyPrepare, p3),               // 6
      on(Action::PrepareFinalize, p3, q23),            // 7
      on(Action::SendPrepare, p2, q12),                // 8  ballot 2
      deliver(Action::ReplyPrepare, p1),               // 9
      deliver(Action::ReplyPrepare, p2),               // 10
      on(Action::PrepareFinalize, p2, q12),            // 11
      deliver(Action::Phase1Reply, p1),                // 12
      on(Action::Phase1Slow, p2, q12),                 // 13
      deliver(Action::Phase2Reply, p1),                // 14
      on(Action::SendPrepare, p1, q13),                // 15 ballot 3
      deliver(Action::ReplyPrepare, p3),               // 16
      on(Action::SendPrepare, p1, q13),                // 17 ballot 4
      deliver(Action::ReplyPrepare, p3),               // 18
      deliver(Action::ReplyPrepare, p1),               // 19 answers ballot 3
      deliver(Action::ReplyPrepare, p1),               // 20 answers ballot 4
      on(Action::PrepareFinalize, p1, q13),            // 21
      deliver(Action::Phase2Reply, p3),                // 22
      on(Action::Phase2Finalize, p2, q12),             // 23
      on(Action::Phase2Finalize, p1, q13),             // 24
  };
  // p1 holds prepares for ballots 3 and 4 at once; answer them in order.
  s[18].key.ballot = Ballot{3};
  s[19].key.ballot = Ballot{4};
  // With one ballot variable both p1 and p3 report ballot 3 at step 21; the
  // run continues with p3's value.
  s[20].prefer = p3;
  return s;
}

struct KeyState {
  std::size_t step;
  std::string replica;
  Status status;
  std::uint32_t bal;
  std::vector<std::string> deps;  // instance names
};

// Expected (status, bal, deps) of <p1,1> after selected steps of the
// single-ballot-variable run.
inline std::vector<KeyState> counterexample_key_states() {
  const std::vector<std::string> c1{"p3.1"}, none{};
  return {
      {7, "p3", Status::accepted, 1, c1},
      {15, "p3", Status::accepted, 1, c1},
      {15, "p2", Status::accepted, 2, none},
      {15, "p1", Status::accepted, 2, none},
      {17, "p3", Status::accepted, 3, c1},
      {17, "p2", Status::accepted, 2, none},
      {17, "p1", Status::accepted, 2, none},
      {24, "p3", Status::accepted, 4, c1},
      {24, "p2", Status::committed, 2, none},
      {24, "p1", Status::committed, 4, c1},
  };
}

struct KeyStateReport {
  bool passed = true;
  std::vector<std::string> failures;  // "step N replica: field expected X got Y"
};

inline KeyStateReport assert_key_states(const Trace& trace, const Topology& t) {
  KeyStateReport report;
  auto fail = [&](std::string msg) {
    report.passed = false;
    report.failures.push_back(std::move(msg));
  };
  const InstanceId inst = t.instance("p1.1");
  for (const auto& want : counterexample_key_states()) {
    const std::string where = "step " + std::to_string(want.step) + " " + want.replica;
    if (trace.steps.size() < want.step) {
      fail(where + ": trace ends after " + std::to_string(trace.steps.size()) + " steps");
      continue;
    }
    const auto& logs = trace.steps[want.step - 1].logs;
    const auto& log = logs.at(t.replica(want.replica).value);
    auto it = log.find(inst);
    if (it == log.end()) {
      fail(where + ": no record for p1.1");
      continue;
    }
    const auto& rec = it->second;
    if (rec.status != want.status)
      fail(where + ": status expected " + std::string(to_string(want.status)) + " got " +
           std::string(to_string(rec.status)));
    if (rec.bal.value != want.bal)
      fail(where + ": bal expected " + std::to_string(want.bal) + " got " +
           std::to_string(rec.bal.value));
    DepSet deps;
    for (const auto& d : want.deps) deps.insert(t.instance(d));
    if (rec.deps != deps) fail(where + ": deps differ");
  }
  return report;
}

struct Divergence {
  InstanceId instance;
  ReplicaId first;
  DepSet first_deps;
  ReplicaId second;
  DepSet second_deps;
};

// Two replicas holding different committed deps for the same instance.
inline std::optional<Divergence> divergence_check(const WorldState& w) {
  std::map<InstanceId, std::pair<ReplicaId, const DepSet*>> seen;
  for (const auto& r : w.replicas) {
    for (const auto& [inst, rec] : r.log) {
      if (rec.status != Status::committed) continue;
      auto [it, fresh] = seen.try_emplace(inst, r.self, &rec.deps);
      if (!fresh && *it->second.second != rec.deps)
        return Divergence{inst, it->second.first, *it->second.second, r.self, rec.deps};
    }
  }
  return std::nullopt;
}

}  // namespace epx
