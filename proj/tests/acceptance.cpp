// One PASS/FAIL line per criterion. With an argument, runs just that one.
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "epx/checker.hpp"
#include "epx/exec_graph.hpp"
#include "epx/replay.hpp"
#include "graph_oracle.hpp"

using namespace epx;

namespace {

// Pinned limits.
constexpr double kReplaySeconds = 1.0;
constexpr std::uint64_t kFixedSweepStates = 3'000'000;
constexpr int kFixedSweepDepth = 14;
constexpr int kGuidedPrefix = 14;
constexpr int kGuidedDepth = 24;
constexpr int kGraphRounds = 200;

struct Result {
  bool pass;
  std::string detail;
};

auto shared_topo() { return std::make_shared<const Topology>(appendix_topology()); }

std::string deps_str(const DepSet& d, const Topology& t) {
  std::string s = "{";
  for (auto i : d) s += (s.size() > 1 ? "," : "") + t.name(i);
  return s + "}";
}

Result criterion_1() {
  const auto t = shared_topo();
  const auto start = std::chrono::steady_clock::now();
  auto tr = run(WorldState::initial(t, Mode::buggy), counterexample_schedule(*t));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (tr.status != Trace::Status::completed || tr.steps.size() != 24)
    return {false, "replay halted: " + tr.reason};
  const auto inst = t->instance("p1.1");
  const auto* r1 = tr.final_world.replica(t->replica("p1")).find(inst);
  const auto* r2 = tr.final_world.replica(t->replica("p2")).find(inst);
  const bool exact = r1 && r2 && r1->status == Status::committed &&
                     r2->status == Status::committed &&
                     r1->deps == DepSet{t->instance("p3.1")} && r2->deps.empty();
  std::ostringstream d;
  d << "24 steps; p1 " << (r1 ? deps_str(r1->deps, *t) : "-") << " p2 "
    << (r2 ? deps_str(r2->deps, *t) : "-") << "; " << secs << "s (limit " << kReplaySeconds << "s)";
  return {exact && secs < kReplaySeconds, d.str()};
}

Result criterion_2() {
  const auto t = shared_topo();
  auto tr = run(WorldState::initial(t, Mode::buggy), counterexample_schedule(*t));
  const auto report = assert_key_states(tr, *t);
  if (report.passed) return {true, "steps 7, 15, 17, 24 match"};
  return {false, report.failures.front()};
}

Result criterion_3() {
  const auto t = shared_topo();
  auto tr = run(WorldState::initial(t, Mode::fixed), counterexample_schedule(*t));
  if (auto v = check_E1(tr.final_world)) return {false, "E1: " + v->detail};
  if (tr.status == Trace::Status::completed)
    return {true, "completed, commits agree"};
  return {true, "blocked at step " + std::to_string(tr.halted_at.value_or(0)) + ", no E1"};
}

Result criterion_4() {
  ExploreConfig cfg{shared_topo(), Mode::fixed, kFixedSweepDepth};
  cfg.max_states = kFixedSweepStates;
  const auto start = std::chrono::steady_clock::now();
  auto r = explore(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream d;
  d << r.stats.states << " states, depth reached " << r.stats.max_depth << ", " << secs << "s";
  switch (r.status) {
    case ExploreResult::Status::ok:
      return {true, "no violations; " + d.str()};
    case ExploreResult::Status::violation:
      return {false, std::string(to_string(r.violation->kind)) + " found; " + d.str()};
    case ExploreResult::Status::budget_exceeded:
      return {false, "budget exceeded (" + std::to_string(kFixedSweepStates) + " states); " + d.str()};
    default:
      return {false, r.message};
  }
}

Result criterion_5() {
  const auto t = shared_topo();
  const auto full = counterexample_schedule(*t);
  ExploreConfig cfg{t, Mode::buggy, kGuidedDepth};
  cfg.prefix.assign(full.begin(), full.begin() + kGuidedPrefix);
  auto r = explore(cfg);
  if (r.status != ExploreResult::Status::violation) return {false, "no violation: " + r.message};
  if (r.violation->kind != ViolationKind::E1)
    return {false, std::string("found ") + std::string(to_string(r.violation->kind))};
  auto again = run(WorldState::initial(t, Mode::buggy), r.violation->witness);
  auto v = check_E1(again.final_world);
  if (again.status != Trace::Status::completed || !v) return {false, "witness replay lost E1"};
  return {true, std::to_string(r.violation->witness.size()) + "-step witness, " +
                    std::to_string(r.stats.states) + " states, replay reproduces E1"};
}

Result criterion_6() {
  const ReplicaId p1{0}, p3{2};
  const InstanceId inst{p1, 1}, other{p3, 1};
  const CommandId c2{1};
  std::mt19937 rng(6);
  for (int round = 0; round < 200; ++round) {
    const std::uint32_t b = 1 + rng() % 4, b2 = b + 1 + rng() % 4;
    const DepSet u = rng() % 2 ? DepSet{other} : DepSet{};
    for (Mode mode : {Mode::buggy, Mode::fixed}) {
      ReplicaState joined{p3}, direct{p3};
      handle_accept(joined, mode, p1, Accept{inst, Ballot{b}, c2, u});
      handle_prepare(joined, mode, p1, Prepare{inst, Ballot{b2}});
      handle_accept(direct, mode, p1, Accept{inst, Ballot{b2}, c2, u});
      const bool same = joined == direct;
      if (mode == Mode::buggy && !same)
        return {false, "buggy states differ at b=" + std::to_string(b)};
      if (mode == Mode::fixed && (same || joined.find(inst)->vbal != Ballot{b}))
        return {false, "fixed states not told apart at b=" + std::to_string(b)};
    }
  }
  return {true, "200 ballot pairs: buggy identical, fixed differs in vbal"};
}

Result criterion_7() {
  std::mt19937 rng(7);
  int cyclic = 0;
  for (int round = 0; round < kGraphRounds; ++round) {
    const auto g = oracle::random_graph(rng);
    cyclic += oracle::has_cycle(g);
    const auto a = linearize(g), b = linearize(g), c = linearize(CommitGraph{g});
    if (a != b || a != c) return {false, "round " + std::to_string(round) + " not repeatable"};
    if (!oracle::valid_orders(g).contains(a))
      return {false, "round " + std::to_string(round) + " order rejected by oracle"};
  }
  if (cyclic == 0) return {false, "no cyclic graph generated"};
  return {true, std::to_string(kGraphRounds) + " graphs (" + std::to_string(cyclic) +
                    " cyclic) match oracle"};
}

// Every monitor over one trace.
std::vector<ViolationKind> all_kinds(const Trace& tr) {
  std::vector<ViolationKind> out;
  if (auto v = check_E1(tr.final_world)) out.push_back(v->kind);
  if (auto v = check_E2(tr.final_world)) out.push_back(v->kind);
  for (const auto& v : check_ballot_invariants(tr)) out.push_back(v.kind);
  return out;
}

Trace trace_of(Mode mode, const std::vector<WorldState>& worlds) {
  Trace tr;
  tr.mode = mode;
  tr.initial.resize(worlds.front().replicas.size());
  for (const auto& w : worlds) {
    TraceStep s;
    s.index = tr.steps.size() + 1;
    for (const auto& r : w.replicas) s.logs.push_back(r.log);
    tr.steps.push_back(std::move(s));
  }
  tr.final_world = worlds.back();
  return tr;
}

Result criterion_8() {
  const auto t = shared_topo();
  const ReplicaId p1{0}, p2{1}, p3{2};
  const InstanceId i1{p1, 1}, i3{p3, 1};
  const CommandId c1{0}, c2{1};
  auto base = WorldState::initial(t, Mode::buggy);

  auto dropped = base;
  handle_accept(dropped.replica(p3), Mode::buggy, p1, Accept{i1, Ballot{3}, c2, {}});
  auto lower = dropped;
  lower.replica(p3).log[i1].bal = Ballot{2};

  auto once = base;
  handle_commit(once.replica(p2), Mode::buggy, Commit{i1, c2, {}});
  auto twice = once;
  handle_commit(twice.replica(p2), Mode::buggy, Commit{i1, c2, {i3}});

  auto unordered = base;
  handle_commit(unordered.replica(p2), Mode::buggy, Commit{i3, c1, {}});
  handle_commit(unordered.replica(p2), Mode::buggy, Commit{i1, c2, {}});

  const std::vector<std::pair<std::string, std::pair<Trace, ViolationKind>>> cases{
      {"bal decrease", {trace_of(Mode::buggy, {dropped, lower}), ViolationKind::A1}},
      {"double commit", {trace_of(Mode::buggy, {once, twice}), ViolationKind::E1}},
      {"unordered conflict", {trace_of(Mode::buggy, {unordered}), ViolationKind::E2}},
  };
  for (const auto& [name, c] : cases) {
    const auto got = all_kinds(c.first);
    if (got != std::vector{c.second}) {
      std::string seen;
      for (auto k : got) seen += std::string(to_string(k)) + " ";
      return {false, name + " raised [" + seen + "]"};
    }
  }
  return {true, "A1, E1, E2 each raised alone"};
}

const std::function<Result()> criteria[] = {criterion_1, criterion_2, criterion_3, criterion_4,
                                            criterion_5, criterion_6, criterion_7, criterion_8};

}  // namespace

int main(int argc, char** argv) {
  int first = 1, last = 8;
  if (argc > 1) {
    first = last = std::atoi(argv[1]);
    if (first < 1 || first > 8) {
      std::cerr << "usage: acceptance [1-8]\n";
      return 2;
    }
  }
  bool all = true;
  for (int n = first; n <= last; ++n) {
    Result r;
    try {
      r = criteria[n - 1]();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << n << ": " << (r.pass ? "PASS" : "FAIL") << " - " << r.detail
              << std::endl;
    all &= r.pass;
  }
  return all ? 0 : 1;
}
