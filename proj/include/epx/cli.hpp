#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>

#include "epx/checker.hpp"
#include "epx/replay.hpp"
#include "epx/schedule_io.hpp"
#include "epx/sim.hpp"

namespace epx::cli {

// Stable exit codes.
inline constexpr int kOk = 0;
inline constexpr int kViolation = 1;
inline constexpr int kUsage = 2;
inline constexpr int kBudget = 3;

struct RunConfig {
  Mode mode = Mode::buggy;
  std::optional<std::string> topology_path;
  std::string schedule = "builtin:counterexample";
  std::optional<std::string> prefix;
  int depth = 14;
  std::optional<std::uint32_t> max_ballot;
  std::optional<std::string> trace_out;
  std::optional<std::string> witness_out;
  std::optional<std::string> out;  // export target; stdout when absent
  int workers = 1;
  std::uint64_t seed = 0;  // reserved
  std::size_t max_states = 20'000'000;
};

inline Topology resolve_topology(const RunConfig& cfg) {
  Topology t = cfg.topology_path ? load_topology(*cfg.topology_path) : appendix_topology();
  if (cfg.max_ballot) t.max_ballot = *cfg.max_ballot;
  return t;
}

// "builtin:counterexample", "builtin:counterexample:N" (first N entries) or a
// path to a JSONL schedule file.
inline ScheduleFile resolve_schedule(const std::string& spec, const Topology& t) {
  const std::string builtin = "builtin:counterexample";
  if (spec.rfind(builtin, 0) != 0) return load_schedule(spec, t);
  if (t.find_replica("p1") == std::nullopt || t.find_replica("p2") == std::nullopt ||
      t.find_replica("p3") == std::nullopt || t.find_command("c1") == std::nullopt ||
      t.find_command("c2") == std::nullopt)
    throw FormatError("the built-in schedule needs replicas p1..p3 and commands c1, c2");
  ScheduleFile f = builtin_counterexample(t);
  if (spec == builtin) return f;
  if (spec.size() <= builtin.size() + 1 || spec[builtin.size()] != ':')
    throw FormatError("unknown built-in schedule '" + spec + "'");
  std::size_t n = 0;
  try {
    std::size_t used = 0;
    n = std::stoul(spec.substr(builtin.size() + 1), &used);
    if (used != spec.size() - builtin.size() - 1) throw std::invalid_argument("junk");
  } catch (const std::exception&) {
    throw FormatError("bad prefix length in '" + spec + "'");
  }
  if (n > f.entries.size()) throw FormatError("built-in schedule has only 24 entries");
  f.entries.resize(n);
  f.expect_buggy.reset();
  f.expect_fixed.reset();
  return f;
}

inline std::string trace_status(const Trace& t) {
  switch (t.status) {
    case Trace::Status::completed: return "completed";
    case Trace::Status::blocked: return "blocked";
    case Trace::Status::ambiguous: return "ambiguous";
  }
  return "?";
}

inline int cmd_replay(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Topology topo;
  ScheduleFile file;
  try {
    topo = resolve_topology(cfg);
    file = resolve_schedule(cfg.schedule, topo);
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  auto shared = std::make_shared<const Topology>(topo);
  const Trace trace = run(WorldState::initial(shared, cfg.mode), file.entries);

  if (cfg.trace_out) {
    std::ofstream f(*cfg.trace_out);
    if (!f) {
      err << "error: cannot write trace to '" << *cfg.trace_out << "'\n";
      return kUsage;
    }
    write_trace(f, trace, topo);
  }

  out << "mode " << to_string(cfg.mode) << ": " << trace_status(trace) << " after "
      << trace.steps.size() << " of " << file.entries.size() << " steps\n";
  if (trace.halted_at)
    out << "halted at step " << *trace.halted_at << ": " << trace.reason << '\n';
  for (const auto& c : trace.candidates)
    out << "  candidate: " << message_to_json(c, topo).dump() << '\n';
  if (trace.status == Trace::Status::ambiguous) {
    err << "error: schedule entry " << *trace.halted_at
        << " matches several messages; add a key (from, ballot)\n";
    return kUsage;
  }

  const auto div = divergence_check(trace.final_world);
  if (div) {
    out << "divergence on " << topo.name(div->instance) << ": " << topo.name(div->first) << " "
        << deps_to_json(div->first_deps, topo).dump() << " vs " << topo.name(div->second) << " "
        << deps_to_json(div->second_deps, topo).dump() << '\n';
  } else {
    out << "no divergence\n";
  }
  auto local = check_ballot_invariants(trace);
  for (const auto& v : local) out << "violation " << violation_to_json(v, topo).dump() << '\n';

  const auto want = file.expectation(cfg.mode).value_or(Expectation::no_divergence);
  bool met = false;
  if (want == Expectation::divergence)
    met = trace.status == Trace::Status::completed && div.has_value();
  else
    met = !div && !check_E1(trace.final_world) && local.empty();
  out << "expected " << to_string(want) << ": " << (met ? "met" : "NOT met") << '\n';
  return met ? kOk : kViolation;
}

inline int cmd_explore(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.depth < 0) {
    err << "error: --depth must be non-negative\n";
    return kUsage;
  }
  if (cfg.workers < 1) {
    err << "error: --workers must be at least 1\n";
    return kUsage;
  }
  ExploreConfig ec;
  Topology topo;
  try {
    topo = resolve_topology(cfg);
    if (cfg.prefix) ec.prefix = resolve_schedule(*cfg.prefix, topo).entries;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  if (ec.prefix.size() > static_cast<std::size_t>(cfg.depth)) {
    err << "error: depth " << cfg.depth << " is shorter than the " << ec.prefix.size()
        << "-step prefix\n";
    return kUsage;
  }
  ec.topology = std::make_shared<const Topology>(topo);
  ec.mode = cfg.mode;
  ec.depth = cfg.depth;
  ec.workers = cfg.workers;
  ec.max_states = cfg.max_states;

  const auto t0 = std::chrono::steady_clock::now();
  const ExploreResult r = explore(ec);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json stats{{"mode", std::string(to_string(cfg.mode))},
             {"depth", cfg.depth},
             {"prefix", ec.prefix.size()},
             {"states", r.stats.states},
             {"transitions", r.stats.transitions},
             {"max_depth", r.stats.max_depth},
             {"seconds", std::round(secs * 1000) / 1000}};
  switch (r.status) {
    case ExploreResult::Status::ok:
      stats["result"] = "ok";
      out << stats.dump() << '\n';
      return kOk;
    case ExploreResult::Status::budget_exceeded:
      stats["result"] = "budget-exceeded";
      stats["max_states"] = cfg.max_states;
      out << stats.dump() << '\n';
      return kBudget;
    case ExploreResult::Status::prefix_blocked:
      err << "error: " << r.message << '\n';
      return kUsage;
    case ExploreResult::Status::violation: break;
  }

  const Violation& v = *r.violation;
  stats["result"] = "violation";
  stats["violation"] = violation_to_json(v, topo);
  stats["witness_length"] = v.witness.size();
  const std::string path = cfg.witness_out.value_or("witness.jsonl");
  std::ofstream f(path);
  if (!f) {
    err << "error: cannot write witness to '" << path << "'\n";
    return kUsage;
  }
  ScheduleFile w{v.witness, {}, {}};
  if (v.kind == ViolationKind::E1)
    (cfg.mode == Mode::buggy ? w.expect_buggy : w.expect_fixed) = Expectation::divergence;
  write_schedule(f, w, topo);
  stats["witness"] = path;
  out << stats.dump() << '\n';
  return kViolation;
}

// Writes a schedule (normally the built-in one) in the schedule file format.
inline int cmd_export(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    const Topology topo = resolve_topology(cfg);
    const ScheduleFile f = resolve_schedule(cfg.schedule, topo);
    if (!cfg.out) {
      write_schedule(out, f, topo);
      return kOk;
    }
    std::ofstream file(*cfg.out);
    if (!file) {
      err << "error: cannot write '" << *cfg.out << "'\n";
      return kUsage;
    }
    write_schedule(file, f, topo);
    return kOk;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace epx::cli
