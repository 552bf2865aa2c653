#pragma once

#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "epx/checker.hpp"
#include "epx/replay.hpp"
#include "epx/sim.hpp"
#include "epx/topology.hpp"

namespace epx {

using json = nlohmann::json;

// Thrown for malformed schedule/topology input; the CLI maps it to exit 2.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// What a schedule file claims will happen when it is replayed in each mode.
enum class Expectation { divergence, no_divergence };

inline std::string_view to_string(Expectation e) {
  return e == Expectation::divergence ? "divergence" : "no-divergence";
}

struct ScheduleFile {
  Schedule entries;
  std::optional<Expectation> expect_buggy;
  std::optional<Expectation> expect_fixed;

  std::optional<Expectation> expectation(Mode m) const {
    return m == Mode::buggy ? expect_buggy : expect_fixed;
  }
};

// --- topology -------------------------------------------------------------

inline json topology_to_json(const Topology& t) {
  json j;
  j["replicas"] = t.replicas;
  j["commands"] = t.commands;
  j["conflicts"] = json::array();
  for (auto [a, b] : t.conflicts.pairs())
    if (a < b) j["conflicts"].push_back({t.name(a), t.name(b)});
  auto quorums = [&](const std::vector<std::vector<Quorum>>& lists) {
    json out = json::object();
    for (int r = 0; r < t.replica_count(); ++r) {
      json qs = json::array();
      for (const auto& q : lists.at(r)) {
        json members = json::array();
        for (auto m : q) members.push_back(t.name(m));
        qs.push_back(members);
      }
      out[t.replicas[r]] = qs;
    }
    return out;
  };
  j["fast_quorums"] = quorums(t.quorums.fast);
  j["slow_quorums"] = quorums(t.quorums.slow);
  j["max_ballot"] = t.max_ballot;
  return j;
}

inline Topology topology_from_json(const json& j) {
  try {
    Topology t;
    t.replicas = j.at("replicas").get<std::vector<std::string>>();
    t.commands = j.at("commands").get<std::vector<std::string>>();
    if (j.contains("conflicts"))
      for (const auto& pair : j.at("conflicts")) {
        if (!pair.is_array() || pair.size() != 2)
          throw FormatError("each conflict must be a pair of command names");
        t.conflicts.add(t.command(pair[0].get<std::string>()),
                        t.command(pair[1].get<std::string>()));
      }
    auto quorums = [&](const char* field) {
      std::vector<std::vector<Quorum>> out(t.replicas.size());
      const auto& obj = j.at(field);
      for (auto it = obj.begin(); it != obj.end(); ++it) {
        auto r = t.replica(it.key());
        for (const auto& members : it.value()) {
          Quorum q;
          for (const auto& m : members) q.insert(t.replica(m.get<std::string>()));
          out[r.value].push_back(std::move(q));
        }
      }
      return out;
    };
    t.quorums.fast = quorums("fast_quorums");
    t.quorums.slow = j.contains("slow_quorums") ? quorums("slow_quorums") : t.quorums.fast;
    if (j.contains("max_ballot")) t.max_ballot = j.at("max_ballot").get<std::uint32_t>();
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw FormatError(std::string("topology: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("topology: ") + e.what());
  }
}

inline Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read topology file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("topology file '" + path + "': " + e.what());
  }
  return topology_from_json(j);
}

// --- schedules ------------------------------------------------------------

inline json entry_to_json(const ScheduleEntry& e, const Topology& t, std::size_t index) {
  json j;
  j["index"] = index;
  j["action"] = std::string(to_string(e.action));
  j["actor"] = t.name(e.actor);
  if (e.instance) j["instance"] = t.name(*e.instance);
  if (e.quorum) {
    json q = json::array();
    for (auto m : *e.quorum) q.push_back(t.name(m));
    j["quorum"] = q;
  }
  if (e.command) j["command"] = t.name(*e.command);
  if (!e.key.empty()) {
    json k = json::object();
    if (e.key.from) k["from"] = t.name(*e.key.from);
    if (e.key.ballot) k["ballot"] = e.key.ballot->value;
    if (e.key.instance) k["instance"] = t.name(*e.key.instance);
    j["key"] = k;
  }
  if (e.prefer) j["prefer"] = t.name(*e.prefer);
  return j;
}

inline ScheduleEntry entry_from_json(const json& j, const Topology& t) {
  try {
    ScheduleEntry e;
    const auto name = j.at("action").get<std::string>();
    auto act = parse_action(name);
    if (!act) throw FormatError("unknown action '" + name + "'");
    e.action = *act;
    e.actor = t.replica(j.at("actor").get<std::string>());
    if (j.contains("instance")) e.instance = t.instance(j.at("instance").get<std::string>());
    if (j.contains("quorum")) {
      Quorum q;
      for (const auto& m : j.at("quorum")) q.insert(t.replica(m.get<std::string>()));
      e.quorum = std::move(q);
    }
    if (j.contains("command")) e.command = t.command(j.at("command").get<std::string>());
    if (j.contains("key")) {
      const auto& k = j.at("key");
      if (k.contains("from")) e.key.from = t.replica(k.at("from").get<std::string>());
      if (k.contains("ballot")) e.key.ballot = Ballot{k.at("ballot").get<std::uint32_t>()};
      if (k.contains("instance")) e.key.instance = t.instance(k.at("instance").get<std::string>());
    }
    if (j.contains("prefer")) e.prefer = t.replica(j.at("prefer").get<std::string>());
    return e;
  } catch (const json::exception& ex) {
    throw FormatError(ex.what());
  } catch (const std::invalid_argument& ex) {
    throw FormatError(ex.what());
  }
}

inline void write_schedule(std::ostream& out, const ScheduleFile& f, const Topology& t) {
  if (f.expect_buggy || f.expect_fixed) {
    json expect = json::object();
    if (f.expect_buggy) expect["buggy"] = std::string(to_string(*f.expect_buggy));
    if (f.expect_fixed) expect["fixed"] = std::string(to_string(*f.expect_fixed));
    out << json{{"expect", expect}}.dump() << '\n';
  }
  for (std::size_t i = 0; i < f.entries.size(); ++i)
    out << entry_to_json(f.entries[i], t, i + 1).dump() << '\n';
}

// One JSON object per line. An optional first line {"expect": {...}} declares
// the outcome per mode; blank lines and lines starting with '#' are skipped.
inline ScheduleFile read_schedule(std::istream& in, const Topology& t) {
  ScheduleFile f;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (j.contains("expect")) {
      if (!f.entries.empty())
        throw FormatError("line " + std::to_string(lineno) + ": expect header after entries");
      for (auto [field, slot] : {std::pair{"buggy", &f.expect_buggy}, {"fixed", &f.expect_fixed}}) {
        if (!j["expect"].contains(field)) continue;
        auto v = j["expect"][field].get<std::string>();
        if (v == "divergence")
          *slot = Expectation::divergence;
        else if (v == "no-divergence")
          *slot = Expectation::no_divergence;
        else
          throw FormatError("line " + std::to_string(lineno) + ": unknown expectation '" + v + "'");
      }
      continue;
    }
    try {
      auto e = entry_from_json(j, t);
      if (j.contains("index") && j["index"].get<std::size_t>() != f.entries.size() + 1)
        throw FormatError("entries must be numbered 1..n in order");
      f.entries.push_back(std::move(e));
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return f;
}

inline ScheduleFile load_schedule(const std::string& path, const Topology& t) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read schedule file '" + path + "'");
  return read_schedule(in, t);
}

inline ScheduleFile builtin_counterexample(const Topology& t) {
  return ScheduleFile{counterexample_schedule(t), Expectation::divergence,
                      Expectation::no_divergence};
}

// --- traces ---------------------------------------------------------------

inline json deps_to_json(const DepSet& deps, const Topology& t) {
  json out = json::array();
  for (auto d : deps) out.push_back(t.name(d));
  return out;
}

inline json message_to_json(const Envelope& env, const Topology& t) {
  json j;
  j["type"] = std::string(message_type(env.body));
  j["from"] = t.name(env.from);
  j["to"] = t.name(env.to);
  std::visit(
      [&](const auto& m) {
        j["instance"] = t.name(m.instance);
        if constexpr (requires { m.ballot; }) j["ballot"] = m.ballot.value;
        if constexpr (requires { m.reported_bal; }) {
          j["reported_bal"] = m.reported_bal ? json(m.reported_bal->value) : json(nullptr);
          j["status"] = std::string(to_string(m.status));
          j["command"] = m.command ? json(t.name(*m.command)) : json(nullptr);
        } else if constexpr (requires { m.command; }) {
          j["command"] = t.name(m.command);
        }
        if constexpr (requires { m.deps; }) j["deps"] = deps_to_json(m.deps, t);
      },
      env.body);
  return j;
}

inline json record_to_json(const InstanceRecord& r, const Topology& t) {
  json j;
  j["status"] = std::string(to_string(r.status));
  j["bal"] = r.bal.value;
  j["vbal"] = r.vbal ? json(r.vbal->value) : json(nullptr);
  j["command"] = r.command ? json(t.name(*r.command)) : json(nullptr);
  j["deps"] = deps_to_json(r.deps, t);
  return j;
}

inline json logs_to_json(const LogSnapshot& logs, const Topology& t) {
  json out = json::object();
  for (std::size_t r = 0; r < logs.size(); ++r) {
    json log = json::object();
    for (const auto& [inst, rec] : logs[r]) log[t.name(inst)] = record_to_json(rec, t);
    out[t.replicas.at(r)] = log;
  }
  return out;
}

inline json violation_to_json(const Violation& v, const Topology& t) {
  json j;
  j["kind"] = std::string(to_string(v.kind));
  j["instance"] = v.instance ? json(t.name(*v.instance)) : json(nullptr);
  j["replicas"] = json::array();
  for (auto r : v.replicas) j["replicas"].push_back(t.name(r));
  j["detail"] = v.detail;
  return j;
}

// One record per applied step, then a summary record.
inline void write_trace(std::ostream& out, const Trace& trace, const Topology& t) {
  for (const auto& s : trace.steps) {
    json j = entry_to_json(s.entry, t, s.index);
    j["step"] = s.index;
    j.erase("index");
    j["delivered"] = s.delivered ? message_to_json(*s.delivered, t) : json(nullptr);
    j["suppressed"] = s.suppressed ? json(*s.suppressed) : json(nullptr);
    j["logs"] = logs_to_json(s.logs, t);
    out << j.dump() << '\n';
  }
  json summary;
  summary["mode"] = std::string(to_string(trace.mode));
  summary["status"] = trace.status == Trace::Status::completed ? "completed"
                      : trace.status == Trace::Status::blocked ? "blocked"
                                                               : "ambiguous";
  summary["steps"] = trace.steps.size();
  summary["halted_at"] = trace.halted_at ? json(*trace.halted_at) : json(nullptr);
  if (!trace.reason.empty()) summary["reason"] = trace.reason;
  if (auto d = divergence_check(trace.final_world)) {
    summary["divergence"] = {{"instance", t.name(d->instance)},
                             {t.name(d->first), deps_to_json(d->first_deps, t)},
                             {t.name(d->second), deps_to_json(d->second_deps, t)}};
  } else {
    summary["divergence"] = nullptr;
  }
  json violations = json::array();
  for (const auto& v : check_ballot_invariants(trace)) violations.push_back(violation_to_json(v, t));
  if (auto v = check_E1(trace.final_world)) violations.push_back(violation_to_json(*v, t));
  if (auto v = check_E2(trace.final_world)) violations.push_back(violation_to_json(*v, t));
  summary["violations"] = violations;
  out << json{{"summary", summary}}.dump() << '\n';
}

}  // namespace epx
