#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "epx/cli.hpp"

using namespace epx;
namespace fs = std::filesystem;

namespace {

struct Out {
  std::ostringstream out, err;
};

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("epx_cli_" + name); }

}  // namespace

TEST(Replay, BuggyCounterexampleMeetsExpectation) {
  Out o;
  cli::RunConfig cfg;
  cfg.mode = Mode::buggy;
  cfg.trace_out = temp("buggy_trace.jsonl").string();
  EXPECT_EQ(cli::cmd_replay(cfg, o.out, o.err), cli::kOk);
  EXPECT_NE(o.out.str().find("divergence on p1.1"), std::string::npos) << o.out.str();
  std::ifstream trace(*cfg.trace_out);
  std::string line;
  int n = 0;
  while (std::getline(trace, line)) ++n;
  EXPECT_EQ(n, 25);
}

TEST(Replay, FixedCounterexampleReportsNoDivergence) {
  Out o;
  cli::RunConfig cfg;
  cfg.mode = Mode::fixed;
  EXPECT_EQ(cli::cmd_replay(cfg, o.out, o.err), cli::kOk);
  EXPECT_NE(o.out.str().find("no divergence"), std::string::npos);
}

TEST(Replay, MissingFileIsUsageError) {
  Out o;
  cli::RunConfig cfg;
  cfg.schedule = "/nonexistent/schedule.jsonl";
  EXPECT_EQ(cli::cmd_replay(cfg, o.out, o.err), cli::kUsage);
  EXPECT_NE(o.err.str().find("cannot read"), std::string::npos);
}

TEST(Replay, ExpectationMismatchIsExitOne) {
  const auto path = temp("expect_divergence.jsonl");
  {
    std::ofstream f(path);
    f << "{\"expect\":{\"fixed\":\"divergence\"}}\n";
    auto topo = appendix_topology();
    for (const auto& e : counterexample_schedule(topo))
      f << entry_to_json(e, topo, 0).dump() << '\n';
  }
  // Index 0 on every line is out of sequence.
  Out bad;
  cli::RunConfig cfg;
  cfg.mode = Mode::fixed;
  cfg.schedule = path.string();
  EXPECT_EQ(cli::cmd_replay(cfg, bad.out, bad.err), cli::kUsage);

  {
    std::ofstream f(path);
    f << "{\"expect\":{\"fixed\":\"divergence\"}}\n";
    auto topo = appendix_topology();
    for (const auto& e : counterexample_schedule(topo)) {
      auto j = entry_to_json(e, topo, 0);
      j.erase("index");
      f << j.dump() << '\n';
    }
  }
  Out o;
  EXPECT_EQ(cli::cmd_replay(cfg, o.out, o.err), cli::kViolation);
  EXPECT_NE(o.out.str().find("NOT met"), std::string::npos);
}

TEST(Replay, AmbiguousScheduleIsUsageError) {
  const auto path = temp("ambiguous.jsonl");
  {
    std::ofstream f(path);
    f << R"({"action":"Propose","actor":"p1","command":"c2"})" << '\n'
      << R"({"action":"SendPrepare","actor":"p3","instance":"p1.1","quorum":["p2","p3"]})" << '\n'
      << R"({"action":"SendPrepare","actor":"p3","instance":"p1.1","quorum":["p2","p3"]})" << '\n'
      << R"({"action":"ReplyPrepare","actor":"p3"})" << '\n';
  }
  Out o;
  cli::RunConfig cfg;
  cfg.schedule = path.string();
  EXPECT_EQ(cli::cmd_replay(cfg, o.out, o.err), cli::kUsage);
  EXPECT_NE(o.out.str().find("candidate"), std::string::npos);
}

TEST(Explore, NegativeDepthIsUsageError) {
  Out o;
  cli::RunConfig cfg;
  cfg.depth = -1;
  EXPECT_EQ(cli::cmd_explore(cfg, o.out, o.err), cli::kUsage);
}

TEST(Explore, PrefixLongerThanDepthIsUsageError) {
  Out o;
  cli::RunConfig cfg;
  cfg.prefix = "builtin:counterexample:14";
  cfg.depth = 10;
  EXPECT_EQ(cli::cmd_explore(cfg, o.out, o.err), cli::kUsage);
  cfg.prefix = "builtin:counterexample:99";
  cfg.depth = 100;
  EXPECT_EQ(cli::cmd_explore(cfg, o.out, o.err), cli::kUsage);
}

TEST(Explore, CleanSweepPrintsStatistics) {
  Out o;
  cli::RunConfig cfg;
  cfg.mode = Mode::fixed;
  cfg.depth = 4;
  EXPECT_EQ(cli::cmd_explore(cfg, o.out, o.err), cli::kOk);
  auto j = json::parse(o.out.str());
  EXPECT_EQ(j["result"], "ok");
  EXPECT_EQ(j["max_depth"], 4);
  EXPECT_GT(j["states"].get<int>(), 1);
}

TEST(Explore, BudgetIsExitThree) {
  Out o;
  cli::RunConfig cfg;
  cfg.mode = Mode::fixed;
  cfg.depth = 8;
  cfg.max_states = 100;
  EXPECT_EQ(cli::cmd_explore(cfg, o.out, o.err), cli::kBudget);
  EXPECT_EQ(json::parse(o.out.str())["result"], "budget-exceeded");
}

TEST(Explore, GuidedWitnessReplaysToDivergence) {
  Out o;
  cli::RunConfig cfg;
  cfg.mode = Mode::buggy;
  cfg.prefix = "builtin:counterexample:14";
  cfg.depth = 24;
  cfg.witness_out = temp("witness.jsonl").string();
  ASSERT_EQ(cli::cmd_explore(cfg, o.out, o.err), cli::kViolation);
  auto j = json::parse(o.out.str());
  EXPECT_EQ(j["violation"]["kind"], "E1");

  Out r;
  cli::RunConfig again;
  again.mode = Mode::buggy;
  again.schedule = *cfg.witness_out;
  EXPECT_EQ(cli::cmd_replay(again, r.out, r.err), cli::kOk) << r.out.str() << r.err.str();
  EXPECT_NE(r.out.str().find("divergence on"), std::string::npos);
}

TEST(Export, WritesBuiltinSchedule) {
  Out o;
  cli::RunConfig cfg;
  EXPECT_EQ(cli::cmd_export(cfg, o.out, o.err), cli::kOk);
  std::istringstream in(o.out.str());
  auto topo = appendix_topology();
  EXPECT_EQ(read_schedule(in, topo).entries.size(), 24u);
}

TEST(Config, TopologyFileIsUsed) {
  const auto path = temp("topology.json");
  auto topo = appendix_topology();
  auto j = topology_to_json(topo);
  j["max_ballot"] = 2;
  std::ofstream(path) << j.dump();
  Out o;
  cli::RunConfig cfg;
  cfg.topology_path = path.string();
  // Only two recovery ballots: the schedule's third SendPrepare blocks.
  EXPECT_EQ(cli::cmd_replay(cfg, o.out, o.err), cli::kViolation);
  EXPECT_NE(o.out.str().find("halted at step 15"), std::string::npos) << o.out.str();

  Out bad;
  cfg.topology_path = temp("missing_topology.json").string();
  EXPECT_EQ(cli::cmd_replay(cfg, bad.out, bad.err), cli::kUsage);
}
