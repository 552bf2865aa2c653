#include <sstream>

#include <gtest/gtest.h>

#include "epx/schedule_io.hpp"

using namespace epx;

namespace {

const Topology topo = appendix_topology();

std::vector<json> lines_of(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST(ScheduleFormat, BuiltinRoundTrips) {
  std::stringstream buf;
  write_schedule(buf, builtin_counterexample(topo), topo);
  auto back = read_schedule(buf, topo);
  EXPECT_EQ(back.entries, counterexample_schedule(topo));
  EXPECT_EQ(back.expect_buggy, Expectation::divergence);
  EXPECT_EQ(back.expect_fixed, Expectation::no_divergence);
}

TEST(ScheduleFormat, EntryFieldsAreNamed) {
  std::stringstream buf;
  write_schedule(buf, builtin_counterexample(topo), topo);
  auto ls = lines_of(buf.str());
  ASSERT_EQ(ls.size(), 25u);
  EXPECT_EQ(ls[0]["expect"]["buggy"], "divergence");
  EXPECT_EQ(ls[1]["action"], "Propose");
  EXPECT_EQ(ls[1]["actor"], "p3");
  EXPECT_EQ(ls[1]["command"], "c1");
  EXPECT_EQ(ls[4]["instance"], "p1.1");
  EXPECT_EQ(ls[4]["quorum"], json::array({"p2", "p3"}));
  EXPECT_EQ(ls[19]["key"]["ballot"], 3);
  EXPECT_EQ(ls[21]["prefer"], "p3");
  EXPECT_EQ(ls[24]["index"], 24);
}

TEST(ScheduleFormat, CommentsAndBlankLinesSkipped) {
  std::istringstream in(
      "# hand written\n\n{\"action\":\"Propose\",\"actor\":\"p1\",\"command\":\"c2\"}\n");
  auto f = read_schedule(in, topo);
  ASSERT_EQ(f.entries.size(), 1u);
  EXPECT_EQ(f.entries[0].command, topo.command("c2"));
  EXPECT_FALSE(f.expect_buggy);
}

TEST(ScheduleFormat, MalformedInputNamesTheLine) {
  auto fails_with = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      read_schedule(in, topo);
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
      return;
    }
    ADD_FAILURE() << "accepted: " << text;
  };
  fails_with("{\"action\":\"Propose\",\"actor\":\"p1\"}\n{oops\n", "line 2");
  fails_with("{\"action\":\"Dance\",\"actor\":\"p1\"}\n", "unknown action");
  fails_with("{\"action\":\"Propose\",\"actor\":\"p9\"}\n", "unknown replica");
  fails_with("{\"index\":2,\"action\":\"Propose\",\"actor\":\"p1\"}\n", "numbered");
  fails_with("{\"expect\":{\"buggy\":\"maybe\"}}\n", "unknown expectation");
  fails_with("{\"action\":\"SendPrepare\",\"actor\":\"p1\",\"instance\":\"p1\"}\n", "line 1");
}

TEST(TopologyFormat, RoundTrips) {
  auto j = topology_to_json(topo);
  auto back = topology_from_json(j);
  EXPECT_EQ(back.replicas, topo.replicas);
  EXPECT_EQ(back.commands, topo.commands);
  EXPECT_EQ(back.conflicts.pairs(), topo.conflicts.pairs());
  EXPECT_EQ(back.quorums.fast, topo.quorums.fast);
  EXPECT_EQ(back.quorums.slow, topo.quorums.slow);
  EXPECT_EQ(back.max_ballot, 5u);
  EXPECT_EQ(j["fast_quorums"]["p1"], json::array({json::array({"p1", "p3"})}));
}

TEST(TopologyFormat, InvalidTopologyRejected) {
  auto j = topology_to_json(topo);
  j["slow_quorums"]["p1"] = json::array({json::array({"p2", "p3"})});  // lacks p1
  EXPECT_THROW(topology_from_json(j), FormatError);
  auto k = topology_to_json(topo);
  k["conflicts"] = json::array({json::array({"c1", "c1"})});
  EXPECT_THROW(topology_from_json(k), FormatError);
  EXPECT_THROW(topology_from_json(json::object()), FormatError);
}

TEST(TraceFormat, OneRecordPerStepThenSummary) {
  auto shared = std::make_shared<const Topology>(topo);
  auto trace = run(WorldState::initial(shared, Mode::buggy), counterexample_schedule(topo));
  std::stringstream buf;
  write_trace(buf, trace, topo);
  auto ls = lines_of(buf.str());
  ASSERT_EQ(ls.size(), 25u);
  EXPECT_EQ(ls[0]["step"], 1);
  EXPECT_EQ(ls[0]["action"], "Propose");
  EXPECT_TRUE(ls[0]["delivered"].is_null());
  EXPECT_EQ(ls[2]["delivered"]["type"], "pre-accept");
  EXPECT_EQ(ls[2]["delivered"]["from"], "p1");
  EXPECT_EQ(ls[6]["logs"]["p3"]["p1.1"]["status"], "accepted");
  EXPECT_EQ(ls[6]["logs"]["p3"]["p1.1"]["bal"], 1);
  EXPECT_EQ(ls[6]["logs"]["p3"]["p1.1"]["deps"], json::array({"p3.1"}));
  const auto& s = ls[24]["summary"];
  EXPECT_EQ(s["status"], "completed");
  EXPECT_EQ(s["divergence"]["instance"], "p1.1");
  EXPECT_EQ(s["violations"][0]["kind"], "E1");
}

// A schedule written out and read back drives the simulator to the same end.
TEST(TraceFormat, ExportedScheduleReplaysIdentically) {
  auto shared = std::make_shared<const Topology>(topo);
  std::stringstream buf;
  write_schedule(buf, builtin_counterexample(topo), topo);
  auto back = read_schedule(buf, topo);
  for (Mode m : {Mode::buggy, Mode::fixed}) {
    auto a = run(WorldState::initial(shared, m), counterexample_schedule(topo));
    auto b = run(WorldState::initial(shared, m), back.entries);
    EXPECT_EQ(a.final_world.replicas, b.final_world.replicas);
  }
}
