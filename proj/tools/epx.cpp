#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "epx/cli.hpp"

namespace {

void add_common(CLI::App* sub, epx::cli::RunConfig& cfg, std::string& mode) {
  sub->add_option("--mode", mode, "buggy (single ballot variable) or fixed (bal + vbal)")
      ->check(CLI::IsMember({"buggy", "fixed"}));
  sub->add_option("--config", cfg.topology_path,
                  "topology JSON (replicas, commands, conflicts, quorums); default: 3 replicas");
  sub->add_option("--max-ballot", cfg.max_ballot, "highest recovery ballot (default 5)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EPaxos dependency-agreement simulator and bounded checker"};
  app.require_subcommand(1);

  epx::cli::RunConfig cfg;
  std::string mode = "buggy";

  auto* replay = app.add_subcommand("replay", "run a schedule and report divergence");
  add_common(replay, cfg, mode);
  replay->add_option("--schedule", cfg.schedule,
                     "builtin:counterexample[:N] or a JSONL schedule file");
  replay->add_option("--trace-out", cfg.trace_out, "write the JSONL trace here");

  auto* explore = app.add_subcommand("explore", "bounded exhaustive search for violations");
  add_common(explore, cfg, mode);
  explore->add_option("--depth", cfg.depth, "depth bound, prefix included (default 14)");
  explore->add_option("--prefix", cfg.prefix, "scripted prefix: builtin:counterexample:N or a file");
  explore->add_option("--workers", cfg.workers, "parallel workers (default 1)");
  explore->add_option("--max-states", cfg.max_states, "state budget before giving up");
  explore->add_option("--witness-out", cfg.witness_out, "witness schedule path (witness.jsonl)");
  explore->add_option("--seed", cfg.seed, "reserved; exploration is deterministic");

  auto* exp = app.add_subcommand("export", "write a schedule in the JSONL schedule format");
  add_common(exp, cfg, mode);
  exp->add_option("--schedule", cfg.schedule, "builtin:counterexample[:N] or a file");
  exp->add_option("--out", cfg.out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : epx::cli::kUsage;
  }
  cfg.mode = *epx::parse_mode(mode);

  if (replay->parsed()) return epx::cli::cmd_replay(cfg, std::cout, std::cerr);
  if (explore->parsed()) return epx::cli::cmd_explore(cfg, std::cout, std::cerr);
  return epx::cli::cmd_export(cfg, std::cout, std::cerr);
}
