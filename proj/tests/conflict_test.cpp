#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "epx/conflict.hpp"
#include "epx/topology.hpp"

using namespace epx;

TEST(Conflicts, PairInRelationConflictsBothWays) {
  const CommandId c1{0}, c2{1};
  ConflictRelation rel{{c1, c2}};
  EXPECT_TRUE(rel.conflicts(c1, c2));
  EXPECT_TRUE(rel.conflicts(c2, c1));
}

TEST(Conflicts, EmptyRelationCommutes) {
  ConflictRelation rel;
  EXPECT_FALSE(rel.conflicts(CommandId{0}, CommandId{1}));
}

TEST(Conflicts, SameCommandIsRejected) {
  ConflictRelation rel;
  EXPECT_THROW(rel.conflicts(CommandId{2}, CommandId{2}), std::invalid_argument);
  EXPECT_THROW(rel.add(CommandId{2}, CommandId{2}), std::invalid_argument);
}

TEST(Conflicts, DefaultTopologyHasOneConflictingPair) {
  const auto t = appendix_topology();
  EXPECT_TRUE(t.conflicts.conflicts(t.command("c1"), t.command("c2")));
  EXPECT_EQ(t.conflicts.pairs().size(), 1u);
}

// Whatever order pairs are added in, membership is symmetric and matches an
// adjacency-matrix oracle.
TEST(Conflicts, SymmetryAgainstMatrixOracle) {
  std::mt19937 rng(7);
  for (int round = 0; round < 100; ++round) {
    const int n = 2 + static_cast<int>(rng() % 6);
    std::vector<std::vector<bool>> oracle(n, std::vector<bool>(n, false));
    ConflictRelation rel;
    for (int k = 0; k < n * 2; ++k) {
      int a = static_cast<int>(rng() % n), b = static_cast<int>(rng() % n);
      if (a == b) continue;
      rel.add(CommandId{a}, CommandId{b});
      oracle[a][b] = oracle[b][a] = true;
    }
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        if (a == b) continue;
        EXPECT_EQ(rel.conflicts(CommandId{a}, CommandId{b}), oracle[a][b]);
        EXPECT_EQ(rel.conflicts(CommandId{a}, CommandId{b}),
                  rel.conflicts(CommandId{b}, CommandId{a}));
      }
  }
}
