#include <gtest/gtest.h>

#include <cmath>

#include "dccda/critics.hpp"
#include "dccda/oracle.hpp"

using namespace dccda;

TEST(QLookup, ZeroInitStoreAndIndependentCells) {
  CommQ q;
  EXPECT_EQ(q_lookup(q, CommKey{3, 1, {2}}), 0.0);
  q.set({3, 1, {2}}, 2.5);
  EXPECT_EQ(q_lookup(q, CommKey{3, 1, {2}}), 2.5);
  EXPECT_EQ(q_lookup(q, CommKey{3, 1, {1}}), 0.0);
  EXPECT_THROW(q.set({0, 0, {}}, NAN), std::domain_error);
}

TEST(TdUpdate, TerminalTargetAndIdentity) {
  LocalQ q;
  Transition<LocalKey> tr{{0, 0}, 1.0, true, {}};
  td_update(q, tr, 0.0, 0.9);
  EXPECT_EQ(q.lookup({0, 0}), 0.0);
  td_update(q, tr, 1.0, 0.9);
  EXPECT_EQ(q.lookup({0, 0}), 1.0);
  tr.reward = INFINITY;
  EXPECT_THROW(td_update(q, tr, 1.0, 0.9), std::domain_error);
  EXPECT_THROW(td_update(q, Transition<LocalKey>{{0, 0}, 1.0, true, {}}, 1.5, 0.9), std::invalid_argument);
}

TEST(TdUpdate, ExpectedSarsaTargetAndCellIsolation) {
  LocalQ q;
  q.set({5, 0}, 2.0);
  q.set({5, 1}, 4.0);
  q.set({9, 0}, 7.0);
  Transition<LocalKey> tr{{1, 0}, 1.0, false, {{{5, 0}, 0.25}, {{5, 1}, 0.75}}};
  td_update(q, tr, 0.5, 0.5);
  EXPECT_DOUBLE_EQ(q.lookup({1, 0}), 0.5 * (1.0 + 0.5 * 3.5));
  EXPECT_EQ(q.lookup({9, 0}), 7.0);
  EXPECT_EQ(q.lookup({5, 1}), 4.0);
}

TEST(ExpectedSweeps, ConvergeToOracleWithinTenTSweeps) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int T = 1 + int(seed % 3);
    auto m = make_random_decpomdp({2, 3, 2, 2, T}, seed);
    auto pols = make_random_policies(m, seed + 50);
    ExactOracle oracle(m, pols);

    CentralizedQ qj;
    auto joint = expected_joint_transitions(oracle.tree());
    for (int k = 0; k < 10 * T; ++k) expected_td_sweep(qj, joint, 1.0, m.gamma);
    double err = 0.0;
    for (const auto& [key, v] : oracle.joint_q_table().table()) err = std::max(err, std::abs(qj.lookup(key) - v));
    EXPECT_LT(err, 1e-8);

    for (int i = 0; i < 2; ++i) {
      LocalQ ql;
      auto local = expected_local_transitions(oracle.tree(), i);
      for (int k = 0; k < 10 * T; ++k) expected_td_sweep(ql, local, 1.0, m.gamma);
      double lerr = 0.0;
      for (const auto& [key, v] : oracle.comm_q(i, nullptr).table())
        lerr = std::max(lerr, std::abs(ql.lookup({key.h, key.a}) - v));
      EXPECT_LT(lerr, 1e-8);
    }
  }
}

TEST(TdUpdate, RepeatedSweepsOverAllTransitionsReachOracle) {
  auto m = make_random_decpomdp({2, 2, 2, 2, 2}, 31);
  auto pols = make_random_policies(m, 32);
  ExactOracle oracle(m, pols);
  auto joint = expected_joint_transitions(oracle.tree());
  // Per-transition td_update with lr = w / (running weight) forms the weighted mean target of each key.
  CentralizedQ q;
  for (int sweep = 0; sweep < 3; ++sweep) {
    std::unordered_map<JointKey, double, KeyHash> seen;
    for (auto it = joint.rbegin(); it != joint.rend(); ++it) {
      double& total = seen[it->tr.key];
      total += it->weight;
      td_update(q, it->tr, it->weight / total, m.gamma);
    }
  }
  double err = 0.0;
  for (const auto& [key, v] : oracle.joint_q_table().table()) err = std::max(err, std::abs(q.lookup(key) - v));
  EXPECT_LT(err, 1e-6);
}

TEST(CriticJson, SortedKeyMap) {
  CommQ q;
  q.set({2, 1, {3, 4}}, 1.5);
  auto j = critic_to_json(q);
  EXPECT_DOUBLE_EQ(j.at("2:1:3,4").get<double>(), 1.5);
}
