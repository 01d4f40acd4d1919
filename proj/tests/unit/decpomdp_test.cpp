#include <gtest/gtest.h>

#include <cmath>

#include "dccda/decpomdp.hpp"
#include "dccda/environment.hpp"
#include "dccda/oracle.hpp"
#include "dccda/traffic_junction.hpp"

using namespace dccda;

namespace {

TabularDecPomdp two_state_model() {
  TabularDecPomdp m;
  m.num_agents = 1;
  m.num_states = 2;
  m.init_dist = {0.3, 0.7};
  m.actions_per_agent = {1};
  m.obs_per_agent = {1};
  m.transition = {{{1.0, 0.0}}, {{0.0, 1.0}}};
  m.observation = {{{1.0}}, {{1.0}}};
  m.init_observation = {{1.0}, {1.0}};
  m.reward = {{1.0}, {0.0}};
  m.gamma = 1.0;
  m.horizon = 1;
  return m;
}

}  // namespace

TEST(Validate, WellFormedModelHasNoViolations) { EXPECT_TRUE(validate(two_state_model()).empty()); }

TEST(Validate, ReportsBadTransitionRow) {
  auto m = two_state_model();
  m.transition[1][0] = {0.0, 0.9};
  auto report = validate(m);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_NE(report[0].find("transition row (1,0)"), std::string::npos);
}

TEST(Validate, ReportsGammaOutOfRange) {
  auto m = two_state_model();
  m.gamma = 1.2;
  auto report = validate(m);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0], "gamma out of range");
}

TEST(Validate, ReportsNonFiniteReward) {
  auto m = two_state_model();
  m.reward[0][0] = INFINITY;
  EXPECT_EQ(validate(m).size(), 1u);
}

TEST(RandomModel, DeterministicAndSized) {
  RandomModelConfig c{2, 3, 2, 2, 3};
  auto a = make_random_decpomdp(c, 7), b = make_random_decpomdp(c, 7);
  EXPECT_EQ(nlohmann::json(a), nlohmann::json(b));
  EXPECT_EQ(a.num_states, 3);
  EXPECT_EQ(a.num_joint_actions(), 4);
  EXPECT_THROW(make_random_decpomdp(RandomModelConfig{0, 1, 1, 1, 1}, 1), std::invalid_argument);
}

TEST(RandomModel, HundredModelsValidate) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomModelConfig c{1 + int(seed % 3), 1 + int(seed % 4), 1 + int(seed % 3), 1 + int(seed % 2), 1 + int(seed % 3)};
    EXPECT_TRUE(validate(make_random_decpomdp(c, seed)).empty()) << seed;
  }
}

TEST(ModelJson, RoundTrip) {
  auto m = make_random_decpomdp({}, 3);
  nlohmann::json j = m;
  auto back = j.get<TabularDecPomdp>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_TRUE(j.contains("actions_per_agent"));
}

TEST(SampleEpisode, HorizonOneGivesOneStep) {
  auto m = two_state_model();
  std::vector<SoftmaxPolicy> pols{SoftmaxPolicy(1)};
  Rng rng(1);
  auto tr = sample_episode(m, pols, nullptr, rng);
  EXPECT_EQ(tr.steps.size(), 1u);
  EXPECT_TRUE(tr.steps[0].messages.empty());
}

TEST(SampleEpisode, SameSeedSameTrajectory) {
  auto m = make_random_decpomdp({2, 3, 2, 2, 3}, 11);
  auto pols = make_random_policies(m, 5);
  PerfectDecoderChannel ch(m.actions_per_agent);
  Rng r1(42), r2(42);
  auto a = sample_episode(m, pols, &ch, r1), b = sample_episode(m, pols, &ch, r2);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    EXPECT_EQ(a.steps[t].joint_action, b.steps[t].joint_action);
    EXPECT_EQ(a.steps[t].messages, b.steps[t].messages);
    EXPECT_EQ(a.steps[t].reward, b.steps[t].reward);
    EXPECT_EQ(a.steps[t].messages.size(), 2u);
  }
  EXPECT_NEAR(a.ret, discounted_return(a, m.gamma), 1e-10);
}

TEST(SampleEpisode, BernoulliMeanReturn) {
  auto m = two_state_model();
  std::vector<SoftmaxPolicy> pols{SoftmaxPolicy(1)};
  Rng rng(9);
  double sum = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) sum += sample_episode(m, pols, nullptr, rng).ret;
  EXPECT_NEAR(sum / n, 0.3, 0.01);
}

TEST(SampleEpisode, MeanReturnWithinThreeSigmaOfOracle) {
  auto m = make_random_decpomdp({2, 3, 2, 2, 3}, 21);
  auto pols = make_random_policies(m, 22);
  ExactOracle oracle(m, pols);
  const double truth = oracle.expected_return();
  Rng rng(23);
  for (int n : {1000, 10000, 100000}) {
    double s = 0.0, s2 = 0.0;
    for (int k = 0; k < n; ++k) {
      double g = sample_episode(m, pols, nullptr, rng).ret;
      s += g;
      s2 += g * g;
    }
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    EXPECT_LE(std::abs(mean - truth), 3.0 * se) << "n=" << n;
  }
}

TEST(TrafficJunction, SingleCarNeverCollides) {
  TrafficJunctionConfig c;
  c.num_agents = 1;
  auto env = traffic_junction_lite(c);
  auto codecs = make_codecs(env);
  std::vector<SoftmaxPolicy> pols{SoftmaxPolicy(2)};
  Rng rng(3);
  for (int k = 0; k < 200; ++k) EXPECT_TRUE(sample_episode(env, codecs, pols, nullptr, rng).success);
}

TEST(TrafficJunction, AlwaysAdvancingCrossingCarsCollide) {
  TrafficJunctionConfig c;
  c.num_agents = 2;
  c.spawn_prob = 1.0;
  c.arm_length = 2;
  auto env = traffic_junction_lite(c);
  Rng rng(0);
  env.reset(rng);
  for (int t = 0; t < 2; ++t) env.step({1, 1}, rng);
  EXPECT_EQ(env.positions(), (std::vector<int>{2, 2}));
  EXPECT_FALSE(env.success());
}

TEST(TrafficJunction, DeterministicPerSeed) {
  TrafficJunctionConfig c;
  auto env1 = traffic_junction_lite(c), env2 = traffic_junction_lite(c);
  auto codecs = make_codecs(env1);
  std::vector<SoftmaxPolicy> pols(4, SoftmaxPolicy(2));
  Rng r1(8), r2(8);
  for (int k = 0; k < 50; ++k)
    EXPECT_EQ(sample_episode(env1, codecs, pols, nullptr, r1).success,
              sample_episode(env2, codecs, pols, nullptr, r2).success);
}

TEST(TrafficJunction, RejectsTooManyAgents) {
  TrafficJunctionConfig c;
  c.num_agents = 5;
  EXPECT_THROW(traffic_junction_lite(c), std::invalid_argument);
  c.num_agents = 0;
  EXPECT_THROW(traffic_junction_lite(c), std::invalid_argument);
}
