#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dccda/comm.hpp"
#include "dccda/enumeration.hpp"
#include "dccda/oracle.hpp"

using namespace dccda;

TEST(SampleMessage, PointMassFrequencyAndDeterminism) {
  MessageFunction f(3, RowInit::strict);
  f.set_row(4, 1, {1.0, 0.0, 0.0});
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) EXPECT_EQ(sample_message(f, 4, 1, rng), 0u);

  MessageFunction g(2, RowInit::strict);
  g.set_row(0, 0, {0.2, 0.8});
  int ones = 0;
  for (int k = 0; k < 100000; ++k) ones += static_cast<int>(sample_message(g, 0, 0, rng));
  EXPECT_NEAR(ones / 1e5, 0.8, 0.01);

  Rng a(3), b(3);
  EXPECT_EQ(sample_message(g, 0, 0, a), sample_message(g, 0, 0, b));
}

TEST(SampleMessage, MissingRowIsAnError) {
  MessageFunction f(2, RowInit::strict);
  Rng rng(0);
  EXPECT_THROW(sample_message(f, 0, 0, rng), std::out_of_range);
  EXPECT_THROW(f.set_row(0, 0, {0.5, 0.6}), std::invalid_argument);
}

TEST(MessageFunction, RandomRowsAreStableAndNormalized) {
  MessageFunction f(4, RowInit::random, 9);
  auto r1 = f.row(12, 1), r2 = f.row(12, 1);
  EXPECT_EQ(r1, r2);
  double s = 0.0;
  for (double x : r1) s += x;
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_NE(f.row(12, 0), r1);
}

TEST(Broadcast, ExclusionAndOrdering) {
  EXPECT_EQ(broadcast({10, 20}, 0, 2).ids, (std::vector<MessageId>{20}));
  EXPECT_EQ(broadcast({5, 6, 7}, 1, 3).ids, (std::vector<MessageId>{5, 7}));
  EXPECT_TRUE(broadcast({5}, 0, 1).ids.empty());
  EXPECT_THROW(broadcast({1, 2}, 0, 3), std::invalid_argument);
}

TEST(PerfectDecoder, RoundTripAndInjectivity) {
  auto m = make_random_decpomdp({2, 2, 2, 2, 2}, 4);
  auto pols = make_random_policies(m, 5);
  PerfectDecoderChannel ch(m.actions_per_agent);
  std::set<std::pair<HistoryKey, int>> inputs;
  std::set<MessageId> images;
  for (const auto& o : enumerate_joint_outcomes(m, pols)) {
    auto rec = perfect_decoder_channel(o.history, o.joint_action, 0, ch);
    ASSERT_EQ(rec.ids.size(), 1u);
    auto [h, a] = ch.decode(1, rec.ids[0]);
    EXPECT_EQ(h, o.history[1]);
    EXPECT_EQ(a, o.joint_action[1]);
    inputs.insert({h, a});
    images.insert(rec.ids[0]);
  }
  EXPECT_EQ(inputs.size(), images.size());
}

TEST(PerfectDecoder, HorizonOneMessageSpace) {
  auto m = make_random_decpomdp({2, 2, 3, 2, 1}, 6);
  auto pols = make_random_policies(m, 7);
  PerfectDecoderChannel ch(m.actions_per_agent);
  std::set<MessageId> seen;
  for (const auto& o : enumerate_joint_outcomes(m, pols))
    seen.insert(perfect_decoder_channel(o.history, o.joint_action, 0, ch).ids[0]);
  EXPECT_EQ(seen.size(), static_cast<std::size_t>(m.obs_per_agent[1] * m.actions_per_agent[1]));
}

TEST(NoiseModel, UniformRateFormula) {
  for (int k = 1; k <= 3; ++k)
    for (int d = -k; d <= k + 1; ++d) {
      auto n = NoiseModel::uniform(k, d);
      if (n.rate() >= 0.5) continue;
      EXPECT_NEAR(n.rate(), double(d + k) / (2 * k + 1), 1e-15);
    }
  EXPECT_THROW(NoiseModel::uniform(1, 2).check(), std::domain_error);
  EXPECT_DOUBLE_EQ(NoiseModel::with_rate(0.25).rate(), 0.25);
}

TEST(CorruptReward, Branches) {
  auto n = NoiseModel::with_rate(0.25);
  EXPECT_EQ(corrupt_reward(1.0, 0, n), 1.0);
  EXPECT_EQ(corrupt_reward(1.0, -1, n), 0.0);
  EXPECT_THROW(corrupt_reward(0.5, 0, n), std::invalid_argument);
}

TEST(CorruptReward, FlipRateExactAndSampled) {
  auto n = NoiseModel::uniform(3, -1);
  double exact = 0.0;
  for (std::size_t k = 0; k < n.noise_set.size(); ++k)
    if (corrupt_reward(1.0, n.noise_set[k], n) != 1.0) exact += n.dist[k];
  EXPECT_DOUBLE_EQ(exact, n.rate());
  Rng rng(8);
  const int draws = 100000;
  int flips = 0;
  for (int k = 0; k < draws; ++k) flips += corrupt_reward(1.0, n.noise_set[sample_categorical(n.dist, rng)], n) != 1.0;
  const double e = n.rate();
  EXPECT_LE(std::abs(double(flips) / draws - e), 3.0 * std::sqrt(e * (1 - e) / draws));
}

TEST(SurrogateReward, Values) {
  auto zero = NoiseModel::with_rate(0.0);
  EXPECT_EQ(surrogate_reward(1.0, 0, zero), 1.0);
  EXPECT_EQ(surrogate_reward(0.0, 0, zero), 0.0);
  auto n = NoiseModel::with_rate(0.25);
  EXPECT_NEAR(surrogate_reward(1.0, 0, n), 1.5, 1e-15);
  EXPECT_NEAR(surrogate_reward(1.0, -1, n), -0.5, 1e-15);
  EXPECT_NEAR(0.75 * surrogate_reward(1.0, 0, n) + 0.25 * surrogate_reward(1.0, -1, n), 1.0, 1e-15);
  NoiseModel bad = NoiseModel::with_rate(0.25);
  bad.dist = {0.5, 0.5};
  EXPECT_THROW(surrogate_reward(1.0, 0, bad), std::domain_error);
}

TEST(SurrogateReward, UnbiasedForEveryRate) {
  for (double e : {0.0, 0.05, 0.1, 0.25, 0.4, 0.49})
    for (auto [rp, rm] : {std::pair{1.0, 0.0}, std::pair{1.0, -1.0}, std::pair{3.5, -2.0}}) {
      auto n = NoiseModel::with_rate(e, rp, rm);
      for (double r : {rp, rm}) {
        double mean = 0.0;
        for (std::size_t k = 0; k < n.noise_set.size(); ++k) mean += n.dist[k] * surrogate_reward(r, n.noise_set[k], n);
        EXPECT_NEAR(mean, r, 1e-12) << "e=" << e;
      }
    }
}

TEST(NoiseModelJson, RoundTrip) {
  auto n = NoiseModel::uniform(2, 0, 1.0, -1.0);
  nlohmann::json j = n;
  auto back = j.get<NoiseModel>();
  EXPECT_EQ(back.noise_set, n.noise_set);
  EXPECT_DOUBLE_EQ(back.rate(), n.rate());
}
