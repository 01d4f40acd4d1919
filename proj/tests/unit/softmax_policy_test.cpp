#include <gtest/gtest.h>

#include <cmath>

#include "dccda/softmax_policy.hpp"

using namespace dccda;

namespace {

SoftmaxPolicy with_logits(std::vector<double> theta, HistoryKey h = 0) {
  SoftmaxPolicy pi(static_cast<int>(theta.size()));
  pi.set_logits(h, std::move(theta));
  return pi;
}

double log_prob(const std::vector<double>& theta, int a) { return std::log(softmax(theta)[a]); }

}  // namespace

TEST(ActionDistribution, ClosedForms) {
  auto p = action_distribution(with_logits({0, 0}), 0);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  p = action_distribution(with_logits({std::log(3.0), 0}), 0);
  const double e = std::exp(std::log(3.0));
  EXPECT_NEAR(p[0], e / (e + 1.0), 1e-15);
  EXPECT_NEAR(p[0], 0.75, 1e-12);
  EXPECT_NEAR(p[1], 0.25, 1e-12);
  p = action_distribution(with_logits({5, 5, 5}), 0);
  for (double x : p) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
}

TEST(ActionDistribution, UnseenHistoryIsUniform) {
  SoftmaxPolicy pi(4);
  for (double x : action_distribution(pi, 123)) EXPECT_DOUBLE_EQ(x, 0.25);
}

TEST(LogProbGradient, AnalyticValues) {
  auto g = log_prob_gradient(with_logits({0, 0}), 0, 0).values;
  EXPECT_NEAR(g[0], 0.5, 1e-15);
  EXPECT_NEAR(g[1], -0.5, 1e-15);
  g = log_prob_gradient(with_logits({std::log(3.0), 0}), 0, 1).values;
  EXPECT_NEAR(g[0], -0.75, 1e-12);
  EXPECT_NEAR(g[1], 0.75, 1e-12);
  EXPECT_THROW(log_prob_gradient(with_logits({0, 0}), 0, 2), std::invalid_argument);
}

TEST(LogProbGradient, MatchesFiniteDifferences) {
  Rng rng(17);
  const double step = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 4;
    std::vector<double> theta(n);
    for (auto& x : theta) x = 4.0 * uniform01(rng) - 2.0;
    const int a = static_cast<int>(rng() % n);
    auto g = log_prob_gradient(with_logits(theta), 0, a).values;
    double err = 0.0, ref = 0.0;
    for (int k = 0; k < n; ++k) {
      auto up = theta, dn = theta;
      up[k] += step;
      dn[k] -= step;
      const double fd = (log_prob(up, a) - log_prob(dn, a)) / (2 * step);
      err = std::max(err, std::abs(fd - g[k]));
      ref = std::max(ref, std::abs(fd));
    }
    EXPECT_LT(err / ref, 1e-6);
  }
}

TEST(LogProbGradient, CoordinatesSumToZeroAndScoreMeanIsZero) {
  auto pi = with_logits({0.3, -1.2, 2.0});
  std::vector<double> mean(3, 0.0);
  auto p = action_distribution(pi, 0);
  for (int a = 0; a < 3; ++a) {
    auto g = log_prob_gradient(pi, 0, a).values;
    EXPECT_NEAR(g[0] + g[1] + g[2], 0.0, 1e-15);
    for (int k = 0; k < 3; ++k) mean[k] += p[a] * g[k];
  }
  for (double x : mean) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(GradInnerProduct, Values) {
  EXPECT_NEAR(grad_inner_product(with_logits({0, 0}), 0, 1), 0.5, 1e-15);
  auto pi = with_logits({std::log(3.0), 0});
  EXPECT_NEAR(grad_inner_product(pi, 0, 0), 0.125, 1e-12);
  EXPECT_NEAR(grad_inner_product(pi, 0, 1), 1.125, 1e-12);
  const double eps = 1e-9;
  auto near_det = with_logits({std::log(1 - eps), std::log(eps)});
  EXPECT_NEAR(grad_inner_product(near_det, 0, 0), 2 * eps * eps, 1e-24);
}

TEST(GradInnerProduct, EqualsSelfDot) {
  auto pi = with_logits({0.1, 0.7, -0.4, 1.5});
  for (int a = 0; a < 4; ++a) {
    auto g = log_prob_gradient(pi, 0, a).values;
    double dot = 0.0;
    for (double x : g) dot += x * x;
    EXPECT_NEAR(grad_inner_product(pi, 0, a), dot, 1e-12);
  }
}

TEST(SampleAction, FrequenciesAndDeterminism) {
  auto pi = with_logits({std::log(0.3), std::log(0.7)});
  Rng rng(5);
  int ones = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) ones += sample_action(pi, 0, rng);
  EXPECT_NEAR(double(ones) / n, 0.7, 0.01);
  Rng a(99), b(99);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(sample_action(pi, 0, a), sample_action(pi, 0, b));
  auto det = with_logits({0.0, std::log(1e-12)});
  Rng c(1);
  for (int k = 0; k < 10000; ++k) EXPECT_EQ(sample_action(det, 0, c), 0);
}

TEST(ApplyGradient, SgdAndAdam) {
  auto pi = with_logits({0.2, -0.3});
  auto before = pi;
  PolicyGradient zero{{0, {0.0, 0.0}}};
  apply_gradient(pi, zero, 0.1);
  EXPECT_EQ(pi, before);
  Adam adam;
  adam.step(pi, zero, 0.1);
  EXPECT_EQ(pi, before);

  PolicyGradient g;
  accumulate(g, log_prob_gradient(pi, 0, 1));
  const double p1 = action_distribution(pi, 0)[1];
  apply_gradient(pi, g, 0.5);
  EXPECT_GT(action_distribution(pi, 0)[1], p1);

  PolicyGradient bad{{0, {NAN, 0.0}}};
  EXPECT_THROW(apply_gradient(pi, bad, 0.1), std::domain_error);
  EXPECT_THROW(apply_gradient(pi, g, 0.0), std::invalid_argument);
}

TEST(PolicyJson, RoundTrip) {
  auto pi = with_logits({0.5, -0.25}, 7);
  nlohmann::json j = pi;
  EXPECT_EQ(j.get<SoftmaxPolicy>(), pi);
}
