#include <gtest/gtest.h>

#include <set>

#include "dccda/history.hpp"

using namespace dccda;

TEST(HistoryCodec, LevelSizesAndOffsets) {
  HistoryCodec c(2, 2, 2);
  EXPECT_EQ(c.level_size(0), 2u);
  EXPECT_EQ(c.level_size(1), 8u);
  EXPECT_EQ(c.level_size(2), 32u);
  EXPECT_EQ(c.size(), 42u);
}

TEST(HistoryCodec, RoundTripIsInjective) {
  HistoryCodec c(3, 2, 3);
  std::set<HistoryKey> seen;
  for (HistoryKey k = 0; k < c.size(); ++k) {
    AgentHistory h = c.decode(k);
    ASSERT_EQ(h.entries.size() % 2, 1u);
    EXPECT_EQ(c.encode(h), k);
    EXPECT_TRUE(seen.insert(c.encode(h)).second);
  }
  EXPECT_EQ(seen.size(), c.size());
}

TEST(HistoryCodec, ExtendMatchesEncode) {
  HistoryCodec c(2, 3, 3);
  AgentHistory h{{1, 2, 0, 1, 1}};
  EXPECT_EQ(c.extend(c.extend(c.initial(1), 2, 0), 1, 1), c.encode(h));
  EXPECT_EQ(c.decode(c.encode(h)), h);
  EXPECT_EQ(c.level(c.encode(h)), 2);
}

TEST(HistoryCodec, WindowKeepsLastSteps) {
  HistoryCodec c(2, 2, 10, 1);
  HistoryKey k = c.initial(0);
  k = c.extend(k, 1, 1);
  k = c.extend(k, 0, 0);
  k = c.extend(k, 1, 0);
  EXPECT_EQ(c.decode(k), (AgentHistory{{0, 1, 0}}));
  EXPECT_EQ(c.size(), 2u + 8u);
}

TEST(HistoryCodec, RejectsOverlongAndBadInputs) {
  HistoryCodec c(2, 2, 1);
  HistoryKey k = c.extend(c.initial(0), 0, 0);
  EXPECT_THROW(c.extend(k, 0, 0), std::out_of_range);
  EXPECT_THROW(c.initial(2), std::out_of_range);
  EXPECT_THROW(c.level(c.size()), std::out_of_range);
  EXPECT_THROW(HistoryCodec(0, 1, 1), std::invalid_argument);
}
