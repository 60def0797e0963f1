#include "compander/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

using compander::StreamRng;

TEST(StreamRng, DeterministicAcrossInstances) {
  StreamRng g1(42, StreamRng::kInit, 3);
  StreamRng g2(42, StreamRng::kInit, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(g1.next_u64(), g2.next_u64());
}

TEST(StreamRng, StreamsIndependent) {
  StreamRng a(42, StreamRng::kInit, 0);
  StreamRng b(42, StreamRng::kInit, 1);
  StreamRng c(42, StreamRng::kShuffle, 0);
  int same_ab = 0, same_ac = 0;
  for (int i = 0; i < 64; ++i) {
    auto x = a.next_u64();
    if (x == b.next_u64()) ++same_ab;
    StreamRng c2(42, StreamRng::kShuffle, 0);
    (void)c2;
    if (x == c.next_u64()) ++same_ac;
  }
  EXPECT_EQ(same_ab, 0);
  EXPECT_EQ(same_ac, 0);
}

TEST(StreamRng, SeedChangesStream) {
  StreamRng a(1), b(2);
  EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(StreamRng, UnitRange) {
  StreamRng g(7);
  for (int i = 0; i < 10000; ++i) {
    double u = g.next_unit();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(StreamRng, UniformRangeAndMean) {
  StreamRng g(9);
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = g.uniform(-2.0, 6.0);
    EXPECT_GE(x, -2.0);
    EXPECT_LT(x, 6.0);
    sum += x;
  }
  EXPECT_NEAR(sum / n, 2.0, 0.1);
}

TEST(StreamRng, NormalMoments) {
  StreamRng g(11);
  const int n = 50000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    double x = g.normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(StreamRng, ShuffleIsPermutation) {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  StreamRng g(5, StreamRng::kShuffle, 0);
  g.shuffle(v.begin(), v.end());
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  bool moved = false;
  for (int i = 0; i < 100; ++i) moved |= (v[i] != i);
  EXPECT_TRUE(moved);
}

TEST(StreamRng, SampleIndices) {
  StreamRng g(13, StreamRng::kSubset);
  auto idx = g.sample_indices(1000, 50);
  EXPECT_EQ(idx.size(), 50u);
  std::set<std::size_t> uniq(idx.begin(), idx.end());
  EXPECT_EQ(uniq.size(), 50u);
  for (auto i : idx) EXPECT_LT(i, 1000u);
}

TEST(StreamRng, BelowBound) {
  StreamRng g(17);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(g.below(7), 7u);
}
