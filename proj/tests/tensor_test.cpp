#include "compander/tensor.hpp"

#include <gtest/gtest.h>

#include <stdexcept>

using compander::Shape;
using compander::Tensor;

TEST(Tensor, ConstructAndIndex) {
  Tensor<double> t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.ndim(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], 0.0);
  t[4] = 2.5;
  EXPECT_EQ(t[4], 2.5);
}

TEST(Tensor, FromData) {
  Tensor<double> t({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(t[3], 4.0);
  EXPECT_THROW(Tensor<double>({2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, RejectsZeroDim) {
  EXPECT_THROW(Tensor<double>({2, 0}), std::invalid_argument);
  EXPECT_THROW(Tensor<double>(Shape{}), std::invalid_argument);
}

TEST(Tensor, Reshape) {
  Tensor<double> t({2, 3}, {1, 2, 3, 4, 5, 6});
  auto r = t.reshaped({3, 2});
  EXPECT_EQ(r.dim(0), 3u);
  EXPECT_EQ(r[5], 6.0);
  EXPECT_THROW(t.reshaped({4, 2}), std::invalid_argument);
}

TEST(Tensor, FullAndFill) {
  auto t = Tensor<double>::full({3}, 7.0);
  EXPECT_EQ(t[2], 7.0);
  t.fill(-1.0);
  EXPECT_EQ(t[0], -1.0);
  auto s = Tensor<double>::scalar(4.0);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], 4.0);
}

TEST(Tensor, AllFinite) {
  Tensor<double> t({2}, {1.0, 2.0});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, ShapeStr) {
  Tensor<double> t({2, 3, 4});
  EXPECT_EQ(compander::shape_str(t.shape()), "[2,3,4]");
}
