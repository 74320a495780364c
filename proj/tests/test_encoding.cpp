#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpcomposer/encoding.hpp"

using namespace cpc;

TEST(Rbf, DefaultBasis) {
  const RbfSpec s;
  EXPECT_DOUBLE_EQ(s.spacing(), 24.0 / 31.0);
  EXPECT_DOUBLE_EQ(s.resolved_gamma(), 1.0 / (2.0 * s.spacing() * s.spacing()));
  EXPECT_DOUBLE_EQ(s.center(0), 0.0);
  EXPECT_DOUBLE_EQ(s.center(31), 24.0);
  EXPECT_THROW((RbfSpec{0, 20, 1, 0}).validate(), PreconditionError);
  EXPECT_THROW((RbfSpec{5, 5, 8, 0}).validate(), PreconditionError);
}

TEST(Rbf, LiftMatchesDirectFormula) {
  const RbfSpec s{0.0, 20.0, 32, 0.0};
  const double d = 5.5;
  const auto v = rbf_lift(d, s);
  ASSERT_EQ(v.size(), 32u);
  const double w = 20.0 / 31.0;
  for (int k = 0; k < 32; ++k) {
    const double u = d - k * w;
    EXPECT_NEAR(v[k], std::exp(-u * u / (2 * w * w)), 1e-15);
  }
  // peak at the nearest center
  EXPECT_EQ(std::max_element(v.begin(), v.end()) - v.begin(), std::lround(d / w));
}

TEST(Encode, TypeOneHot) {
  const Array a = encode_type(TypeConstraint({{1, aa::kCys}, {3, aa::kLys}}), 5);
  EXPECT_EQ(a.shape(), (Shape{5, 20}));
  double total = 0.0;
  for (double x : a.data()) total += x;
  EXPECT_EQ(total, 2.0);
  EXPECT_EQ(a.at(1, aa::kCys), 1.0);
  EXPECT_EQ(a.at(3, aa::kLys), 1.0);
  EXPECT_THROW(encode_type(TypeConstraint({{5, 0}}), 5), PreconditionError);
}

TEST(Encode, EmptyConstraintIsAllZero) {
  const auto s = unconditional_signals(7, RbfSpec{});
  EXPECT_EQ(s.node_signal, Array::zeros({7, 20}));
  EXPECT_TRUE(s.edges.empty());
}

TEST(Encode, DistanceEdgesAndClamping) {
  bool clamped = true;
  auto e = encode_distance(DistanceConstraint({{4, 1, 6.0}}), RbfSpec{}, &clamped);
  EXPECT_FALSE(clamped);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].i, 1u);
  EXPECT_EQ(e[0].j, 4u);
  e = encode_distance(DistanceConstraint({{0, 1, 30.0}}), RbfSpec{}, &clamped);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(e[0].rbf, rbf_lift(24.0, RbfSpec{}));
}

TEST(Encode, PairRejectsOutOfRange) {
  const ConstraintPair c{TypeConstraint(), DistanceConstraint({{0, 9, 3.8}})};
  EXPECT_THROW(encode_pair(c, 9, RbfSpec{}), PreconditionError);
  EXPECT_NO_THROW(encode_pair(c, 10, RbfSpec{}));
}

TEST(Encode, SignalDistance) {
  const RbfSpec s;
  const auto a = encode_pair({TypeConstraint(), DistanceConstraint({{0, 3, 5.0}})}, 6, s);
  const auto b = encode_pair({TypeConstraint(), DistanceConstraint({{0, 3, 5.01}})}, 6, s);
  const auto c = encode_pair({TypeConstraint(), DistanceConstraint({{0, 4, 5.0}})}, 6, s);
  EXPECT_EQ(signal_distance(a, a), 0.0);
  EXPECT_GT(signal_distance(a, b), 1e-9);
  EXPECT_TRUE(std::isinf(signal_distance(a, c)));
}

// Distinct constraints encode differently. Distances on a 0.01 A grid inside
// the basis range are the hardest case for the continuous lift.
TEST(Encode, InjectiveOnQuantizedDistances) {
  const RbfSpec s;
  double smallest = 1.0;
  for (int k = 1; k < 2400; ++k) {
    const double d0 = 0.01 * k, d1 = 0.01 * (k + 1);
    const auto a = encode_distance(DistanceConstraint({{0, 3, d0}}), s);
    const auto b = encode_distance(DistanceConstraint({{0, 3, d1}}), s);
    double m = 0.0;
    for (std::size_t c = 0; c < a[0].rbf.size(); ++c) m = std::max(m, std::abs(a[0].rbf[c] - b[0].rbf[c]));
    smallest = std::min(smallest, m);
  }
  EXPECT_GT(smallest, 1e-9);
}
