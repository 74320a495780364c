#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "cpcomposer/tensor.hpp"

using namespace cpc;

namespace {

Array random_array(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_size(s));
  for (auto& x : v) x = u(rng);
  return Array(std::move(s), std::move(v));
}

// Builds a scalar from the inputs on a fresh tape.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

double evaluate(const ScalarFn& f, const std::vector<Array>& xs) {
  Tape tape(false);
  std::vector<Var> vs;
  for (const auto& x : xs) vs.push_back(tape.constant(x));
  return f(tape, vs).value().item();
}

// Max relative error between reverse-mode and central differences over every
// input entry.
double gradient_error(const ScalarFn& f, const std::vector<Array>& xs, double h = 1e-6) {
  Tape tape;
  std::vector<Var> vs;
  for (const auto& x : xs) vs.push_back(tape.leaf(x));
  auto grads = tape.backward(f(tape, vs));
  double worst = 0.0;
  for (std::size_t a = 0; a < xs.size(); ++a) {
    const Array analytic = grads[vs[a]];
    for (std::size_t k = 0; k < xs[a].size(); ++k) {
      auto plus = xs, minus = xs;
      std::vector<double> vp(xs[a].values()), vm(xs[a].values());
      vp[k] += h;
      vm[k] -= h;
      plus[a] = Array(xs[a].shape(), vp);
      minus[a] = Array(xs[a].shape(), vm);
      const double fd = (evaluate(f, plus) - evaluate(f, minus)) / (2 * h);
      const double err = std::abs(fd - analytic[k]) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Contracts an arbitrary-shaped value with fixed weights so every output entry
// reaches the scalar with a distinct coefficient.
Var contract(Tape& t, const Var& v, std::uint64_t seed = 99) {
  return sum(mul(v, t.constant(random_array(v.shape(), seed))));
}

}  // namespace

TEST(Array, FactoriesAndAccess) {
  auto m = Array::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.rank(), 2u);
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(Array::scalar(2.5).item(), 2.5);
  EXPECT_EQ(Array::identity(3).at(2, 2), 1.0);
  EXPECT_EQ(Array::zeros({2, 2}).size(), 4u);
  EXPECT_THROW(Array({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(m.item(), ShapeError);
  EXPECT_EQ(m.reshaped({3, 2}).at(2, 1), 6.0);
}

TEST(Tape, BackwardRequiresScalarOutput) {
  Tape t;
  Var x = t.leaf(Array::vector({1, 2}));
  EXPECT_THROW(t.backward(x), ShapeError);
}

TEST(Tape, DetachedLeafGetsZeroGradient) {
  Tape t;
  Var x = t.leaf(Array::vector({1, 2}));
  Var y = t.leaf(Array::vector({3, 4}));
  auto g = t.backward(sum(x));
  EXPECT_EQ(g[y], Array::zeros({2}));
  EXPECT_EQ(g[x], Array::vector({1, 1}));
}

TEST(Tape, NonRecordingTapeKeepsValuesOnly) {
  Tape t(false);
  Var x = t.leaf(Array::vector({1, 2}));
  Var y = sum(mul(x, x));
  EXPECT_DOUBLE_EQ(y.value().item(), 5.0);
  EXPECT_FALSE(t.requires_grad(y.id()));
}

TEST(Tape, MismatchedShapesThrow) {
  Tape t;
  Var a = t.leaf(Array::zeros({2, 3}));
  Var b = t.leaf(Array::zeros({3, 2}));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Tape, ReusedValueAccumulates) {
  Tape t;
  Var x = t.leaf(Array::scalar(3.0));
  auto g = t.backward(mul(x, mul(x, x)));  // x^3
  EXPECT_DOUBLE_EQ(g[x].item(), 27.0);
}

TEST(Tape, LeadingDimensionBroadcast) {
  Tape t;
  Var a = t.leaf(Array::matrix(2, 2, {1, 2, 3, 4}));
  Var b = t.leaf(Array::vector({10, 20}));
  Var c = add(a, b);
  EXPECT_EQ(c.value(), Array::matrix(2, 2, {11, 22, 13, 24}));
  auto g = t.backward(sum(c));
  EXPECT_EQ(g[b], Array::vector({2, 2}));
}

struct PrimitiveCase {
  const char* name;
  std::vector<Shape> shapes;
  ScalarFn fn;
  double lo = -1.0;
};

class PrimitiveGradient : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const auto& c = GetParam();
  std::vector<Array> xs;
  for (std::size_t k = 0; k < c.shapes.size(); ++k) xs.push_back(random_array(c.shapes[k], 17 + k, c.lo, 1.0));
  EXPECT_LT(gradient_error(c.fn, xs), 1e-7) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    AllPrimitives, PrimitiveGradient,
    ::testing::Values(
        PrimitiveCase{"add", {{3, 2}, {3, 2}}, [](Tape& t, const auto& v) { return contract(t, add(v[0], v[1])); }},
        PrimitiveCase{"add_broadcast", {{3, 2}, {2}}, [](Tape& t, const auto& v) { return contract(t, add(v[0], v[1])); }},
        PrimitiveCase{"sub", {{4}, {4}}, [](Tape& t, const auto& v) { return contract(t, sub(v[0], v[1])); }},
        PrimitiveCase{"mul", {{2, 3}, {2, 3}}, [](Tape& t, const auto& v) { return contract(t, mul(v[0], v[1])); }},
        PrimitiveCase{"mul_broadcast", {{4, 3}, {3}}, [](Tape& t, const auto& v) { return contract(t, mul(v[0], v[1])); }},
        PrimitiveCase{"scale", {{5}}, [](Tape& t, const auto& v) { return contract(t, scale(v[0], -2.5)); }},
        PrimitiveCase{"shift", {{5}}, [](Tape& t, const auto& v) { return contract(t, mul(shift(v[0], 0.7), v[0])); }},
        PrimitiveCase{"exp", {{2, 2}}, [](Tape& t, const auto& v) { return contract(t, exp(v[0])); }},
        PrimitiveCase{"tanh", {{6}}, [](Tape& t, const auto& v) { return contract(t, tanh(v[0])); }},
        PrimitiveCase{"silu", {{6}}, [](Tape& t, const auto& v) { return contract(t, silu(scale(v[0], 3.0))); }},
        PrimitiveCase{"reciprocal", {{4}}, [](Tape& t, const auto& v) { return contract(t, reciprocal(v[0])); }, 0.5},
        PrimitiveCase{"matmul", {{3, 4}, {4, 2}}, [](Tape& t, const auto& v) { return contract(t, matmul(v[0], v[1])); }},
        PrimitiveCase{"matvec", {{3, 4}, {4}}, [](Tape& t, const auto& v) { return contract(t, matmul(v[0], v[1])); }},
        PrimitiveCase{"sum", {{3, 3}}, [](Tape&, const auto& v) { return sum(mul(v[0], v[0])); }},
        PrimitiveCase{"row_sum", {{4, 3}}, [](Tape& t, const auto& v) { return contract(t, row_sum(v[0])); }},
        PrimitiveCase{"broadcast_cols", {{4}}, [](Tape& t, const auto& v) { return contract(t, broadcast_cols(v[0], 3)); }},
        PrimitiveCase{"norm", {{5}}, [](Tape&, const auto& v) { return norm(v[0]); }},
        PrimitiveCase{"row_norm", {{4, 3}}, [](Tape& t, const auto& v) { return contract(t, row_norm(v[0])); }},
        PrimitiveCase{"concat_rows", {{2, 3}, {2, 1}}, [](Tape& t, const auto& v) { return contract(t, concat({v[0], v[1]})); }},
        PrimitiveCase{"concat_vec", {{2}, {3}}, [](Tape& t, const auto& v) { return contract(t, concat({v[0], v[1]})); }},
        PrimitiveCase{"gather", {{4, 2}},
                      [](Tape& t, const auto& v) { return contract(t, gather(v[0], {3, 0, 3, 1, 1})); }},
        PrimitiveCase{"scatter_add", {{5, 2}},
                      [](Tape& t, const auto& v) { return contract(t, scatter_add(v[0], {0, 2, 0, 1, 2}, 3)); }},
        PrimitiveCase{"reshape", {{2, 3}}, [](Tape& t, const auto& v) { return contract(t, reshape(v[0], {3, 2})); }},
        PrimitiveCase{"composite", {{3, 4}, {4, 4}, {4}},
                      [](Tape& t, const auto& v) {
                        Var h = silu(add(matmul(v[0], v[1]), v[2]));
                        return contract(t, mul(row_norm(h), reciprocal(shift(row_sum(mul(h, h)), 1.0))));
                      }}),
    [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return std::string(info.param.name); });

TEST(Primitives, NormIsSmoothAtZero) {
  Tape t;
  Var x = t.leaf(Array::zeros({3}));
  Var n = norm(x);
  EXPECT_NEAR(n.value().item(), 1e-5, 1e-12);
  auto g = t.backward(n);
  const Array gx = g[x];
  for (double v : gx.data()) EXPECT_EQ(v, 0.0);
}

TEST(Primitives, GatherAndScatterAreAdjoint) {
  // <gather(a, idx), b> == <a, scatter_add(b, idx)>
  const Array a = random_array({4, 3}, 1), b = random_array({6, 3}, 2);
  const std::vector<std::size_t> idx{2, 0, 3, 3, 1, 0};
  Tape t(false);
  const double lhs = sum(mul(gather(t.constant(a), idx), t.constant(b))).value().item();
  const double rhs = sum(mul(t.constant(a), scatter_add(t.constant(b), idx, 4))).value().item();
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Primitives, IndexOutOfRangeThrows) {
  Tape t;
  Var a = t.leaf(Array::zeros({2, 2}));
  EXPECT_THROW(gather(a, {2}), ShapeError);
  EXPECT_THROW(scatter_add(a, {0, 5}, 3), ShapeError);
  EXPECT_THROW(reshape(a, {3}), ShapeError);
}
