#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cpcomposer/eval.hpp"

using namespace cpc;

namespace {

// Reference KL written out with no shared helpers.
double brute_kl(std::vector<double> a, std::vector<double> b, double eps) {
  double sa = 0, sb = 0;
  for (auto& x : a) sa += (x += eps);
  for (auto& x : b) sb += (x += eps);
  double kl = 0;
  for (std::size_t k = 0; k < a.size(); ++k) kl += a[k] / sa * std::log((a[k] / sa) / (b[k] / sb));
  return kl;
}

GeometricGraph with_types(std::vector<int> types) {
  GeometricGraph g;
  for (std::size_t i = 0; i < types.size(); ++i) g.coords.push_back({3.8 * i, 0.0, 0.0});
  g.types = std::move(types);
  return g;
}

}  // namespace

TEST(Kl, MatchesBruteForce) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> count(0, 9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(12), b(12);
    for (auto& x : a) x = count(rng);
    for (auto& x : b) x = count(rng);
    EXPECT_NEAR(kl_divergence(smooth_normalize(a), smooth_normalize(b)), brute_kl(a, b, 1e-6), 1e-12);
  }
}

TEST(Kl, ZeroForIdenticalAndFiniteForDisjoint) {
  const std::vector<double> a{3, 0, 1}, b{0, 4, 0};
  EXPECT_EQ(kl_divergence(smooth_normalize(a), smooth_normalize(a)), 0.0);
  const double d = kl_divergence(smooth_normalize(a), smooth_normalize(b));
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_GT(d, 1.0);
  EXPECT_THROW(kl_divergence({1.0}, {0.5, 0.5}), ShapeError);
}

TEST(AaKl, ExcludesConstrainedTypes) {
  // the generated set differs from the reference only in Cys content
  const std::vector<GeometricGraph> ref{with_types({0, 1, 2, 3, 0, 1, 2, 3})};
  const std::vector<GeometricGraph> gen{with_types({0, 1, 2, 3, 0, 1, 2, 3, aa::kCys, aa::kCys})};
  EXPECT_GT(aa_kl(ref, gen), 1e-3);
  EXPECT_NEAR(aa_kl(ref, gen, {aa::kCys}), 0.0, 1e-12);
  EXPECT_EQ(type_histogram(gen, {aa::kCys}).size(), 19u);
  EXPECT_THROW(aa_kl({}, gen), PreconditionError);
}

TEST(Dihedrals, BinsAndPlanarCases) {
  EXPECT_EQ(angle_bin(std::numbers::pi, 36), 35u);
  EXPECT_EQ(angle_bin(-std::numbers::pi, 36), 0u);
  EXPECT_EQ(angle_bin(0.0, 36), 17u);
  EXPECT_EQ(angle_bin(1e-9, 36), 18u);
  GeometricGraph cis;
  cis.coords = {{0, 0, 0}, {3.8, 0, 0}, {3.8, 3.8, 0}, {0, 3.8, 0}};
  cis.types = {0, 0, 0, 0};
  ASSERT_EQ(pseudo_dihedrals(cis).size(), 1u);
  EXPECT_NEAR(pseudo_dihedrals(cis)[0], 0.0, 1e-12);
  GeometricGraph trans = cis;
  trans.coords[3] = {7.6, 3.8, 0};
  EXPECT_NEAR(pseudo_dihedrals(trans)[0], std::numbers::pi, 1e-12);
  EXPECT_THROW(pseudo_dihedrals(with_types({0, 0, 0})), PreconditionError);
}

TEST(Dihedrals, RigidInvarianceAndMirrorSign) {
  const GeometricGraph g = generate_chain(12, 4);
  std::mt19937_64 rng(3);
  const Mat3 r = random_orthogonal(rng, false);
  GeometricGraph moved = g, mirrored = g;
  for (auto& x : moved.coords) x = cpc::apply(r, x) + Vec3{1, 2, 3};
  for (auto& x : mirrored.coords) x[2] = -x[2];
  const auto a = pseudo_dihedrals(g), b = pseudo_dihedrals(moved), c = pseudo_dihedrals(mirrored);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_NEAR(a[k], b[k], 1e-9);
    EXPECT_NEAR(a[k], -c[k], 1e-9);
  }
  EXPECT_NEAR(pseudo_dihedral_kl({g}, {moved}), 0.0, 1e-12);
}

TEST(Dihedrals, KlGrowsWithDistortion) {
  std::vector<GeometricGraph> ref;
  for (int k = 0; k < 50; ++k) ref.push_back(generate_chain(12, k));
  std::mt19937_64 rng(7);
  double previous = -1.0;
  for (double noise : {0.0, 0.5, 2.0}) {
    std::normal_distribution<double> normal(0.0, noise);
    std::vector<GeometricGraph> gen;
    for (int k = 0; k < 50; ++k) {
      GeometricGraph g = generate_chain(12, 1000 + k);
      if (noise > 0)
        for (auto& x : g.coords)
          for (auto& v : x) v += normal(rng);
      gen.push_back(g);
    }
    const double kl = pseudo_dihedral_kl(ref, gen);
    EXPECT_GT(kl, previous);
    previous = kl;
  }
}

TEST(Success, FractionOfTargetsWithAPassingSample) {
  std::map<std::string, ConstraintPair> targets;
  std::map<std::string, std::vector<GeometricGraph>> samples;
  for (int k = 0; k < 10; ++k) {
    const std::string id = "t" + std::to_string(k);
    const auto g = with_types({0, 0, 0, 0, 0});
    // targets 0..2 are satisfiable by the second sample only
    targets[id] = {TypeConstraint({{1, k < 3 ? 0 : aa::kCys}}), DistanceConstraint()};
    GeometricGraph miss = g;
    miss.types[1] = aa::kLys;
    samples[id] = {miss, g};
  }
  std::vector<TargetResult> detail;
  EXPECT_DOUBLE_EQ(success_rate(samples, targets, kDefaultTolerance, &detail), 0.3);
  ASSERT_EQ(detail.size(), 10u);
  EXPECT_EQ(detail[0].passing, 1u);
  EXPECT_EQ(detail[9].passing, 0u);
  targets.erase("t4");
  EXPECT_THROW(success_rate(samples, targets), PreconditionError);
}

TEST(Success, EvaluateReport) {
  std::map<std::string, ConstraintPair> targets{
      {"a", {TypeConstraint({{0, aa::kCys}}), DistanceConstraint()}}};
  GeometricGraph g = generate_chain(8, 1);
  g.types[0] = aa::kCys;
  const auto r = evaluate({{"a", {g}}}, targets, {generate_chain(8, 2)});
  EXPECT_EQ(r.success_rate, 1.0);
  EXPECT_EQ(r.excluded_types, (std::set<int>{aa::kCys}));
  EXPECT_GE(r.aa_kl, 0.0);
  EXPECT_GE(r.dihedral_kl, 0.0);
}
