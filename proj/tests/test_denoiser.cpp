#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "cpcomposer/denoiser.hpp"
#include "cpcomposer/diffusion.hpp"

using namespace cpc;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.latent_width = 4;
  c.hidden = 8;
  c.layers = 2;
  c.time_width = 4;
  c.steps = 10;
  c.geom_channels = 4;
  c.rbf.channels = 8;
  c.init_seed = 3;
  return c;
}

// Non-trivial coordinate heads so equivariance is exercised, not vacuous.
DenoiserParams perturbed(const ModelConfig& c, std::uint64_t seed) {
  auto p = init_params(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto& [name, a] : p.arrays) {
    if (!name.ends_with("coord.w2") && !name.ends_with(".b")) continue;
    std::vector<double> v(a->values());
    for (auto& x : v) x += normal(rng);
    a = std::make_shared<const Array>(Array(a->shape(), std::move(v)));
  }
  return p;
}

DenoiserInput random_input(const DenoiserParams& p, std::size_t n, std::size_t n_ctx, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GeometricGraph g = generate_chain(static_cast<int>(n), rng());
  for (std::size_t k = 0; k < n_ctx; ++k) {
    g.context_types.push_back(static_cast<int>(k % kNumTypes));
    g.context_coords.push_back({8.0 + 2.0 * k, -3.0, 1.5 * k});
  }
  GaussianNoise noise(rng());
  auto z = forward_noise(encode_latent(g, p.codec()), 4, DiffusionSchedule::for_model(p.config), noise);
  ConstraintPair c{TypeConstraint({{1, aa::kCys}}), DistanceConstraint({{0, n - 1, 3.8}, {1, 3, 5.0}})};
  return {z.latent, encode_pair(c, n, p.config.rbf), 4};
}

Array move_rows(const Array& a, const Mat3& r, const Vec3& shift) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    const Vec3 x = apply(r, {a.at(i, 0), a.at(i, 1), a.at(i, 2)}) + shift;
    for (int k = 0; k < 3; ++k) v[i * 3 + k] = x[k];
  }
  return Array(a.shape(), std::move(v));
}

LatentGraph transform(const LatentGraph& z, const Mat3& r, const Vec3& shift) {
  LatentGraph out = z;
  out.eqv = move_rows(z.eqv, r, shift);
  out.ctx_eqv = move_rows(z.ctx_eqv, r, shift);
  return out;
}

}  // namespace

TEST(Params, ShapesAndCount) {
  const auto c = small_config();
  const auto p = init_params(c);
  std::size_t expected = 0;
  for (const auto& [name, shape] : parameter_shapes(c)) {
    EXPECT_EQ(p.at(name).shape(), shape) << name;
    expected += shape_size(shape);
  }
  EXPECT_EQ(count_params(p), expected);
  EXPECT_EQ(p.at("layer0.adapter.msg.w1").dim(0), 2 * 8 + 1 + 4 + 8u);
  EXPECT_EQ(p.at("layer1.main.msg.w1").dim(0), 2 * 8 + 1 + 4 + 2u);
  EXPECT_FALSE(DenoiserParams::trainable("codec.table"));
  EXPECT_TRUE(DenoiserParams::trainable("embed.w"));
}

TEST(Params, InitIsDeterministic) {
  EXPECT_EQ(init_params(small_config()), init_params(small_config()));
  auto other = small_config();
  other.init_seed = 4;
  EXPECT_FALSE(init_params(small_config()) == init_params(other));
}

TEST(Params, TimeTableStartsSinusoidal) {
  const auto p = init_params(small_config());
  const auto e = sinusoidal_embedding(3, 4);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(p.at("time.table").at(2, k), e[k]);
}

TEST(Forward, OutputShapesAndCentering) {
  const auto p = perturbed(small_config(), 1);
  const auto in = random_input(p, 7, 0, 2);
  const auto [inv, eqv] = predict_noise(p, in);
  EXPECT_EQ(inv.shape(), (Shape{7, 4}));
  EXPECT_EQ(eqv.shape(), (Shape{7, 3}));
  for (int k = 0; k < 3; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < 7; ++i) s += eqv.at(i, k);
    EXPECT_NEAR(s, 0.0, 1e-12);
  }
}

TEST(Forward, ZeroLayersGivesZeroNoise) {
  auto c = small_config();
  c.layers = 0;
  const auto p = init_params(c);
  const auto [inv, eqv] = predict_noise(p, random_input(p, 5, 0, 1));
  EXPECT_EQ(inv, Array::zeros({5, 4}));
  EXPECT_EQ(eqv, Array::zeros({5, 3}));
}

TEST(Forward, RejectsBadInputs) {
  const auto p = init_params(small_config());
  auto in = random_input(p, 6, 0, 1);
  in.t = 0;
  EXPECT_THROW(predict_noise(p, in), PreconditionError);
  in.t = 11;
  EXPECT_THROW(predict_noise(p, in), PreconditionError);
  in = random_input(p, 6, 0, 1);
  in.signals = unconditional_signals(5, p.config.rbf);
  EXPECT_THROW(predict_noise(p, in), ShapeError);
}

TEST(Forward, ConditioningChangesOutput) {
  const auto p = perturbed(small_config(), 2);
  auto in = random_input(p, 8, 0, 5);
  const auto cond = predict_noise(p, in);
  in.signals = unconditional_signals(8, p.config.rbf);
  const auto uncond = predict_noise(p, in);
  EXPECT_FALSE(cond.first == uncond.first);
  EXPECT_FALSE(cond.second == uncond.second);
}

class Equivariance : public ::testing::TestWithParam<std::size_t> {};

TEST_P(Equivariance, RotationsReflectionsTranslations) {
  const std::size_t n_ctx = GetParam();
  const auto p = perturbed(small_config(), 7);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto in = random_input(p, 6 + trial, n_ctx, 100 + trial);
    const auto [inv, eqv] = predict_noise(p, in);
    for (bool reflect : {false, true}) {
      const Mat3 r = random_orthogonal(rng, reflect);
      const Vec3 shift{1.5, -2.0, 0.25};
      DenoiserInput moved = in;
      moved.latent = transform(in.latent, r, shift);
      const auto [inv2, eqv2] = predict_noise(p, moved);
      for (std::size_t k = 0; k < inv.size(); ++k) EXPECT_NEAR(inv2[k], inv[k], 1e-9);
      const Array expect = move_rows(eqv, r, {0, 0, 0});
      for (std::size_t k = 0; k < eqv.size(); ++k) EXPECT_NEAR(eqv2[k], expect[k], 1e-9);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(WithAndWithoutContext, Equivariance, ::testing::Values(0u, 3u));

TEST(Gradient, LossMatchesFiniteDifferences) {
  ModelConfig c;
  c.latent_width = 2;
  c.hidden = 2;
  c.layers = 1;
  c.time_width = 2;
  c.steps = 5;
  c.geom_channels = 2;
  c.rbf.channels = 4;
  const auto p0 = perturbed(c, 9);
  ASSERT_LE(count_params(p0), 500u);
  const auto in = random_input(p0, 5, 0, 3);
  std::mt19937_64 rng(1);
  const Array ei = normal_array({5, 2}, rng), ee = center_rows(normal_array({5, 3}, rng));
  TrainingExample ex{{}, in, ei, ee};
  const auto [loss, grad] = loss_and_gradient(p0, ex);

  auto loss_at = [&](const DenoiserParams& p) {
    Tape tape(false);
    std::map<std::string, Var> vars;
    return noise_loss(tape, p, in, ei, ee, vars).value().item();
  };
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t off = 0;
  for (const auto& [name, a] : p0.arrays) {
    if (!DenoiserParams::trainable(name)) continue;
    for (std::size_t k = 0; k < a->size(); ++k, ++off) {
      auto bump = [&](double delta) {
        DenoiserParams p = p0;
        std::vector<double> v(a->values());
        v[k] += delta;
        p.set(name, Array(a->shape(), std::move(v)));
        return loss_at(p);
      };
      const double fd = (bump(h) - bump(-h)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[off]) / std::max(std::abs(fd), 1e-6));
    }
  }
  EXPECT_EQ(off, grad.size());
  EXPECT_LT(worst, 1e-4);
  EXPECT_NEAR(loss, loss_at(p0), 1e-14);
}

TEST(Checkpoint, RoundTripAndRejectsGarbage) {
  const auto p = perturbed(small_config(), 4);
  const auto path = (std::filesystem::temp_directory_path() / "cpc_test.ckpt").string();
  save_checkpoint(path, p, {{"note", "x"}});
  nlohmann::json header;
  const auto q = load_checkpoint(path, &header);
  EXPECT_EQ(p, q);
  EXPECT_EQ(header["run"]["note"], "x");
  EXPECT_EQ(header["schema_version"], kCheckpointSchema);
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(path), Error);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), Error);
}
