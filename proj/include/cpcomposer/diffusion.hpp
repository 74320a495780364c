#pragma once

// DDPM machinery around the denoiser: the noise schedule, forward noising,
// training with random unit constraints and constraint dropout, guided reverse
// sampling (classifier-free composition or an energy gradient), and the
// constraint energy itself.

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cpcomposer/constraints.hpp"
#include "cpcomposer/denoiser.hpp"
#include "cpcomposer/encoding.hpp"
#include "cpcomposer/error.hpp"
#include "cpcomposer/graph.hpp"
#include "cpcomposer/parallel.hpp"
#include "cpcomposer/tensor.hpp"

namespace cpc {

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

/// Linear beta schedule. Steps are 1-based: beta(1) is the smallest.
class DiffusionSchedule {
 public:
  static DiffusionSchedule linear(std::size_t steps, double beta_start, double beta_end) {
    if (steps < 1) throw PreconditionError("schedule: need at least one step");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
      throw PreconditionError("schedule: need 0 < beta_start <= beta_end < 1");
    }
    DiffusionSchedule s;
    double cum = 1.0;
    for (std::size_t k = 0; k < steps; ++k) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps - 1);
      const double b = beta_start + frac * (beta_end - beta_start);
      cum *= 1.0 - b;
      s.betas_.push_back(b);
      s.alpha_bars_.push_back(cum);
    }
    return s;
  }

  /// Linear schedule whose per-step betas are the canonical 1000-step
  /// (1e-4, 0.02) range rescaled to `steps`, so the final cumulative alpha
  /// stays near zero for short chains.
  static DiffusionSchedule scaled_linear(std::size_t steps) {
    const double r = 1000.0 / static_cast<double>(steps);
    return linear(steps, std::min(1e-4 * r, 0.5), std::min(0.02 * r, 0.999));
  }

  static DiffusionSchedule for_model(const ModelConfig& c) { return linear(c.steps, c.beta_start, c.beta_end); }

  std::size_t steps() const noexcept { return betas_.size(); }
  double beta(std::size_t t) const { return betas_.at(t - 1); }
  double alpha(std::size_t t) const { return 1.0 - beta(t); }
  double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bars_.at(t - 1); }
  /// Variance of the posterior q(z_{t-1} | z_t, z_0).
  double posterior_variance(std::size_t t) const {
    return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
  }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

// ---------------------------------------------------------------------------
// Noise sources
// ---------------------------------------------------------------------------

/// Standard normal draws for the sampler. The equivariant draws are separate
/// so callers can transform them (for example, rotate them) consistently.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual Array invariant(std::size_t n, std::size_t width) = 0;
  virtual Array equivariant(std::size_t n) = 0;
};

template <class Rng>
Array normal_array(Shape shape, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = normal(rng);
  return Array(std::move(shape), std::move(v));
}

class GaussianNoise : public NoiseSource {
 public:
  explicit GaussianNoise(std::uint64_t seed) : rng_(seed) {}
  Array invariant(std::size_t n, std::size_t width) override { return normal_array({n, width}, rng_); }
  Array equivariant(std::size_t n) override { return normal_array({n, 3}, rng_); }

 private:
  std::mt19937_64 rng_;
};

/// Removes the column means of an [n,3] array.
inline Array center_rows(const Array& a) {
  const std::size_t n = a.dim(0);
  if (n == 0) return a;
  Vec3 mean{};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) mean[c] += a.at(i, c);
  std::vector<double> v(a.values());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) v[i * 3 + c] -= mean[c] / static_cast<double>(n);
  return Array(a.shape(), std::move(v));
}

inline Array axpby(double a, const Array& x, double b, const Array& y) {
  if (x.shape() != y.shape()) throw ShapeError("axpby: shapes " + shape_str(x.shape()) + " and " + shape_str(y.shape()));
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * x[i] + b * y[i];
  return Array(x.shape(), std::move(v));
}

inline bool all_finite(const Array& a) {
  for (double x : a.data())
    if (!std::isfinite(x)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Forward noising
// ---------------------------------------------------------------------------

struct NoisedLatent {
  LatentGraph latent;  // z_t; context untouched
  Array eps_inv;
  Array eps_eqv;
};

/// z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps on both latent parts. Without
/// context the equivariant noise is drawn in the zero-mean frame.
inline NoisedLatent forward_noise(const LatentGraph& z0, std::size_t t, const DiffusionSchedule& s, NoiseSource& noise) {
  if (t < 1 || t > s.steps()) throw PreconditionError("forward_noise: step " + std::to_string(t) + " outside [1, T]");
  const std::size_t n = z0.n_peptide();
  const bool has_ctx = z0.ctx_inv.rank() == 2 && z0.n_context() > 0;
  NoisedLatent out;
  out.eps_inv = noise.invariant(n, z0.width());
  out.eps_eqv = noise.equivariant(n);
  if (!has_ctx) out.eps_eqv = center_rows(out.eps_eqv);
  const double a = std::sqrt(s.alpha_bar(t)), b = std::sqrt(1.0 - s.alpha_bar(t));
  out.latent = z0;
  out.latent.inv = axpby(a, z0.inv, b, out.eps_inv);
  out.latent.eqv = axpby(a, z0.eqv, b, out.eps_eqv);
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double p_type_drop = 0.2;
  double p_dist_drop = 0.2;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0: no limit
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_type_drop) || !prob(p_dist_drop)) throw PreconditionError("train: dropout probabilities must lie in [0, 1]");
    if (!(learning_rate > 0.0)) throw PreconditionError("train: learning rate must be positive");
    if (batch_size == 0) throw PreconditionError("train: batch size must be positive");
  }
};

/// Mean squared error between true and predicted noise, recorded on `tape`.
inline Var noise_loss(Tape& tape, const DenoiserParams& params, const DenoiserInput& input, const Array& eps_inv,
                      const Array& eps_eqv, std::map<std::string, Var>& vars) {
  auto out = denoiser_forward(tape, params, input, vars);
  Var di = sub(out.inv, tape.constant(eps_inv));
  Var de = sub(out.eqv, tape.constant(eps_eqv));
  const double count = static_cast<double>(eps_inv.size() + eps_eqv.size());
  return scale(add(sum(mul(di, di)), sum(mul(de, de))), 1.0 / count);
}

/// One training example after constraint sampling, dropout and noising.
struct TrainingExample {
  ConstraintPair constraint;
  DenoiserInput input;
  Array eps_inv;
  Array eps_eqv;
};

/// Draws (C_T, C_D) from the design spaces of `g`, applies dropout, and
/// noises the encoded graph at a uniform random step.
template <class Rng>
TrainingExample make_example(const GeometricGraph& g, const DenoiserParams& params, const TrainConfig& cfg,
                             const DiffusionSchedule& sched, Rng& rng) {
  std::uniform_real_distribution<double> unit;
  TypeConstraint ct = sample_type_constraint(g, rng);
  DistanceConstraint cd = sample_distance_constraint(g, rng);
  if (unit(rng) < cfg.p_type_drop) ct = TypeConstraint();
  if (unit(rng) < cfg.p_dist_drop) cd = DistanceConstraint();
  std::uniform_int_distribution<std::size_t> step(1, sched.steps());
  const std::size_t t = step(rng);
  GaussianNoise noise(rng());
  auto noised = forward_noise(encode_latent(g, params.codec()), t, sched, noise);
  TrainingExample ex;
  ex.constraint = ConstraintPair{std::move(ct), std::move(cd)};
  ex.input.latent = std::move(noised.latent);
  ex.input.signals = encode_pair(ex.constraint, g.n_peptide(), params.config.rbf);
  ex.input.t = t;
  ex.eps_inv = std::move(noised.eps_inv);
  ex.eps_eqv = std::move(noised.eps_eqv);
  return ex;
}

/// Loss and flattened gradient (trainable parameters in name order).
inline std::pair<double, std::vector<double>> loss_and_gradient(const DenoiserParams& params, const TrainingExample& ex) {
  Tape tape;
  std::map<std::string, Var> vars;
  Var loss = noise_loss(tape, params, ex.input, ex.eps_inv, ex.eps_eqv, vars);
  auto grads = tape.backward(loss);
  std::vector<double> flat;
  for (const auto& [name, arr] : params.arrays) {
    if (!DenoiserParams::trainable(name)) continue;
    auto it = vars.find(name);
    if (it == vars.end() || !tape.requires_grad(it->second.id())) {
      flat.insert(flat.end(), arr->size(), 0.0);
      continue;
    }
    auto g = grads.raw(it->second.id());
    if (g.empty()) {
      flat.insert(flat.end(), arr->size(), 0.0);
    } else {
      flat.insert(flat.end(), g.begin(), g.end());
    }
  }
  return {loss.value().item(), std::move(flat)};
}

/// Decoupled-weight-decay Adam over the trainable arrays.
class AdamW {
 public:
  AdamW(const DenoiserParams& p, const TrainConfig& cfg) : cfg_(cfg) {
    std::size_t n = 0;
    for (const auto& [name, a] : p.arrays)
      if (DenoiserParams::trainable(name)) n += a->size();
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
  }

  void step(DenoiserParams& p, const std::vector<double>& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t off = 0;
    for (auto& [name, a] : p.arrays) {
      if (!DenoiserParams::trainable(name)) continue;
      std::vector<double> v(a->values());
      const bool decay = a->rank() == 2 && name != "time.table";
      for (std::size_t i = 0; i < v.size(); ++i, ++off) {
        const double g = grad[off];
        m_[off] = cfg_.beta1 * m_[off] + (1.0 - cfg_.beta1) * g;
        v_[off] = cfg_.beta2 * v_[off] + (1.0 - cfg_.beta2) * g * g;
        const double mh = m_[off] / bc1, vh = v_[off] / bc2;
        if (decay) v[i] -= cfg_.learning_rate * cfg_.weight_decay * v[i];
        v[i] -= cfg_.learning_rate * mh / (std::sqrt(vh) + cfg_.adam_eps);
      }
      a = std::make_shared<const Array>(Array(a->shape(), std::move(v)));
    }
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct EpochStats {
  std::size_t epoch;
  std::size_t steps;
  double mean_loss;
};

struct TrainCallbacks {
  std::function<void(const EpochStats&)> on_epoch;
  std::function<void(std::size_t step, double loss, const std::vector<ConstraintPair>& batch)> on_step;
};

/// Optimizes `params` in place. Every example draws from its own generator
/// seeded by (seed, epoch, position), so results do not depend on `workers`.
inline void train(DenoiserParams& params, const std::vector<GeometricGraph>& data, const TrainConfig& cfg,
                  const DiffusionSchedule& sched, const TrainCallbacks& cb = {}) {
  cfg.validate();
  if (data.empty()) throw PreconditionError("train: empty dataset");
  for (const auto& g : data) g.validate();
  if (sched.steps() != params.config.steps) {
    throw PreconditionError("train: schedule has " + std::to_string(sched.steps()) + " steps, model expects " +
                            std::to_string(params.config.steps));
  }
  AdamW opt(params, cfg);
  std::mt19937_64 order_rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      std::vector<double> losses(b);
      std::vector<std::vector<double>> grads(b);
      std::vector<ConstraintPair> constraints(b);
      parallel_for(b, cfg.workers, [&](std::size_t k) {
        std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(start + k)};
        std::mt19937_64 rng(seq);
        auto ex = make_example(data[order[start + k]], params, cfg, sched, rng);
        constraints[k] = ex.constraint;
        std::tie(losses[k], grads[k]) = loss_and_gradient(params, ex);
      });
      std::vector<double> total(grads[0].size(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < b; ++k) {
        if (!std::isfinite(losses[k])) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + ", example " + std::to_string(order[start + k]));
        }
        batch_loss += losses[k];
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += grads[k][i] / static_cast<double>(b);
      }
      opt.step(params, total);
      ++step;
      loss_sum += batch_loss;
      loss_n += b;
      if (cb.on_step) cb.on_step(step, batch_loss / static_cast<double>(b), constraints);
      if (cfg.max_steps && step >= cfg.max_steps) break;
    }
    if (cb.on_epoch) cb.on_epoch({epoch, step, loss_sum / static_cast<double>(loss_n)});
    if (cfg.max_steps && step >= cfg.max_steps) break;
  }
}

// ---------------------------------------------------------------------------
// Guidance
// ---------------------------------------------------------------------------

/// (w + 1) * cond - w * uncond, evaluated as cond + w * (cond - uncond) so
/// that w = 0 and cond == uncond return cond bit for bit.
inline Array cfg_combine(const Array& cond, const Array& uncond, double w) {
  if (cond.shape() != uncond.shape()) {
    throw ShapeError("cfg_combine: shapes " + shape_str(cond.shape()) + " and " + shape_str(uncond.shape()));
  }
  std::vector<double> out(cond.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = cond[k] + w * (cond[k] - uncond[k]);
  return Array(cond.shape(), std::move(out));
}

enum class GuidanceMode { None, Cfg, Energy };

struct GuidanceConfig {
  GuidanceMode mode = GuidanceMode::Cfg;
  double weight = 0.0;        // classifier-free weight w
  double energy_scale = 10.0;  // energy gradient scale
  double energy_clip = 1.0;    // max norm of the latent energy gradient (0: none)
  double type_temperature = 0.1;
};

inline std::string guidance_mode_name(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::None: return "none";
    case GuidanceMode::Cfg: return "cfg";
    case GuidanceMode::Energy: return "energy";
  }
  return "?";
}

inline GuidanceMode parse_guidance_mode(const std::string& s) {
  if (s == "none") return GuidanceMode::None;
  if (s == "cfg") return GuidanceMode::Cfg;
  if (s == "energy") return GuidanceMode::Energy;
  throw PreconditionError("unknown guidance mode '" + s + "' (expected none, cfg or energy)");
}

// ---------------------------------------------------------------------------
// Constraint energy
// ---------------------------------------------------------------------------

/// Sum of squared distance deviations plus (1 - [type matches])^2 per type
/// entry; zero exactly when every entry is satisfied.
inline double energy_of(const ConstraintPair& c, const GeometricGraph& g) {
  if (c.span() > g.n_peptide()) throw PreconditionError("energy_of: constraint references nodes outside the peptide");
  double e = 0.0;
  for (const auto& d : c.dists.entries()) {
    const double u = distance(g.coords[d.i], g.coords[d.j]) - d.target;
    e += u * u;
  }
  for (const auto& t : c.types.entries()) e += g.types[t.node] == t.type ? 0.0 : 1.0;
  return e;
}

/// Differentiable energy over coordinates (Angstrom, [n,3]) and invariant
/// latents ([n,F]); type probabilities come from a softmax over codec-row
/// dot products at the given temperature.
inline Var energy_on_tape(Tape& tape, const ConstraintPair& c, const Var& coords, const Var& inv, const Array& table,
                          double temperature) {
  Var total = tape.constant(Array::scalar(0.0));
  if (!c.dists.empty()) {
    std::vector<std::size_t> is, js;
    std::vector<double> targets;
    for (const auto& d : c.dists.entries()) {
      is.push_back(d.i);
      js.push_back(d.j);
      targets.push_back(d.target);
    }
    Var dist = row_norm(sub(gather(coords, is), gather(coords, js)));
    Var u = sub(dist, tape.constant(Array::vector(std::move(targets))));
    total = add(total, sum(mul(u, u)));
  }
  if (!c.types.empty()) {
    const std::size_t k = table.dim(0), f = table.dim(1);
    std::vector<double> tt(f * k);
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t col = 0; col < f; ++col) tt[col * k + r] = table.at(r, col) / temperature;
    std::vector<std::size_t> nodes;
    std::vector<double> onehot;
    for (const auto& t : c.types.entries()) {
      nodes.push_back(t.node);
      for (std::size_t r = 0; r < k; ++r) onehot.push_back(static_cast<int>(r) == t.type ? 1.0 : 0.0);
    }
    const std::size_t m = nodes.size();
    Var logits = matmul(gather(inv, nodes), tape.constant(Array::matrix(f, k, std::move(tt))));
    // shifting each row by its max is exact for softmax and keeps exp bounded
    std::vector<double> row_max(m * k);
    for (std::size_t r = 0; r < m; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < k; ++q) mx = std::max(mx, logits.value().at(r, q));
      for (std::size_t q = 0; q < k; ++q) row_max[r * k + q] = mx;
    }
    Var e = exp(sub(logits, tape.constant(Array::matrix(m, k, std::move(row_max)))));
    Var p_req = row_sum(mul(e, tape.constant(Array::matrix(m, k, std::move(onehot)))));
    Var p = mul(p_req, reciprocal(row_sum(e)));
    Var miss = shift(scale(p, -1.0), 1.0);
    total = add(total, sum(mul(miss, miss)));
  }
  return total;
}

/// Gradient of the energy of the decoded latent with respect to (inv, eqv).
inline std::pair<Array, Array> energy_gradient(const ConstraintPair& c, const Array& inv, const Array& eqv,
                                               const Codec& codec, double temperature) {
  Tape tape;
  Var zi = tape.leaf(inv);
  Var ze = tape.leaf(eqv);
  Var coords = scale(ze, 1.0 / codec.coord_scale);  // origin shift does not affect distances
  Var g = energy_on_tape(tape, c, coords, zi, codec.table, temperature);
  auto grads = tape.backward(g);
  return {grads[zi], grads[ze]};
}

// ---------------------------------------------------------------------------
// Reverse sampling
// ---------------------------------------------------------------------------

struct SampleRequest {
  ConstraintPair target;
  std::size_t n_residues = 10;
  GuidanceConfig guidance{};
  const GeometricGraph* context = nullptr;  // context nodes only; may be null
};

/// Runs T reverse DDPM steps from the prior and decodes the final latent.
inline GeometricGraph sample(const DenoiserParams& params, const SampleRequest& req, const DiffusionSchedule& sched,
                             NoiseSource& noise) {
  const std::size_t n = req.n_residues;
  if (n < 4 || n > 25) throw PreconditionError("sample: residue count " + std::to_string(n) + " outside [4, 25]");
  if (req.target.span() > n) {
    throw PreconditionError("sample: target references node " + std::to_string(req.target.span() - 1) + " of a " +
                            std::to_string(n) + "-residue peptide");
  }
  if (req.guidance.weight < 0.0) throw PreconditionError("sample: guidance weight must be non-negative");
  if (sched.steps() != params.config.steps) throw PreconditionError("sample: schedule length does not match the model");
  const Codec codec = params.codec();
  const std::size_t f = codec.width();

  LatentGraph z;
  if (req.context && req.context->n_context() > 0) {
    GeometricGraph ctx_only;
    ctx_only.context_types = req.context->context_types;
    ctx_only.context_coords = req.context->context_coords;
    z = encode_latent(ctx_only, codec);
  } else {
    z.ctx_inv = Array::zeros({0, f});
    z.ctx_eqv = Array::zeros({0, 3});
  }
  const bool has_ctx = z.n_context() > 0;
  auto frame = [&](const Array& a) { return has_ctx ? a : center_rows(a); };

  z.inv = noise.invariant(n, f);
  z.eqv = frame(noise.equivariant(n));

  const ControlSignals cond = encode_pair(req.target, n, params.config.rbf);
  const ControlSignals uncond = unconditional_signals(n, params.config.rbf);
  const auto& gd = req.guidance;

  for (std::size_t t = sched.steps(); t >= 1; --t) {
    DenoiserInput in{z, {}, t};
    Array eps_inv, eps_eqv;
    if (gd.mode == GuidanceMode::Cfg) {
      in.signals = cond;
      std::tie(eps_inv, eps_eqv) = predict_noise(params, in);
      if (gd.weight != 0.0) {
        in.signals = uncond;
        auto [ui, ue] = predict_noise(params, in);
        eps_inv = cfg_combine(eps_inv, ui, gd.weight);
        eps_eqv = cfg_combine(eps_eqv, ue, gd.weight);
      }
    } else {
      in.signals = uncond;
      std::tie(eps_inv, eps_eqv) = predict_noise(params, in);
      if (gd.mode == GuidanceMode::Energy && !req.target.empty()) {
        auto [gi, ge] = energy_gradient(req.target, z.inv, z.eqv, codec, gd.type_temperature);
        if (gd.energy_clip > 0.0) {
          double nrm = 0.0;
          for (double v : gi.data()) nrm += v * v;
          for (double v : ge.data()) nrm += v * v;
          nrm = std::sqrt(nrm);
          if (nrm > gd.energy_clip) {
            gi = axpby(gd.energy_clip / nrm, gi, 0.0, gi);
            ge = axpby(gd.energy_clip / nrm, ge, 0.0, ge);
          }
        }
        // score - w grad g  <=>  eps + w sqrt(1 - abar) grad g
        const double k = gd.energy_scale * std::sqrt(1.0 - sched.alpha_bar(t));
        eps_inv = axpby(1.0, eps_inv, k, gi);
        eps_eqv = axpby(1.0, eps_eqv, k, frame(ge));
      }
    }
    const double a = sched.alpha(t), ab = sched.alpha_bar(t);
    const double c1 = 1.0 / std::sqrt(a), c2 = sched.beta(t) / std::sqrt(1.0 - ab);
    z.inv = axpby(c1, z.inv, -c1 * c2, eps_inv);
    z.eqv = axpby(c1, z.eqv, -c1 * c2, eps_eqv);
    if (t > 1) {
      const double sigma = std::sqrt(sched.posterior_variance(t));
      z.inv = axpby(1.0, z.inv, sigma, noise.invariant(n, f));
      z.eqv = axpby(1.0, z.eqv, sigma, frame(noise.equivariant(n)));
    }
    if (!all_finite(z.inv) || !all_finite(z.eqv)) {
      throw NumericError("sample: non-finite latent at step " + std::to_string(t));
    }
  }
  GeometricGraph g = decode_latent(z, codec);
  return g;
}

/// `count` independent samples; sample k draws its noise from a generator
/// seeded by (seed, k), so the result does not depend on `workers`.
inline std::vector<GeometricGraph> sample_many(const DenoiserParams& params, const SampleRequest& req,
                                               const DiffusionSchedule& sched, std::size_t count, std::uint64_t seed,
                                               std::size_t workers = 1) {
  std::vector<GeometricGraph> out(count);
  parallel_for(count, workers, [&](std::size_t k) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(k)};
    std::mt19937_64 rng(seq);
    GaussianNoise noise(rng());
    out[k] = sample(params, req, sched, noise);
  });
  return out;
}

}  // namespace cpc
