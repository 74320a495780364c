#pragma once

// E(3)-equivariant noise predictor over latent graphs.
//
// Each layer runs two message-passing rounds. The adapter round touches only
// the distance-constrained pairs and sees their RBF control features; the main
// round then runs over the fully connected graph. Messages depend on invariant
// node features and pair distances, and coordinates move along pair
// difference vectors, so the coordinate output rotates, reflects and
// translates with the input while the feature output stays fixed.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpcomposer/encoding.hpp"
#include "cpcomposer/error.hpp"
#include "cpcomposer/graph.hpp"
#include "cpcomposer/tensor.hpp"

namespace cpc {

struct ModelConfig {
  std::size_t latent_width = 8;    // invariant latent width F
  std::size_t hidden = 32;         // H
  std::size_t layers = 3;          // L
  std::size_t time_width = 8;      // timestep embedding width
  std::size_t steps = 200;         // timestep table rows (diffusion T)
  double beta_start = 1e-4;        // linear noise schedule endpoints
  double beta_end = 0.05;
  std::size_t geom_channels = 16;  // RBF channels for current pair distances
  RbfSpec rbf{};                   // control-signal basis
  double coord_scale = 0.1;
  double embed_radius = 1.0;
  std::uint64_t init_seed = 0;

  std::size_t input_width() const { return latent_width + kNumTypes + time_width + 1; }
  RbfSpec geom_rbf() const { return RbfSpec{rbf.d_min, rbf.d_max, geom_channels, 0.0}; }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"latent_width", c.latent_width}, {"hidden", c.hidden},       {"layers", c.layers},
          {"time_width", c.time_width},     {"steps", c.steps},         {"geom_channels", c.geom_channels},
          {"beta_start", c.beta_start},     {"beta_end", c.beta_end},
          {"rbf_min", c.rbf.d_min},         {"rbf_max", c.rbf.d_max},   {"rbf_channels", c.rbf.channels},
          {"rbf_gamma", c.rbf.gamma},       {"coord_scale", c.coord_scale}, {"embed_radius", c.embed_radius},
          {"init_seed", c.init_seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.latent_width = j.at("latent_width").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.time_width = j.at("time_width").get<std::size_t>();
  c.steps = j.at("steps").get<std::size_t>();
  c.geom_channels = j.at("geom_channels").get<std::size_t>();
  c.beta_start = j.at("beta_start").get<double>();
  c.beta_end = j.at("beta_end").get<double>();
  c.rbf.d_min = j.at("rbf_min").get<double>();
  c.rbf.d_max = j.at("rbf_max").get<double>();
  c.rbf.channels = j.at("rbf_channels").get<std::size_t>();
  c.rbf.gamma = j.at("rbf_gamma").get<double>();
  c.coord_scale = j.at("coord_scale").get<double>();
  c.embed_radius = j.at("embed_radius").get<double>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

/// Named parameter arrays. "codec.table" holds the type embedding and is not
/// updated by training; everything else is.
struct DenoiserParams {
  ModelConfig config;
  std::map<std::string, std::shared_ptr<const Array>> arrays;

  const Array& at(const std::string& name) const {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw Error("missing parameter '" + name + "'");
    return *it->second;
  }
  void set(const std::string& name, Array a) { arrays[name] = std::make_shared<const Array>(std::move(a)); }

  Codec codec() const { return Codec{at("codec.table"), config.coord_scale}; }

  static bool trainable(const std::string& name) { return name != "codec.table"; }

  bool operator==(const DenoiserParams& o) const {
    if (arrays.size() != o.arrays.size()) return false;
    for (const auto& [k, v] : arrays) {
      auto it = o.arrays.find(k);
      if (it == o.arrays.end() || !(*v == *it->second)) return false;
    }
    return nlohmann::json(to_json(config)) == nlohmann::json(to_json(o.config));
  }
};

/// Declared parameter shapes, in a fixed order.
inline std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& c) {
  const std::size_t h = c.hidden;
  std::vector<std::pair<std::string, Shape>> s;
  s.push_back({"codec.table", {static_cast<std::size_t>(kNumTypes), c.latent_width}});
  s.push_back({"time.table", {c.steps, c.time_width}});
  if (c.layers == 0) return s;
  s.push_back({"embed.w", {c.input_width(), h}});
  s.push_back({"embed.b", {h}});
  for (std::size_t l = 0; l < c.layers; ++l) {
    for (const char* pass : {"adapter", "main"}) {
      const bool adapter = std::string(pass) == "adapter";
      const std::size_t edge_in = 2 * h + 1 + c.geom_channels + (adapter ? c.rbf.channels : 2);
      const std::string p = "layer" + std::to_string(l) + "." + pass + ".";
      s.push_back({p + "msg.w1", {edge_in, h}});
      s.push_back({p + "msg.b1", {h}});
      s.push_back({p + "msg.w2", {h, h}});
      s.push_back({p + "msg.b2", {h}});
      s.push_back({p + "coord.w1", {h, h}});
      s.push_back({p + "coord.b1", {h}});
      s.push_back({p + "coord.w2", {h, 1}});
      s.push_back({p + "node.w1", {2 * h, h}});
      s.push_back({p + "node.b1", {h}});
      s.push_back({p + "node.w2", {h, h}});
      s.push_back({p + "node.b2", {h}});
    }
  }
  s.push_back({"out.1.w", {h, h}});
  s.push_back({"out.1.b", {h}});
  s.push_back({"out.2.w", {h, c.latent_width}});
  s.push_back({"out.2.b", {c.latent_width}});
  return s;
}

inline std::size_t count_params(const DenoiserParams& p) {
  std::size_t n = 0;
  for (const auto& [name, a] : p.arrays) n += a->size();
  return n;
}

/// Sinusoidal embedding of step t (1-based), the initial timestep table row.
inline std::vector<double> sinusoidal_embedding(std::size_t t, std::size_t width) {
  std::vector<double> e(width);
  const std::size_t half = std::max<std::size_t>(width / 2, 1);
  for (std::size_t k = 0; k < width; ++k) {
    const double freq = std::pow(1000.0, -static_cast<double>(k % half) / static_cast<double>(half));
    e[k] = k < half ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
  }
  return e;
}

inline DenoiserParams init_params(const ModelConfig& c) {
  c.rbf.validate();
  DenoiserParams p;
  p.config = c;
  std::mt19937_64 rng(c.init_seed);
  std::normal_distribution<double> normal;
  for (const auto& [name, shape] : parameter_shapes(c)) {
    if (name == "codec.table") {
      p.set(name, Codec::spread(c.latent_width, c.embed_radius, c.coord_scale).table);
      continue;
    }
    std::vector<double> v(shape_size(shape), 0.0);
    if (name == "time.table") {
      for (std::size_t t = 0; t < c.steps; ++t) {
        auto e = sinusoidal_embedding(t + 1, c.time_width);
        std::copy(e.begin(), e.end(), v.begin() + static_cast<long>(t * c.time_width));
      }
    } else if (shape.size() == 2) {
      // coordinate heads start near zero so early layers barely move coordinates
      const bool coord_head = name.ends_with("coord.w2");
      const double sd = (coord_head ? 1e-3 : 1.0) / std::sqrt(static_cast<double>(shape[0]));
      for (auto& x : v) x = sd * normal(rng);
    }
    p.set(name, Array(shape, std::move(v)));
  }
  return p;
}

/// Everything the network sees for one graph at one diffusion step.
struct DenoiserInput {
  LatentGraph latent;  // noisy peptide latents plus clean context latents
  ControlSignals signals;
  std::size_t t = 1;  // 1..T
};

struct NoiseOutput {
  Var inv;  // [n_peptide, F]
  Var eqv;  // [n_peptide, 3]
};

namespace detail {

struct EdgeList {
  std::vector<std::size_t> dst;
  std::vector<std::size_t> src;
  Array features;  // [E, width]
};

inline EdgeList full_edges(std::size_t n_nodes, std::size_t n_peptide) {
  EdgeList e;
  std::vector<double> f;
  for (std::size_t i = 0; i < n_nodes; ++i)
    for (std::size_t j = 0; j < n_nodes; ++j) {
      if (i == j) continue;
      e.dst.push_back(i);
      e.src.push_back(j);
      const bool pep = i < n_peptide && j < n_peptide;
      f.push_back(pep && j + 1 == i ? 1.0 : 0.0);  // j precedes i in the chain
      f.push_back(pep && i + 1 == j ? 1.0 : 0.0);  // j follows i
    }
  e.features = Array::matrix(e.dst.size(), 2, std::move(f));
  return e;
}

inline EdgeList constrained_edges(const ControlSignals& s, std::size_t channels) {
  EdgeList e;
  std::vector<double> f;
  for (const auto& edge : s.edges) {
    if (edge.rbf.size() != channels) {
      throw ShapeError("denoiser: edge signal width " + std::to_string(edge.rbf.size()) + " != " + std::to_string(channels));
    }
    for (int dir = 0; dir < 2; ++dir) {
      e.dst.push_back(dir ? edge.j : edge.i);
      e.src.push_back(dir ? edge.i : edge.j);
      f.insert(f.end(), edge.rbf.begin(), edge.rbf.end());
    }
  }
  e.features = Array::matrix(e.dst.size(), channels, std::move(f));
  return e;
}

struct Weights {
  Tape& tape;
  const DenoiserParams& params;
  bool differentiable;
  std::map<std::string, Var>& vars;

  Var operator()(const std::string& name) {
    auto it = vars.find(name);
    if (it != vars.end()) return it->second;
    auto ptr = params.arrays.at(name);
    Var v = differentiable && DenoiserParams::trainable(name) ? tape.leaf(ptr) : tape.constant(ptr);
    vars.emplace(name, v);
    return v;
  }
};

inline Var dense(Weights& w, const Var& x, const std::string& name) {
  return add(matmul(x, w(name + ".w")), w(name + ".b"));
}

/// exp(-gamma (d - mu_k)^2) for each pair distance d (Angstrom) and center mu_k.
inline Var distance_rbf(Tape& tape, const Var& dist, const RbfSpec& spec) {
  const std::size_t e = dist.value().dim(0), c = spec.channels;
  std::vector<double> centers(e * c);
  for (std::size_t r = 0; r < e; ++r)
    for (std::size_t k = 0; k < c; ++k) centers[r * c + k] = spec.center(k);
  Var u = sub(broadcast_cols(dist, c), tape.constant(Array::matrix(e, c, std::move(centers))));
  return exp(scale(mul(u, u), -spec.resolved_gamma()));
}

struct LayerState {
  Var h;  // [N, H]
  Var x;  // [N, 3]
};

inline LayerState message_pass(Tape& tape, Weights& w, const std::string& prefix, const LayerState& in,
                               const EdgeList& edges, std::size_t n_nodes, double norm, const ModelConfig& cfg) {
  if (edges.dst.empty()) return in;
  const std::size_t e = edges.dst.size();
  Var hi = gather(in.h, edges.dst);
  Var hj = gather(in.h, edges.src);
  Var diff = sub(gather(in.x, edges.dst), gather(in.x, edges.src));
  Var d2 = row_sum(mul(diff, diff));
  Var len = row_norm(diff);
  Var dist = scale(len, 1.0 / cfg.coord_scale);
  Var geo = distance_rbf(tape, dist, cfg.geom_rbf());
  Var feats = concat({hi, hj, reshape(d2, {e, 1}), geo, tape.constant(edges.features)});
  Var m = silu(add(matmul(silu(add(matmul(feats, w(prefix + "msg.w1")), w(prefix + "msg.b1"))), w(prefix + "msg.w2")),
                   w(prefix + "msg.b2")));
  Var cw = matmul(silu(add(matmul(m, w(prefix + "coord.w1")), w(prefix + "coord.b1"))), w(prefix + "coord.w2"));
  // unit-bounded directions keep coordinate updates finite for distant pairs
  Var dir = mul(diff, broadcast_cols(reciprocal(shift(len, 1.0)), 3));
  Var shift_x = scatter_add(mul(dir, broadcast_cols(reshape(cw, {e}), 3)), edges.dst, n_nodes);
  Var x = add(in.x, scale(shift_x, norm));
  Var agg = scale(scatter_add(m, edges.dst, n_nodes), norm);
  Var upd = add(matmul(silu(add(matmul(concat({in.h, agg}), w(prefix + "node.w1")), w(prefix + "node.b1"))),
                       w(prefix + "node.w2")),
                w(prefix + "node.b2"));
  return {add(in.h, upd), x};
}

}  // namespace detail

/// Records the network on `tape`. Trainable parameters become leaves (listed
/// in `vars`) when the tape records, constants otherwise.
inline NoiseOutput denoiser_forward(Tape& tape, const DenoiserParams& params, const DenoiserInput& input,
                                    std::map<std::string, Var>& vars) {
  const ModelConfig& cfg = params.config;
  const LatentGraph& z = input.latent;
  const std::size_t np = z.n_peptide();
  const std::size_t nc = z.ctx_inv.rank() == 2 ? z.n_context() : 0;
  const std::size_t n = np + nc;
  const std::size_t f = cfg.latent_width;
  if (z.inv.rank() != 2 || z.inv.dim(1) != f || z.eqv.rank() != 2 || z.eqv.dim(0) != np || z.eqv.dim(1) != 3) {
    throw ShapeError("denoiser: latent shapes " + shape_str(z.inv.shape()) + " / " + shape_str(z.eqv.shape()) +
                     " do not match latent width " + std::to_string(f));
  }
  if (nc > 0 && (z.ctx_inv.dim(1) != f || z.ctx_eqv.dim(0) != nc)) {
    throw ShapeError("denoiser: context latent shapes " + shape_str(z.ctx_inv.shape()) + " / " + shape_str(z.ctx_eqv.shape()));
  }
  if (input.signals.node_signal.shape() != Shape{np, static_cast<std::size_t>(kNumTypes)}) {
    throw ShapeError("denoiser: node signal shape " + shape_str(input.signals.node_signal.shape()) + " for " +
                     std::to_string(np) + " peptide nodes");
  }
  for (const auto& e : input.signals.edges) {
    if (e.i >= np || e.j >= np) throw ShapeError("denoiser: constrained edge outside the peptide");
  }
  if (input.t < 1 || input.t > cfg.steps) {
    throw PreconditionError("denoiser: step " + std::to_string(input.t) + " outside [1, " + std::to_string(cfg.steps) + "]");
  }

  if (cfg.layers == 0) {
    return {tape.constant(Array::zeros({np, f})), tape.constant(Array::zeros({np, 3}))};
  }

  detail::Weights w{tape, params, tape.recording(), vars};

  // node inputs: [latent | control one-hot | is_context]
  const std::size_t static_w = f + kNumTypes + 1;
  std::vector<double> node_in(n * static_w, 0.0);
  std::vector<double> coords(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    const bool ctx = i >= np;
    const std::size_t r = ctx ? i - np : i;
    for (std::size_t c = 0; c < f; ++c) node_in[i * static_w + c] = ctx ? z.ctx_inv.at(r, c) : z.inv.at(r, c);
    if (!ctx) {
      for (std::size_t k = 0; k < static_cast<std::size_t>(kNumTypes); ++k) {
        node_in[i * static_w + f + k] = input.signals.node_signal.at(i, k);
      }
    }
    node_in[i * static_w + f + kNumTypes] = ctx ? 1.0 : 0.0;
    for (std::size_t c = 0; c < 3; ++c) coords[i * 3 + c] = ctx ? z.ctx_eqv.at(r, c) : z.eqv.at(r, c);
  }
  Var temb = gather(w("time.table"), std::vector<std::size_t>(n, input.t - 1));
  Var x0 = tape.constant(Array::matrix(n, 3, std::move(coords)));
  Var feats = concat({tape.constant(Array::matrix(n, static_w, std::move(node_in))), temb});
  detail::LayerState s{detail::dense(w, feats, "embed"), x0};

  const detail::EdgeList adapter_edges = detail::constrained_edges(input.signals, cfg.rbf.channels);
  const detail::EdgeList main_edges = detail::full_edges(n, np);
  const double main_norm = n > 1 ? 1.0 / static_cast<double>(n - 1) : 1.0;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    s = detail::message_pass(tape, w, p + "adapter.", s, adapter_edges, n, 1.0, cfg);
    s = detail::message_pass(tape, w, p + "main.", s, main_edges, n, main_norm, cfg);
  }

  std::vector<std::size_t> pep(np);
  std::iota(pep.begin(), pep.end(), std::size_t{0});
  Var h_out = detail::dense(w, silu(detail::dense(w, gather(s.h, pep), "out.1")), "out.2");
  Var dx = gather(sub(s.x, x0), pep);
  if (nc == 0 && np > 0) {
    // no context: express the displacement in the zero-mean frame
    std::vector<double> c(np * np, -1.0 / static_cast<double>(np));
    for (std::size_t i = 0; i < np; ++i) c[i * np + i] += 1.0;
    dx = matmul(tape.constant(Array::matrix(np, np, std::move(c))), dx);
  }
  return {h_out, dx};
}

/// Gradient-free evaluation returning (invariant noise, equivariant noise).
inline std::pair<Array, Array> predict_noise(const DenoiserParams& params, const DenoiserInput& input) {
  Tape tape(false);
  std::map<std::string, Var> vars;
  auto out = denoiser_forward(tape, params, input, vars);
  return {out.inv.value(), out.eqv.value()};
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'C', 'P', 'C', 'K', 'P', 'T', '\0', '\1'};
inline constexpr int kCheckpointSchema = 1;

/// Binary container: magic, u64 header length, JSON header (schema, config,
/// array names and shapes), then raw little-endian f64 values per array in
/// header order.
inline void save_checkpoint(const std::string& path, const DenoiserParams& p, const nlohmann::json& extra = {}) {
  nlohmann::json header;
  header["schema_version"] = kCheckpointSchema;
  header["model"] = to_json(p.config);
  if (!extra.is_null()) header["run"] = extra;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& [name, a] : p.arrays) arrays.push_back({{"name", name}, {"shape", a->shape()}});
  header["arrays"] = arrays;
  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, a] : p.arrays) {
    out.write(reinterpret_cast<const char*>(a->data().data()), static_cast<std::streamsize>(a->size() * sizeof(double)));
  }
  if (!out) throw Error("write failed for checkpoint '" + path + "'");
}

inline DenoiserParams load_checkpoint(const std::string& path, nlohmann::json* header_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw Error("'" + path + "' is not a checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 26)) throw Error("corrupt checkpoint header in '" + path + "'");
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  auto header = nlohmann::json::parse(hs);
  if (header.at("schema_version").get<int>() != kCheckpointSchema) {
    throw Error("unsupported checkpoint schema " + header.at("schema_version").dump());
  }
  DenoiserParams p;
  p.config = model_config_from_json(header.at("model"));
  for (const auto& a : header.at("arrays")) {
    Shape shape = a.at("shape").get<Shape>();
    std::vector<double> v(shape_size(shape));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw Error("truncated checkpoint '" + path + "'");
    p.set(a.at("name").get<std::string>(), Array(std::move(shape), std::move(v)));
  }
  if (header_out) *header_out = header;
  return p;
}

}  // namespace cpc
