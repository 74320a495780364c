#pragma once

// Peptide-as-geometric-graph data model: one node per residue carrying an
// amino-acid type and a C-alpha coordinate, plus optional fixed context nodes
// (a binding site). Also the lossless type/coordinate codec that maps graphs to
// the latent space the diffusion model works in.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cpcomposer/error.hpp"
#include "cpcomposer/geometry.hpp"
#include "cpcomposer/tensor.hpp"

namespace cpc {

inline constexpr int kNumTypes = 20;

/// One-letter codes; a type index is a position in this string.
inline constexpr std::string_view kAlphabet = "ACDEFGHIKLMNPQRSTVWY";

inline int type_index(char code) {
  auto pos = kAlphabet.find(code);
  if (pos == std::string_view::npos) throw PreconditionError(std::string("unknown amino-acid code '") + code + "'");
  return static_cast<int>(pos);
}

inline char type_code(int index) {
  if (index < 0 || index >= kNumTypes) throw PreconditionError("type index " + std::to_string(index) + " out of range");
  return kAlphabet[static_cast<std::size_t>(index)];
}

namespace aa {
inline const int kAla = type_index('A');
inline const int kCys = type_index('C');
inline const int kAsp = type_index('D');
inline const int kGlu = type_index('E');
inline const int kLys = type_index('K');
}  // namespace aa

/// Residue graph. Peptide nodes come first; context nodes are held fixed
/// during generation.
struct GeometricGraph {
  std::vector<int> types;
  std::vector<Vec3> coords;
  std::vector<int> context_types;
  std::vector<Vec3> context_coords;

  std::size_t n_peptide() const noexcept { return types.size(); }
  std::size_t n_context() const noexcept { return context_types.size(); }
  std::size_t n_nodes() const noexcept { return n_peptide() + n_context(); }
  bool is_context(std::size_t node) const noexcept { return node >= n_peptide(); }

  /// Throws PreconditionError unless sizes agree, types are in range and
  /// coordinates are finite.
  void validate() const {
    if (types.size() != coords.size() || context_types.size() != context_coords.size()) {
      throw PreconditionError("graph: types and coords differ in length");
    }
    auto check = [](const std::vector<int>& ts, const std::vector<Vec3>& xs) {
      for (int t : ts)
        if (t < 0 || t >= kNumTypes) throw PreconditionError("graph: type index " + std::to_string(t) + " out of range");
      for (const auto& x : xs)
        for (double c : x)
          if (!std::isfinite(c)) throw PreconditionError("graph: non-finite coordinate");
    };
    check(types, coords);
    check(context_types, context_coords);
  }

  bool operator==(const GeometricGraph&) const = default;
};

/// Latent form of a graph: an invariant feature row and an equivariant
/// 3-vector per node, expressed in a centered, scaled frame.
struct LatentGraph {
  Array inv;      // [n_peptide, F]
  Array eqv;      // [n_peptide, 3]
  Array ctx_inv;  // [n_context, F]
  Array ctx_eqv;  // [n_context, 3]
  Vec3 origin{};  // frame origin in Angstrom

  std::size_t n_peptide() const { return inv.dim(0); }
  std::size_t n_context() const { return ctx_inv.dim(0); }
  std::size_t width() const { return inv.dim(1); }
};

// ---------------------------------------------------------------------------
// Codec
// ---------------------------------------------------------------------------

/// Lossless type/coordinate codec standing in for a learned autoencoder.
struct Codec {
  Array table;               // [K, F] embedding rows
  double coord_scale = 0.1;  // latent units per Angstrom

  std::size_t width() const { return table.dim(1); }

  /// K rows of norm `radius` spread over the sphere in R^F by deterministic
  /// repulsion, so that nearest-row decoding has a wide margin.
  static Codec spread(std::size_t width = 8, double radius = 1.0, double coord_scale = 0.1) {
    const std::size_t k = kNumTypes;
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal;
    std::vector<double> v(k * width);
    for (auto& x : v) x = normal(rng);
    auto normalize = [&](std::size_t r) {
      double s = 0.0;
      for (std::size_t c = 0; c < width; ++c) s += v[r * width + c] * v[r * width + c];
      s = std::sqrt(s);
      for (std::size_t c = 0; c < width; ++c) v[r * width + c] /= s;
    };
    for (std::size_t r = 0; r < k; ++r) normalize(r);
    if (width > 1) {
      std::vector<double> force(v.size());
      for (int it = 0; it < 2000; ++it) {
        std::fill(force.begin(), force.end(), 0.0);
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b) {
            if (a == b) continue;
            double d2 = 1e-12;
            for (std::size_t c = 0; c < width; ++c) {
              const double d = v[a * width + c] - v[b * width + c];
              d2 += d * d;
            }
            const double f = 1.0 / (d2 * d2);
            for (std::size_t c = 0; c < width; ++c) force[a * width + c] += f * (v[a * width + c] - v[b * width + c]);
          }
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += 0.01 * force[i];
        for (std::size_t r = 0; r < k; ++r) normalize(r);
      }
    }
    for (auto& x : v) x *= radius;
    return Codec{Array::matrix(k, width, std::move(v)), coord_scale};
  }

  Array row(int type) const {
    const std::size_t f = width();
    std::vector<double> r(f);
    for (std::size_t c = 0; c < f; ++c) r[c] = table.at(static_cast<std::size_t>(type), c);
    return Array::vector(std::move(r));
  }

  /// Index of the row with the largest dot product; ties go to the lowest index.
  int nearest_type(std::span<const double> inv) const {
    const std::size_t f = width();
    int best = 0;
    double best_dot = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < table.dim(0); ++k) {
      double d = 0.0;
      for (std::size_t c = 0; c < f; ++c) d += inv[c] * table.at(k, c);
      if (d > best_dot) {
        best_dot = d;
        best = static_cast<int>(k);
      }
    }
    return best;
  }
};

/// Frame origin: centroid of the context when present, else of the peptide.
inline Vec3 frame_origin(const GeometricGraph& g) {
  return g.n_context() > 0 ? centroid(g.context_coords) : centroid(g.coords);
}

inline LatentGraph encode_latent(const GeometricGraph& g, const Codec& codec) {
  g.validate();
  if (codec.table.rank() != 2 || codec.table.dim(0) != static_cast<std::size_t>(kNumTypes)) {
    throw ShapeError("codec: embedding table must have " + std::to_string(kNumTypes) + " rows, got " +
                     shape_str(codec.table.shape()));
  }
  const std::size_t f = codec.width();
  const Vec3 origin = g.n_nodes() > 0 ? frame_origin(g) : Vec3{};
  auto lift = [&](const std::vector<int>& ts, const std::vector<Vec3>& xs, Array& inv, Array& eqv) {
    std::vector<double> iv(ts.size() * f), ev(ts.size() * 3);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      for (std::size_t c = 0; c < f; ++c) iv[i * f + c] = codec.table.at(static_cast<std::size_t>(ts[i]), c);
      for (std::size_t c = 0; c < 3; ++c) ev[i * 3 + c] = (xs[i][c] - origin[c]) * codec.coord_scale;
    }
    inv = Array::matrix(ts.size(), f, std::move(iv));
    eqv = Array::matrix(ts.size(), 3, std::move(ev));
  };
  LatentGraph z;
  lift(g.types, g.coords, z.inv, z.eqv);
  lift(g.context_types, g.context_coords, z.ctx_inv, z.ctx_eqv);
  z.origin = origin;
  return z;
}

inline GeometricGraph decode_latent(const LatentGraph& z, const Codec& codec) {
  const std::size_t f = codec.width();
  if (z.inv.rank() != 2 || z.inv.dim(1) != f || z.eqv.rank() != 2 || z.eqv.dim(1) != 3 ||
      z.eqv.dim(0) != z.inv.dim(0)) {
    throw ShapeError("decode_latent: latent shapes " + shape_str(z.inv.shape()) + " / " + shape_str(z.eqv.shape()) +
                     " do not match codec width " + std::to_string(f));
  }
  auto lower = [&](const Array& inv, const Array& eqv, std::vector<int>& ts, std::vector<Vec3>& xs) {
    const std::size_t n = inv.dim(0);
    ts.resize(n);
    xs.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      ts[i] = codec.nearest_type(inv.data().subspan(i * f, f));
      for (std::size_t c = 0; c < 3; ++c) xs[i][c] = eqv.at(i, c) / codec.coord_scale + z.origin[c];
    }
  };
  GeometricGraph g;
  lower(z.inv, z.eqv, g.types, g.coords);
  if (z.ctx_inv.rank() == 2 && z.ctx_inv.dim(0) > 0) lower(z.ctx_inv, z.ctx_eqv, g.context_types, g.context_coords);
  return g;
}

// ---------------------------------------------------------------------------
// Synthetic chains
// ---------------------------------------------------------------------------

/// Background amino-acid frequencies (UniProt-like), in alphabet order.
inline std::array<double, kNumTypes> natural_type_distribution() {
  return {0.0825, 0.0137, 0.0545, 0.0675, 0.0386, 0.0707, 0.0227, 0.0596, 0.0584, 0.0966,
          0.0242, 0.0406, 0.0470, 0.0393, 0.0553, 0.0656, 0.0534, 0.0687, 0.0108, 0.0292};
}

inline constexpr double kBondMean = 3.8;
inline constexpr double kBondSigma = 0.05;
inline constexpr double kMinNonBonded = 3.0;

/// Self-avoiding C-alpha trace with helix-, strand- and coil-like segments.
/// Consecutive distances follow Normal(3.8, 0.05) truncated at three sigma;
/// bond angles stay within (80, 160) degrees.
inline GeometricGraph generate_chain(int length, std::uint64_t seed,
                                     const std::array<double, kNumTypes>& type_distribution = natural_type_distribution()) {
  if (length < 4 || length > 25) {
    throw PreconditionError("generate_chain: length " + std::to_string(length) + " outside [4, 25]");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  std::discrete_distribution<int> pick_type(type_distribution.begin(), type_distribution.end());

  auto bond = [&] {
    for (;;) {
      const double b = kBondMean + kBondSigma * normal(rng);
      if (std::abs(b - kBondMean) <= 3.0 * kBondSigma) return b;
    }
  };
  constexpr double deg = std::numbers::pi / 180.0;
  // 0 helix, 1 strand, 2 coil, 3 turn
  auto angles = [&](int state) -> std::pair<double, double> {
    double theta = 0.0, phi = 0.0;
    switch (state) {
      case 0: theta = 91.0 + 4.0 * normal(rng); phi = 50.0 + 10.0 * normal(rng); break;
      case 1: theta = 122.0 + 8.0 * normal(rng); phi = -170.0 + 15.0 * normal(rng); break;
      case 2: theta = 85.0 + 65.0 * unit(rng); phi = -180.0 + 360.0 * unit(rng); break;
      default: theta = 88.0 + 8.0 * normal(rng); phi = -20.0 + 25.0 * normal(rng); break;
    }
    theta = std::clamp(theta, 81.0, 159.0);
    return {theta * deg, phi * deg};
  };

  const std::size_t n = static_cast<std::size_t>(length);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<Vec3> x(n);
    x[0] = {0.0, 0.0, 0.0};
    x[1] = {bond(), 0.0, 0.0};
    {
      const auto [theta, phi] = angles(2);
      (void)phi;
      const double b = bond();
      x[2] = {x[1][0] - b * std::cos(theta), b * std::sin(theta), 0.0};
    }
    int state = static_cast<int>(unit(rng) * 4.0) % 4;
    bool ok = true;
    for (std::size_t i = 3; i < n && ok; ++i) {
      if (unit(rng) < 0.25) state = static_cast<int>(unit(rng) * 4.0) % 4;
      bool placed = false;
      for (int tries = 0; tries < 50 && !placed; ++tries) {
        const auto [theta, phi] = angles(state);
        const Vec3 cand = place_atom(x[i - 3], x[i - 2], x[i - 1], bond(), theta, phi);
        placed = true;
        for (std::size_t j = 0; j + 1 < i; ++j) {
          if (distance(cand, x[j]) <= kMinNonBonded) {
            placed = false;
            break;
          }
        }
        if (placed) x[i] = cand;
      }
      ok = placed;
    }
    if (!ok) continue;
    GeometricGraph g;
    g.types.resize(n);
    for (auto& t : g.types) t = pick_type(rng);
    g.coords = std::move(x);
    return g;
  }
  throw Error("generate_chain: no self-avoiding chain after 1000 retries (seed " + std::to_string(seed) + ")");
}

}  // namespace cpc
