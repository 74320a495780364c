#pragma once

// Control signals fed to the denoiser: a one-hot row per type-constrained node
// (zero elsewhere) and a radial-basis lift of each constrained pair distance.
// Pairs without a distance constraint get no edge feature at all.

#include <algorithm>
#include <cmath>
#include <vector>

#include "cpcomposer/constraints.hpp"
#include "cpcomposer/error.hpp"
#include "cpcomposer/tensor.hpp"

namespace cpc {

/// Gaussian basis with evenly spaced centers on [d_min, d_max].
struct RbfSpec {
  double d_min = 0.0;
  double d_max = 24.0;  // six bonds at 3.8 + 3 sigma, the longest design-space pair
  std::size_t channels = 32;
  double gamma = 0.0;  // 0 selects 1 / (2 spacing^2)

  double spacing() const { return (d_max - d_min) / static_cast<double>(channels - 1); }
  double resolved_gamma() const { return gamma > 0.0 ? gamma : 1.0 / (2.0 * spacing() * spacing()); }
  double center(std::size_t k) const { return d_min + spacing() * static_cast<double>(k); }

  void validate() const {
    if (channels < 2) throw PreconditionError("rbf: need at least 2 channels");
    if (!(d_max > d_min)) throw PreconditionError("rbf: d_max must exceed d_min");
    if (gamma < 0.0) throw PreconditionError("rbf: gamma must be positive");
  }
};

struct EdgeSignal {
  std::size_t i;
  std::size_t j;
  std::vector<double> rbf;
  bool operator==(const EdgeSignal&) const = default;
};

struct ControlSignals {
  Array node_signal;  // [n, K]
  std::vector<EdgeSignal> edges;
  bool clamped = false;  // some distance fell outside the basis range

  bool operator==(const ControlSignals& o) const { return node_signal == o.node_signal && edges == o.edges; }
};

inline Array encode_type(const TypeConstraint& c, std::size_t n) {
  std::vector<double> v(n * kNumTypes, 0.0);
  for (const auto& e : c.entries()) {
    if (e.node >= n) {
      throw PreconditionError("encode_type: node " + std::to_string(e.node) + " out of range for " + std::to_string(n) + " nodes");
    }
    v[e.node * kNumTypes + static_cast<std::size_t>(e.type)] = 1.0;
  }
  return Array::matrix(n, kNumTypes, std::move(v));
}

inline std::vector<double> rbf_lift(double d, const RbfSpec& spec) {
  const double g = spec.resolved_gamma();
  std::vector<double> out(spec.channels);
  for (std::size_t k = 0; k < spec.channels; ++k) {
    const double u = d - spec.center(k);
    out[k] = std::exp(-g * u * u);
  }
  return out;
}

/// Edge entries in the canonical (i < j) order of the constraint. Sets
/// `clamped` when a target lies outside [d_min, d_max].
inline std::vector<EdgeSignal> encode_distance(const DistanceConstraint& c, const RbfSpec& spec, bool* clamped = nullptr) {
  spec.validate();
  std::vector<EdgeSignal> out;
  bool any = false;
  for (const auto& e : c.entries()) {
    const double d = std::clamp(e.target, spec.d_min, spec.d_max);
    any = any || d != e.target;
    out.push_back({e.i, e.j, rbf_lift(d, spec)});
  }
  if (clamped) *clamped = any;
  return out;
}

inline ControlSignals encode_pair(const ConstraintPair& c, std::size_t n, const RbfSpec& spec) {
  if (c.span() > n) {
    throw PreconditionError("encode_pair: constraint references node " + std::to_string(c.span() - 1) + " of " +
                            std::to_string(n) + " nodes");
  }
  ControlSignals s;
  s.node_signal = encode_type(c.types, n);
  s.edges = encode_distance(c.dists, spec, &s.clamped);
  return s;
}

/// Signal of the unconstrained branch.
inline ControlSignals unconditional_signals(std::size_t n, const RbfSpec& spec) {
  return encode_pair(ConstraintPair{}, n, spec);
}

/// L-infinity distance between two encodings; infinite when their supports
/// (constrained edge sets) differ.
inline double signal_distance(const ControlSignals& a, const ControlSignals& b) {
  if (a.node_signal.shape() != b.node_signal.shape() || a.edges.size() != b.edges.size()) {
    return std::numeric_limits<double>::infinity();
  }
  double m = 0.0;
  for (std::size_t k = 0; k < a.node_signal.size(); ++k) m = std::max(m, std::abs(a.node_signal[k] - b.node_signal[k]));
  for (std::size_t e = 0; e < a.edges.size(); ++e) {
    if (a.edges[e].i != b.edges[e].i || a.edges[e].j != b.edges[e].j || a.edges[e].rbf.size() != b.edges[e].rbf.size()) {
      return std::numeric_limits<double>::infinity();
    }
    for (std::size_t k = 0; k < a.edges[e].rbf.size(); ++k) m = std::max(m, std::abs(a.edges[e].rbf[k] - b.edges[e].rbf[k]));
  }
  return m;
}

}  // namespace cpc
