#pragma once

// Evaluation metrics at Calpha resolution: per-target success rate, amino-acid
// composition KL, and a KL over binned Calpha pseudo-dihedrals (a stand-in for
// backbone dihedrals, which a Calpha trace does not determine).

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "cpcomposer/constraints.hpp"
#include "cpcomposer/error.hpp"
#include "cpcomposer/geometry.hpp"
#include "cpcomposer/graph.hpp"

namespace cpc {

inline constexpr double kHistogramSmoothing = 1e-6;
inline constexpr std::size_t kDihedralBins = 36;

/// Adds `eps` to every bin and normalizes.
inline std::vector<double> smooth_normalize(const std::vector<double>& counts, double eps = kHistogramSmoothing) {
  double total = 0.0;
  for (double c : counts) total += c + eps;
  std::vector<double> p(counts.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = (counts[k] + eps) / total;
  return p;
}

/// KL(p || q) in nats. Both must be normalized and q positive where p is.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: histograms of different length");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) kl += p[k] * std::log(p[k] / q[k]);
  }
  return std::max(kl, 0.0);
}

/// Type counts over the 20-letter alphabet with `excluded` types removed
/// (the returned histogram has 20 - |excluded| bins, in alphabet order).
inline std::vector<double> type_histogram(const std::vector<GeometricGraph>& graphs, const std::set<int>& excluded) {
  std::vector<double> full(kNumTypes, 0.0);
  for (const auto& g : graphs)
    for (int t : g.types) full[static_cast<std::size_t>(t)] += 1.0;
  std::vector<double> out;
  for (int t = 0; t < kNumTypes; ++t)
    if (!excluded.count(t)) out.push_back(full[static_cast<std::size_t>(t)]);
  return out;
}

inline double aa_kl(const std::vector<GeometricGraph>& reference, const std::vector<GeometricGraph>& generated,
                    const std::set<int>& excluded = {}) {
  if (reference.empty() || generated.empty()) throw PreconditionError("aa_kl: both sets must be non-empty");
  return kl_divergence(smooth_normalize(type_histogram(reference, excluded)),
                       smooth_normalize(type_histogram(generated, excluded)));
}

/// Signed torsions over every window of four consecutive peptide residues.
inline std::vector<double> pseudo_dihedrals(const GeometricGraph& g) {
  if (g.n_peptide() < 4) throw PreconditionError("pseudo_dihedrals: peptide shorter than 4 residues");
  std::vector<double> out;
  for (std::size_t i = 0; i + 3 < g.n_peptide(); ++i) {
    out.push_back(dihedral(g.coords[i], g.coords[i + 1], g.coords[i + 2], g.coords[i + 3]));
  }
  return out;
}

/// Bin index on (-pi, pi]; bin k covers (-pi + k w, -pi + (k+1) w].
inline std::size_t angle_bin(double angle, std::size_t bins) {
  const double w = 2.0 * std::numbers::pi / static_cast<double>(bins);
  const double u = (angle + std::numbers::pi) / w;
  auto k = static_cast<long long>(std::ceil(u)) - 1;
  if (k < 0) k = 0;
  if (k >= static_cast<long long>(bins)) k = static_cast<long long>(bins) - 1;
  return static_cast<std::size_t>(k);
}

inline std::vector<double> dihedral_histogram(const std::vector<GeometricGraph>& graphs, std::size_t bins) {
  std::vector<double> h(bins, 0.0);
  for (const auto& g : graphs)
    for (double a : pseudo_dihedrals(g)) h[angle_bin(a, bins)] += 1.0;
  return h;
}

inline double pseudo_dihedral_kl(const std::vector<GeometricGraph>& reference, const std::vector<GeometricGraph>& generated,
                                 std::size_t bins = kDihedralBins) {
  if (reference.empty() || generated.empty()) throw PreconditionError("pseudo_dihedral_kl: both sets must be non-empty");
  if (bins == 0) throw PreconditionError("pseudo_dihedral_kl: need at least one bin");
  return kl_divergence(smooth_normalize(dihedral_histogram(reference, bins)),
                       smooth_normalize(dihedral_histogram(generated, bins)));
}

struct TargetResult {
  std::string id;
  std::size_t samples = 0;
  std::size_t passing = 0;
  bool success() const { return passing > 0; }
};

/// Fraction of targets with at least one sample that satisfies the target.
inline double success_rate(const std::map<std::string, std::vector<GeometricGraph>>& samples,
                           const std::map<std::string, ConstraintPair>& targets, double tol = kDefaultTolerance,
                           std::vector<TargetResult>* detail = nullptr) {
  if (samples.empty()) throw PreconditionError("success_rate: no targets");
  std::size_t ok = 0;
  for (const auto& [id, graphs] : samples) {
    auto it = targets.find(id);
    if (it == targets.end()) throw PreconditionError("success_rate: no constraint for target '" + id + "'");
    if (graphs.empty()) throw PreconditionError("success_rate: target '" + id + "' has no samples");
    TargetResult r{id, graphs.size(), 0};
    for (const auto& g : graphs)
      if (check_satisfaction(g, it->second, tol).pass) ++r.passing;
    if (r.success()) ++ok;
    if (detail) detail->push_back(r);
  }
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

struct MetricReport {
  double success_rate = 0.0;
  double aa_kl = 0.0;
  double dihedral_kl = 0.0;
  std::set<int> excluded_types;
  std::vector<TargetResult> targets;
};

/// Types fixed by any target; they are excluded from the composition KL.
inline std::set<int> constrained_types(const std::map<std::string, ConstraintPair>& targets) {
  std::set<int> out;
  for (const auto& [id, c] : targets)
    for (const auto& e : c.types.entries()) out.insert(e.type);
  return out;
}

inline MetricReport evaluate(const std::map<std::string, std::vector<GeometricGraph>>& samples,
                             const std::map<std::string, ConstraintPair>& targets,
                             const std::vector<GeometricGraph>& reference, double tol = kDefaultTolerance,
                             std::size_t bins = kDihedralBins) {
  MetricReport r;
  r.success_rate = success_rate(samples, targets, tol, &r.targets);
  std::vector<GeometricGraph> all;
  for (const auto& [id, gs] : samples) all.insert(all.end(), gs.begin(), gs.end());
  r.excluded_types = constrained_types(targets);
  r.aa_kl = aa_kl(reference, all, r.excluded_types);
  r.dihedral_kl = pseudo_dihedral_kl(reference, all, bins);
  return r;
}

}  // namespace cpc
